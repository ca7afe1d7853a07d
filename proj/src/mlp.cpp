#include "rfmatch/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <tuple>

#include "rfmatch/error.hpp"
#include "rfmatch/hash.hpp"
#include "rfmatch/random.hpp"

namespace rfmatch {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

void NormalizationSpec::validate() const {
    if (min.size() != max.size() || min.empty())
        throw ValidationError("normalization spec needs matching, non-empty min/max vectors");
    for (std::size_t i = 0; i < min.size(); ++i)
        if (!(max[i] > min[i]) || !std::isfinite(min[i]) || !std::isfinite(max[i]))
            throw ValidationError("degenerate normalization for feature " + std::to_string(i));
}

std::string to_string(ModelRole role) { return role == ModelRole::recbm ? "recbm" : "ims"; }

MlpModel::MlpModel(ModelRole role, int inputs, int outputs, double width_scale,
                   NormalizationSpec normalization, double label_scale)
    : role_(role),
      width_scale_(width_scale),
      normalization_(std::move(normalization)),
      label_scale_(label_scale) {
    if (inputs < 1 || outputs < 1) throw InvalidArgument("model needs at least one input and output");
    if (!(width_scale > 0.0) || !std::isfinite(width_scale))
        throw InvalidArgument("width scale must be positive");
    if (!(label_scale > 0.0) || !std::isfinite(label_scale))
        throw InvalidArgument("label scale must be positive");
    normalization_.validate();
    if (normalization_.size() != static_cast<std::size_t>(inputs))
        throw InvalidArgument("normalization spec does not match the input width");

    widths_.push_back(inputs);
    for (int w : kBaseHiddenWidths)
        widths_.push_back(std::max(1, static_cast<int>(std::lround(w * width_scale))));
    widths_.push_back(outputs);

    std::size_t total = 0;
    for (int l = 0; l < layer_count(); ++l) {
        offsets_.push_back(total);
        total += static_cast<std::size_t>(widths_[l]) * widths_[l + 1] + widths_[l + 1];
    }
    params_.assign(total, 0.0);
}

Eigen::Map<Matrix> MlpModel::weight(int l) {
    return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<const Matrix> MlpModel::weight(int l) const {
    return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<Vector> MlpModel::bias(int l) { return {params_.data() + bias_offset(l), widths_[l + 1]}; }
Eigen::Map<const Vector> MlpModel::bias(int l) const {
    return {params_.data() + bias_offset(l), widths_[l + 1]};
}

void MlpModel::initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (int l = 0; l < layer_count(); ++l) {
        const double limit = std::sqrt(6.0 / (widths_[l] + widths_[l + 1]));
        auto w = weight(l);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-limit, limit);
        bias(l).setZero();
    }
}

Matrix MlpModel::normalize(const Matrix& raw) const {
    if (raw.rows() != inputs())
        throw InvalidArgument("input has " + std::to_string(raw.rows()) + " features, model expects " +
                              std::to_string(inputs()));
    Matrix out(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
        for (Eigen::Index i = 0; i < raw.rows(); ++i) out(i, j) = normalization_.apply(i, raw(i, j));
    return out;
}

namespace {

void forward_normalized(const MlpModel& model, const Matrix& x, ForwardCache& cache) {
    const int layers = model.layer_count();
    cache.pre.resize(layers);
    cache.post.resize(layers - 1);
    const Matrix* a = &x;
    for (int l = 0; l < layers; ++l) {
        Matrix& z = cache.pre[l];
        z.noalias() = model.weight(l) * *a;
        z.colwise() += model.bias(l);
        if (l == MlpModel::kSkipTo - 1) z += cache.post[MlpModel::kSkipFrom - 1];
        if (l + 1 < layers) {
            cache.post[l] = z.cwiseMax(0.0);
            a = &cache.post[l];
        }
    }
    cache.output = cache.pre.back();
}

}  // namespace

Matrix MlpModel::forward(const Matrix& raw_inputs) const {
    ForwardCache cache;
    forward_normalized(*this, normalize(raw_inputs), cache);
    return std::move(cache.output);
}

Vector MlpModel::forward_single(const Vector& raw_input) const {
    const Matrix x = raw_input;
    return forward(x).col(0);
}

Matrix MlpModel::predict(const Matrix& raw_inputs) const { return forward(raw_inputs) / label_scale_; }

std::uint64_t MlpModel::forward_macs() const {
    std::uint64_t n = 0;
    for (int l = 0; l < layer_count(); ++l) n += static_cast<std::uint64_t>(widths_[l]) * widths_[l + 1];
    return n;
}

std::uint64_t MlpModel::fingerprint() const {
    std::ostringstream out;
    serialize_model(*this, out);
    return fnv1a64(out.str());
}

ForwardCache forward_cached(const MlpModel& model, const Matrix& raw_inputs) {
    ForwardCache cache;
    cache.input = model.normalize(raw_inputs);
    forward_normalized(model, cache.input, cache);
    return cache;
}

GradientBundle backward(const MlpModel& model, const ForwardCache& cache, const Matrix& upstream,
                        unsigned parts) {
    const int layers = model.layer_count();
    if (upstream.rows() != model.outputs() || upstream.cols() != cache.output.cols())
        throw InvalidArgument("upstream gradient shape does not match the forward pass");
    const bool want_params = parts & kParameterGradients;
    const bool want_input = parts & kInputGradients;
    const auto batch = static_cast<std::uint64_t>(upstream.cols());

    GradientBundle out;
    if (want_params) out.parameters.assign(model.parameter_count(), 0.0);

    Matrix g = upstream;  // d objective / d pre-activation of layer l
    Matrix skip;
    for (int l = layers - 1; l >= 0; --l) {
        const Matrix& a = l == 0 ? cache.input : cache.post[l - 1];
        const std::uint64_t macs = static_cast<std::uint64_t>(model.widths()[l]) * model.widths()[l + 1];
        if (want_params) {
            Eigen::Map<Matrix> dw(out.parameters.data() + model.weight_offset(l), model.widths()[l + 1],
                                  model.widths()[l]);
            dw.noalias() = g * a.transpose();
            Eigen::Map<Vector> db(out.parameters.data() + model.bias_offset(l), model.widths()[l + 1]);
            db = g.rowwise().sum();
            out.macs += macs * batch;
        }
        if (l == MlpModel::kSkipTo - 1) skip = g;
        if (l == 0 && !want_input) break;
        Matrix ga = model.weight(l).transpose() * g;
        out.macs += macs * batch;
        if (l == 0) {
            out.inputs = std::move(ga);
            break;
        }
        if (l - 1 == MlpModel::kSkipFrom - 1) ga += skip;
        g = ga.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    if (want_input) {
        const auto& norm = model.normalization();
        for (Eigen::Index i = 0; i < out.inputs.rows(); ++i)
            out.inputs.row(i) /= norm.max[i] - norm.min[i];
    }
    return out;
}

double loss_mse(const Matrix& predicted, const Matrix& truth) {
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
        throw InvalidArgument("loss_mse: shape mismatch");
    if (predicted.size() == 0) throw InvalidArgument("loss_mse: empty batch");
    return (predicted - truth).squaredNorm() / static_cast<double>(predicted.size());
}

Matrix loss_mse_gradient(const Matrix& predicted, const Matrix& truth) {
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
        throw InvalidArgument("loss_mse_gradient: shape mismatch");
    return (predicted - truth) * (2.0 / static_cast<double>(predicted.size()));
}

void AdamConfig::validate() const {
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw InvalidArgument("Adam decay rates must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw InvalidArgument("Adam stability constant must be positive");
}

void AdamState::update(std::span<double> params, std::span<const double> grads,
                       const AdamConfig& config, double learning_rate) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw InvalidArgument("Adam state size does not match the parameters");
    ++t_;
    const double alpha = learning_rate > 0.0 ? learning_rate : config.learning_rate;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m_[i] = config.beta1 * m_[i] + (1.0 - config.beta1) * g;
        v_[i] = config.beta2 * v_[i] + (1.0 - config.beta2) * g * g;
        const double mhat = m_[i] / c1;
        const double vhat = v_[i] / c2;
        params[i] -= alpha * mhat / (std::sqrt(vhat) + config.epsilon);
    }
}

void TrainingConfig::validate() const {
    AdamConfig{learning_rate, beta1, beta2, epsilon}.validate();
    if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
    if (epochs < 0) throw InvalidArgument("epoch count must be non-negative");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidArgument("train fraction must lie in (0, 1)");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0))
        throw InvalidArgument("final learning-rate fraction must lie in (0, 1]");
}

namespace {

Matrix gather(const Matrix& m, std::span<const std::size_t> cols) {
    Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(j) = m.col(cols[j]);
    return out;
}

double dataset_mse(const MlpModel& model, const Matrix& x, const Matrix& y) {
    constexpr Eigen::Index kChunk = 4096;
    double sum = 0.0;
    ForwardCache cache;
    for (Eigen::Index start = 0; start < x.cols(); start += kChunk) {
        const Eigen::Index n = std::min(kChunk, x.cols() - start);
        const Matrix xb = x.middleCols(start, n);
        forward_normalized(model, xb, cache);
        sum += (cache.output - y.middleCols(start, n)).squaredNorm();
    }
    return sum / static_cast<double>(y.size());
}

}  // namespace

TrainingResult train(MlpModel& model, const Matrix& inputs, const Matrix& labels,
                     const TrainingConfig& config,
                     const std::function<void(const EpochRecord&)>& on_epoch) {
    config.validate();
    if (inputs.rows() == 0) throw InvalidArgument("training set is empty");
    if (inputs.rows() != labels.rows()) throw InvalidArgument("inputs and labels differ in row count");
    if (inputs.cols() != model.inputs() || labels.cols() != model.outputs())
        throw InvalidArgument("training data columns do not match the model");

    TrainingResult result;
    std::tie(result.train_rows, result.val_rows) =
        split_indices(static_cast<std::size_t>(inputs.rows()), config.train_fraction, config.seed);
    const std::size_t n_train = result.train_rows.size();
    if (result.train_rows.empty() || result.val_rows.empty())
        throw InvalidArgument("split leaves an empty partition");
    Rng rng(Rng::mix(config.seed));

    const Matrix xn = model.normalize(inputs.transpose());
    const Matrix yt = labels.transpose() * model.label_scale();
    const Matrix x_train = gather(xn, result.train_rows);
    const Matrix y_train = gather(yt, result.train_rows);
    const Matrix x_val = gather(xn, result.val_rows);
    const Matrix y_val = gather(yt, result.val_rows);

    auto record = [&](EpochRecord rec) {
        if (!std::isfinite(rec.train_mse) || !std::isfinite(rec.val_mse))
            throw NumericalError("training diverged: non-finite loss at epoch " +
                                 std::to_string(rec.epoch));
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    };
    record({0, dataset_mse(model, x_train, y_train), dataset_mse(model, x_val, y_val)});

    const AdamConfig adam{config.learning_rate, config.beta1, config.beta2, config.epsilon};
    AdamState state(model.parameter_count());
    const std::size_t batches_per_epoch = (n_train + config.batch_size - 1) / config.batch_size;
    const double total_steps = static_cast<double>(batches_per_epoch) * config.epochs;
    const double lr_min = config.learning_rate * config.final_lr_fraction;
    ForwardCache cache;
    std::vector<std::size_t> idx(n_train);
    for (std::size_t i = 0; i < n_train; ++i) idx[i] = i;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = n_train; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
        double sum = 0.0;
        for (std::size_t start = 0; start < n_train; start += config.batch_size) {
            const std::size_t stop = std::min(n_train, start + config.batch_size);
            const std::span<const std::size_t> rows(idx.data() + start, stop - start);
            const Matrix xb = gather(x_train, rows);
            const Matrix yb = gather(y_train, rows);
            forward_normalized(model, xb, cache);
            cache.input = xb;
            sum += (cache.output - yb).squaredNorm();
            const auto grads = backward(model, cache, loss_mse_gradient(cache.output, yb),
                                        kParameterGradients);
            const double step = static_cast<double>(state.step());
            const double lr = lr_min + 0.5 * (config.learning_rate - lr_min) *
                                           (1.0 + std::cos(std::numbers::pi * step / total_steps));
            state.update(model.parameters(), grads.parameters, adam, lr);
        }
        record({epoch, sum / static_cast<double>(y_train.size()), dataset_mse(model, x_val, y_val)});
    }
    return result;
}

std::vector<EcdfPoint> ecdf(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    std::vector<EcdfPoint> out(values.size());
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = {values[i], static_cast<double>(i + 1) / n};
    return out;
}

SurrogateErrorReport evaluate_surrogate(const MlpModel& model, const Matrix& inputs,
                                        const Matrix& labels) {
    if (inputs.rows() != labels.rows() || labels.cols() != model.outputs())
        throw InvalidArgument("test set shape does not match the model");
    const Matrix pred = model.predict(inputs.transpose()).transpose();
    const auto d = static_cast<std::size_t>(labels.cols());
    const auto n = static_cast<std::size_t>(labels.rows());

    SurrogateErrorReport r;
    r.samples = n;
    r.mae.assign(d, 0.0);
    r.mre.assign(d, 0.0);
    r.mre_excluded.assign(d, 0);
    std::vector<double> abs_err;
    std::vector<double> rel_err;
    abs_err.reserve(n * d);
    rel_err.reserve(n * d);
    for (std::size_t k = 0; k < d; ++k) {
        double sa = 0.0;
        double sr = 0.0;
        std::size_t nr = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = std::abs(pred(i, k) - labels(i, k));
            sa += e;
            abs_err.push_back(e);
            const double y = std::abs(labels(i, k));
            if (y < 1e-12) {
                ++r.mre_excluded[k];
                continue;
            }
            sr += e / y;
            rel_err.push_back(e / y);
            ++nr;
        }
        r.mae[k] = n ? sa / n : 0.0;
        r.mre[k] = nr ? sr / nr : 0.0;
    }
    double total_abs = 0.0;
    for (double e : abs_err) total_abs += e;
    double total_rel = 0.0;
    for (double e : rel_err) total_rel += e;
    r.overall_mae = abs_err.empty() ? 0.0 : total_abs / abs_err.size();
    r.overall_mre = rel_err.empty() ? 0.0 : total_rel / rel_err.size();
    r.abs_error_ecdf = ecdf(std::move(abs_err));
    r.rel_error_ecdf = ecdf(std::move(rel_err));
    return r;
}

// ---------------------------------------------------------------------------
// Model file
//
//   char[8]  "RFMLP\0\0\0"
//   u32      format version (1)
//   u32      role (0 = recbm, 1 = ims)
//   f64      width scale
//   u32      layer width count W, then W x u32 widths
//   f64      label scale
//   u64      paired RECBM fingerprint, u64 circuit fingerprint
//   W0 x f64 normalisation minima, W0 x f64 maxima
//   u64      parameter count P, then P x f64 parameters
//   u64      FNV-1a of every preceding byte
//
// All integers and reals little-endian.

namespace {

constexpr char kMagic[8] = {'R', 'F', 'M', 'L', 'P', 0, 0, 0};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
public:
    template <typename T>
    void put(T v) {
        const char* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof v);
    }
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(const std::string& buf) : buf_(buf) {}
    template <typename T>
    T get() {
        T v;
        take(&v, sizeof v);
        return v;
    }
    void take(void* p, std::size_t n) {
        if (buf_.size() - pos_ < n) throw FormatError("model file is truncated");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    const std::string& buf_;
    std::size_t pos_ = 0;
};

}  // namespace

void serialize_model(const MlpModel& model, std::ostream& out) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.put(kFormatVersion);
    w.put(static_cast<std::uint32_t>(model.role()));
    w.put(model.width_scale());
    w.put(static_cast<std::uint32_t>(model.widths().size()));
    for (int x : model.widths()) w.put(static_cast<std::uint32_t>(x));
    w.put(model.label_scale());
    w.put(model.paired_fingerprint());
    w.put(model.circuit_fingerprint());
    for (double x : model.normalization().min) w.put(x);
    for (double x : model.normalization().max) w.put(x);
    w.put(static_cast<std::uint64_t>(model.parameter_count()));
    w.raw(model.parameters().data(), model.parameter_count() * sizeof(double));
    const std::uint64_t sum = fnv1a64(w.bytes());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
    if (!out) throw Error("failed to write model");
}

MlpModel deserialize_model(std::istream& in) {
    const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(buf);
    char magic[8];
    r.take(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not an rfmatch model file");
    const auto version = r.get<std::uint32_t>();
    if (version != kFormatVersion)
        throw FormatError("unsupported model format version " + std::to_string(version));
    const auto role = r.get<std::uint32_t>();
    if (role > 1) throw FormatError("unknown model role");
    const auto scale = r.get<double>();
    const auto nw = r.get<std::uint32_t>();
    if (nw != MlpModel::kHiddenLayers + 2) throw FormatError("unexpected layer count");
    std::vector<int> widths(nw);
    for (auto& x : widths) x = static_cast<int>(r.get<std::uint32_t>());
    const auto label_scale = r.get<double>();
    const auto paired = r.get<std::uint64_t>();
    const auto circuit = r.get<std::uint64_t>();
    NormalizationSpec norm;
    norm.min.resize(widths.front());
    norm.max.resize(widths.front());
    for (auto& x : norm.min) x = r.get<double>();
    for (auto& x : norm.max) x = r.get<double>();

    MlpModel model = [&] {
        try {
            return MlpModel(static_cast<ModelRole>(role), widths.front(), widths.back(), scale, norm,
                            label_scale);
        } catch (const Error& e) {
            throw FormatError(std::string("invalid model header: ") + e.what());
        }
    }();
    if (model.widths() != widths) throw FormatError("layer widths disagree with the width scale");
    const auto count = r.get<std::uint64_t>();
    if (count != model.parameter_count()) throw FormatError("parameter count mismatch");
    r.take(model.parameters().data(), count * sizeof(double));
    const std::size_t body = r.position();
    const auto sum = r.get<std::uint64_t>();
    if (r.remaining() != 0) throw FormatError("trailing bytes after model payload");
    if (sum != fnv1a64(std::string_view(buf.data(), body))) throw FormatError("model checksum mismatch");
    model.set_paired_fingerprint(paired);
    model.set_circuit_fingerprint(circuit);
    return model;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model file '" + path.string() + "'");
    serialize_model(model, out);
}

MlpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open model file '" + path.string() + "'");
    return deserialize_model(in);
}

}  // namespace rfmatch
