#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>

namespace rfmatch {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1>;
/// Flat parameter storage. The base address is aligned so that Eigen takes the
/// same vectorised path for every copy of a model, which keeps results
/// bit-identical between copies.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// Per-feature min-max scaling of network inputs.
struct NormalizationSpec {
    std::vector<double> min;
    std::vector<double> max;

    std::size_t size() const { return min.size(); }
    /// Throws ValidationError unless both vectors agree in length and max > min.
    void validate() const;
    double apply(std::size_t feature, double x) const {
        return (x - min[feature]) / (max[feature] - min[feature]);
    }
    friend bool operator==(const NormalizationSpec&, const NormalizationSpec&) = default;
};

enum class ModelRole : std::uint32_t { recbm = 0, ims = 1 };

std::string to_string(ModelRole role);

/// Hidden-layer widths before scaling.
inline constexpr std::array<int, 9> kBaseHiddenWidths = {64, 128, 256, 512, 1024,
                                                         512, 256, 128, 64};

/// Fully connected network in -> 9 hidden ReLU layers -> out with one residual
/// skip: the post-activation output of hidden layer 4 is added to the
/// pre-activation of hidden layer 6. The output layer is linear.
///
/// Inputs are given in physical units and min-max normalised inside.
/// Network outputs equal labels multiplied by `label_scale`; predict()
/// divides it back out.
class MlpModel {
public:
    static constexpr int kHiddenLayers = 9;
    static constexpr int kSkipFrom = 4;  // hidden layer, 1-based
    static constexpr int kSkipTo = 6;

    MlpModel(ModelRole role, int inputs, int outputs, double width_scale,
             NormalizationSpec normalization, double label_scale = 1.0);

    ModelRole role() const { return role_; }
    double width_scale() const { return width_scale_; }
    /// in, hidden widths..., out (11 entries).
    const std::vector<int>& widths() const { return widths_; }
    int inputs() const { return widths_.front(); }
    int outputs() const { return widths_.back(); }
    int layer_count() const { return static_cast<int>(widths_.size()) - 1; }
    const NormalizationSpec& normalization() const { return normalization_; }
    double label_scale() const { return label_scale_; }

    /// Fingerprint of the RECBM-Net an IMS-Net was trained against (0 if none).
    std::uint64_t paired_fingerprint() const { return paired_fingerprint_; }
    void set_paired_fingerprint(std::uint64_t fp) { paired_fingerprint_ = fp; }
    /// Fingerprint of the circuit the training data came from (0 if unknown).
    std::uint64_t circuit_fingerprint() const { return circuit_fingerprint_; }
    void set_circuit_fingerprint(std::uint64_t fp) { circuit_fingerprint_ = fp; }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }

    /// Weight matrix of layer l (0-based; rows = outputs of the layer).
    Eigen::Map<Matrix> weight(int l);
    Eigen::Map<const Matrix> weight(int l) const;
    Eigen::Map<Vector> bias(int l);
    Eigen::Map<const Vector> bias(int l) const;

    /// Offsets of layer l's weight block and bias block inside parameters().
    std::size_t weight_offset(int l) const { return offsets_[l]; }
    std::size_t bias_offset(int l) const {
        return offsets_[l] + static_cast<std::size_t>(widths_[l]) * widths_[l + 1];
    }

    /// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
    void initialize(std::uint64_t seed);

    /// Normalised inputs for a batch (one column per sample, physical units in).
    Matrix normalize(const Matrix& raw) const;

    /// Raw network outputs (label units times label_scale) for one column per sample.
    Matrix forward(const Matrix& raw_inputs) const;
    Vector forward_single(const Vector& raw_input) const;
    /// forward() divided by label_scale.
    Matrix predict(const Matrix& raw_inputs) const;

    /// Multiply-accumulate count of one forward pass for one sample.
    std::uint64_t forward_macs() const;

    /// 64-bit FNV-1a over the serialised form.
    std::uint64_t fingerprint() const;

    friend bool operator==(const MlpModel&, const MlpModel&) = default;

private:
    ModelRole role_;
    double width_scale_;
    std::vector<int> widths_;
    std::vector<std::size_t> offsets_;
    NormalizationSpec normalization_;
    double label_scale_;
    std::uint64_t paired_fingerprint_ = 0;
    std::uint64_t circuit_fingerprint_ = 0;
    ParamVector params_;
};

/// Activations kept from a batched forward pass for the reverse sweep.
struct ForwardCache {
    Matrix input;                 // normalised inputs
    std::vector<Matrix> pre;      // pre-activation of each layer
    std::vector<Matrix> post;     // post-activation of each hidden layer
    Matrix output;
};

ForwardCache forward_cached(const MlpModel& model, const Matrix& raw_inputs);

struct GradientBundle {
    ParamVector parameters;  // empty when not requested
    Matrix inputs;                   // d objective / d raw input, one column per sample
    std::uint64_t macs = 0;          // multiply-accumulates spent in the reverse sweep
};

enum GradientParts : unsigned { kParameterGradients = 1u, kInputGradients = 2u };

/// Reverse sweep for a scalar objective whose gradient with respect to the
/// network outputs is `upstream` (outputs x batch). Parameter gradients are
/// summed over the batch.
GradientBundle backward(const MlpModel& model, const ForwardCache& cache, const Matrix& upstream,
                        unsigned parts = kParameterGradients | kInputGradients);

/// (1 / (D N)) * sum ||y - t||^2 over D outputs and N samples.
double loss_mse(const Matrix& predicted, const Matrix& truth);
/// Gradient of loss_mse with respect to `predicted`.
Matrix loss_mse_gradient(const Matrix& predicted, const Matrix& truth);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    void validate() const;
};

/// First/second moment state of Adam over a flat parameter vector.
class AdamState {
public:
    explicit AdamState(std::size_t n = 0) : m_(n, 0.0), v_(n, 0.0) {}
    std::size_t size() const { return m_.size(); }
    long step() const { return t_; }
    std::span<const double> first_moment() const { return m_; }
    std::span<const double> second_moment() const { return v_; }

    /// One bias-corrected Adam step; `learning_rate` overrides config's when > 0.
    void update(std::span<double> params, std::span<const double> grads, const AdamConfig& config,
                double learning_rate = 0.0);

private:
    std::vector<double> m_;
    std::vector<double> v_;
    long t_ = 0;
};

struct TrainingConfig {
    double learning_rate = 1e-3;
    /// Final learning rate as a fraction of the initial one (cosine schedule);
    /// 1 keeps the rate constant.
    double final_lr_fraction = 1.0;
    int batch_size = 64;
    int epochs = 200;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 42;
    double train_fraction = 0.8;
    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct TrainingResult {
    std::vector<EpochRecord> history;  // epoch 0 = before the first update
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
};

/// Mini-batch Adam on MSE. `inputs` is samples x in (physical units) and
/// `labels` samples x out (label units); label_scale is applied internally.
/// The split and batch order are drawn from `config.seed`. Throws
/// NumericalError on a non-finite loss.
TrainingResult train(MlpModel& model, const Matrix& inputs, const Matrix& labels,
                     const TrainingConfig& config,
                     const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Sorted (value, cumulative fraction) pairs.
struct EcdfPoint {
    double value = 0.0;
    double fraction = 0.0;
};
std::vector<EcdfPoint> ecdf(std::vector<double> values);

struct SurrogateErrorReport {
    std::vector<double> mae;            // per output dimension
    std::vector<double> mre;            // per output dimension, over |y| >= 1e-12
    std::vector<std::size_t> mre_excluded;
    double overall_mae = 0.0;
    double overall_mre = 0.0;
    std::size_t samples = 0;
    std::vector<EcdfPoint> abs_error_ecdf;
    std::vector<EcdfPoint> rel_error_ecdf;
};

/// Compares predict() against `labels` (samples x out).
SurrogateErrorReport evaluate_surrogate(const MlpModel& model, const Matrix& inputs,
                                        const Matrix& labels);

void serialize_model(const MlpModel& model, std::ostream& out);
MlpModel deserialize_model(std::istream& in);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace rfmatch
