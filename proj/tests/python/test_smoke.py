import cmath
import json

import numpy as np
import pytest

import rfmatch


@pytest.fixture(scope="module")
def circuit():
    return rfmatch.Circuit.reference()


def test_reference_circuit(circuit):
    assert circuit.arm_count == 10
    assert circuit.band_hz == (1.5e9, 2.0e9)
    assert len(circuit.fingerprint) == 16
    assert json.loads(circuit.to_json())["name"] == circuit.name


def test_simulate_is_reciprocal_and_passive(circuit):
    s = rfmatch.simulate(circuit, 1.75e9, 5e-12, 5e-12)
    assert s.shape == (2, 2)
    assert abs(s[0, 1] - s[1, 0]) < 1e-12
    assert abs(s[0, 0]) ** 2 + abs(s[1, 0]) ** 2 <= 1 + 1e-12


def test_reflection_round_trips(circuit):
    z = 20 + 30j
    g = rfmatch.impedance_to_reflection(z)
    assert abs(rfmatch.reflection_to_impedance(g) - z) < 1e-12
    s = rfmatch.simulate(circuit, 1.6e9, 2e-12, 7e-12)
    gin = rfmatch.input_reflection(s, 0.3 - 0.2j)
    assert abs(rfmatch.load_reflection_from_input(s, gin) - (0.3 - 0.2j)) < 1e-12


def test_analytical_match_worked_example():
    pairs = rfmatch.analytical_match(20 + 30j, 1.75e9)
    assert len(pairs) == 1
    cp, cs = pairs[0]
    assert cp == pytest.approx(2.2277e-12, rel=3e-5)
    assert cs == pytest.approx(16.520e-12, rel=3e-5)
    with pytest.raises(rfmatch.NoFeasibleSolution):
        rfmatch.analytical_match(80 + 10j, 1.75e9)


def test_errors_are_typed(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    with pytest.raises(rfmatch.ValidationError):
        rfmatch.Circuit.load(bad)
    assert issubclass(rfmatch.ValidationError, rfmatch.Error)


def test_sweep_train_predict(circuit, tmp_path):
    rows = rfmatch.generate_sweep(circuit, f_step_ghz=0.25, c_step_pf=2.5)
    assert rows.shape == (3 * 5 * 5, 11)
    assert rfmatch.sweep_columns()[:3] == ["f_hz", "cp_f", "cs_f"]
    config = rfmatch.preset("desk")
    config["train_recbm"]["epochs"] = 2
    model, history = rfmatch.train_recbm(rows, circuit, config)
    assert [h[0] for h in history] == [0, 1, 2]
    assert model.role == "recbm"
    pred = model.predict(rows[:4, :3])
    assert pred.shape == (4, 8)
    path = tmp_path / "m.bin"
    model.save(path)
    again = rfmatch.Model.load(path)
    assert again.fingerprint == model.fingerprint
    np.testing.assert_array_equal(again.predict(rows[:4, :3]), pred)

    config["train_ims"]["epochs"] = 1
    ims, _ = rfmatch.train_ims(model, config, f_step_ghz=0.25, c_step_pf=2.5)
    assert ims.paired_fingerprint == model.fingerprint


def test_scenarios_are_seeded(circuit):
    a = rfmatch.generate_scenarios(circuit, 3, seed=5)
    b = rfmatch.generate_scenarios(circuit, 3, seed=5)
    assert a == b
    assert [s["id"] for s in a] == [0, 1, 2]
    assert isinstance(a[0]["gin"], complex)


def test_oracle_matching_run(circuit, tmp_path):
    config = rfmatch.preset("desk")
    config["scenarios"]["count"] = 4
    config["match"].update(surrogate="oracle", strategies=["sapso", "grid", "ideal"], repeats=2, grid_step_pf=0.1)
    out = tmp_path / "run"
    summary = rfmatch.run(config, circuit, out_dir=out)
    assert set(summary) == {"sapso", "grid", "ideal"}
    assert summary["sapso"]["compliance"] == 1.0
    assert summary["grid"]["compliance"] == 1.0
    assert summary["ideal"]["mean_evaluations"] == 0
    assert (out / "summary.csv").exists()
    rfmatch.consolidate_reports([out], tmp_path / "rep")
    assert (tmp_path / "rep" / "noise_sweep.csv").read_text().startswith("strategy,noise_sigma,compliance")


def test_model_run_needs_models(circuit):
    with pytest.raises(rfmatch.ValidationError):
        rfmatch.run(None, circuit)
