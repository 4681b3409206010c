import csv
import json

import numpy as np
import pytest

from qaoanoise import engine
from qaoanoise.cli import main
from qaoanoise.closedform import delta_exponent, load_fit
from qaoanoise.decomposition import MLevelCurve
from qaoanoise.engine import DensityMatrix
from qaoanoise.ising import IsingInstance, load_instance, random_instance, save_instance


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def field_file(tmp_path):
    return save_instance(IsingInstance(1, [(0, 1.0)]), tmp_path / "field.json")


def test_gen_round_trip(tmp_path):
    out = tmp_path / "inst.json"
    assert main(["gen", "--n", "5", "--ensemble", "uniform", "--seed", "4", "--out", str(out)]) == 0
    assert load_instance(out) == random_instance(5, "uniform", 4)


def test_gen_two_qubit_pm1(tmp_path):
    out = tmp_path / "inst.json"
    assert main(["gen", "--n", "2", "--ensemble", "pm1", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["couplings"]) == 1


def test_invalid_ensemble_exits_nonzero(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--n", "3", "--ensemble", "gaussian", "--out", str(tmp_path / "x.json")])
    assert exc.value.code == 1
    assert "invalid choice" in capsys.readouterr().err


def test_invalid_instance_file_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n": 2, "couplings": [[0, 5, 1.0]]}))
    assert main(["optimize", "--instance", str(bad), "--depths", "1", "--out", str(tmp_path / "o")]) == 1
    assert "bad.json" in capsys.readouterr().err


def test_out_of_range_p_exits_one(tmp_path, field_file):
    assert main(["optimize", "--instance", str(field_file), "--depths", "1", "--p", "1.5",
                 "--out", str(tmp_path / "o")]) == 1


def test_resource_cap_exits_two(tmp_path):
    assert main(["sweep", "--gen", "13,ring,0", "--depths", "1", "--out", str(tmp_path / "s")]) == 2


def test_optimize_writes_angles(tmp_path, field_file):
    out = tmp_path / "opt"
    assert main(["optimize", "--instance", str(field_file), "--depths", "1,2", "--restarts", "3", "--out", str(out)]) == 0
    data = json.loads((out / "angles.json").read_text())
    assert set(data["depths"]) == {"1", "2"}
    assert data["depths"]["1"]["best_cost"] == pytest.approx(-1.0, abs=1e-6)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "optimize" and manifest["args"]["restarts"] == 3


def test_mlevel_single_qubit_toy(tmp_path, field_file):
    out = tmp_path / "ml"
    assert main(["mlevel", "--instance", str(field_file), "--angles", "0.3;0.9", "--out", str(out)]) == 0
    f = MLevelCurve.from_csv(out / "f_curve_d1.csv")
    c = MLevelCurve.from_csv(out / "c_curve_d1.csv")
    assert f.means[1] == pytest.approx(0.5, abs=1e-15)
    assert c.means[1] == pytest.approx(0.0, abs=1e-15)
    results = json.loads((out / "manifest.json").read_text())["results"]["1"]
    # two points cannot pin down a two-parameter fit; the error is recorded, not fatal
    assert "fidelity_fit_error" in results


def test_mlevel_pipeline_on_eight_qubits(tmp_path):
    out = tmp_path / "ml8"
    args = ["mlevel", "--gen", "8,pm1,1", "--restarts", "4", "--budget", "200000", "--p", "0.3", "--out", str(out)]
    assert main(args) == 0
    fit = load_fit(out / "fidelity_fit_d1.json")
    cost = load_fit(out / "cost_fit_d1.json")
    assert fit.kappa > 1 and cost.chi > 1 and np.isfinite(fit.residual)
    stored = json.loads((out / "fidelity_fit_d1.json").read_text())
    assert stored["delta"] == pytest.approx(delta_exponent(fit), abs=1e-15)
    check = json.loads((out / "manifest.json").read_text())["results"]["1"]["check"]
    assert check["fidelity_reconstructed"] == pytest.approx(check["fidelity_engine"], abs=1e-10)
    assert check["cost_reconstructed"] == pytest.approx(check["cost_engine"], abs=1e-10)
    assert (out / "angles.json").exists()


def test_mlevel_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["mlevel", "--gen", "6,pm1,0", "--angles", "0.4;0.3", "--budget", "100",
                     "--seed", "5", "--out", str(tmp_path / name)]) == 0
    for f in ("f_curve_d1.csv", "c_curve_d1.csv"):
        assert (tmp_path / "a" / f).read_text() == (tmp_path / "b" / f).read_text()


def test_mlevel_angles_must_cover_depths(tmp_path, field_file):
    assert main(["mlevel", "--instance", str(field_file), "--depths", "2", "--angles", "0.3;0.9",
                 "--out", str(tmp_path / "x")]) == 1


def test_sweep_endpoints_only(tmp_path):
    inst_path = save_instance(random_instance(4, "pm1", 2), tmp_path / "i.json")
    out = tmp_path / "sw"
    assert main(["sweep", "--instance", str(inst_path), "--depths", "1", "--p-grid", "0,1",
                 "--restarts", "2", "--out", str(out)]) == 0
    rows = read_csv(out / "sweep.csv")
    assert [float(r["p"]) for r in rows] == [0.0, 1.0]
    assert float(rows[1]["cost_exact"]) == pytest.approx(0.0, abs=1e-12)
    assert float(rows[1]["fidelity_exact"]) == pytest.approx(2**-4, abs=1e-12)
    assert rows[0]["cost_model"] == ""


def test_sweep_single_point(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--gen", "3,pm1,0", "--depths", "1", "--p-grid", "0", "--restarts", "2",
                 "--out", str(out)]) == 0
    assert len(read_csv(out / "sweep.csv")) == 1
    assert read_csv(out / "crossings.csv") == []


def test_sweep_with_models_and_crossings(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--gen", "6,pm1,3", "--depths", "1,2,3,4,5", "--p-grid", "0:1:41", "--restarts", "5",
                 "--out", str(out)]) == 0
    rows = read_csv(out / "sweep.csv")
    assert len(rows) == 5 * 41
    assert all(r["cost_model"] != "" for r in rows)
    crossings = read_csv(out / "crossings.csv")
    pairs = {(int(r["d_a"]), int(r["d_b"])) for r in crossings}
    assert (1, 2) in pairs
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["optimal_depth"][0][1] >= manifest["optimal_depth"][-1][1]
    assert set(json.loads((out / "fits.json").read_text())) == {"1", "2", "3", "4", "5"}


def test_sweep_with_mlevel_fits(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--gen", "4,pm1,0", "--depths", "1", "--p-grid", "0:1:5", "--fit-source", "mlevel",
                 "--restarts", "2", "--out", str(out)]) == 0
    assert all(r["cost_model"] != "" for r in read_csv(out / "sweep.csv"))


def test_verify_fast_passes(tmp_path):
    assert main(["verify", "--level", "fast", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify_report.json").read_text())
    assert report["passed"] and report["failed"] == []


def test_verify_catches_broken_channel(monkeypatch, capsys):
    real = engine.apply_local_channel

    def sign_flipped(rho, noise, qubit):
        # imaginary parts change sign: still a valid state, just the wrong one
        return DensityMatrix(rho.n_qubits, real(rho, noise, qubit).matrix.conj())

    monkeypatch.setattr(engine, "apply_local_channel", sign_flipped)
    assert main(["verify", "--level", "fast"]) == 3
    err = capsys.readouterr().err
    assert "cross_engine_equivalence" in err
