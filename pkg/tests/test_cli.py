import json

import numpy as np
import pytest

from eprsim.cli import main
from eprsim.estimation import forward_model
from eprsim.multilevel_rates import PopulationState
from eprsim.scenarios import scenario_params


def run(argv):
    return main(argv)


class TestExitCodes:
    def test_bad_grid_is_usage_error(self, capsys):
        assert run(["simulate", "--grid", "5,1,0.5"]) == 2
        assert "usage error" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert run(["frobnicate"]) == 2
        capsys.readouterr()

    def test_missing_params_file(self, tmp_path, capsys):
        assert run(["simulate", "--params",
                    str(tmp_path / "missing.json")]) == 2
        capsys.readouterr()

    def test_invalid_model_is_invariant_violation(self, tmp_path, capsys):
        params = json.loads(scenario_params("fig2a").to_json())
        params["mu"], params["nu"] = 1.05, 1.45  # mu < nu: unphysical
        f = tmp_path / "bad.json"
        f.write_text(json.dumps(params))
        assert run(["simulate", "--params", str(f)]) == 4
        assert "invariant" in capsys.readouterr().err

    def test_degenerate_populations_numeric_path(self, tmp_path, capsys):
        # all atoms outside F=4: polarisation-normalised outputs blow up
        code = run(["simulate", "--pops", "0,0,1",
                    "--out", str(tmp_path)])
        assert code == 4
        capsys.readouterr()


class TestDeterminism:
    def test_simulate_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["simulate", "--grid", "0,10,0.5", "--out", str(a)]) == 0
        assert run(["simulate", "--grid", "0,10,0.5", "--out", str(b)]) == 0
        assert (a / "trajectory.csv").read_bytes() == \
            (b / "trajectory.csv").read_bytes()

    def test_reconstruct_mc_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["reconstruct", "--trials", "200", "--seed", "7",
                "--format", "json"]
        assert run(args + ["--out", str(a)]) == 0
        assert run(args + ["--out", str(b)]) == 0
        assert (a / "reconstruct.json").read_bytes() == \
            (b / "reconstruct.json").read_bytes()

    def test_seed_changes_mc_output(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(["reconstruct", "--trials", "200", "--seed", "1",
             "--out", str(a)])
        run(["reconstruct", "--trials", "200", "--seed", "2",
             "--out", str(b)])
        assert (a / "reconstruct.csv").read_text() != \
            (b / "reconstruct.csv").read_text()


class TestArtifacts:
    def test_simulate_metadata_header(self, tmp_path):
        run(["simulate", "--grid", "0,5,1", "--out", str(tmp_path)])
        lines = (tmp_path / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "# artifact_version=1"
        assert lines[1] == "# seed=0"
        assert lines[2].startswith("# params={")
        assert lines[3] == "time_ms,var_x_minus,var_p_plus,xi,Jx_norm,N2,P2"

    def test_populations_artifact(self, tmp_path):
        assert run(["populations", "--grid", "0,20,1", "--pump",
                    "--out", str(tmp_path)]) == 0
        text = (tmp_path / "populations.csv").read_text()
        assert "time_ms" in text

    def test_reconstruct_round_trip_values(self, tmp_path):
        run(["reconstruct", "--format", "json", "--out", str(tmp_path)])
        doc = json.loads((tmp_path / "reconstruct.json").read_text())
        rep = doc["report"]
        assert rep["xi_css"] == pytest.approx(1.0, abs=1e-10)
        assert rep["xi_steady"] == pytest.approx(0.16, abs=1e-10)

    def test_orientation_stdout(self, capsys):
        assert run(["orientation", "--format", "json",
                    "0,0,0,0,0,0,0,0.008,0.992"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["report"]["orientation"] == pytest.approx(0.998)

    def test_calibrate_from_file(self, tmp_path, capsys):
        pts = tmp_path / "points.csv"
        pts.write_text("theta,xi0\n1.0,1.004\n2.0,2.016\n4.0,4.064\n")
        assert run(["calibrate", "--format", "json", str(pts)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["report"]["linear_coeff"] == pytest.approx(1.0, abs=1e-9)
        assert doc["report"]["quad_coeff"] == pytest.approx(0.004, abs=1e-9)

    def test_fit_single_parameter(self, tmp_path):
        truth = scenario_params("fig2a")
        grid = np.linspace(0.0, 30.0, 11)
        pop0 = PopulationState(n44=0.99, n43=0.01, nh=0.0)
        xi, jx, _, _ = forward_model(truth, pop0, grid)
        obs = tmp_path / "observed.csv"
        obs.write_text("t,xi,xi_err,jx_norm,jx_err\n" + "\n".join(
            f"{t},{x},0.01,{j},0.005" for t, x, j in zip(grid, xi, jx)))
        start = tmp_path / "start.json"
        start.write_text(truth.replace(Gamma_tilde=0.12).to_json())
        out = tmp_path / "out"
        assert run(["fit", str(obs), "--params", str(start),
                    "--free", "Gamma_tilde", "--format", "json",
                    "--out", str(out)]) == 0
        doc = json.loads((out / "fit.json").read_text())
        assert doc["report"]["estimates"]["Gamma_tilde"] == pytest.approx(
            truth.Gamma_tilde, rel=1e-4)

    def test_scenario_drive_off(self, tmp_path):
        assert run(["scenario", "fig2b", "--grid", "0,20,0.5",
                    "--format", "json", "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "fig2b_report.json").read_text())
        assert doc["report"]["drive_off_entangled"] is False
        assert doc["report"]["xi_min_drive_on"] < 1.0
