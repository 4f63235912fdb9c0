import json
import math
from pathlib import Path

import pytest

from embedded_eigen.cli import main, read_trajectory_csv
from embedded_eigen.potential import PotentialSpec

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2))
    return p


FREE = {"spec": {"p": 2, "gamma": "1", "E": "1", "terms": []}, "x_max": 50, "samples": 20,
        "theta0": 0.3}
SHORT_P2 = {"spec": {"p": 2, "gamma": "3/4", "E": "1",
                     "terms": [{"lambda": "4", "alpha": "2", "xi_mode": "dynamic"}]},
            "x_max": 1000, "samples": 300}


class TestResonanceSet:
    def test_pair(self, capsys):
        code, out, _ = run(capsys, "resonance-set", "--phases", "2,-2", "--p", "3")
        doc = json.loads(out)
        assert code == 0 and doc["energies"] == ["1", "4"]

    def test_six_energies(self, capsys):
        _, out, _ = run(capsys, "resonance-set", "--phases", "2,-2,5,-5", "--p", "3")
        assert json.loads(out)["energies"] == ["1", "9/4", "4", "25/4", "49/4", "25"]

    def test_malformed(self, capsys):
        code, _, err = run(capsys, "resonance-set", "--phases", "2/0,-2", "--p", "3")
        assert code != 0 and "column 3" in err

    def test_not_symmetric(self, capsys):
        code, _, err = run(capsys, "resonance-set", "--phases", "1,2", "--p", "3")
        assert code != 0 and "symmetric" in err


class TestCoeffs:
    def test_eval_base_case(self, capsys):
        assert run(capsys, "coeffs", "eval", "--f", "1", "0", "--eta", "2")[1] == "-1/2\n"

    def test_eval_second_order(self, capsys):
        out = run(capsys, "coeffs", "eval", "--f", "2", "1", "--eta", "3", "--phis=-2,5")[1]
        assert out == "-1/30\n"

    def test_eval_pole(self, capsys):
        code, out, _ = run(capsys, "coeffs", "eval", "--G", "2", "1", "--eta", "3", "--phis=-2,5")
        assert code != 0 and out.startswith("non-finite") and "1*eta = -2 + 5" in out

    def test_check(self, capsys):
        code, out, _ = run(capsys, "coeffs", "check", "--identity", "F", "--I", "4", "--K", "3",
                           "--k", "1", "--trials", "100", "--seed", "7")
        assert code == 0 and out.splitlines()[0] == "OK 100/100"

    def test_check_reflection(self, capsys):
        code, out, _ = run(capsys, "coeffs", "check", "--identity", "reflection", "--I", "3",
                           "--trials", "20")
        assert code == 0 and out.startswith("OK 20/20")

    def test_oracle(self, capsys):
        code, out, _ = run(capsys, "coeffs", "oracle", "--I", "3", "--trials", "20", "--seed", "7")
        assert code == 0 and "OK 20/20" in out


class TestArtifacts:
    def test_build_round_trip(self, capsys, tmp_path):
        out = tmp_path / "plan.json"
        code, _, _ = run(capsys, "build", "--config", str(CONFIGS / "p3_construction.json"),
                         "--out", str(out))
        doc = json.loads(out.read_text())
        assert code == 0
        spec = PotentialSpec.from_json(doc["spec"])
        assert PotentialSpec.from_json(spec.to_json()) == spec
        assert doc["plan"]["f_value"] == "-1/30"
        assert set(doc["provenance"]) == {"config_hash", "seed", "version", "command"}

    def test_config_error_location(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{\n  "p": 2,\n  "gamma": "3/0",\n  "E": "1", "terms": []\n}\n')
        code, _, err = run(capsys, "build", "--config", str(bad))
        assert code == 2 and "line 3" in err and "zero denominator" in err
        bad.write_text('{\n  "p": 2,\n  "gamma" "1"\n}\n')
        code, _, err = run(capsys, "build", "--config", str(bad))
        assert code == 2 and "line 3" in err

    def test_simulate_free(self, capsys, tmp_path):
        cfg = write_config(tmp_path, FREE)
        out = tmp_path / "free.csv"
        assert run(capsys, "simulate", "--config", str(cfg), "--out", str(out))[0] == 0
        lines = out.read_text().splitlines()
        header = [l for l in lines if not l.startswith("#")]
        assert header[0] == "x,theta,logR,xi,psi"
        rows = [r.split(",") for r in header[1:]]
        assert len(rows) == 20
        assert {r[1] for r in rows} == {"0.29999999999999999"}
        assert all(r[3] == "" and r[4] == "" for r in rows)
        assert not list(tmp_path.glob(".*.tmp"))

    def test_pipeline_and_determinism(self, capsys, tmp_path):
        cfg = write_config(tmp_path, SHORT_P2)
        outputs = []
        for tag in ("a", "b"):
            plan, traj, rep = (tmp_path / f"{n}_{tag}.{e}"
                               for n, e in (("plan", "json"), ("traj", "csv"), ("rep", "json")))
            assert run(capsys, "build", "--config", str(cfg), "--out", str(plan))[0] == 0
            assert run(capsys, "simulate", "--config", str(cfg), "--plan", str(plan),
                       "--out", str(traj))[0] == 0
            code = run(capsys, "verify", "--config", str(cfg), "--plan", str(plan),
                       "--traj", str(traj), "--out", str(rep))[0]
            report = json.loads(rep.read_text())
            assert code == (0 if report["all_pass"] else 3)
            outputs.append([p.read_bytes() for p in (plan, traj, rep)])
        assert outputs[0] == outputs[1]
        assert report["verdicts"]["psi_locked"]
        t = read_trajectory_csv(tmp_path / "traj_a.csv", 1.0)
        assert t.psi is not None and len(t.x) == 300

    def test_scan(self, capsys, tmp_path):
        out = tmp_path / "scan.csv"
        code, _, _ = run(capsys, "scan", "--config", str(CONFIGS / "classical.json"),
                         "--e-min", "0.2", "--e-max", "3", "--n", "15", "--x-max", "200",
                         "--out", str(out))
        assert code == 0
        rows = [l.split(",") for l in out.read_text().splitlines()
                if not l.startswith("#")][1:]
        best = max(rows, key=lambda r: float(r[1]))
        assert float(best[0]) == pytest.approx(1.0)
        gp = out.with_suffix(".gp").read_text()
        assert 'plot "scan.csv"' in gp

    def test_missing_config(self, capsys):
        with pytest.raises(SystemExit):
            main(["build"])
