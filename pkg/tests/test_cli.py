import json

import numpy as np
import pytest

from concavefusion.cli import UsageError, main, parse_config
from concavefusion.sim import DgpSpec, generate


@pytest.fixture
def data_csv(tmp_path):
    d, _ = generate(DgpSpec("one", 40, seed=3, sigma=0.2))
    path = tmp_path / "d.csv"
    cols = ["y", "x1", "z1", "z2", "z3", "z4"]
    rows = np.column_stack([d.y, d.X[:, 0], d.Z[:, 1:]])
    path.write_text(",".join(cols) + "\n" + "\n".join(",".join(repr(float(v)) for v in r) for r in rows) + "\n")
    return path


def base(data_csv, cmd="select"):
    return [cmd, "--data", str(data_csv), "--response", "y", "--treat", "x1", "--covar", "z1,z2,z3,z4",
            "--lambda-min", "0.2", "--lambda-max", "2", "--grid-size", "15"]


class TestParse:
    def test_defaults(self):
        cfg = parse_config(["path", "--data", "d.csv", "--response", "y", "--treat", "x1", "--covar", "z1,z2",
                            "--penalty", "mcp"])
        assert (cfg.gamma, cfg.vartheta) == (3.0, 1.0)
        assert cfg.covar == ["z1", "z2"]

    def test_scad_gamma(self):
        with pytest.raises(UsageError, match="gamma"):
            parse_config(["path", "--data", "d.csv", "--response", "y", "--treat", "x", "--penalty", "scad",
                          "--gamma", "1.5", "--vartheta", "1"])

    def test_unknown_flag_exit_code(self, capsys):
        assert main(["path", "--bogus"]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_missing_required(self, capsys):
        assert main(["select", "--response", "y"]) == 2

    def test_bad_level(self):
        with pytest.raises(UsageError):
            parse_config(["simulate", "--level", "1.5"])


class TestDispatch:
    def test_missing_file(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        code = main(["select", "--data", str(missing), "--response", "y", "--treat", "x1"])
        assert code == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert str(missing) in err["message"]

    def test_select_writes_json_and_sidecar(self, data_csv, tmp_path):
        out = tmp_path / "res.json"
        assert main(base(data_csv) + ["--out", str(out)]) == 0
        res = json.loads(out.read_text())
        assert set(res) == {"lambda", "k_hat", "groups", "alpha_hat", "eta_hat", "bic"}
        assert res["k_hat"] == len(res["groups"])
        side = tmp_path / "res.fusiongram.csv"
        assert side.read_text().startswith("lambda,subject,coordinate,beta_value")

    def test_byte_identical_reruns(self, data_csv, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(base(data_csv, "infer") + ["--out", str(a)])
        main(base(data_csv, "infer") + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
        rep = json.loads(a.read_text())
        assert {"sigma2_hat", "asd_alpha", "ci_alpha", "p_value", "result"} <= set(rep)

    def test_path_stdout(self, data_csv, capsys):
        assert main(base(data_csv, "path")) == 0
        out = json.loads(capsys.readouterr().out)
        assert len(out["points"]) == 15

    def test_fit_pretty(self, data_csv, capsys):
        args = ["fit", "--data", str(data_csv), "--response", "y", "--treat", "x1", "--lambda", "0.8", "--pretty"]
        assert main(args) == 0
        assert "k_hat" in capsys.readouterr().out

    def test_standardized_estimates_on_raw_scale(self, data_csv, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(base(data_csv) + ["--out", str(a)])
        main(base(data_csv) + ["--standardize", "--out", str(b)])
        ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
        if ra["k_hat"] == rb["k_hat"] == 2:
            np.testing.assert_allclose(sorted(np.ravel(ra["alpha_hat"])), sorted(np.ravel(rb["alpha_hat"])), atol=0.1)

    def test_simulate(self, tmp_path):
        out, ledger = tmp_path / "s.json", tmp_path / "s.csv"
        args = ["simulate", "--example", "1", "--n", "30", "--reps", "2", "--seed", "42", "--out", str(out),
                "--ledger", str(ledger), "--lambda-min", "0.2", "--lambda-max", "2", "--grid-size", "10"]
        assert main(args) == 0
        s = json.loads(out.read_text())
        assert s["reps"] == 2 and "pct_correct_k" in s
        assert len(ledger.read_text().splitlines()) == 3

    def test_no_refine_flag(self, data_csv):
        cfg = parse_config(base(data_csv) + ["--no-refine"])
        assert cfg.path_config().refine is False
        assert parse_config(base(data_csv)).path_config().refine is True
