"""End-to-end command-line checks, run in process through cli.main."""

import json

import numpy as np
import pytest

from laplace_match import cli, distributions


def run(capsys, *argv):
    rc = cli.main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


class TestBridgeCommand:
    def test_gamma_log_forward(self, capsys):
        rc, out, _ = run(
            capsys, "bridge", "gamma", "log", "forward", "--alpha", "4", "--lambda", "2"
        )
        assert rc == 0
        rec = json.loads(out)
        assert rec["mu"] == pytest.approx(np.log(2.0), abs=1e-9)
        assert rec["var"] == pytest.approx(0.25, abs=1e-12)

    def test_exponential_forward_both_bases(self, capsys):
        rc, out, _ = run(capsys, "bridge", "exponential", "log", "forward", "--lambda", "1")
        assert rc == 0 and json.loads(out)["mu"] == pytest.approx(0.0)
        rc, out, _ = run(capsys, "bridge", "exponential", "sqrt", "forward", "--lambda", "2")
        assert rc == 0
        rec = json.loads(out)
        assert rec["mu"] == pytest.approx(0.5) and rec["var"] == pytest.approx(0.125)

    def test_dirichlet_forward_emits_gaussian_record(self, capsys):
        rc, out, _ = run(
            capsys, "bridge", "dirichlet", "softmax", "forward", "--alpha", "1,1,1"
        )
        assert rc == 0
        rec = json.loads(out)["gaussian"]
        assert rec["domain"] == "simplex" and rec["centered"] is True
        assert np.allclose(rec["mean"], 0.0)

    def test_gamma_log_inverse(self, capsys):
        rc, out, _ = run(
            capsys, "bridge", "gamma", "log", "inverse", "--mu", "0", "--sigma", "0.25"
        )
        assert rc == 0
        params = distributions.from_record(json.loads(out)["params"])
        assert params.alpha == pytest.approx(4.0) and params.lam == pytest.approx(4.0)

    def test_inverse_wishart_logm_inverse(self, capsys):
        rc, out, _ = run(
            capsys,
            "bridge", "inverse_wishart", "logm", "inverse",
            "--mu", "0,0;0,0", "--sigma", str(2.0 / 3.0),
        )
        assert rc == 0
        params = distributions.from_record(json.loads(out)["params"])
        assert params.nu == pytest.approx(2.0, rel=1e-9)
        assert np.allclose(params.Psi, 3.0 * np.eye(2), rtol=1e-9)

    def test_missing_parameter_is_usage_error(self, capsys):
        rc, _, err = run(capsys, "bridge", "gamma", "log", "forward", "--alpha", "4")
        assert rc == 2 and "--lambda" in err

    def test_outside_validity_region_exits_two(self, capsys):
        rc, _, err = run(
            capsys,
            "bridge", "gamma", "sqrt", "forward", "--alpha", "0.4", "--lambda", "1",
        )
        assert rc == 2 and "OutsideValidityRegion" in err

    def test_unknown_family(self, capsys):
        rc, _, err = run(capsys, "bridge", "poisson", "log", "forward", "--lambda", "1")
        assert rc == 2 and "unknown family" in err


class TestGenAndReaders:
    def test_binary_round_trip(self, tmp_path, capsys):
        path = str(tmp_path / "bin.csv")
        rc, out, _ = run(capsys, "gen", "binary", "--out", path, "--n", "40", "--seed", "5")
        assert rc == 0 and path in out
        data = cli.read_binary(path)
        assert data.X.shape == (40, 2)
        assert set(np.unique(data.Y)) <= {0.0, 1.0}
        # generator enforces a margin of 0.25 along the first coordinate
        sign = np.where(data.Y == 1, 1.0, -1.0)
        assert np.all(sign * data.X[:, 0] >= 0.25)

    def test_counts_round_trip(self, tmp_path, capsys):
        path = str(tmp_path / "cnt.csv")
        rc, _, _ = run(capsys, "gen", "counts", "--out", path, "--n", "30", "--seed", "1")
        assert rc == 0
        data = cli.read_counts(path)
        assert data.X.shape == (30, 1)
        assert np.all(data.Y >= 0) and np.all(data.Y == np.round(data.Y))
        assert np.all(np.diff(data.X[:, 0]) >= 0)

    def test_categorical_round_trip(self, tmp_path, capsys):
        path = str(tmp_path / "cat.csv")
        rc, _, _ = run(
            capsys,
            "gen", "categorical", "--out", path,
            "--timesteps", "4", "--classes", "3", "--total", "40", "--seed", "2",
        )
        assert rc == 0
        data, labels = cli.read_categorical(path)
        assert labels == [0, 1, 2]
        assert data.Y.shape == (4, 3)
        assert np.all(data.Y.sum(axis=1) == 40)

    def test_covariance_round_trip(self, tmp_path, capsys):
        path = str(tmp_path / "cov.csv")
        rc, _, _ = run(
            capsys, "gen", "covariance", "--out", path, "--timesteps", "3", "--seed", "3"
        )
        assert rc == 0
        data = cli.read_covariance(path)
        assert data.Y.shape == (3, 2, 2)
        for M in data.Y:
            assert np.allclose(M, M.T)
            assert np.linalg.eigvalsh(M)[0] > 0

    def test_gen_needs_out(self, capsys):
        rc, _, err = run(capsys, "gen", "binary")
        assert rc == 2 and "--out" in err


class TestDatasetErrors:
    def test_bad_label_reports_line_number(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x1,x2,label\n0.0,0.0,1\n1.0,1.0,2\n")
        rc, _, err = run(
            capsys, "experiment", "binary", "--data", str(path), "--out", str(tmp_path / "r.json")
        )
        assert rc == 2 and ":3:" in err

    def test_negative_count_reports_line_number(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x1,count\n0.0,-1\n")
        rc, _, err = run(
            capsys, "experiment", "counts", "--data", str(path), "--out", str(tmp_path / "r.json")
        )
        assert rc == 2 and ":2:" in err

    def test_empty_file(self, tmp_path, capsys):
        path = tmp_path / "empty.csv"
        path.write_text("")
        rc, _, err = run(
            capsys, "experiment", "binary", "--data", str(path), "--out", str(tmp_path / "r.json")
        )
        assert rc == 2 and ":1:" in err

    def test_non_numeric_cell(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x1,count\noops,3\n")
        rc, _, err = run(
            capsys, "experiment", "counts", "--data", str(path), "--out", str(tmp_path / "r.json")
        )
        assert rc == 2 and "oops" in err


class TestExperimentCommand:
    def _gen(self, capsys, tmp_path, kind, name, *extra):
        path = str(tmp_path / name)
        rc, _, _ = run(capsys, "gen", kind, "--out", path, *extra)
        assert rc == 0
        return path

    def test_binary_report(self, tmp_path, capsys):
        train = self._gen(capsys, tmp_path, "binary", "train.csv", "--n", "40", "--seed", "0")
        test = self._gen(capsys, tmp_path, "binary", "test.csv", "--n", "30", "--seed", "1")
        out = str(tmp_path / "report.json")
        rc, stdout, _ = run(
            capsys,
            "experiment", "binary", "--data", train, "--test", test,
            "--out", out, "--seed", "0", "--draws", "150",
        )
        assert rc == 0 and "report written" in stdout
        report = json.loads(open(out).read())
        assert report["metrics"]["train"]["accuracy"] == 1.0
        assert report["metrics"]["test"]["accuracy"] >= 0.9
        assert report["config"]["family"] == "beta"
        assert "total_seconds" in report["timings"]
        probs = np.asarray(report["predictions"]["train"]["probabilities"])
        assert probs.shape == (40,)
        assert np.all((probs >= 0.0) & (probs <= 1.0))

    def test_binary_v2_matches_v1(self, tmp_path, capsys):
        train = self._gen(capsys, tmp_path, "binary", "train.csv", "--n", "30", "--seed", "4")
        out1 = str(tmp_path / "v1.json")
        out2 = str(tmp_path / "v2.json")
        base = ["experiment", "binary", "--data", train, "--seed", "0", "--draws", "100"]
        assert cli.main(base + ["--out", out1]) == 0
        assert cli.main(base + ["--out", out2, "--pipeline-version", "v2"]) == 0
        capsys.readouterr()
        r1 = json.loads(open(out1).read())
        r2 = json.loads(open(out2).read())
        p1 = np.asarray(r1["predictions"]["train"]["probabilities"])
        p2 = np.asarray(r2["predictions"]["train"]["probabilities"])
        assert np.allclose(p1, p2, atol=1e-6)

    def test_counts_report(self, tmp_path, capsys):
        data = self._gen(capsys, tmp_path, "counts", "c.csv", "--n", "30", "--seed", "2")
        out = str(tmp_path / "report.json")
        rc, _, _ = run(
            capsys,
            "experiment", "counts", "--data", data, "--out", out,
            "--seed", "0", "--draws", "150",
            "--kernel", "rbf", "--lengthscale", "1.0", "--variance", "1.0",
        )
        assert rc == 0
        metrics = json.loads(open(out).read())["metrics"]["train"]
        assert metrics["rmse"] >= 0 and np.isfinite(metrics["mnll"])
        assert 0.0 <= metrics["in2std"] <= 1.0

    def test_categorical_report(self, tmp_path, capsys):
        data = self._gen(
            capsys, tmp_path, "categorical", "cat.csv",
            "--timesteps", "4", "--classes", "3", "--seed", "3",
        )
        out = str(tmp_path / "report.json")
        rc, _, _ = run(
            capsys,
            "experiment", "categorical", "--data", data, "--out", out,
            "--seed", "0", "--draws", "150",
        )
        assert rc == 0
        report = json.loads(open(out).read())
        assert report["classes"] == [0, 1, 2]
        assert 0.0 <= report["metrics"]["train"]["accuracy"] <= 1.0

    def test_covariance_report(self, tmp_path, capsys):
        data = self._gen(
            capsys, tmp_path, "covariance", "cov.csv", "--timesteps", "4", "--seed", "4"
        )
        out = str(tmp_path / "report.json")
        rc, _, _ = run(
            capsys,
            "experiment", "covariance", "--data", data, "--out", out,
            "--seed", "0", "--draws", "100",
        )
        assert rc == 0
        report = json.loads(open(out).read())
        assert report["metrics"]["train"]["min_mean_eigenvalue"] > -1e-8

    def test_lengthscale_without_kernel(self, tmp_path, capsys):
        data = self._gen(capsys, tmp_path, "binary", "b.csv", "--n", "20", "--seed", "0")
        rc, _, err = run(
            capsys,
            "experiment", "binary", "--data", data, "--out", str(tmp_path / "r.json"),
            "--lengthscale", "2.0",
        )
        assert rc == 2 and "--kernel" in err


class TestConfigMerge:
    def test_config_fills_unset_flags(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 400, "metrics": "kl", "seed": 0}))
        out_a = str(tmp_path / "a.csv")
        out_b = str(tmp_path / "b.csv")
        rc, _, _ = run(
            capsys,
            "distances", "--family", "beta", "--config", str(cfg), "--out", out_a,
        )
        assert rc == 0
        rc, _, _ = run(
            capsys,
            "distances", "--family", "beta", "--n", "400", "--metrics", "kl",
            "--seed", "0", "--out", out_b,
        )
        assert rc == 0
        assert open(out_a).read() == open(out_b).read()

    def test_explicit_flag_beats_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"family": "gamma", "n": 300, "metrics": "kl"}))
        out = str(tmp_path / "sweep.csv")
        rc, _, _ = run(
            capsys,
            "distances", "--family", "beta", "--config", str(cfg),
            "--seed", "0", "--out", out,
        )
        assert rc == 0
        header = open(out).readline().strip().split(",")
        assert header == ["grid_index", "logit.kl"]

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        rc, _, err = run(
            capsys,
            "distances", "--family", "beta", "--config", str(cfg),
            "--out", str(tmp_path / "x.csv"),
        )
        assert rc == 2 and "unknown key" in err

    def test_config_must_be_json_object(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1, 2]")
        rc, _, err = run(
            capsys,
            "distances", "--family", "beta", "--config", str(cfg),
            "--out", str(tmp_path / "x.csv"),
        )
        assert rc == 2 and "JSON object" in err


class TestDistancesCommand:
    def test_sweep_writes_wide_and_long(self, tmp_path, capsys):
        out = str(tmp_path / "exp.csv")
        rc, stdout, _ = run(
            capsys,
            "distances", "--family", "exponential", "--metrics", "kl",
            "--n", "300", "--seed", "1", "--out", out,
        )
        assert rc == 0 and "10 grid points x 2 bases" in stdout
        wide = open(out).read().splitlines()
        assert wide[0] == "grid_index,log.kl,sqrt.kl"
        assert len(wide) == 11
        long_path = str(tmp_path / "exp_long.csv")
        long_lines = open(long_path).read().splitlines()
        assert long_lines[0] == "grid_index,basis,metric,value,se"
        assert len(long_lines) == 21

    def test_inline_grid(self, tmp_path, capsys):
        out = str(tmp_path / "one.csv")
        rc, _, _ = run(
            capsys,
            "distances", "--family", "beta",
            "--grid", json.dumps([{"alpha": 2.0, "beta": 2.0}]),
            "--metrics", "kl", "--n", "300", "--seed", "0", "--out", out,
        )
        assert rc == 0
        lines = open(out).read().splitlines()
        assert len(lines) == 2
        assert float(lines[1].split(",")[1]) >= 0.0

    def test_bad_grid_argument(self, tmp_path, capsys):
        rc, _, err = run(
            capsys,
            "distances", "--family", "beta", "--grid", "not-json-not-a-file",
            "--out", str(tmp_path / "x.csv"),
        )
        assert rc == 2 and "--grid" in err

    def test_family_required(self, tmp_path, capsys):
        rc, _, err = run(capsys, "distances", "--out", str(tmp_path / "x.csv"))
        assert rc == 2 and "--family" in err


class TestOracleCheckCommand:
    def test_exponential_passes(self, capsys):
        rc, out, _ = run(capsys, "oracle-check", "--families", "exponential")
        assert rc == 0
        # identity rows are skipped (no standard-basis mode), the rest pass
        assert "0 failures" in out
        assert "skipped" in out

    def test_corrupt_inverse_detected(self, tmp_path, capsys):
        table = str(tmp_path / "table.csv")
        rc, out, _ = run(
            capsys,
            "oracle-check", "--families", "gamma", "--bases", "sqrt",
            "--corrupt-inverse", "--out", table,
        )
        assert rc == 1
        assert "FAIL" in out and "round-trip" in out
        assert "FAIL" in open(table).read()

    def test_empty_selection(self, capsys):
        rc, out, _ = run(capsys, "oracle-check", "--families", "gamma", "--bases", "logit")
        assert rc == 0 and "0 rows, 0 failures" in out


class TestTopLevel:
    def test_version_flag(self, capsys):
        rc, out, _ = run(capsys, "--version")
        assert rc == 0 and cli.VERSION in out

    def test_missing_command(self, capsys):
        assert run(capsys, *[])[0] == 2

    def test_seed_env_fallback(self, tmp_path, capsys, monkeypatch):
        a = str(tmp_path / "a.csv")
        b = str(tmp_path / "b.csv")
        monkeypatch.setenv("LAPLACE_MATCH_SEED", "9")
        assert cli.main(["gen", "counts", "--out", a, "--n", "20"]) == 0
        monkeypatch.delenv("LAPLACE_MATCH_SEED")
        assert cli.main(["gen", "counts", "--out", b, "--n", "20", "--seed", "9"]) == 0
        capsys.readouterr()
        assert open(a).read() == open(b).read()

    def test_bad_seed_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("LAPLACE_MATCH_SEED", "not-an-int")
        rc, _, err = run(capsys, "gen", "counts", "--out", str(tmp_path / "x.csv"))
        assert rc == 2 and "LAPLACE_MATCH_SEED" in err
