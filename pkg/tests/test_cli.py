import csv
import json

import numpy as np
import pytest
import yaml

from rescert.cli import EXIT_BUDGET, EXIT_OK, EXIT_REFUTED, EXIT_USAGE, main
from rescert.net import load_net
from systems import LINEAR2D, LQR_DI, SCALAR


def _write_config(path, system, **sections):
    doc = {"system": system, **sections}
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def _rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.reader(lines))


@pytest.fixture(scope="module")
def scalar_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("scalar")
    cfg = _write_config(d / "scalar.yaml", SCALAR, net={"width": 50},
                        collocation={"count": 1024}, oracle={"grid": 101})
    out = d / "out"
    assert main(["train", "--config", cfg, "--out", str(out)]) == EXIT_OK
    net = str(out / "net.json")
    assert main(["certify", "--config", cfg, "--net", net, "--out", str(out)]) == EXIT_OK
    return cfg, out, net


@pytest.fixture(scope="module")
def linear_cfg(tmp_path_factory):
    d = tmp_path_factory.mktemp("linear")
    cfg = _write_config(d / "linear.yaml", LINEAR2D, net={"width": 40},
                        collocation={"count": 512})
    out = d / "out"
    assert main(["train", "--config", cfg, "--out", str(out)]) == EXIT_OK
    return cfg, out, str(out / "net.json")


class TestTrain:
    def test_reproducible(self, tmp_path, scalar_run):
        cfg, out, net = scalar_run
        again = tmp_path / "again"
        assert main(["train", "--config", cfg, "--out", str(again)]) == EXIT_OK
        assert (again / "net.json").read_bytes() == (out / "net.json").read_bytes()

    def test_metadata(self, scalar_run):
        _, out, net = scalar_run
        doc = json.loads((out / "net.json").read_text())
        assert len(doc["metadata"]["config_hash"]) == 64
        report = json.loads((out / "train_report.json").read_text())
        assert report["converged"]
        assert load_net(net).m == 50

    def test_missing_config(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "nope.yaml")]) == EXIT_USAGE
        assert "not found" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path):
        cfg = _write_config(tmp_path / "bad.yaml", SCALAR, net={"depth": 3})
        assert main(["train", "--config", cfg]) == EXIT_USAGE

    def test_bad_argument(self):
        assert main(["train"]) == EXIT_USAGE
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_bundled_name(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["train", "--config", "scalar_exp", "--out", "o"]) == EXIT_OK
        assert (tmp_path / "o" / "net.json").is_file()


class TestCertify:
    def test_certificate_document(self, scalar_run):
        _, out, _ = scalar_run
        doc = json.loads((out / "certificate.json").read_text())
        assert doc["status"] == "certified" and doc["mode"] == "lyapunov"
        assert doc["certificates"]["residual"]["mode"] == "two_sided"
        assert 0 < doc["eps_star"] < 1e-3
        assert doc["certificates"]["quadratic_bound"]["status"] == "certified"

    def test_fixed_eps(self, scalar_run, tmp_path):
        cfg, _, net = scalar_run
        assert main(["certify", "--config", cfg, "--net", net, "--eps", "1e-3",
                     "--output", str(tmp_path / "a.json")]) == EXIT_OK
        assert main(["certify", "--config", cfg, "--net", net, "--eps", "1e-8",
                     "--output", str(tmp_path / "b.json")]) == EXIT_REFUTED
        doc = json.loads((tmp_path / "b.json").read_text())
        assert doc["status"] == "refuted"

    def test_one_sided(self, scalar_run, tmp_path):
        cfg, _, net = scalar_run
        p = tmp_path / "one.json"
        assert main(["certify", "--config", cfg, "--net", net, "--one-sided",
                     "--output", str(p)]) == EXIT_OK
        doc = json.loads(p.read_text())
        assert doc["one_sided"] and doc["certificates"]["residual"]["mode"] == "one_sided"

    def test_budget_exhausted(self, tmp_path):
        cfg = _write_config(tmp_path / "tiny.yaml", SCALAR, net={"width": 50},
                            collocation={"count": 1024}, verifier={"max_boxes": 3})
        out = tmp_path / "o"
        assert main(["train", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert main(["certify", "--config", cfg, "--net", str(out / "net.json"),
                     "--eps", "1e-3", "--out", str(out)]) == EXIT_BUDGET

    def test_sublevel(self, tmp_path):
        cfg = _write_config(tmp_path / "lqr.yaml", LQR_DI, net={"width": 60},
                            collocation={"count": 1024})
        out = tmp_path / "o"
        assert main(["train", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert main(["certify", "--config", cfg, "--net", str(out / "net.json"),
                     "--sublevel", "auto", "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "certificate.json").read_text())
        assert doc["sublevel_c"] > 0
        assert doc["certificates"]["sublevel_separation"]["status"] == "certified"
        assert doc["certificates"]["local_pd"]["status"] == "certified"

    def test_net_from_other_config(self, scalar_run, linear_cfg):
        cfg, _, _ = scalar_run
        _, _, other = linear_cfg
        assert main(["certify", "--config", cfg, "--net", other]) == EXIT_USAGE


class TestCheckAndExport:
    def test_check(self, scalar_run):
        cfg, out, net = scalar_run
        code = main(["check", "--config", cfg, "--net", net,
                     "--cert", str(out / "certificate.json"), "--out", str(out)])
        assert code == EXIT_OK
        rep = json.loads((out / "check_report.json").read_text())
        names = {c["check"]: c for c in rep["checks"]}
        assert names["value_bounds"]["checked"] == 101 and names["value_bounds"]["passed"]
        assert names["decrease"]["passed"]
        assert len(_rows(out / "check_report_value_bounds.csv")) == 102

    def test_export_grid(self, scalar_run):
        cfg, out, net = scalar_run
        cert = out / "certificate.json"
        p = out / "grid.csv"
        assert main(["export-grid", "--config", cfg, "--net", net, "--cert", str(cert),
                     "--output", str(p)]) == EXIT_OK
        assert p.read_text().startswith("# config_hash=")
        rows = _rows(p)
        assert rows[0] == ["x1", "v_hat", "error_bound"]
        data = np.array(rows[1:], dtype=float)
        assert data.shape == (101, 3)
        origin = data[np.argmin(np.abs(data[:, 0]))]
        assert origin[0] == 0.0 and origin[1] == 0.0
        eps = json.loads(cert.read_text())["eps_star"]
        assert np.array_equal(data[:, 2], eps / (1 - eps) * data[:, 1])

    def test_export_grid_2d(self, linear_cfg):
        cfg, out, net = linear_cfg
        p = out / "grid.csv"
        assert main(["export-grid", "--config", cfg, "--net", net, "--output", str(p)]) == 0
        rows = _rows(p)
        assert rows[0] == ["x1", "x2", "v_hat"] and len(rows) == 1 + 101 * 101


class TestOracleValue:
    def test_lyapunov(self, scalar_run, capsys):
        cfg, _, _ = scalar_run
        capsys.readouterr()
        assert main(["oracle-value", "--config", cfg, "--x", "0.4"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["value"] == pytest.approx(0.08, abs=1e-6)

    def test_bad_point(self, scalar_run):
        cfg, _, _ = scalar_run
        assert main(["oracle-value", "--config", cfg, "--x", "0.1,0.2"]) == EXIT_USAGE

    def test_hjb_needs_net(self, tmp_path):
        cfg = _write_config(tmp_path / "lqr.yaml", LQR_DI)
        assert main(["oracle-value", "--config", cfg, "--x", "0.1,0.1"]) == EXIT_USAGE
