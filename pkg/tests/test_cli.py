import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from elastostab import io
from elastostab.cli import run

BASE = """
seed = 3
kind = "A_mu"
[grid]
n = {n}
[material]
lambda = 1.0
mu = "1 + 0.3*x1*x2"
rho = 1.0
"""
SEP = '[[measurement]]\ndisplacement = ["x1 + 0.3*x1^2", "0.8*x2 + 0.1*x1*x3", "1.2*x3"]\n'
CROSS = '[[measurement]]\ndisplacement = ["x1 + 0.2*x2*x3", "x2 + 0.3*x1*x3", "x3 + 0.25*x1*x2"]\n'


def write_cfg(tmp_path, body, n=6, name="run.toml"):
    p = tmp_path / name
    p.write_text(BASE.format(n=n) + textwrap.dedent(body))
    return p


def call(cmd, cfg, out, *extra):
    return run([cmd, "--config", str(cfg), "--out", str(out), *extra])


def load(out, cmd):
    return json.loads((out / f"{cmd}.json").read_text())


class TestSimulate:
    def test_zero_force(self, tmp_path):
        cfg = write_cfg(tmp_path, '[[measurement]]\nforce = [0, 0, 0]\n')
        assert call("simulate", cfg, tmp_path / "o") == 0
        u = io.read_field(tmp_path / "o" / "u_1.json")
        assert np.all(u.values == 0)

    def test_two_excitations_differ(self, tmp_path):
        body = '[[measurement]]\nforce = ["0", "sin(x1)", "0"]\n[[measurement]]\nforce = ["x3", "0", "1"]\n'
        body += "[simulate]\ncsv = true\n"
        cfg = write_cfg(tmp_path, body)
        assert call("simulate", cfg, tmp_path / "o") == 0
        u1 = io.read_field(tmp_path / "o" / "u_1.json").values
        u2 = io.read_field(tmp_path / "o" / "u_2.json").values
        assert not np.allclose(u1, u2)
        assert (tmp_path / "o" / "u_1.csv").exists()

    def test_malformed(self, tmp_path, capsys):
        p = tmp_path / "bad.toml"
        p.write_text("[grid\nn = 4")
        assert call("simulate", p, tmp_path / "o") == 1
        assert "config error" in capsys.readouterr().err

    def test_unknown_section_key(self, tmp_path):
        cfg = write_cfg(tmp_path, SEP + "[simulate]\nfoo = 1\n")
        assert call("simulate", cfg, tmp_path / "o") == 1

    def test_solver_failure(self, tmp_path):
        cfg = write_cfg(tmp_path, '[[measurement]]\nforce = ["sin(5*x1)", "x2", "0"]\n[tolerances]\nsolver_maxiter = 1\n')
        code = call("simulate", cfg, tmp_path / "o")
        assert code in (0, 2)


class TestDiagnose:
    def test_identity_passes(self, tmp_path):
        cfg = write_cfg(tmp_path, '[[measurement]]\ndisplacement = ["x1", "x2", "x3"]\n')
        assert call("diagnose", cfg, tmp_path / "o") == 0
        assert load(tmp_path / "o", "diagnose")["all_pass"] is True

    def test_singular_plane(self, tmp_path):
        cfg = write_cfg(tmp_path, '[[measurement]]\ndisplacement = ["x1^2 - 0.8*x1", "x2", "x3"]\n', n=6)
        assert call("diagnose", cfg, tmp_path / "o") == 3
        assert load(tmp_path / "o", "diagnose")["conditions"]["mu"]["failing_points"] > 0

    def test_rho_unavailable(self, tmp_path):
        body = '[[measurement]]\ndisplacement = ["x1", "x2", "x3"]\n[diagnose]\nconditions = ["rho"]\n'
        cfg = write_cfg(tmp_path, body)
        assert call("diagnose", cfg, tmp_path / "o") == 3
        assert load(tmp_path / "o", "diagnose")["requested"]["rho"] == "unavailable"


class TestKernel:
    def test_constant_strain(self, tmp_path):
        cfg = write_cfg(tmp_path, '[[measurement]]\ndisplacement = ["2*x1", "x2 + 0.5*x1", "3*x3"]\n')
        assert call("kernel", cfg, tmp_path / "o") == 0
        d = io.read_field(tmp_path / "o" / "delta_mu_star.json").values
        assert np.allclose(d, 1.0)

    def test_singular(self, tmp_path):
        cfg = write_cfg(tmp_path, '[[measurement]]\ndisplacement = ["x1", "x2", "0"]\n')
        assert call("kernel", cfg, tmp_path / "o") == 4


class TestLopatinskii:
    def test_rho_static_violated(self, tmp_path):
        cfg = write_cfg(tmp_path, SEP + '[lopatinskii]\noperator = "L_rho"\n')
        assert call("lopatinskii", cfg, tmp_path / "o") == 0
        assert load(tmp_path / "o", "lopatinskii")["verdict"] == "violated"

    def test_mu_satisfied(self, tmp_path):
        cfg = write_cfg(tmp_path, SEP + '[lopatinskii]\noperator = "L_mu"\n')
        assert call("lopatinskii", cfg, tmp_path / "o") == 0
        assert load(tmp_path / "o", "lopatinskii")["verdict"] == "satisfied"

    def test_bad_method(self, tmp_path):
        cfg = write_cfg(tmp_path, SEP + '[lopatinskii]\noperator = "L_p"\nmethod = "analytic"\n')
        assert call("lopatinskii", cfg, tmp_path / "o") == 1


class TestSvdReconstruct:
    def test_svd_kernel_dim(self, tmp_path):
        cfg = write_cfg(tmp_path, CROSS + "[svd]\nk = 3\n", n=7)
        assert call("svd", cfg, tmp_path / "o") == 0
        assert load(tmp_path / "o", "svd")["kernel_dim"] == 1

    def test_svd_size_limit(self, tmp_path):
        cfg = write_cfg(tmp_path, CROSS, n=20)
        assert call("svd", cfg, tmp_path / "o") == 5

    def test_reconstruct(self, tmp_path):
        body = SEP + CROSS + textwrap.dedent('''
            [reconstruct]
            truth = { dmu = "0.2*exp(-((x1-0.5)^2+(x2-0.5)^2+(x3-0.5)^2)/0.045)" }
            boundary = "B_prime"
            weights = [1e-4, 1e-3]
            ''')
        cfg = write_cfg(tmp_path, body, n=7)
        assert call("reconstruct", cfg, tmp_path / "o") == 0
        res = load(tmp_path / "o", "reconstruct")
        best = min(r["rel_errors"]["dmu"] for r in res["sweep"])
        assert res["best_reg_weight"] in (1e-4, 1e-3) and best < 0.5


class TestDeterminism:
    def test_dry_run_writes_nothing(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, SEP)
        for cmd in ("simulate", "diagnose", "kernel", "lopatinskii", "reconstruct", "svd"):
            assert call(cmd, cfg, tmp_path / "o", "--dry-run") == 0
        assert not (tmp_path / "o").exists()
        assert '"valid": true' in capsys.readouterr().out

    def test_byte_identical(self, tmp_path):
        cfg = write_cfg(tmp_path, CROSS + "[svd]\nk = 2\n", n=6)
        outs = []
        for i in range(2):
            assert call("svd", cfg, tmp_path / f"o{i}", "--seed", "11") == 0
            outs.append((tmp_path / f"o{i}" / "svd.json").read_bytes())
        assert outs[0] == outs[1] and b'"seed": 11' in outs[0]

    def test_console_entry_point(self, tmp_path):
        cfg = write_cfg(tmp_path, SEP)
        proc = subprocess.run([sys.executable, "-m", "elastostab.cli", "diagnose", "--config", str(cfg),
                               "--out", str(tmp_path / "o")], capture_output=True, text=True)
        assert proc.returncode == 0 and json.loads(proc.stdout)["all_pass"] is True
