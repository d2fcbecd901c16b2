import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from chiral_smatrix.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, load_schema, main, validate_config, ConfigError


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


TWO_LEVEL = {
    "g_ref": 1.0,
    "emitter": {"type": "two_level", "Omega": 0.5, "g": 1.0},
    "s1": {"p": {"start": -4.5, "stop": 5.5, "num": 101}},
}


class TestSchema:
    def test_schema_loads(self):
        assert load_schema()["required"] == ["g_ref"]

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            validate_config({**TWO_LEVEL, "bogus": 1})

    def test_negative_coupling(self):
        bad = {**TWO_LEVEL, "emitter": {"type": "two_level", "Omega": 0.0, "g": -1.0}}
        with pytest.raises(ConfigError):
            validate_config(bad)


class TestS1:
    def test_two_level_sweep(self, tmp_path):
        out = tmp_path / "s1.csv"
        assert main(["s1", "--config", write(tmp_path, "c.json", TWO_LEVEL), "--out", str(out)]) == EXIT_OK
        rows = read_csv(out)
        assert len(rows) == 101
        assert max(abs(float(r["abs_S"]) - 1) for r in rows) <= 1e-12
        # g = g_ref means Gamma = 1: at p = Omega + 1 the amplitude is -i
        r = min(rows, key=lambda r: abs(float(r["p"]) - 1.5))
        assert complex(float(r["re_S"]), float(r["im_S"])) == pytest.approx(-1j, abs=1e-12)

    def test_sigma_ignores_g32(self, tmp_path):
        cols = []
        for g32 in (0.0, 1.0, 10.0):
            cfg = {
                "g_ref": 1.0,
                "emitter": {"type": "sigma", "eps1": 0.0, "eps2": 0.3, "eps3": 1.0, "g21": 1.0, "g32": g32},
                "s1": {"p": {"start": -5, "stop": 5, "num": 41}},
            }
            out = tmp_path / f"sig{g32}.csv"
            assert main(["s1", "--config", write(tmp_path, f"s{g32}.json", cfg), "--out", str(out)]) == EXIT_OK
            rows = read_csv(out)
            cols.append([(r["p"], r["re_S"], r["im_S"], r["abs_S"], r["arg_S"]) for r in rows])
        assert cols[0] == cols[1] == cols[2]

    def test_lambda_channels(self, tmp_path):
        cfg = {
            "g_ref": 1.0,
            "emitter": {"type": "lambda", "eps1": 0.0, "eps2": -0.5, "eps3": 0.0, "g31": 0.8, "g32": 0.6},
            "s1": {"p": {"values": [0.0, 0.4]}},
        }
        out = tmp_path / "lam.csv"
        assert main(["s1", "--config", write(tmp_path, "l.json", cfg), "--out", str(out)]) == EXIT_OK
        rows = read_csv(out)
        for p in ("0", "0.40000000000000002"):
            col = [r for r in rows if r["p"] == p and r["channel_in"] == "1"]
            assert sum(float(r["abs_S"]) ** 2 for r in col) == pytest.approx(1, abs=1e-12)
        raman = [r for r in rows if r["channel_in"] == "1" and r["channel_out"] == "2"]
        assert float(raman[0]["p_out"]) == pytest.approx(0.5)

    def test_strict_flags_pole(self, tmp_path):
        cfg = {**TWO_LEVEL, "emitter": {"type": "two_level", "Omega": 0.0, "g": 0.0}, "s1": {"p": {"values": [0.0, 1.0]}}}
        path = write(tmp_path, "c.json", cfg)
        out = str(tmp_path / "o.csv")
        assert main(["s1", "--config", path, "--out", out]) == EXIT_OK
        assert [r["flagged"] for r in read_csv(out)] == ["1", "0"]
        assert main(["s1", "--config", path, "--out", out, "--strict"]) == EXIT_FAIL

    def test_deterministic(self, tmp_path):
        path = write(tmp_path, "c.json", TWO_LEVEL)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["s1", "--config", path, "--out", str(a)])
        main(["s1", "--config", path, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_json_mirrors_csv(self, tmp_path):
        path = write(tmp_path, "c.json", TWO_LEVEL)
        main(["s1", "--config", path, "--out", str(tmp_path / "a.csv")])
        main(["s1", "--config", path, "--out", str(tmp_path / "a.json"), "--format", "json"])
        rows = read_csv(tmp_path / "a.csv")
        recs = json.loads((tmp_path / "a.json").read_text())["s1"]
        assert list(recs[0].keys()) == list(rows[0].keys())
        assert [float(r["re_S"]) for r in rows] == [r["re_S"] for r in recs]


class TestErrors:
    def test_malformed(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"g_ref": 1.0, "emitter": {"type": "two_level"')
        assert main(["s1", "--config", str(path)]) == EXIT_USAGE
        assert "error" in capsys.readouterr().err

    def test_schema_violation(self, tmp_path, capsys):
        cfg = {**TWO_LEVEL, "emitter": {"type": "two_level", "Omega": 0.0}}
        assert main(["s1", "--config", write(tmp_path, "c.json", cfg)]) == EXIT_USAGE
        assert "error" in capsys.readouterr().err

    def test_missing_config(self):
        assert main(["s2"]) == EXIT_USAGE

    def test_unknown_command(self):
        assert main(["frobnicate"]) == EXIT_USAGE


class TestS2:
    def s2_rows(self, tmp_path, name, system):
        cfg = {
            "g_ref": 1.0,
            **system,
            "s2": {
                "E": {"start": -3, "stop": 3, "num": 7},
                "Delta": {"values": [0.0, 0.5, 1.5]},
                "DeltaPrime": {"values": [-0.7, 0.2]},
            },
        }
        out = tmp_path / f"{name}.csv"
        assert main(["s2", "--config", write(tmp_path, f"{name}.json", cfg), "--out", str(out)]) == EXIT_OK
        return read_csv(out), read_csv(tmp_path / f"{name}.poles.csv")

    def test_dicke_m1_equals_decoupled_pair(self, tmp_path):
        d, _ = self.s2_rows(tmp_path, "d", {"emitter": {"type": "dicke", "M": 1, "Omega": 0.3, "g": 1.0}})
        c, _ = self.s2_rows(
            tmp_path,
            "c",
            {
                "chain": {
                    "members": [
                        {"emitter": {"type": "two_level", "Omega": 0.3, "g": 1.0}, "position": 1.0},
                        {"emitter": {"type": "two_level", "Omega": -0.4, "g": 0.0}, "position": -1.0},
                    ]
                }
            },
        )
        assert len(d) == len(c) == 42
        Td = np.array([complex(float(r["re_T"]), float(r["im_T"])) for r in d])
        Tc = np.array([complex(float(r["re_T"]), float(r["im_T"])) for r in c])
        assert np.max(np.abs(Td - Tc)) <= 1e-10

    def test_bound_state_pole_row(self, tmp_path):
        _, poles = self.s2_rows(
            tmp_path,
            "pair",
            {
                "chain": {
                    "members": [
                        {"emitter": {"type": "two_level", "Omega": 0.2, "g": 1.0}, "position": 1.0},
                        {"emitter": {"type": "two_level", "Omega": -0.5, "g": math.sqrt(2)}, "position": -1.0},
                    ]
                }
            },
        )
        bound = [r for r in poles if r["kind"] == "bound-state"]
        assert len(bound) == 1
        assert float(bound[0]["re_E"]) == pytest.approx(-0.3, abs=1e-12)
        assert float(bound[0]["im_E"]) == pytest.approx(-3.0, abs=1e-12)

    def test_off_shell_point(self, tmp_path, capsys):
        cfg = {"g_ref": 1.0, "emitter": {"type": "two_level", "Omega": 0.0, "g": 1.0}, "s2": {"points": [[0.1, 0.2, 0.3, 0.4]]}}
        assert main(["s2", "--config", write(tmp_path, "c.json", cfg)]) == EXIT_USAGE
        assert "off-shell" in capsys.readouterr().err

    def test_three_level_unsupported(self, tmp_path):
        cfg = {
            "g_ref": 1.0,
            "emitter": {"type": "v", "eps1": 0.0, "eps2": 1.0, "eps3": -1.0, "g21": 1.0, "g31": 1.0},
            "s2": {"points": [[0.1, 0.2, 0.1, 0.2]]},
        }
        assert main(["s2", "--config", write(tmp_path, "c.json", cfg)]) == EXIT_USAGE


class TestCoherent:
    def test_json_tables(self, tmp_path):
        cfg = {
            "g_ref": 1.0,
            "emitter": {"type": "two_level", "Omega": 0.0, "g": 1.0},
            "coherent": {"k": 0.0, "alpha": [0.5, 0.0], "L": 10.0, "n_max": 2, "x": {"start": -4, "stop": 4, "num": 9}},
        }
        out = tmp_path / "coh.json"
        assert main(["coherent", "--config", write(tmp_path, "c.json", cfg), "--out", str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        assert set(doc) >= {"amplitude1", "amplitude2", "g2"}


class TestVerify:
    def test_all_pass(self, capsys):
        assert main(["verify"]) == EXIT_OK
        text = capsys.readouterr().out
        assert "FAIL" not in text
        assert "discrepancy/dicke_M2_Omega0.5" in text
        assert "simplified=" in text


class TestSweep:
    def test_resumable(self, tmp_path, capsys):
        cfg = {
            **TWO_LEVEL,
            "s1": {"p": {"start": -2, "stop": 2, "num": 5}},
            "sweep": {"command": "s1", "parameter": "emitter.g", "values": [0.5, 1.0, 2.0]},
        }
        path = write(tmp_path, "c.json", cfg)
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", path, "--out", str(out)]) == EXIT_OK
        man = json.loads((out / "manifest.json").read_text())
        assert sorted(man["points"]) == ["0", "1", "2"]
        first = (out / "point_0001.csv").read_bytes()
        (out / "point_0002.csv").unlink()
        capsys.readouterr()
        assert main(["sweep", "--config", path, "--out", str(out)]) == EXIT_OK
        assert "2 point(s) already complete" in capsys.readouterr().err
        assert (out / "point_0001.csv").read_bytes() == first
        assert (out / "point_0002.csv").exists()

    def test_bad_parameter_path(self, tmp_path):
        cfg = {**TWO_LEVEL, "sweep": {"command": "s1", "parameter": "emitter.nope", "values": [1.0]}}
        assert main(["sweep", "--config", write(tmp_path, "c.json", cfg), "--out", str(tmp_path / "s")]) == EXIT_USAGE


def test_console_script(tmp_path):
    path = write(tmp_path, "c.json", TWO_LEVEL)
    proc = subprocess.run(
        [sys.executable, "-m", "chiral_smatrix.cli", "s1", "--config", path],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    rows = list(csv.DictReader(io.StringIO(proc.stdout)))
    assert len(rows) == 101


@pytest.mark.parametrize("name", ["two_level_s1", "two_atoms_s2", "coherent", "sweep_coupling"])
def test_shipped_configs_validate(name):
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "scripts" / "configs" / f"{name}.json"
    validate_config(json.loads(path.read_text()))
