import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from rotmhd.config import default_config_text, load_config, parse_config
from rotmhd.dynamics import CSV_COLUMNS, LimitParams, diagnostics_compute
from rotmhd.errors import BoundsError, ConfigError, IoError, ParseError, SchemaError
from rotmhd.experiments import InitialDataPreset, make_initial_data
from rotmhd.io import RunManifest, read_snapshot, write_snapshot, write_timeseries

MINIMAL = """\
grid:
  n: 32
physics:
  epsilon: 0.1
"""


class TestParse:
    def test_minimal_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.grid.n == 32 and cfg.physics.epsilon == 0.1
        assert cfg.physics.nu.value(1.0) == 1.0 and cfg.physics.rho_min == 0.05
        assert cfg.integrator.scheme == "imex_rk3" and cfg.integrator.cfl == 0.4
        assert cfg.experiment.kind == "run" and cfg.preset.kind == "taylor_green"
        assert cfg.output.directory == "out"

    def test_default_text_parses(self):
        cfg = parse_config(default_config_text())
        assert cfg.grid.n == 64

    def test_negative_epsilon(self):
        with pytest.raises(BoundsError) as exc:
            parse_config(MINIMAL.replace("0.1", "-1"))
        assert exc.value.path == "physics.epsilon" and exc.value.line == 4

    def test_misspelled_key_suggests(self):
        with pytest.raises(SchemaError) as exc:
            parse_config(MINIMAL + "  viscocity: 0.5\n")
        assert "did you mean 'nu'" in str(exc.value) and exc.value.line == 5

    def test_synonym_suggests(self):
        with pytest.raises(SchemaError, match="did you mean 'mu'"):
            parse_config(MINIMAL + "  resistivity: 0.5\n")

    def test_malformed_yaml(self):
        with pytest.raises(ParseError):
            parse_config("grid: [1, 2\n")

    def test_seed_mandatory_for_random_preset(self):
        with pytest.raises(SchemaError, match="seed"):
            parse_config(MINIMAL + "initial_data:\n  kind: quasi_homog\n")
        cfg = parse_config(MINIMAL + "initial_data:\n  kind: quasi_homog\nseed: 3\n")
        assert cfg.preset.get("seed") == 3

    def test_law_forms(self):
        text = MINIMAL + "  nu: {kind: affine, c0: 0.5, c1: 0.25}\n  mu: {kind: table, nodes: [0, 2], values: [1, 2]}\n"
        cfg = parse_config(text)
        assert cfg.physics.nu.value(2.0) == pytest.approx(1.0)
        assert cfg.physics.mu.value(1.0) == pytest.approx(1.5)
        assert cfg.limit == LimitParams(0.75, 1.5)

    def test_sweep_needs_list(self):
        with pytest.raises(SchemaError):
            parse_config(MINIMAL + "experiment:\n  kind: sweep_qh\n")
        text = "grid: {n: 32}\nphysics: {epsilon_list: [0.1, 0.05]}\nexperiment: {kind: sweep_qh}\n" \
               "initial_data: {kind: quasi_homog}\nseed: 0\n"
        cfg = parse_config(text)
        assert cfg.epsilons == (0.1, 0.05) and cfg.physics.qh_cancellation

    def test_increasing_epsilons_rejected(self):
        with pytest.raises(BoundsError):
            parse_config("grid: {n: 32}\nphysics: {epsilon_list: [0.05, 0.1]}\n")

    def test_bad_grid(self):
        with pytest.raises(BoundsError):
            parse_config("grid: {n: 15}\nphysics: {epsilon: 0.1}\n")
        with pytest.raises(SchemaError):
            parse_config("physics: {epsilon: 0.1}\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "nope.yaml"))


class TestHash:
    def test_formatting_insensitive(self):
        a = parse_config(MINIMAL)
        b = parse_config("# comment\ngrid: {n: 32}\nphysics:\n    epsilon: 1.0e-1\n    nu: 1\n")
        assert a.config_hash() == b.config_hash()

    def test_output_directory_ignored(self):
        a = parse_config(MINIMAL)
        b = parse_config(MINIMAL + "output: {directory: elsewhere}\n")
        assert a.config_hash() == b.config_hash()

    def test_meaningful_change(self):
        a = parse_config(MINIMAL)
        b = parse_config(MINIMAL.replace("0.1", "0.2"))
        c = parse_config(MINIMAL + "integrator: {scheme: imex_rk2}\n")
        assert len({a.config_hash(), b.config_hash(), c.config_hash()}) == 3


class TestTimeseries:
    def test_empty_stream_is_header_only(self, tmp_path):
        p = tmp_path / "ts.csv"
        assert write_timeseries([], p) == 0
        assert p.read_text() == ",".join(CSV_COLUMNS) + "\n"

    def test_golden_header(self):
        assert CSV_COLUMNS == ("time", "kinetic_energy", "magnetic_energy", "viscous_dissipation",
                               "resistive_dissipation", "div_u_norm", "div_b_norm", "r_l2", "r_l4", "r_linf",
                               "sigma_sobolev_proxy", "rho0u_constraint")

    def test_values_round_trip(self, tmp_path, g32):
        state = make_initial_data(InitialDataPreset.make("quasi_homog", seed=0), g32)
        rec = diagnostics_compute(state, LimitParams())
        p = tmp_path / "ts.csv"
        write_timeseries([rec, rec], p)
        rows = list(csv.reader(p.open()))
        assert len(rows) == 3
        assert [float(x) for x in rows[1]] == list(rec.row())

    def test_unwritable(self, tmp_path):
        (tmp_path / "f").write_text("x")
        with pytest.raises(IoError):
            write_timeseries([], tmp_path / "f" / "ts.csv")


class TestSnapshot:
    @pytest.mark.parametrize("eps", [None, 0.1])
    def test_bit_exact_round_trip(self, tmp_path, g32, eps):
        state = make_initial_data(InitialDataPreset.make("quasi_homog", seed=2), g32, eps)
        state = replace(state, time=1 / 3)
        p = tmp_path / "s.rmhd"
        write_snapshot(p, state)
        snap = read_snapshot(p)
        back = snap.to_state()
        assert back.time == state.time and type(back) is type(state)
        assert np.array_equal(back.u.stack(), state.u.stack())
        assert np.array_equal(back.b.stack(), state.b.stack())
        write_snapshot(tmp_path / "t.rmhd", back)
        assert (tmp_path / "t.rmhd").read_bytes() == p.read_bytes()

    def test_corrupt_files(self, tmp_path, g32):
        bad = tmp_path / "bad.rmhd"
        bad.write_bytes(b"hello")
        with pytest.raises(IoError, match="magic"):
            read_snapshot(bad)
        state = make_initial_data(InitialDataPreset.make("taylor_green"), g32)
        p = tmp_path / "s.rmhd"
        write_snapshot(p, state)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(IoError, match="corrupt"):
            read_snapshot(p)
        with pytest.raises(IoError):
            read_snapshot(tmp_path / "missing.rmhd")


def test_manifest_inventory(tmp_path):
    (tmp_path / "a.txt").write_text("alpha")
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "b.txt").write_text("beta")
    m = RunManifest("abc", "0.1.0", runs=[{"name": "run", "status": "ok"}])
    m.inventory(tmp_path)
    m.write(tmp_path)
    body = json.loads((tmp_path / "manifest.json").read_text())
    assert [f["path"] for f in body["files"]] == ["a.txt", "sub/b.txt"]
    assert body["files"][0]["bytes"] == 5 and len(body["files"][0]["sha256"]) == 64
    assert body["config_hash"] == "abc"
