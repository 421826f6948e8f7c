import json
from pathlib import Path

import numpy as np
import pytest

from catres.artifacts import dump_state, load_state, read_csv, read_table, read_wigner
from catres.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from catres.config import ExperimentConfig, config_hash, parse_alpha, parse_override
from catres.errors import ConfigurationError
from catres.experiments import worker_count
from catres.hilbert import MixedState, coherent_state, ModeLayout, MECHANICAL

FAST_TP = ["--set", "grid.n_samples=41"]
FAST_CAT = ["--set", "cat.n_values=[1]", "--set", "cat.wigner_points=21"]


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    return main([*args, "--out", str(out)]), out


def data_files(d: Path):
    return sorted(p for p in d.rglob("*") if p.suffix in (".csv", ".bin") or p.name == "meta.json")


def test_override_parsing():
    assert parse_override("params.delta=2.5e6") == (["params", "delta"], 2.5e6)
    assert parse_override("cat.n_values=[1,3]") == (["cat", "n_values"], [1, 3])
    assert parse_override("measurement.record=max") == (["measurement", "record"], "max")
    with pytest.raises(ConfigurationError):
        parse_override("novalue")
    assert parse_alpha([3, 1]) == 3 + 1j
    assert parse_alpha("3+1j") == 3 + 1j


def test_config_layers_and_hash():
    a = ExperimentConfig.load(None, ["params.delta=1e7"], "two-phonon")
    assert a.tree["params"]["delta"] == 1e7 and a.tree["params"]["alpha"] == 0.0
    b = ExperimentConfig.from_tree({"params": {"delta": 1e7}}, (), "two-phonon")
    assert a.hash == b.hash and len(a.hash) == 16
    assert config_hash({"x": 1, "y": 2}) == config_hash({"y": 2, "x": 1})
    rb = ExperimentConfig.load(None, [], "robustness")
    assert rb.params.omega_m == 10e9 and rb.params.gamma == 10.0


@pytest.mark.parametrize(
    "override",
    [
        "params.nonsense=1",
        "grid.n_samples=1",
        "params.g0=-1",
        "measurement.record=[1]",
        "cat.n_values=[]",
        "params.omega3=1e14",
        'sweep.axes=[{"name": "params.allow_omega3_mismatch", "values": [true]}]',
        'sweep.axes=[{"name": "params.bogus", "values": [1]}]',
    ],
)
def test_invalid_configs_exit_2(tmp_path, override):
    exp = "sweep" if override.startswith("sweep") else "two-phonon"
    code, _ = run(tmp_path, exp, "--set", override)
    assert code == EXIT_CONFIG


def test_missing_or_malformed_config_file(tmp_path):
    assert run(tmp_path, "cat", "--config", str(tmp_path / "nope.json"))[0] == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(tmp_path, "cat", "--config", str(bad))[0] == EXIT_CONFIG
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"experiment": "cat"}))
    assert run(tmp_path, "two-phonon", "--config", str(wrong))[0] == EXIT_CONFIG


def test_regime_violation_is_refused(tmp_path):
    assert run(tmp_path, "two-phonon", "--set", "params.delta=2e6", *FAST_TP)[0] == EXIT_CONFIG
    code, _ = run(tmp_path, "two-phonon", "--set", "params.delta=2e6", "--set", "regime.enforce=false", *FAST_TP)
    assert code == EXIT_OK


def test_mechanical_truncation_is_refused(tmp_path):
    assert run(tmp_path, "cat", "--set", "hilbert.mech_dim=12", *FAST_CAT)[0] == EXIT_CONFIG


def test_coarse_substep_exits_3(tmp_path):
    assert run(tmp_path, "two-phonon", "--set", "two_phonon.substep=1e-6", *FAST_TP)[0] == EXIT_NUMERIC


def test_two_phonon_outputs(tmp_path):
    code, out = run(tmp_path, "two-phonon", *FAST_TP)
    assert code == EXIT_OK
    meta = json.loads((out / "meta.json").read_text())
    for f in ("timeseries.csv", "distribution.csv"):
        h, header, rows = read_csv(out / f)
        assert h == meta["config_hash"] and rows
    ts = read_table(out / "timeseries.csv")
    assert len(ts["t_s"]) == 41
    info = json.loads((out / "run_info.json").read_text())
    assert "wall_time_s" in info and "wall_time_s" not in meta
    assert meta["kernel_backend"] in ("cython", "python")


def test_cat_outputs_and_state_dump(tmp_path):
    code, out = run(tmp_path, "cat", *FAST_CAT)
    assert code == EXIT_OK
    wfiles = sorted(out.glob("wigner_*.csv"))
    assert len(wfiles) == 2
    x, p, w = read_wigner(wfiles[0])
    assert w.shape == (21, 21) and x[0] == pytest.approx(-5.5)
    st, header = load_state(next(out.glob("state_n1_*.bin")))
    assert header["config_hash"] == json.loads((out / "meta.json").read_text())["config_hash"]
    assert st.norm == pytest.approx(1.0, abs=1e-12)


def test_state_dump_roundtrip(tmp_path):
    lay = ModeLayout.of(("b", 20, MECHANICAL))
    psi = coherent_state(lay, "b", 1 + 1j)
    dump_state(tmp_path / "a.bin", psi, "abc")
    back, header = load_state(tmp_path / "a.bin")
    assert header["kind"] == "pure" and back.layout == lay
    np.testing.assert_array_equal(back.amplitudes, psi.amplitudes)
    rho = psi.to_mixed()
    dump_state(tmp_path / "b.bin", rho, "abc")
    back, _ = load_state(tmp_path / "b.bin")
    assert isinstance(back, MixedState)
    np.testing.assert_array_equal(back.rho, rho.rho)
    (tmp_path / "c.bin").write_bytes(b"garbage")
    with pytest.raises(ConfigurationError):
        load_state(tmp_path / "c.bin")


def test_repeat_runs_are_byte_identical(tmp_path):
    _, a = run(tmp_path, "cat", *FAST_CAT, name="a")
    _, b = run(tmp_path, "cat", *FAST_CAT, name="b")
    fa, fb = data_files(a), data_files(b)
    assert [p.name for p in fa] == [p.name for p in fb]
    for x, y in zip(fa, fb):
        assert x.read_bytes() == y.read_bytes(), x.name


SWEEP = ["--set", "grid.n_samples=41", "--set",
         'sweep.axes=[{"name": "params.delta", "values": [10e6, 5e6]}, {"name": "params.g0", "values": [1e6, 0.8e6]}]']


def test_sweep_is_sorted_and_worker_invariant(tmp_path, monkeypatch):
    monkeypatch.delenv("CATRES_THREADS", raising=False)
    c1, one = run(tmp_path, "sweep", *SWEEP, "--set", "sweep.workers=1", name="w1")
    c2, two = run(tmp_path, "sweep", *SWEEP, "--set", "sweep.workers=2", name="w2")
    assert c1 == c2 == EXIT_OK
    t1 = read_csv(one / "sweep.csv")
    t2 = read_csv(two / "sweep.csv")
    assert t1[1:] == t2[1:]
    pts = [(float(r[0]), float(r[1])) for r in t1[2]]
    assert pts == sorted(pts) and len(pts) == 4
    for d in sorted(one.glob("point_*")):
        for f in ("timeseries.csv", "distribution.csv"):
            assert (d / f).read_bytes() == (two / d.name / f).read_bytes()


def test_empty_sweep_matches_base_command(tmp_path):
    _, base = run(tmp_path, "two-phonon", *FAST_TP, "--set", "regime.enforce=false", name="base")
    code, sw = run(tmp_path, "sweep", *FAST_TP, "--set", "sweep.axes=[]", name="sweep")
    assert code == EXIT_OK
    for f in ("timeseries.csv", "distribution.csv"):
        assert read_csv(base / f)[1:] == read_csv(sw / "point_base" / f)[1:]
    assert len(read_csv(sw / "sweep.csv")[2]) == 1


def test_worker_cap_from_environment(monkeypatch):
    monkeypatch.setenv("CATRES_THREADS", "2")
    assert worker_count(8, 10) == 2
    assert worker_count(8, 1) == 1
    monkeypatch.setenv("CATRES_THREADS", "zero")
    with pytest.raises(ConfigurationError):
        worker_count(None, 4)
