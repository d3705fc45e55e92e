import json
import os
import struct

import numpy as np
import pytest
import yaml

from memsde.errors import ConfigError, FormatError
from memsde.harness import cli
from memsde.harness.config import dump_config, expand_sweep, load_config, parse_config
from memsde.harness.experiments import build_past, run_experiment
from memsde.harness.io import (
    HEADER,
    emit_csv,
    file_digest,
    load_trajectory,
    read_csv,
    read_trajectory,
    save_path,
    write_trajectory,
)
from memsde.pathspace import FullPath, FuturePath, HistoryPath


def test_trajectory_roundtrip(tmp_path):
    p = tmp_path / "a.msde"
    x = np.random.default_rng(0).normal(size=(50, 2))
    write_trajectory(p, x, 0.01, -0.2, seed=7)
    tf = read_trajectory(p)
    assert tf.samples.tobytes() == x.tobytes()
    assert (tf.dt, tf.origin_time, tf.seed, tf.version) == (0.01, -0.2, 7, 1)


def test_full_path_roundtrip(tmp_path):
    past = HistoryPath([3.0, 2.0, 1.0], 0.5)
    fut = FuturePath([3.0, 4.0, 5.0, 6.0], 0.5)
    p = tmp_path / "full.msde"
    save_path(p, FullPath(past, fut))
    back = load_trajectory(p)
    assert np.array_equal(back.past.samples, past.samples)
    assert np.array_equal(back.future.samples, fut.samples)
    save_path(tmp_path / "h.msde", past)
    assert read_trajectory(tmp_path / "h.msde").origin_time == -1.0
    with pytest.raises(TypeError):
        save_path(tmp_path / "x.msde", np.zeros(3))


def test_format_errors(tmp_path):
    p = tmp_path / "t.msde"
    write_trajectory(p, np.zeros((4, 1)), 0.1)
    raw = p.read_bytes()
    bad = tmp_path / "bad"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        read_trajectory(bad)
    bad.write_bytes(raw[:4] + struct.pack("<I", 9) + raw[8:])
    with pytest.raises(FormatError, match="expected 1, found 9"):
        read_trajectory(bad)
    bad.write_bytes(raw[:-8])
    with pytest.raises(FormatError, match="size mismatch"):
        read_trajectory(bad)
    bad.write_bytes(raw[: HEADER.size - 1])
    with pytest.raises(FormatError, match="header"):
        read_trajectory(bad)


def test_csv_roundtrip(tmp_path):
    p = tmp_path / "s.csv"
    v = np.array([0.1, 1 / 3, np.pi])
    emit_csv({"t": np.arange(3.0), "v": v}, p)
    assert p.read_text().splitlines()[0] == "t,v"
    back = read_csv(p)
    assert np.array_equal(back["v"], v)
    with pytest.raises(ValueError):
        emit_csv({"a": np.zeros(2), "b": np.zeros(3)}, p)


def test_config_roundtrip_and_hash(tmp_path):
    cfg = parse_config({"experiment": "simulate", "drift": {"kind": "gaussian_kernel"}, "seeds": [1, 2]})
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    again = load_config(path)
    assert again == cfg and again.config_hash() == cfg.config_hash()
    other = cfg.with_overrides(**{"solver.dt": 0.01})
    assert other.config_hash() != cfg.config_hash() and other.solver.dt == 0.01


@pytest.mark.parametrize(
    "data,key",
    [
        ({"experiment": "simulate", "drfit": {}}, "drfit"),
        ({"experiment": "simulate", "solver": {"dtt": 0.1}}, "solver.dtt"),
        ({"experiment": "simulate", "seeds": []}, "seeds"),
        ({"experiment": "simulate", "solver": {"dt": -1}}, "solver.dt"),
        ({"experiment": "kb", "params": {"thinning": 3}}, "params.thinning"),
        ({"experiment": "girsanov"}, "drift2"),
        ({"experiment": "fly"}, "experiment"),
        ({"experiment": "spde", "sweep": {"spde.nn0": [1]}}, "sweep.spde.nn0"),
    ],
)
def test_config_errors_name_the_key(data, key):
    with pytest.raises(ConfigError) as err:
        parse_config(data)
    assert err.value.key == key


def test_sweep_expansion():
    cfg = parse_config({"experiment": "spde", "spde": {"n0": [2, 3], "nu": [0.5, 1.0]}})
    pts = expand_sweep(cfg)
    assert len(pts) == 4
    assert {(a["spde.n0"], a["spde.nu"]) for a, _ in pts} == {(2, 0.5), (2, 1.0), (3, 0.5), (3, 1.0)}
    assert all(not c.sweep and isinstance(c.spde.n0, int) for _, c in pts)


def test_function_past():
    cfg = parse_config({"experiment": "simulate", "solver": {"dt": 0.1},
                        "past": {"kind": "function", "expr": "where(t > -1, sin(t), 0)", "window": 2.0}})
    x = build_past(cfg.past, cfg.solver.dt, 1)
    assert x.samples[0, 0] == 0.0
    assert x.samples[5, 0] == pytest.approx(np.sin(-0.5))
    assert x.samples[-1, 0] == 0.0


def _simulate_cfg(out):
    return parse_config({"experiment": "simulate", "out": str(out), "seeds": [0, 1],
                         "drift": {"kind": "gaussian_kernel"},
                         "past": {"kind": "constant", "value": 0.0, "window": 8.0},
                         "solver": {"dt": 0.01, "horizon": 2.0}})


def test_runs_are_deterministic(tmp_path):
    m1 = run_experiment(_simulate_cfg(tmp_path / "a"))
    m2 = run_experiment(_simulate_cfg(tmp_path / "b"))
    # config.yaml records the output root, so only the data files are compared
    data1 = {k: v for k, v in m1.outputs.items() if k != "config.yaml"}
    data2 = {k: v for k, v in m2.outputs.items() if k != "config.yaml"}
    assert data1 and data1 == data2
    assert m1.exit_code == 0 and m1.verify()
    man = json.loads(open(os.path.join(m1.run_dir, "manifest.json")).read())
    assert man["config_hash"] == m1.config_hash
    lines = (tmp_path / "a" / "manifests.jsonl").read_text().splitlines()
    assert len(lines) == 1
    trajs = [p for p in m1.outputs if p.endswith(".msde")]
    assert trajs
    first = os.path.join(m1.run_dir, trajs[0])
    assert file_digest(first) == m1.outputs[trajs[0]]
    assert load_trajectory(first).future.n == 201


def test_sweep_run_writes_point_directories(tmp_path):
    cfg = parse_config({"experiment": "spde", "out": str(tmp_path),
                        "spde": {"cutoff": 8, "n0": [2, 3], "horizon": 0.5, "experiment": "sync"}})
    man = run_experiment(cfg)
    dirs = sorted(m["dir"] for m in man.points)
    assert dirs == ["p000_n0=2", "p001_n0=3"]
    assert all(os.path.isdir(os.path.join(man.run_dir, d)) for d in dirs)


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    good.write_text(yaml.safe_dump({"experiment": "simulate", "drift": {"kind": "markov_linear"},
                                    "solver": {"dt": 0.01, "horizon": 1.0}, "past": {"window": 0.0}}))
    assert cli.main(["simulate", "--config", str(good), "--out", str(tmp_path / "r")]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"experiment": "simulate", "solver": {"dtt": 0.01}}))
    assert cli.main(["simulate", "--config", str(bad)]) == 1
    assert "solver.dtt" in capsys.readouterr().err
    assert cli.main(["kb", "--config", str(good)]) == 1  # config is for another experiment
    boom = tmp_path / "boom.yaml"
    boom.write_text(yaml.safe_dump({"experiment": "simulate", "drift": {"kind": "markov_linear", "A": 5.0},
                                    "solver": {"dt": 0.01, "horizon": 50.0, "blowup_radius": 100.0},
                                    "past": {"value": 1.0, "window": 0.0}}))
    assert cli.main(["simulate", "--config", str(boom), "--out", str(tmp_path / "r")]) == 2
    assert cli.main(["spde", "gl", "--cutoff", "8", "--horizon", "0.2", "--experiment", "probe",
                     "--out", str(tmp_path / "r")]) == 0
    # too short a horizon for the high modes to synchronize: the check fails
    assert cli.main(["spde", "gl", "--cutoff", "8", "--horizon", "0.05", "--experiment", "sync",
                     "--out", str(tmp_path / "r")]) == 3


def test_kb_needs_seeds():
    with pytest.raises(ConfigError) as err:
        parse_config({"experiment": "kb", "seeds": []})
    assert err.value.key == "seeds"


def test_sweep_manifest_indexes_every_point(tmp_path):
    cfg = parse_config({"experiment": "spde", "out": str(tmp_path),
                        "spde": {"cutoff": 8, "n0": [2, 3], "horizon": 0.3, "experiment": "probe"}})
    man = run_experiment(cfg)
    assert [p["assignment"] for p in man.points] == [{"spde.n0": 2}, {"spde.n0": 3}]
    assert {t["name"].split("/")[0] for t in man.tasks} == {"p000_n0=2", "p001_n0=3"}
    assert any(k.startswith("p000_n0=2/") for k in man.outputs)
