import json
import math

import numpy as np
import pytest

from excursion.cli import main
from excursion.experiments import (
    CATALOG_COLUMNS,
    COMPARE_COLUMNS,
    EC_CURVE_COLUMNS,
    SIMULATE_COLUMNS,
    TAIL_COLUMNS,
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config_text,
    read_csv,
)


def run(tmp_path, cmd, *sets, name="cfg.txt", text="seed = 7\n", workers=1, out="out"):
    cfg = tmp_path / name
    cfg.write_text(text)
    argv = [cmd, "--config", str(cfg), "--out", str(tmp_path / out), "--workers", str(workers)]
    for s in sets:
        argv += ["--set", s]
    return main(argv)


def header(path):
    lines = path.read_text().splitlines()
    meta = [ln for ln in lines if ln.startswith("# ")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return meta, body[0].split(",")


def test_config_parsing(tmp_path):
    raw = parse_config_text("seed = 3  # comment\nlevels = 10, 20\nqueries = *:1>=1; +:0>=1\n")
    cfg = ExperimentConfig.from_mapping(raw)
    assert cfg.levels == (10.0, 20.0) and cfg.query_texts == ("*:1>=1", "+:0>=1")
    assert load_config(None, seed=1, d=2).query_texts[2] == "**:2>=1 & ++:0>=1"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"seed": "1", "d": "2", "queries": "*:1>=1"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"seed": "1", "bogus": "2"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"kernel": "gaussian_bump"})
    with pytest.raises(ConfigError):
        parse_config_text("seed 3")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"seed": "1", "levels": "0.5"})
    assert load_config(None, seed=1).hash() == load_config(None, seed=1, out="elsewhere").hash()
    assert load_config(None, seed=1).hash() != load_config(None, seed=2).hash()


def test_missing_seed_exits_2(tmp_path):
    assert run(tmp_path, "catalog", text="kernel = gaussian_bump\n") == 2


def test_unknown_kernel_exits_2(tmp_path):
    assert run(tmp_path, "catalog", "kernel=box") == 2


def test_catalog_outside_window_exits_2(tmp_path):
    assert run(tmp_path, "catalog", "catalog_lo=-1", "catalog_hi=50") == 2


def test_missing_config_file_exits_5(tmp_path):
    assert main(["catalog", "--config", str(tmp_path / "nope.txt")]) == 5


def test_acceptance_floor_exits_3(tmp_path):
    assert run(tmp_path, "compare", "levels=10000", "n_sampler=10", "n_accept=1") == 3


def test_catalog_output(tmp_path):
    assert run(tmp_path, "catalog", "catalog_lo=-2", "catalog_hi=2") == 0
    path = tmp_path / "out" / "catalog.csv"
    meta, cols = header(path)
    assert cols == CATALOG_COLUMNS
    keys = {m.split(":")[0][2:] for m in meta}
    assert keys == {"schema_version", "config_hash", "seed", "discards", "truncation_bound"}
    rows = read_csv(path)
    shifts = {r["s"] for r in rows}
    assert len(shifts) == 101
    assert len(rows) >= 101
    zero = [r for r in rows if r["m"] == "0"]
    assert len(zero) == 101
    at0 = next(r for r in zero if float(r["s"]) == 0.0)
    assert float(at0["sup_pos"]) == pytest.approx(1.0)


def test_tail_output(tmp_path):
    assert run(tmp_path, "tail", "n_realizations=4000", "chunk=1000", "levels=2,4") == 0
    path = tmp_path / "out" / "tail.csv"
    _, cols = header(path)
    assert cols == TAIL_COLUMNS
    rows = read_csv(path)
    for r in rows:
        u = float(r["u"])
        assert float(r["H"]) == pytest.approx(0.5 * u**-2)
        assert float(r["ratio"]) == pytest.approx(float(r["empirical_prob"]) / float(r["H"]))
        assert float(r["constant"]) == pytest.approx(2 + math.sqrt(math.pi / 2), rel=1e-4)
    doc = json.loads((tmp_path / "out" / "tail.json").read_text())
    assert doc["meta"]["seed"] == 7 and "stabilizing" in doc["result"]


def test_simulate_output(tmp_path):
    assert run(tmp_path, "simulate", "n_realizations=20", "d=2") == 0
    _, cols = header(tmp_path / "out" / "simulate.csv")
    assert cols == SIMULATE_COLUMNS
    doc = json.loads((tmp_path / "out" / "simulate.json").read_text())
    reals = doc["realizations"]
    assert len(reals) == 20
    r = next(x for x in reals if x["atoms"] and not x["degenerate"])
    assert max(c["value"] for c in r["critical_points"]) == pytest.approx(r["sup"])


def test_compare_output(tmp_path):
    sets = ["levels=5", "n_accept=100", "n_sampler=500", "chunk=5000"]
    assert run(tmp_path, "compare", *sets) == 0
    _, cols = header(tmp_path / "out" / "compare.csv")
    assert cols == COMPARE_COLUMNS
    rows = read_csv(tmp_path / "out" / "compare.csv")
    assert len(rows) == 3
    doc = json.loads((tmp_path / "out" / "compare.json").read_text())
    assert doc["result"]["levels"][0]["accepted"] == 100


def test_ec_curve_output(tmp_path):
    sets = ["kernels=gaussian_bump,oscillating", "theta=6", "n_sampler=300", "ec_levels=5"]
    assert run(tmp_path, "ec-curve", *sets) == 0
    _, cols = header(tmp_path / "out" / "ec_curve.csv")
    assert cols == EC_CURVE_COLUMNS
    rows = read_csv(tmp_path / "out" / "ec_curve.csv")
    assert len(rows) == 10
    gauss = [float(r["mean_ec"]) for r in rows if r["kernel"] == "gaussian_bump"]
    np.testing.assert_allclose(gauss, 1.0)


def test_outputs_deterministic_across_workers(tmp_path):
    sets = ["levels=5", "n_accept=60", "n_sampler=200", "chunk=2000"]
    assert run(tmp_path, "compare", *sets, out="a", workers=1) == 0
    assert run(tmp_path, "compare", *sets, out="b", workers=1) == 0
    assert run(tmp_path, "compare", *sets, out="c", workers=2) == 0
    a = (tmp_path / "a" / "compare.csv").read_bytes()
    assert a == (tmp_path / "b" / "compare.csv").read_bytes()
    assert a == (tmp_path / "c" / "compare.csv").read_bytes()
    sets = ["n_realizations=6000", "chunk=1000", "levels=2,4"]
    assert run(tmp_path, "tail", *sets, out="t1", workers=1) == 0
    assert run(tmp_path, "tail", *sets, out="t2", workers=3) == 0
    assert (tmp_path / "t1" / "tail.csv").read_bytes() == (tmp_path / "t2" / "tail.csv").read_bytes()
