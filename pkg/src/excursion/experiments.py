"""Reproducible experiment runners behind the command line.

Every run is driven by an :class:`ExperimentConfig` read from flat
``key = value`` text. Random numbers come from per-chunk substreams of the
seed, so outputs do not depend on the worker count. Each CSV starts with
``# key: value`` metadata lines; each JSON carries the same block under
``"meta"``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .field import (
    AcceptanceFloorError,
    FieldRealization,
    build_window,
    critical_sets,
    simulate_batch,
)
from .kernels import make_kernel
from .limit import LimitLaw, LimitQuery, QuadConfig, SamplerReport, build_catalogs
from .morse import euler_characteristic_morse, excursion_stats
from .tails import make_tail

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"

COMPARE_COLUMNS = ["u", "query_id", "empirical_freq", "empirical_se", "limit_quadrature", "limit_sampler_freq", "tv_ec"]
CATALOG_COLUMNS = ["s", "face_id", "index", "m", "value_pos", "value_neg", "sup_pos", "sup_neg"]
TAIL_COLUMNS = ["u", "empirical_prob", "empirical_se", "H", "ratio", "constant"]
EC_CURVE_COLUMNS = ["kernel", "level", "mean_ec"]
SIMULATE_COLUMNS = ["realization", "n_atoms", "sup"]

# RNG substream purposes
_TAIL, _COMPARE, _SAMPLER, _SIMULATE, _EC = range(1, 6)


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def _floats(text):
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _strings(text, sep=","):
    return tuple(x.strip() for x in str(text).split(sep) if x.strip())


def _optional(parse):
    return lambda text: None if str(text).strip().lower() in ("", "none") else parse(text)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    kernel: str = "gaussian_bump"
    kernels: tuple = ()
    d: int = 1
    a: float | None = None
    theta: tuple | None = None
    tail: str = "pareto"
    alpha: float = 2.0
    x0: float = 1.0
    levels: tuple = (10.0, 20.0, 40.0)
    n_realizations: int = 100_000
    n_accept: int = 2000
    n_sampler: int = 10_000
    # empty means: interior maximum, top vertex, and both
    queries: tuple = ()
    rtol: float = 1e-4
    n0: int = 65
    max_refinements: int | None = None
    max_depth: int | None = None
    catalog_points: int = 101
    catalog_lo: float | None = None
    catalog_hi: float | None = None
    ec_levels: int = 21
    tail_tolerance: float = 0.15
    acceptance_floor: float = 1e-7
    max_tries: int = 50_000_000
    chunk: int = 20_000
    grid_n: int = 64
    out: str = "out"

    _PARSERS = {
        "seed": int,
        "kernel": str.strip,
        "kernels": _strings,
        "d": int,
        "a": _optional(float),
        "theta": _optional(_floats),
        "tail": str.strip,
        "alpha": float,
        "x0": float,
        "levels": _floats,
        "n_realizations": int,
        "n_accept": int,
        "n_sampler": int,
        "queries": lambda t: _strings(t, ";"),
        "rtol": float,
        "n0": int,
        "max_refinements": _optional(int),
        "max_depth": _optional(int),
        "catalog_points": int,
        "catalog_lo": _optional(float),
        "catalog_hi": _optional(float),
        "ec_levels": int,
        "tail_tolerance": float,
        "acceptance_floor": float,
        "max_tries": int,
        "chunk": int,
        "grid_n": int,
        "out": str.strip,
    }

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - set(cls._PARSERS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in raw or raw["seed"] in (None, ""):
            raise ConfigError("seed is mandatory")
        values = {}
        for key, text in raw.items():
            try:
                values[key] = cls._PARSERS[key](text) if isinstance(text, str) else text
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {text!r}") from exc
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self):
        if not 1 <= self.d <= 3:
            raise ConfigError("d must be 1, 2 or 3")
        if self.alpha <= 0 or self.x0 <= 0:
            raise ConfigError("alpha and x0 must be positive")
        if any(u < self.x0 for u in self.levels):
            raise ConfigError("levels must be >= x0")
        for key in ("n_realizations", "n_accept", "n_sampler", "catalog_points", "ec_levels", "chunk", "n0"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive")
        if not 0 < self.rtol < 1:
            raise ConfigError("rtol must lie in (0, 1)")
        try:
            self.build_kernel()
            self.build_tail()
            for q in self.query_texts:
                LimitQuery.parse(self.d, q)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def query_texts(self) -> tuple:
        if self.queries:
            return self.queries
        inner = f"{'*' * self.d}:{self.d}>=1"
        top = f"{'+' * self.d}:0>=1"
        return (inner, top, f"{inner} & {top}")

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def hash(self) -> str:
        body = {k: v for k, v in self.to_dict().items() if k != "out"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]

    def build_kernel(self, family: str | None = None):
        return make_kernel(family or self.kernel, self.d, self.a, self.theta)

    def build_tail(self):
        return make_tail(self.tail, self.alpha, self.x0)

    def quad(self) -> QuadConfig:
        return QuadConfig(n0=self.n0, rtol=self.rtol, max_refinements=self.max_refinements, max_depth=self.max_depth)


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        raw[key] = value
    return raw


def load_config(path=None, **overrides) -> ExperimentConfig:
    raw = parse_config_text(Path(path).read_text()) if path else {}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_mapping(raw)


# ---------------------------------------------------------------------------
# plumbing


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class RunMeta:
    config: ExperimentConfig
    discards: dict = field(default_factory=dict)
    truncation_bound: float | None = None

    def as_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.config.hash(),
            "seed": self.config.seed,
            "discards": dict(sorted(self.discards.items())),
            "truncation_bound": self.truncation_bound,
        }


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, columns, rows, meta: RunMeta):
    buf = io.StringIO()
    for k, v in meta.as_dict().items():
        buf.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())


def write_json(path: Path, body: dict, meta: RunMeta):
    doc = {"meta": meta.as_dict(), "config": meta.config.to_dict(), **body}
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def read_csv(path) -> list[dict]:
    """Rows of an output CSV, skipping the metadata block."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _chunk_sizes(total: int, chunk: int):
    return [min(chunk, total - s) for s in range(0, total, chunk)]


# ---------------------------------------------------------------------------
# tail


def _tail_chunk(task):
    kernel, tail, window, levels, seed, idx, size, grid_n = task
    rng = substream(seed, _TAIL, idx)
    rb = simulate_batch(kernel, tail, window, size, rng)
    return rb.exceeds(levels, grid_n).sum(axis=1)


def tail_ratios(cfg: ExperimentConfig, workers: int = 1, law: LimitLaw | None = None) -> dict:
    """Empirical P(sup X > u) / H(u) against the limiting constant."""
    kernel, tail = cfg.build_kernel(), cfg.build_tail()
    window = build_window(kernel)
    law = law or LimitLaw(kernel, tail, cfg.quad())
    levels = np.array(cfg.levels)
    tasks = [
        (kernel, tail, window, levels, cfg.seed, i, n, cfg.grid_n)
        for i, n in enumerate(_chunk_sizes(cfg.n_realizations, cfg.chunk))
    ]
    hits = np.sum(_map(_tail_chunk, tasks, workers), axis=0)
    n = cfg.n_realizations
    p = hits / n
    se = np.sqrt(p * (1 - p) / n)
    H = tail.scale_H(levels)
    ratio = p / H
    C = law.denominator
    dev = np.abs(ratio - C)
    ratio_se = se / H
    stabilizing = bool(all(dev[k] <= dev[k - 1] + 3 * ratio_se[k] for k in range(1, len(levels))))
    flagged = bool(dev[-1] > cfg.tail_tolerance * C)
    return {
        "levels": levels,
        "hits": hits,
        "prob": p,
        "se": se,
        "H": H,
        "ratio": ratio,
        "ratio_se": ratio_se,
        "constant": C,
        "relative_deviation": dev / C,
        "stabilizing": stabilizing,
        "flag_deviation": flagged,
        "quadrature": law.report.to_dict(),
    }


def cmd_tail(cfg: ExperimentConfig, workers: int = 1) -> dict:
    res = tail_ratios(cfg, workers)
    meta = RunMeta(cfg, {"degenerate": 0}, res["quadrature"]["truncation_bound"])
    out = _out_dir(cfg)
    rows = [
        (u, p, se, h, r, res["constant"])
        for u, p, se, h, r in zip(res["levels"], res["prob"], res["se"], res["H"], res["ratio"])
    ]
    write_csv(out / "tail.csv", TAIL_COLUMNS, rows, meta)
    write_json(out / "tail.json", {"result": res}, meta)
    if res["flag_deviation"]:
        log.warning("ratio at u=%g deviates from the constant by more than %g", res["levels"][-1], cfg.tail_tolerance)
    if not res["stabilizing"]:
        log.warning("tail ratios are not stabilizing across the level grid")
    return res


# ---------------------------------------------------------------------------
# compare


def _conditioned_chunk(task):
    kernel, tail, window, u, seed, level_idx, idx, size, grid_n = task
    rng = substream(seed, _COMPARE, level_idx, idx)
    rb = simulate_batch(kernel, tail, window, size, rng)
    hit = np.flatnonzero(rb.exceeds(u, grid_n))
    return hit, [(rb.weights[i, : rb.n_atoms[i]], rb.shifts[i, : rb.n_atoms[i]]) for i in hit]


def conditioned_sample(cfg: ExperimentConfig, kernel, tail, window, u: float, level_idx: int, workers: int = 1):
    """``n_accept`` realizations with sup > u from chunked substreams.

    Returns ``(realizations, trials)``; chunk order fixes the result whatever
    the worker count.
    """
    accepted: list[FieldRealization] = []
    trials = 0
    idx = 0
    per_round = max(1, workers)
    while len(accepted) < cfg.n_accept:
        if trials >= cfg.max_tries:
            raise AcceptanceFloorError(
                f"only {len(accepted)} of {cfg.n_accept} acceptances in {trials} trials at u={u}"
            )
        tasks = [
            (kernel, tail, window, u, cfg.seed, level_idx, idx + j, cfg.chunk, cfg.grid_n) for j in range(per_round)
        ]
        idx += per_round
        for hit, atoms in _map(_conditioned_chunk, tasks, workers):
            need = cfg.n_accept - len(accepted)
            if need <= 0:
                break
            if len(hit) >= need:
                trials += int(hit[need - 1]) + 1
                atoms = atoms[:need]
            else:
                trials += cfg.chunk
            accepted.extend(FieldRealization(w, s, kernel) for w, s in atoms)
    return accepted, trials


def _tv(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _freqs(values) -> dict:
    c = Counter(values)
    n = sum(c.values())
    return {k: v / n for k, v in sorted(c.items())} if n else {}


def compare(cfg: ExperimentConfig, workers: int = 1, law: LimitLaw | None = None) -> dict:
    """Finite-u conditional frequencies against the limit law, per level."""
    kernel, tail = cfg.build_kernel(), cfg.build_tail()
    window = build_window(kernel)
    law = law or LimitLaw(kernel, tail, cfg.quad())
    queries = [LimitQuery.parse(cfg.d, q) for q in cfg.query_texts]
    limit_p = [law.probability(q) for q in queries]
    limit_err = [law.probability_error(q) for q in queries]

    srep = SamplerReport()
    samples = law.sample(cfg.n_sampler, substream(cfg.seed, _SAMPLER), srep)
    sampler_p = [float(np.mean([q.satisfied_by(s.stats) for s in samples])) for q in queries]
    limit_ec = _freqs(s.stats.euler for s in samples)

    per_level = []
    for li, u in enumerate(cfg.levels):
        est = law.denominator * tail.scale_H(u)
        if est < cfg.acceptance_floor:
            raise AcceptanceFloorError(f"estimated acceptance {est:.2e} at u={u} below floor {cfg.acceptance_floor:g}")
        reals, trials = conditioned_sample(cfg, kernel, tail, window, u, li, workers)
        sets, degenerate = critical_sets(reals)
        stats = [excursion_stats(cs, u) for cs, bad in zip(sets, degenerate) if not bad]
        n = len(stats)
        emp = [float(np.mean([q.satisfied_by(s) for s in stats])) if n else float("nan") for q in queries]
        se = [math.sqrt(p * (1 - p) / n) if n else float("nan") for p in emp]
        emp_ec = _freqs(s.euler for s in stats)
        per_level.append(
            {
                "u": u,
                "trials": trials,
                "accepted": len(reals),
                "degenerate_discards": int(degenerate.sum()),
                "discard_rate": float(degenerate.mean()) if len(reals) else 0.0,
                "acceptance_rate": len(reals) / trials,
                "empirical_freq": emp,
                "empirical_se": se,
                "tv_ec": _tv(emp_ec, limit_ec),
                "empirical_ec": emp_ec,
                "max_abs_deviation": float(np.max(np.abs(np.subtract(emp, limit_p)))),
            }
        )
    devs = [lv["max_abs_deviation"] for lv in per_level]
    return {
        "queries": [str(q) for q in queries],
        "limit_quadrature": limit_p,
        "limit_quadrature_error": limit_err,
        "limit_sampler_freq": sampler_p,
        "limit_ec": limit_ec,
        "levels": per_level,
        "deviation_shrinking": bool(all(b <= a for a, b in zip(devs, devs[1:]))),
        "sampler": dataclasses.asdict(srep),
        "quadrature": law.report.to_dict(),
    }


def cmd_compare(cfg: ExperimentConfig, workers: int = 1) -> dict:
    res = compare(cfg, workers)
    discards = {
        "degenerate_realizations": sum(lv["degenerate_discards"] for lv in res["levels"]),
        "sampler_degenerate": res["sampler"]["degenerate_resamples"],
        "sampler_level_redraws": res["sampler"]["level_resamples"],
    }
    meta = RunMeta(cfg, discards, res["quadrature"]["truncation_bound"])
    rows = []
    for lv in res["levels"]:
        for j, q in enumerate(res["queries"]):
            rows.append(
                (lv["u"], q, lv["empirical_freq"][j], lv["empirical_se"][j], res["limit_quadrature"][j],
                 res["limit_sampler_freq"][j], lv["tv_ec"])
            )
    out = _out_dir(cfg)
    write_csv(out / "compare.csv", COMPARE_COLUMNS, rows, meta)
    write_json(out / "compare.json", {"result": res}, meta)
    return res


# ---------------------------------------------------------------------------
# catalog


def catalog_shifts(cfg: ExperimentConfig, window) -> np.ndarray:
    lo = window.lo[0] if cfg.catalog_lo is None else cfg.catalog_lo
    hi = window.hi[0] if cfg.catalog_hi is None else cfg.catalog_hi
    if lo > hi:
        raise ConfigError("catalog_lo exceeds catalog_hi")
    if lo < window.lo[0] - 1e-12 or hi > window.hi[0] + 1e-12:
        raise ConfigError(
            f"catalog range [{lo}, {hi}] leaves the shift window [{window.lo[0]:.6g}, {window.hi[0]:.6g}]"
        )
    ax = np.linspace(lo, hi, cfg.catalog_points)
    return np.stack(np.meshgrid(*([ax] * cfg.d), indexing="ij"), axis=-1).reshape(-1, cfg.d)


def catalog_rows(cats):
    """One m = 0 row (the sups) per shift, then one row per order statistic."""
    rows = []
    for cat in cats:
        s = ";".join(repr(float(x)) for x in cat.s)
        rows.append((s, "", "", 0, cat.sup_pos, cat.sup_neg, cat.sup_pos, cat.sup_neg))
        pos, neg = cat.pos_order_stats, cat.neg_order_stats
        for key in sorted(pos):
            for m, (vp, vn) in enumerate(zip(pos[key], neg[key]), 1):
                rows.append((s, key[0], key[1], m, vp, vn, cat.sup_pos, cat.sup_neg))
    return rows


def cmd_catalog(cfg: ExperimentConfig, workers: int = 1) -> dict:
    kernel = cfg.build_kernel()
    window = build_window(kernel)
    shifts = catalog_shifts(cfg, window)
    cats, degenerate = build_catalogs(kernel, shifts)
    meta = RunMeta(cfg, {"degenerate_sections": int(degenerate.sum())}, None)
    out = _out_dir(cfg)
    rows = catalog_rows(cats)
    write_csv(out / "catalog.csv", CATALOG_COLUMNS, rows, meta)
    return {"rows": len(rows), "shifts": len(shifts), "degenerate": int(degenerate.sum())}


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: ExperimentConfig, workers: int = 1) -> dict:
    kernel, tail = cfg.build_kernel(), cfg.build_tail()
    window = build_window(kernel)
    rb = simulate_batch(kernel, tail, window, cfg.n_realizations, substream(cfg.seed, _SIMULATE))
    reals = [rb.realization(i) for i in range(len(rb))]
    sets, degenerate = critical_sets(reals)
    sups = [float(cs.max_value) if len(cs) else 0.0 for cs in sets]
    meta = RunMeta(cfg, {"degenerate_realizations": int(degenerate.sum())}, window.excluded_sup_bound)
    out = _out_dir(cfg)
    write_csv(
        out / "simulate.csv", SIMULATE_COLUMNS, [(i, r.n_atoms, s) for i, (r, s) in enumerate(zip(reals, sups))], meta
    )
    body = {
        "window": {"lo": window.lo, "hi": window.hi, "radius": window.radius},
        "realizations": [
            {**r.to_json(), "sup": s, "degenerate": bool(bad), "critical_points": cs.to_records()}
            for r, s, cs, bad in zip(reals, sups, sets, degenerate)
        ],
    }
    write_json(out / "simulate.json", body, meta)
    return {"n": len(reals), "degenerate": int(degenerate.sum())}


# ---------------------------------------------------------------------------
# ec-curve


def cmd_ec_curve(cfg: ExperimentConfig, workers: int = 1) -> dict:
    kernels = cfg.kernels or (cfg.kernel,)
    if not kernels:
        raise ConfigError("kernels list is empty")
    tail = cfg.build_tail()
    levels = np.linspace(0.0, 1.0, cfg.ec_levels + 2)[1:-1]
    rows, body = [], {}
    trunc = []
    discards = Counter()
    for ki, family in enumerate(kernels):
        try:
            kernel = cfg.build_kernel(family)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        law = LimitLaw(kernel, tail, cfg.quad())
        rep = SamplerReport()
        hist, mean = law.ec_distribution(cfg.n_sampler, substream(cfg.seed, _EC, ki), rep)
        curve = law.ec_curve(levels)
        rows.extend((family, v, c) for v, c in zip(levels, curve))
        n = sum(hist.values())
        body[family] = {
            "histogram": {k: v / n for k, v in hist.items()},
            "mean": mean,
            "mean_se": float(np.std(_expand(hist)) / math.sqrt(n)),
            "expected_quadrature": law.expected_euler_characteristic(),
            "sampler": dataclasses.asdict(rep),
            "quadrature": law.report.to_dict(),
        }
        trunc.append(law.report.truncation_bound)
        discards["sampler_degenerate"] += rep.degenerate_resamples
    meta = RunMeta(cfg, dict(discards), max(trunc))
    out = _out_dir(cfg)
    write_csv(out / "ec_curve.csv", EC_CURVE_COLUMNS, rows, meta)
    write_json(out / "ec_curve.json", {"kernels": body}, meta)
    return body


def _expand(hist: dict) -> np.ndarray:
    return np.repeat(np.array(list(hist), dtype=float), list(hist.values()))


COMMANDS = {
    "catalog": cmd_catalog,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "tail": cmd_tail,
    "ec-curve": cmd_ec_curve,
}


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
