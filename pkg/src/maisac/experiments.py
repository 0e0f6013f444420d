"""Scheme comparison and parameter sweeps with seeded Monte-Carlo averaging.

Every (sweep value, seed) cell draws its channel realization from the seed
index alone, so all schemes and all sweep values see identical channels.
Output is a long table: one row per scheme x value x seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .beamforming import inner_loop
from .channel import build_channels
from .metrics import Beamformers, Metrics, evaluate
from .position import ao_loop, default_beamformers
from .pso import pso_run
from .scenario import (AntennaLayout, ChannelRealization, ConfigError, ScenarioConfig,
                       layout_fpa, layout_random, layout_uniform, realization_for, rng_stream,
                       with_region_size)

SCHEMES = ("FPA", "AO-MA", "RI-MA", "PSO-MA")
SWEEP_AXES = ("p_dl", "p_ul", "n_tx", "n_rx", "weights_cs", "weights_dl_ul", "region_size")
WORKERS_ENV = "MAISAC_WORKERS"

PROFILES = {
    "desk": {"n_particles": 20, "pso_iters": 15, "n_random_init": 30, "seeds": 10},
    "paper": {"n_particles": 100, "pso_iters": 50, "n_random_init": 300, "seeds": 10},
}

COLUMNS = (
    "scheme", "seed", "sweep", "value", "objective", "r_s", "r_dl", "r_ul",
    "scnr", "sinr_dl", "sinr_ul", "power_dl", "power_ul", "iterations", "converged",
    "status", "cfg_hash", "realization_hash", "code_version",
)
_FLOAT_COLS = ("value", "objective", "r_s", "scnr", "power_dl", "power_ul")
_VECTOR_COLS = ("r_dl", "r_ul", "sinr_dl", "sinr_ul")
_INT_COLS = ("seed", "iterations")


@dataclass
class RunRecord:
    scheme: str
    seed: int
    sweep: str
    value: float
    objective: float = math.nan
    r_s: float = math.nan
    r_dl: list[float] = field(default_factory=list)
    r_ul: list[float] = field(default_factory=list)
    scnr: float = math.nan
    sinr_dl: list[float] = field(default_factory=list)
    sinr_ul: list[float] = field(default_factory=list)
    power_dl: float = math.nan
    power_ul: float = math.nan
    iterations: int = 0
    converged: bool = False
    status: str = "ok"
    cfg_hash: str = ""
    realization_hash: str = ""
    code_version: str = __version__
    # kept in memory only
    wall_time: float = math.nan
    layout: AntennaLayout | None = field(default=None, repr=False)
    bf: Beamformers | None = field(default=None, repr=False)
    trace: list[dict[str, Any]] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def row(self) -> dict[str, Any]:
        return {c: getattr(self, c) for c in COLUMNS}


def apply_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    """Configuration at one sweep point."""
    if axis == "p_dl":
        return cfg.replace(p_dl_dbm=float(value))
    if axis == "p_ul":
        return cfg.replace(p_ul_dbm=float(value))
    if axis in ("n_tx", "n_rx"):
        if float(value) != int(value):
            raise ConfigError(f"{axis} must be an integer, got {value}")
        return cfg.replace(**{axis: int(value)})
    if axis == "weights_cs":
        v = float(value)
        return cfg.replace(w_dl=v, w_ul=v, w_s=1.0 - 2.0 * v)
    if axis == "weights_dl_ul":
        v = float(value)
        return cfg.replace(w_s=0.2, w_dl=v, w_ul=0.8 - v)
    if axis == "region_size":
        return with_region_size(cfg, float(value))
    if axis == "none":
        return cfg
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")


def _fill_metrics(rec: RunRecord, m: Metrics, bf: Beamformers) -> None:
    rec.objective = float(m.objective)
    rec.r_s = float(m.r_s)
    rec.r_dl = [float(x) for x in m.r_dl]
    rec.r_ul = [float(x) for x in m.r_ul]
    rec.scnr = float(m.scnr)
    rec.sinr_dl = [float(x) for x in m.sinr_dl]
    rec.sinr_ul = [float(x) for x in m.sinr_ul]
    rec.power_dl = bf.power_dl
    rec.power_ul = bf.power_ul


def _ao_trace(res) -> list[dict[str, Any]]:
    return [dict(vars(r)) for r in res.trace]


def run_scheme(scheme: str, real: ChannelRealization, cfg: ScenarioConfig, seed: int = 0,
               sweep: str = "none", value: float = math.nan) -> RunRecord:
    """Run one scheme on one realization; failures are recorded, not raised."""
    rec = RunRecord(scheme, int(seed), sweep, float(value), cfg_hash=cfg.digest(),
                    realization_hash=real.digest())
    t0 = time.perf_counter()
    try:
        bf0 = default_beamformers(cfg, seed)
        if scheme == "FPA":
            layout = layout_fpa(cfg)
            st = inner_loop(build_channels(real, layout, cfg.d_si, cfg.noise), bf0, cfg)
            bf, iters, conv = st.bf, st.iters, st.converged
            rec.trace = [{"iteration": i, "objective": g, "g_hat": h}
                         for i, (g, h) in enumerate(zip(st.g_trace, st.ghat_trace))]
        elif scheme == "AO-MA":
            res = ao_loop(real, layout_uniform(cfg), cfg, bf0)
            layout, bf, iters, conv = res.layout, res.bf, res.iters, res.converged
            rec.trace = _ao_trace(res)
        elif scheme == "RI-MA":
            best = None
            # with ri_include_uniform the uniform layout takes the first of the N_RI slots
            first = 1 if cfg.ri_include_uniform else 0
            starts = [layout_uniform(cfg)] if first else []
            starts += [layout_random(cfg, rng_stream(cfg.seed, "ri-layout", seed, r))
                       for r in range(first, cfg.n_random_init)]
            for j, init in enumerate(starts):
                res = ao_loop(real, init, cfg, bf0)
                rec.trace.append({"start": j, "objective": res.objective, "iterations": res.iters})
                if best is None or res.objective > best.objective:
                    best = res
            layout, bf, iters, conv = best.layout, best.bf, best.iters, best.converged
        elif scheme == "PSO-MA":
            res = pso_run(real, cfg, seed, bf0)
            layout, bf = res.layout, res.bf
            iters, conv = len(res.trace) - 1, res.final.converged
            rec.trace = [dict(vars(r)) for r in res.trace]
        else:
            raise ConfigError(f"unknown scheme {scheme!r}")
        ch = build_channels(real, layout, cfg.d_si, cfg.noise)
        _fill_metrics(rec, evaluate(ch, bf, cfg.weights), bf)
        rec.layout, rec.bf, rec.iterations, rec.converged = layout, bf, int(iters), bool(conv)
    except Exception as exc:  # recorded per cell, the sweep carries on
        rec.status = f"error: {type(exc).__name__}: {exc}"
        rec.trace = [{"traceback": traceback.format_exc()}]
    rec.wall_time = time.perf_counter() - t0
    return rec


def _cell(args) -> RunRecord:
    scheme, cfg, seed, sweep, value = args
    real = realization_for(cfg, seed)
    return run_scheme(scheme, real, cfg, seed, sweep, value)


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc


def sweep(cfg: ScenarioConfig, axis: str, values: Sequence[float], n_seeds: int,
          schemes: Sequence[str] = SCHEMES, workers: int | None = None) -> list[RunRecord]:
    """Full cross product scheme x value x seed, returned in (value, seed, scheme) order."""
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigError(f"unknown scheme {s!r}; choose from {', '.join(SCHEMES)}")
    values = list(values) if axis != "none" else [math.nan]
    tasks = []
    for vi, v in enumerate(values):
        c = apply_axis(cfg, axis, v)
        for seed in range(n_seeds):
            for si, s in enumerate(schemes):
                tasks.append(((vi, seed, si), (s, c, seed, axis, v)))
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        out = [_cell(t) for _, t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_cell, [t for _, t in tasks]))
    order = sorted(range(len(tasks)), key=lambda i: tasks[i][0])
    return [out[i] for i in order]


# --------------------------------------------------------------------------- output


def _fmt(col: str, value) -> str:
    if col in _VECTOR_COLS:
        return " ".join(repr(float(x)) for x in value)
    if col in _FLOAT_COLS:
        return repr(float(value))
    if col == "converged":
        return "1" if value else "0"
    return str(value)


def to_csv(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        row = r.row()
        w.writerow([_fmt(c, row[c]) for c in COLUMNS])
    return buf.getvalue()


def _json_value(col: str, value):
    if col in _VECTOR_COLS:
        return [_json_float(float(x)) for x in value]
    if col in _FLOAT_COLS:
        return _json_float(float(value))
    return value


def _json_float(x: float):
    # JSON has no NaN/inf literals; encode them as strings
    return x if math.isfinite(x) else repr(x)


def to_json(records: Iterable[RunRecord]) -> str:
    rows = [{c: _json_value(c, r.row()[c]) for c in COLUMNS} for r in records]
    return json.dumps({"columns": list(COLUMNS), "records": rows}, indent=1) + "\n"


def emit(records: Sequence[RunRecord], fmt: str, path: str | Path | None) -> str:
    """Serialize ``records`` as ``csv`` or ``json``; writes to ``path`` when given."""
    if fmt == "csv":
        text = to_csv(records)
    elif fmt == "json":
        text = to_json(records)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def _parse_value(col: str, raw):
    if col in _VECTOR_COLS:
        if isinstance(raw, list):
            return [float(x) for x in raw]
        return [float(x) for x in raw.split()] if raw else []
    if col in _FLOAT_COLS:
        return float(raw)
    if col in _INT_COLS:
        return int(raw)
    if col == "converged":
        return bool(int(raw)) if isinstance(raw, str) else bool(raw)
    return raw


def parse_csv(text: str) -> list[RunRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is not None and tuple(reader.fieldnames) != COLUMNS:
        raise ValueError("unexpected CSV columns")
    return [RunRecord(**{c: _parse_value(c, row[c]) for c in COLUMNS}) for row in reader]


def parse_json(text: str) -> list[RunRecord]:
    doc = json.loads(text)
    return [RunRecord(**{c: _parse_value(c, row[c]) for c in COLUMNS}) for row in doc["records"]]


def write_traces(records: Sequence[RunRecord], directory: str | Path) -> None:
    """One CSV per cell with that cell's iteration trace."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for r in records:
        if not r.trace:
            continue
        name = f"{r.scheme}_{r.sweep}_{r.value!r}_seed{r.seed}.csv".replace("/", "_")
        keys = list(dict.fromkeys(k for row in r.trace for k in row))
        buf = io.StringIO()
        w = csv.DictWriter(buf, keys, lineterminator="\n")
        w.writeheader()
        for row in r.trace:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        (d / name).write_text(buf.getvalue())


def summarize(records: Sequence[RunRecord]) -> list[dict[str, Any]]:
    """Mean and standard deviation of the objective per (scheme, value)."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        if r.ok:
            groups.setdefault((r.sweep, r.value, r.scheme), []).append(r.objective)
    out = []
    for (sw, v, s), g in groups.items():
        a = np.asarray(g)
        out.append({"sweep": sw, "value": v, "scheme": s, "n": len(a),
                    "mean": float(a.mean()), "std": float(a.std(ddof=1)) if len(a) > 1 else 0.0})
    return out
