"""Scenario configuration, seeded channel realizations and initial antenna layouts."""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

# Absolute slack (meters) used when checking region bounds and D0 spacing, so
# that layouts built on an exact lambda/2 lattice are not rejected by rounding.
GEOM_TOL = 1e-12


class ConfigError(ValueError):
    """Raised for unparseable or invalid scenario configurations."""


class LayoutError(ValueError):
    """Raised when a layout cannot be constructed inside the feasible region."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """All simulation parameters. Defaults reproduce the nominal setup.

    Powers are given in dBm; the linear values (watts) are exposed through
    ``p_dl``, ``p_ul`` and ``noise`` and computed once at construction.
    ``tol_power`` is relative: the bisection stops within ``tol_power * P``.
    """

    n_tx: int = 8
    n_rx: int = 4
    k_dl: int = 3
    k_ul: int = 3
    n_clutter: int = 3
    n_paths: int = 10
    wavelength: float = 0.01
    d_si: float = 0.2
    path_gain: float = 1.0
    w_dl: float = 0.3
    w_ul: float = 0.3
    w_s: float = 0.4
    p_dl_dbm: float = 30.0
    p_ul_dbm: float = 30.0
    noise_dbm: float = -60.0
    region_min_x: float = 0.0
    region_max_x: float = 0.06
    region_min_y: float = 0.0
    region_max_y: float = 0.06
    d0: float = 0.005
    n_random_init: int = 300
    n_particles: int = 100
    pso_iters: int = 50
    seed: int = 0
    tol_obj: float = 1e-4
    tol_power: float = 1e-6
    max_inner_iters: int = 100
    max_ao_iters: int = 30
    max_ao_iters_pso: int = 5
    max_ga_iters: int = 20
    ga_step_init: float = 0.001
    ga_backoff: float = 0.9
    pso_c1: float = 1.5
    pso_c2: float = 1.5
    pso_w_max: float = 0.9
    pso_w_min: float = 0.4
    dist_dl_min: float = 40.0
    dist_dl_max: float = 70.0
    dist_ul_min: float = 30.0
    dist_ul_max: float = 60.0
    dist_tgt_min: float = 20.0
    dist_tgt_max: float = 40.0
    fpa_shape: str = "upa"
    ri_include_uniform: bool = False

    p_dl: float = field(init=False, repr=False, compare=False)
    p_ul: float = field(init=False, repr=False, compare=False)
    noise: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _validate(self)
        object.__setattr__(self, "p_dl", dbm_to_watt(self.p_dl_dbm))
        object.__setattr__(self, "p_ul", dbm_to_watt(self.p_ul_dbm))
        object.__setattr__(self, "noise", dbm_to_watt(self.noise_dbm))

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.w_dl, self.w_ul, self.w_s)

    @property
    def region(self) -> tuple[float, float, float, float]:
        return (self.region_min_x, self.region_max_x, self.region_min_y, self.region_max_y)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.init}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_INT_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig) if f.type == "int"}
_BOOL_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig) if f.type == "bool"}
_STR_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig) if f.type == "str"}
CONFIG_KEYS = frozenset(f.name for f in dataclasses.fields(ScenarioConfig) if f.init)


def _validate(cfg: ScenarioConfig) -> None:
    for name in ("n_tx", "n_rx", "n_paths", "n_random_init", "n_particles", "pso_iters",
                 "max_inner_iters", "max_ao_iters", "max_ao_iters_pso", "max_ga_iters"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be >= 1, got {getattr(cfg, name)}")
    for name in ("k_dl", "k_ul", "n_clutter"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be >= 0, got {getattr(cfg, name)}")
    for name in ("w_dl", "w_ul", "w_s"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be non-negative (weight simplex violated)")
    total = cfg.w_dl + cfg.w_ul + cfg.w_s
    if abs(total - 1.0) > 1e-12:
        raise ConfigError(f"weight simplex violated: w_dl + w_ul + w_s = {total!r} != 1")
    if not cfg.region_max_x > cfg.region_min_x:
        raise ConfigError("region_max_x must exceed region_min_x")
    if not cfg.region_max_y > cfg.region_min_y:
        raise ConfigError("region_max_y must exceed region_min_y")
    for name in ("wavelength", "d0", "d_si", "ga_step_init", "tol_obj", "tol_power"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be > 0")
    if cfg.path_gain < 0:
        raise ConfigError("path_gain must be >= 0")
    if not 0 < cfg.ga_backoff < 1:
        raise ConfigError("ga_backoff must lie in (0, 1)")
    if not cfg.pso_w_max >= cfg.pso_w_min:
        raise ConfigError("pso_w_max must be >= pso_w_min")
    for lo, hi in (("dist_dl_min", "dist_dl_max"), ("dist_ul_min", "dist_ul_max"),
                   ("dist_tgt_min", "dist_tgt_max")):
        if not 0 < getattr(cfg, lo) <= getattr(cfg, hi):
            raise ConfigError(f"need 0 < {lo} <= {hi}")
    if cfg.fpa_shape not in ("ula", "upa"):
        raise ConfigError(f"fpa_shape must be 'ula' or 'upa', got {cfg.fpa_shape!r}")
    need = max(cfg.n_tx, cfg.n_rx)
    cap = len(_lattice(cfg.region, cfg.d0))
    if cap < need:
        raise ConfigError(
            f"region cannot host layout: a d0={cfg.d0} lattice holds {cap} antennas, need {need}"
        )


def _coerce(key: str, value: Any) -> Any:
    if key in _BOOL_FIELDS:
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if key in _STR_FIELDS:
        return str(value)
    if key in _INT_FIELDS:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def load_config(source: Mapping[str, Any] | str | Path | None = None, **overrides) -> ScenarioConfig:
    """Build a config from a mapping or a JSON/YAML file; missing keys take defaults."""
    if source is None:
        doc: dict[str, Any] = {}
    elif isinstance(source, Mapping):
        doc = dict(source)
    else:
        path = Path(source)
        text = path.read_text()
        try:
            if path.suffix.lower() in (".yaml", ".yml"):
                import yaml

                doc = yaml.safe_load(text) or {}
            else:
                doc = json.loads(text) if text.strip() else {}
        except Exception as exc:  # parser-specific exception types
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a flat key-value document")
    doc.update(overrides)
    unknown = sorted(set(doc) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        kwargs = {k: _coerce(k, v) for k, v in doc.items()}
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return ScenarioConfig(**kwargs)


def with_region_size(cfg: ScenarioConfig, size: float) -> ScenarioConfig:
    """Square region of side ``size`` sharing the center of ``cfg``'s region."""
    cx = 0.5 * (cfg.region_min_x + cfg.region_max_x)
    cy = 0.5 * (cfg.region_min_y + cfg.region_max_y)
    h = 0.5 * size
    return cfg.replace(region_min_x=cx - h, region_max_x=cx + h,
                       region_min_y=cy - h, region_max_y=cy + h)


# --------------------------------------------------------------------------- RNG


def rng_stream(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, purpose, index...)``.

    Purposes are hashed into the seed sequence spawn key, so e.g. layout draws
    can never consume values from the channel stream.
    """
    key = (zlib.crc32(purpose.encode()),) + tuple(int(i) for i in index)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


# --------------------------------------------------------------------------- realization


def path_loss(d, wavelength: float, gain: float = 1.0):
    """Far-field large-scale gain ``gain * wavelength / (4 pi d)^2``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path_loss requires d > 0")
    out = gain * wavelength / (4.0 * np.pi * d) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class ChannelRealization:
    """Position-independent random draws for one channel instance.

    DL/UL arrays have shape (K, L); clutter arrays shape (C,).  Sensing
    target and clutter use one angle pair for both departure and arrival
    (mono-static).  Users sit on a ground circle of radius equal to their
    BS distance, at azimuth ``*_azimuth``.
    """

    wavelength: float
    path_gain: float
    dl_dist: np.ndarray
    dl_theta: np.ndarray
    dl_phi: np.ndarray
    dl_gain: np.ndarray
    dl_azimuth: np.ndarray
    ul_dist: np.ndarray
    ul_theta: np.ndarray
    ul_phi: np.ndarray
    ul_gain: np.ndarray
    ul_azimuth: np.ndarray
    tgt_theta: float
    tgt_phi: float
    tgt_rcs: complex
    tgt_dist: float
    clu_theta: np.ndarray
    clu_phi: np.ndarray
    clu_rcs: np.ndarray
    clu_dist: np.ndarray

    @property
    def k_dl(self) -> int:
        return self.dl_dist.shape[0]

    @property
    def k_ul(self) -> int:
        return self.ul_dist.shape[0]

    @property
    def n_paths(self) -> int:
        return self.dl_theta.shape[1] if self.dl_theta.ndim == 2 else self.ul_theta.shape[1]

    # Large-scale gains are cached: they are read for every candidate layout.
    @functools.cached_property
    def eta_dl(self) -> np.ndarray:
        return self._pl(self.dl_dist)

    @functools.cached_property
    def eta_ul(self) -> np.ndarray:
        return self._pl(self.ul_dist)

    @functools.cached_property
    def eta_s(self) -> float:
        return path_loss(self.tgt_dist, self.wavelength, self.path_gain)

    @functools.cached_property
    def eta_c(self) -> np.ndarray:
        return self._pl(self.clu_dist)

    def _pl(self, d):
        if d.size == 0:
            return np.zeros(0)
        return np.atleast_1d(path_loss(d, self.wavelength, self.path_gain))

    def user_distances(self) -> np.ndarray:
        """Ground distances r[i, j] between UL user i and DL user j."""
        pu = self.ul_dist[:, None] * np.exp(1j * self.ul_azimuth[:, None])
        pd = self.dl_dist[None, :] * np.exp(1j * self.dl_azimuth[None, :])
        return np.abs(pu - pd)

    @functools.cached_property
    def eta_cross(self) -> np.ndarray:
        r = self.user_distances()
        if r.size == 0:
            return np.zeros(r.shape)
        return np.reshape(path_loss(r, self.wavelength, self.path_gain), r.shape)

    def cross_channel(self) -> np.ndarray:
        """UL-to-DL interference gains g[i, j] (K_UL x K_DL)."""
        return self._cross.copy()

    @functools.cached_property
    def _cross(self) -> np.ndarray:
        r = self.user_distances()
        k = 2.0 * np.pi / self.wavelength
        return np.sqrt(self.eta_cross) * np.exp(-1j * k * r)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"format": "maisac-realization/1"}
        for f in dataclasses.fields(self):
            out[f.name] = _encode(getattr(self, f.name))
        return out

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ChannelRealization":
        if doc.get("format") != "maisac-realization/1":
            raise ValueError("not a realization document")
        kwargs = {f.name: _decode(doc[f.name]) for f in dataclasses.fields(cls)}
        for name in ("wavelength", "path_gain", "tgt_theta", "tgt_phi", "tgt_dist"):
            kwargs[name] = float(kwargs[name])
        kwargs["tgt_rcs"] = complex(kwargs["tgt_rcs"])
        return cls(**kwargs)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "ChannelRealization":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _encode(value):
    """Arrays become {"dtype", "shape", "data"}; complex entries are [re, im] pairs."""
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            data = [[float(z.real), float(z.imag)] for z in value.ravel()]
            return {"dtype": "complex", "shape": list(value.shape), "data": data}
        return {"dtype": "float", "shape": list(value.shape), "data": [float(v) for v in value.ravel()]}
    if isinstance(value, complex):
        return {"dtype": "complex", "shape": [], "data": [[value.real, value.imag]]}
    return float(value)


def _decode(value):
    if not isinstance(value, dict):
        return value
    shape = tuple(value["shape"])
    if value["dtype"] == "complex":
        arr = np.array([complex(re, im) for re, im in value["data"]], dtype=complex)
    else:
        arr = np.array(value["data"], dtype=float)
    arr = arr.reshape(shape)
    return arr[()] if shape == () else arr


def sample_realization(cfg: ScenarioConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one channel instance. The draw order below is part of the contract."""
    kd, ku, c, lp = cfg.k_dl, cfg.k_ul, cfg.n_clutter, cfg.n_paths
    dl_dist = rng.uniform(cfg.dist_dl_min, cfg.dist_dl_max, kd)
    dl_theta = rng.uniform(0.0, np.pi, (kd, lp))
    dl_phi = rng.uniform(0.0, np.pi, (kd, lp))
    dl_gain = _cn(rng, (kd, lp))
    dl_az = rng.uniform(0.0, 2.0 * np.pi, kd)
    ul_dist = rng.uniform(cfg.dist_ul_min, cfg.dist_ul_max, ku)
    ul_theta = rng.uniform(0.0, np.pi, (ku, lp))
    ul_phi = rng.uniform(0.0, np.pi, (ku, lp))
    ul_gain = _cn(rng, (ku, lp))
    ul_az = rng.uniform(0.0, 2.0 * np.pi, ku)
    tgt_rcs = complex(_cn(rng, ()))
    tgt_dist = float(rng.uniform(cfg.dist_tgt_min, cfg.dist_tgt_max))
    clu_theta = rng.uniform(0.0, np.pi, c)
    clu_phi = rng.uniform(0.0, np.pi, c)
    clu_rcs = _cn(rng, c)
    clu_dist = rng.uniform(cfg.dist_tgt_min, cfg.dist_tgt_max, c)
    return ChannelRealization(
        wavelength=cfg.wavelength, path_gain=cfg.path_gain,
        dl_dist=dl_dist, dl_theta=dl_theta, dl_phi=dl_phi, dl_gain=dl_gain, dl_azimuth=dl_az,
        ul_dist=ul_dist, ul_theta=ul_theta, ul_phi=ul_phi, ul_gain=ul_gain, ul_azimuth=ul_az,
        tgt_theta=np.pi / 4, tgt_phi=0.0, tgt_rcs=tgt_rcs, tgt_dist=tgt_dist,
        clu_theta=clu_theta, clu_phi=clu_phi, clu_rcs=clu_rcs, clu_dist=clu_dist,
    )


def realization_for(cfg: ScenarioConfig, index: int) -> ChannelRealization:
    return sample_realization(cfg, rng_stream(cfg.seed, "realization", index))


# --------------------------------------------------------------------------- layouts


@dataclass(frozen=True, eq=False)
class AntennaLayout:
    """Transmit (N_t x 2) and receive (N_r x 2) antenna coordinates in meters."""

    tx: np.ndarray
    rx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tx", np.array(self.tx, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "rx", np.array(self.rx, dtype=float).reshape(-1, 2))

    def same_as(self, other: "AntennaLayout") -> bool:
        return np.array_equal(self.tx, other.tx) and np.array_equal(self.rx, other.rx)

    def stacked(self) -> np.ndarray:
        return np.vstack([self.tx, self.rx])

    @classmethod
    def from_stacked(cls, pos: np.ndarray, n_tx: int) -> "AntennaLayout":
        return cls(pos[:n_tx].copy(), pos[n_tx:].copy())


def min_pairwise_distance(points: np.ndarray) -> float:
    n = len(points)
    if n < 2:
        return math.inf
    diff = points[:, None, :] - points[None, :, :]
    d = np.sqrt((diff ** 2).sum(-1))
    return float(d[np.triu_indices(n, 1)].min())


def in_region(points: np.ndarray, region) -> bool:
    x0, x1, y0, y1 = region
    x, y = points[:, 0], points[:, 1]
    return bool(np.all(x >= x0 - GEOM_TOL) and np.all(x <= x1 + GEOM_TOL)
                and np.all(y >= y0 - GEOM_TOL) and np.all(y <= y1 + GEOM_TOL))


def array_feasible(points: np.ndarray, region, d0: float) -> bool:
    return in_region(points, region) and min_pairwise_distance(points) >= d0 - GEOM_TOL


def check_layout(layout: AntennaLayout, cfg: ScenarioConfig) -> bool:
    """Region bounds and minimum spacing for both arrays."""
    return (layout.tx.shape == (cfg.n_tx, 2) and layout.rx.shape == (cfg.n_rx, 2)
            and array_feasible(layout.tx, cfg.region, cfg.d0)
            and array_feasible(layout.rx, cfg.region, cfg.d0))


def _lattice(region, d0: float) -> np.ndarray:
    x0, x1, y0, y1 = region
    nx = int(math.floor((x1 - x0) / d0 + 1e-9)) + 1
    ny = int(math.floor((y1 - y0) / d0 + 1e-9)) + 1
    xs = x0 + d0 * np.arange(nx)
    ys = y0 + d0 * np.arange(ny)
    return np.array([(x, y) for y in ys for x in xs])


def _center(region) -> tuple[float, float]:
    # snapped to 1e-12 m so regions resized about the same center give identical arrays
    x0, x1, y0, y1 = region
    return round(0.5 * (x0 + x1), 12), round(0.5 * (y0 + y1), 12)


def _ula(n: int, spacing: float, region) -> np.ndarray:
    x0, x1, y0, y1 = region
    if (n - 1) * spacing > (x1 - x0) + GEOM_TOL:
        raise LayoutError(f"{n}-element array with spacing {spacing} does not fit in width {x1 - x0}")
    cx, cy = _center(region)
    x = cx + spacing * (np.arange(n) - 0.5 * (n - 1))
    pts = np.column_stack([np.clip(x, x0, x1), np.full(n, cy)])
    return pts


def _upa(n: int, spacing: float, region) -> np.ndarray:
    x0, x1, y0, y1 = region
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    if ((cols - 1) * spacing > (x1 - x0) + GEOM_TOL
            or (rows - 1) * spacing > (y1 - y0) + GEOM_TOL):
        raise LayoutError(f"{rows}x{cols} planar array with spacing {spacing} does not fit")
    cx, cy = _center(region)
    idx = np.arange(n)
    x = cx + spacing * (idx % cols - 0.5 * (cols - 1))
    y = cy + spacing * (idx // cols - 0.5 * (rows - 1))
    return np.column_stack([np.clip(x, x0, x1), np.clip(y, y0, y1)])


def layout_fpa(cfg: ScenarioConfig, shape: str | None = None) -> AntennaLayout:
    """Fixed-position array with lambda/2 neighbour spacing, centered in the region.

    ``shape="ula"`` places a linear array along x at mid-height; ``"upa"`` a
    compact near-square grid filled row by row.  The grid does not depend on
    the region size as long as the region keeps its center.
    """
    shape = shape or cfg.fpa_shape
    build = _ula if shape == "ula" else _upa
    half = cfg.wavelength / 2.0
    return AntennaLayout(build(cfg.n_tx, half, cfg.region), build(cfg.n_rx, half, cfg.region))


def _uniform_grid(n: int, region, d0: float) -> np.ndarray:
    x0, x1, y0, y1 = region
    w, h = x1 - x0, y1 - y0
    cols = max(1, math.ceil(math.sqrt(n * w / h)))
    cols = min(cols, n)
    rows = math.ceil(n / cols)
    idx = np.arange(n)
    # cell-centred grid first, edge-to-edge grid when cells are too small
    pts = np.column_stack([x0 + (idx % cols + 0.5) * w / cols, y0 + (idx // cols + 0.5) * h / rows])
    if array_feasible(pts, region, d0):
        return pts
    sx = w / (cols - 1) if cols > 1 else 0.0
    sy = h / (rows - 1) if rows > 1 else 0.0
    pts = np.column_stack([x0 + (idx % cols) * sx if cols > 1 else np.full(n, 0.5 * (x0 + x1)),
                           y0 + (idx // cols) * sy if rows > 1 else np.full(n, 0.5 * (y0 + y1))])
    if array_feasible(pts, region, d0):
        return pts
    lat = _lattice(region, d0)
    if len(lat) < n:
        raise LayoutError(f"region cannot host {n} antennas at spacing {d0}")
    return lat[:n]


def layout_uniform(cfg: ScenarioConfig) -> AntennaLayout:
    """Antennas spread on a regular grid that fills the region."""
    return AntennaLayout(_uniform_grid(cfg.n_tx, cfg.region, cfg.d0),
                         _uniform_grid(cfg.n_rx, cfg.region, cfg.d0))


def random_array(n: int, region, d0: float, rng: np.random.Generator,
                 max_attempts: int = 10_000) -> np.ndarray:
    x0, x1, y0, y1 = region
    pts: list[np.ndarray] = []
    for i in range(n):
        for _ in range(max_attempts):
            p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
            if all(np.hypot(*(p - q)) >= d0 for q in pts):
                pts.append(p)
                break
        else:
            raise LayoutError(f"rejection sampling failed for antenna {i} after {max_attempts} attempts")
    return np.array(pts).reshape(n, 2)


def layout_random(cfg: ScenarioConfig, rng: np.random.Generator) -> AntennaLayout:
    tx = random_array(cfg.n_tx, cfg.region, cfg.d0, rng)
    rx = random_array(cfg.n_rx, cfg.region, cfg.d0, rng)
    return AntennaLayout(tx, rx)
