"""Antenna-position gradients, constrained gradient ascent, and the AO loop."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .beamforming import InnerLoopState, init_beamformers, inner_loop, receive_weighting
from .channel import (ChannelDerivatives, ChannelSet, build_channels, channel_derivatives,
                      rebuild_channels)
from .fp import LN2, AuxVars, eval_g_hat
from .metrics import Beamformers
from .scenario import AntennaLayout, ChannelRealization, ScenarioConfig, check_layout, rng_stream

MAX_BACKOFFS = 200


@dataclass(frozen=True)
class GaConfig:
    step_tx: float
    step_rx: float
    backoff: float = 0.9
    max_ga_iters: int = 20
    tol_obj: float = 1e-4

    def __post_init__(self):
        if not 0 < self.backoff < 1:
            raise ValueError("backoff must lie in (0, 1)")
        if self.step_tx <= 0 or self.step_rx <= 0:
            raise ValueError("GA steps must be positive")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "GaConfig":
        return cls(cfg.ga_step_init, cfg.ga_step_init, cfg.ga_backoff, cfg.max_ga_iters, cfg.tol_obj)


def _diag_grad(D: np.ndarray, dz: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """sum over leading axes of 2 Re(conj(D) dz), for both coordinate axes -> (N, 2)."""
    axes = tuple(range(D.ndim - 1))
    return np.column_stack([2 * np.real(np.sum(D.conj() * d, axis=axes)) for d in dz])


def _si_grad(D: np.ndarray, dz: tuple[np.ndarray, np.ndarray], axis: int) -> np.ndarray:
    return np.column_stack([2 * np.real(np.sum(D.conj() * d, axis=axis)) for d in dz])


def grad_positions(ch: ChannelSet, der: ChannelDerivatives, bf: Beamformers, aux: AuxVars,
                   weights, which: str) -> np.ndarray:
    """Gradient of G-hat (bits) with respect to each transmit or receive antenna position.

    Returns an (N, 2) array of d/dx, d/dy.  Every channel entry that depends
    on antenna m is differentiated: DL channels, steering vectors of target
    and clutter, UL channels and the SI matrix.
    """
    w_dl, w_ul, w_sense = weights
    mu_dl, mu_ul, mu_s = aux.split_mu()
    F = bf.F
    W = receive_weighting(bf, aux, weights)
    bs2 = abs(ch.beta_s) ** 2
    bc2 = np.abs(ch.beta_c) ** 2
    D_si = -(F @ (F.conj().T @ ch.h_si)) @ W                     # -F F^H H W

    if which == "tx":
        M = F @ F.conj().T
        wb = np.vdot(bf.w_s, ch.b_s)
        qs = float(np.real(ch.b_s.conj() @ W @ ch.b_s))
        qc = np.real(np.einsum("cn,nm,cm->c", ch.b_c.conj(), W, ch.b_c))
        D_as = (w_sense * math.sqrt(1 + mu_s) * ch.beta_s * wb * (F @ aux.xi_s)
                - bs2 * qs * (M @ ch.a_s))
        D_ac = -(bc2 * qc)[:, None] * (ch.a_c @ M.T)              # rows: M a_c
        D_h = w_dl * (np.sqrt(1 + mu_dl)[:, None] * aux.xi_dl[:, None] * F.T
                      - (np.abs(aux.xi_dl) ** 2)[:, None] * (ch.h_dl @ M.T))
        g = (_diag_grad(D_h, der.dh_dl) + _diag_grad(D_as, der.da_s)
             + _diag_grad(D_ac, der.da_c) + _si_grad(D_si, der.dsi_tx, axis=1))
    elif which == "rx":
        aF_s = ch.a_s.conj() @ F
        aF_c = ch.a_c.conj() @ F
        t = aF_s @ aux.xi_s
        D_bs = (w_sense * math.sqrt(1 + mu_s) * np.conj(ch.beta_s * t) * bf.w_s
                - bs2 * np.sum(np.abs(aF_s) ** 2) * (W @ ch.b_s))
        D_bc = -(bc2 * np.sum(np.abs(aF_c) ** 2, axis=1))[:, None] * (ch.b_c @ W.T)
        C = ch.h_ul.conj()                                         # rows: c_k = h_k^H
        D_c = (w_ul * (np.sqrt(1 + mu_ul) * np.conj(aux.xi_ul * bf.f_ul))[:, None] * bf.w_r.T
               - (np.abs(bf.f_ul) ** 2)[:, None] * (C @ W.T))
        g = (_diag_grad(D_c, der.dc_ul) + _diag_grad(D_bs, der.db_s)
             + _diag_grad(D_bc, der.db_c) + _si_grad(D_si, der.dsi_rx, axis=0))
    else:
        raise ValueError(f"which must be 'tx' or 'rx', got {which!r}")
    return g / LN2


@dataclass
class GaResult:
    layout: AntennaLayout
    g_hat: float
    displacement: float
    iters: int
    step: float


def _with_array(layout: AntennaLayout, which: str, pts: np.ndarray) -> AntennaLayout:
    return AntennaLayout(pts, layout.rx) if which == "tx" else AntennaLayout(layout.tx, pts)


def ga_positions(real: ChannelRealization, layout: AntennaLayout, bf: Beamformers, aux: AuxVars,
                 cfg: ScenarioConfig, which: str, ga: GaConfig | None = None) -> GaResult:
    """Accept-only-improving gradient ascent on one array with beamformers and aux frozen.

    A candidate step is shrunk by ``ga.backoff`` while it leaves the region,
    violates the minimum spacing, or lowers G-hat.  The returned layout is
    feasible and its G-hat is never below the starting value.
    """
    ga = ga or GaConfig.from_config(cfg)
    w = cfg.weights
    step = ga.step_tx if which == "tx" else ga.step_rx
    ch = build_channels(real, layout, cfg.d_si, cfg.noise)
    g = eval_g_hat(ch, bf, aux, w)
    start = layout.tx if which == "tx" else layout.rx
    it = 0
    for it in range(1, ga.max_ga_iters + 1):
        der = channel_derivatives(real, layout, cfg.d_si)
        grad = grad_positions(ch, der, bf, aux, w, which)
        gn = float(np.linalg.norm(grad))
        if gn == 0.0 or not np.isfinite(gn):
            it -= 1
            break
        direction = grad / (1.0 + gn)
        cur = layout.tx if which == "tx" else layout.rx
        accepted = None
        for _ in range(MAX_BACKOFFS):
            cand = _with_array(layout, which, cur + step * direction)
            if check_layout(cand, cfg):
                ch_c = rebuild_channels(ch, real, cand, which, cfg.d_si)
                g_c = eval_g_hat(ch_c, bf, aux, w)
                if g_c >= g:
                    accepted = (cand, ch_c, g_c)
                    break
            step *= ga.backoff
        if accepted is None:
            break
        gain = accepted[2] - g
        layout, ch, g = accepted
        if gain < ga.tol_obj * max(abs(g), 1e-12):
            break
    end = layout.tx if which == "tx" else layout.rx
    disp = float(np.sum(np.linalg.norm(end - start, axis=1)))
    return GaResult(layout, g, disp, it, step)


@dataclass
class AoTraceRow:
    iteration: int
    objective: float
    g_hat: float
    disp_tx: float
    disp_rx: float
    inner_iters: int


@dataclass
class AoResult:
    layout: AntennaLayout
    bf: Beamformers
    aux: AuxVars
    objective: float
    trace: list[AoTraceRow] = field(default_factory=list)
    iters: int = 0
    converged: bool = False
    inner_converged: bool = False

    @property
    def objective_trace(self) -> list[float]:
        return [r.objective for r in self.trace]


def default_beamformers(cfg: ScenarioConfig, index: int = 0) -> Beamformers:
    """Initial beamformers shared by every scheme for realization ``index``."""
    return init_beamformers(cfg, rng_stream(cfg.seed, "bf-init", index))


def ao_loop(real: ChannelRealization, init_layout: AntennaLayout, cfg: ScenarioConfig,
            bf0: Beamformers | None = None, max_ao_iters: int | None = None) -> AoResult:
    """Alternate position ascent (tx then rx) with the beamforming inner loop.

    Trace row 0 is the inner-loop result at ``init_layout``; each further row
    records one outer iteration with the distances moved by each array.
    """
    if not check_layout(init_layout, cfg):
        raise ValueError("initial layout violates the region or spacing constraints")
    bf0 = default_beamformers(cfg) if bf0 is None else bf0
    ch = build_channels(real, init_layout, cfg.d_si, cfg.noise)
    st: InnerLoopState = inner_loop(ch, bf0, cfg)
    res = AoResult(init_layout, st.bf, st.aux, st.objective, inner_converged=st.converged)
    res.trace.append(AoTraceRow(0, st.objective, st.ghat_trace[-1], 0.0, 0.0, st.iters))
    return ao_resume(real, res, cfg, max_ao_iters)


def ao_resume(real: ChannelRealization, res: AoResult, cfg: ScenarioConfig,
              max_ao_iters: int | None = None) -> AoResult:
    """Continue an AO run until it converges or has done ``max_ao_iters`` outer iterations.

    ``ao_resume(ao_loop(..., max_ao_iters=a), b)`` is bit-identical to
    ``ao_loop(..., max_ao_iters=b)`` for ``a <= b``.
    """
    max_ao_iters = cfg.max_ao_iters if max_ao_iters is None else max_ao_iters
    res = dataclasses.replace(res, trace=list(res.trace))
    if res.converged:
        return res
    ga = GaConfig.from_config(cfg)
    g = res.objective
    for it in range(res.iters + 1, max_ao_iters + 1):
        rt = ga_positions(real, res.layout, res.bf, res.aux, cfg, "tx", ga)
        rr = ga_positions(real, rt.layout, res.bf, res.aux, cfg, "rx", ga)
        ch = build_channels(real, rr.layout, cfg.d_si, cfg.noise)
        st = inner_loop(ch, res.bf, cfg)
        res.layout, res.bf, res.aux, res.objective = rr.layout, st.bf, st.aux, st.objective
        res.iters, res.inner_converged = it, st.converged
        res.trace.append(AoTraceRow(it, st.objective, st.ghat_trace[-1], rt.displacement,
                                    rr.displacement, st.iters))
        if abs(st.objective - g) <= cfg.tol_obj * max(abs(g), 1e-12):
            res.converged = True
            break
        g = st.objective
    return res
