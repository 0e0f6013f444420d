"""Closed-form block updates of the beamformers and the alternating inner loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import ChannelSet
from .fp import AuxVars, eval_g_hat, update_aux
from .metrics import Beamformers, evaluate, link_terms
from .scenario import ScenarioConfig

MAX_HALVINGS = 200


class BisectionError(RuntimeError):
    """The dual-variable search failed to meet the power budget."""


def init_beamformers(cfg: ScenarioConfig, rng: np.random.Generator) -> Beamformers:
    """Random complex Gaussian precoder at full power, equal-power UL users, unit combiners."""
    def cn(shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    F = cn((cfg.n_tx, cfg.k_dl))
    if F.size:
        F *= math.sqrt(cfg.p_dl) / np.linalg.norm(F)
    f_ul = np.full(cfg.k_ul, math.sqrt(cfg.p_ul / cfg.k_ul) if cfg.k_ul else 0.0, dtype=complex)
    w_s = cn(cfg.n_rx)
    w_s /= np.linalg.norm(w_s)
    w_r = cn((cfg.n_rx, cfg.k_ul))
    if w_r.size:
        w_r /= np.linalg.norm(w_r, axis=0)
    return Beamformers(F, w_s, w_r, f_ul)


def receive_weighting(bf: Beamformers, aux: AuxVars, weights) -> np.ndarray:
    """sum over combiners v of (weight * |xi|^2) v v^H, an N_r x N_r Hermitian matrix."""
    _, w_ul, w_sense = weights
    V = np.column_stack([bf.w_s.reshape(-1, 1), bf.w_r])
    kappa = np.concatenate([[w_sense * np.sum(np.abs(aux.xi_s) ** 2)],
                            w_ul * np.abs(aux.xi_ul) ** 2])
    return (V * kappa) @ V.conj().T


def _dual_search(lam: np.ndarray, coef: np.ndarray, budget: float, tol: float) -> float:
    """Dual variable for the power budget ``sum coef / (lam + tau)^2 <= budget``.

    Returns 0 when the budget is slack at ``tau = 0``.  Otherwise the power
    is bracketed by doubling ``tau``, and a safeguarded Newton iteration on
    ``power^{-1/2}`` (affine in ``tau`` for a single term) shrinks the
    bracket.  Plain bisection takes over whenever Newton leaves the bracket.
    The result is the upper bracket end once the bracket is a few ulps wide,
    so the power is never above the budget.
    """
    keep = coef > 0
    lam, coef = lam[keep], coef[keep]
    eps4 = 4 * np.finfo(float).eps

    def power(tau):
        d = lam + tau
        if np.any(d <= 0):
            return math.inf
        with np.errstate(over="ignore", divide="ignore"):
            inv = 1.0 / d
            return float(coef @ (inv * inv))

    if power(0.0) <= budget:
        return 0.0
    hi = 1.0
    while power(hi) > budget:
        hi *= 2.0
        if hi > 1e300:
            raise BisectionError("could not bracket the dual variable")
    lo = 0.0
    target = budget ** -0.5
    x = hi
    for _ in range(MAX_HALVINGS):
        d = lam + x
        inv = 1.0 / d
        i2 = inv * inv
        p = float(coef @ i2)
        if p > budget:
            lo = x
        else:
            hi = x
        if hi - lo <= eps4 * hi:
            break
        dp = -2.0 * float(coef @ (i2 * inv))
        # Newton on psi = p^{-1/2}; psi' = -p' / (2 p^{3/2})
        x_new = x - (p ** -0.5 - target) * 2.0 * p ** 1.5 / -dp
        if abs(x_new - x) <= eps4 * x:
            # converged from one side: step just across the root
            x_new = x + (eps4 * x if p > budget else -eps4 * x)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        x = x_new
    p_hi = power(hi)
    if budget - p_hi > tol:
        raise BisectionError(f"dual search ended {budget - p_hi:.3e} below the budget")
    return hi


def _clamp_power(x: np.ndarray, budget: float) -> np.ndarray:
    """Undo rounding that leaves ``||x||^2`` a few ulps above the budget."""
    p = float(np.sum(np.abs(x) ** 2))
    while p > budget:
        x = x * (math.sqrt(budget / p) * (1 - 2 * np.finfo(float).eps))
        p = float(np.sum(np.abs(x) ** 2))
    return x


def _transmit_quadratic(ch: ChannelSet, bf: Beamformers, aux: AuxVars, weights):
    w_dl, _, w_sense = weights
    W = receive_weighting(bf, aux, weights)
    qs = float(np.real(ch.b_s.conj() @ W @ ch.b_s))
    qc = np.real(np.einsum("cn,nm,cm->c", ch.b_c.conj(), W, ch.b_c))
    hd = ch.h_dl.T * (w_dl * np.abs(aux.xi_dl) ** 2)            # columns weighted
    Q = hd @ ch.h_dl.conj()
    Q = Q + abs(ch.beta_s) ** 2 * qs * np.outer(ch.a_s, ch.a_s.conj())
    Q = Q + (ch.a_c.T * (np.abs(ch.beta_c) ** 2 * qc)) @ ch.a_c.conj()
    Q = Q + ch.h_si @ W @ ch.h_si.conj().T
    Q = 0.5 * (Q + Q.conj().T)

    mu_dl, _, mu_s = aux.split_mu()
    wb = np.vdot(bf.w_s, ch.b_s)                                  # w_s^H b_s
    Phi = ch.h_dl.T * (w_dl * np.sqrt(1 + mu_dl) * aux.xi_dl.conj())
    Phi = Phi + np.outer(ch.a_s, np.conj(w_sense * math.sqrt(1 + mu_s) * ch.beta_s * wb * aux.xi_s))
    return Q, Phi


def update_F(ch: ChannelSet, bf: Beamformers, aux: AuxVars, weights, p_dl: float,
             tol_power: float, return_tau: bool = False):
    """Maximize G-hat over F subject to the total DL power budget.

    Columns are ``(Q + tau I)^{-1} phi_k`` with a common Hermitian ``Q``; the
    eigendecomposition of ``Q`` makes every power evaluation in the
    bisection cheap.
    """
    Q, Phi = _transmit_quadratic(ch, bf, aux, weights)
    lam, U = np.linalg.eigh(Q)
    lam = np.clip(lam, 0.0, None)
    Z = U.conj().T @ Phi
    zz = np.sum(np.abs(Z) ** 2, axis=1)
    tau = _dual_search(lam, zz, p_dl, tol_power * p_dl)
    d = lam + tau
    scale = np.divide(1.0, d, out=np.zeros_like(d), where=d > 0)
    F = _clamp_power(U @ (scale[:, None] * Z), p_dl)
    return (F, tau) if return_tau else F


def update_f_ul(ch: ChannelSet, bf: Beamformers, aux: AuxVars, weights, p_ul: float,
                tol_power: float, return_tau: bool = False):
    _, w_ul, _ = weights
    W = receive_weighting(bf, aux, weights)
    lam = np.real(np.einsum("kn,nm,km->k", ch.h_ul, W, ch.h_ul.conj()))
    lam = np.clip(lam, 0.0, None)
    _, mu_ul, _ = aux.split_mu()
    hw = np.einsum("kn,nk->k", ch.h_ul, bf.w_r)                  # h_k w_k
    phi = w_ul * np.sqrt(1 + mu_ul) * aux.xi_ul * hw.conj()
    pp = np.abs(phi) ** 2
    nz = pp > 0
    tau = _dual_search(lam, pp, p_ul, tol_power * p_ul)
    d = lam + tau
    f = _clamp_power(np.divide(phi, d, out=np.zeros_like(phi), where=nz).conj(), p_ul)
    return (f, tau) if return_tau else f


def _receive_covariance(ch: ChannelSet, F: np.ndarray, f_ul: np.ndarray) -> np.ndarray:
    aF_s = ch.a_s.conj() @ F
    aF_c = ch.a_c.conj() @ F
    ps = abs(ch.beta_s) ** 2 * np.sum(np.abs(aF_s) ** 2)
    pc = np.abs(ch.beta_c) ** 2 * np.sum(np.abs(aF_c) ** 2, axis=1)
    R = ps * np.outer(ch.b_s, ch.b_s.conj())
    R = R + (ch.b_c.T * pc) @ ch.b_c.conj()
    M = F.conj().T @ ch.h_si
    R = R + M.conj().T @ M
    R = R + (ch.h_ul.conj().T * np.abs(f_ul) ** 2) @ ch.h_ul
    R = R + ch.noise * np.eye(ch.n_rx)
    return 0.5 * (R + R.conj().T)


def _hermitian_solve(R: np.ndarray, B: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(R), B)
    except np.linalg.LinAlgError:
        ridge = 1e-12 * np.real(np.trace(R)) / R.shape[0]
        return np.linalg.solve(R + ridge * np.eye(R.shape[0]), B)


def update_w_r(ch: ChannelSet, bf: Beamformers, aux: AuxVars, k: int | None = None):
    """MMSE-type UL combiners; a zero auxiliary variable gives a zero combiner."""
    if ch.k_ul == 0:
        return np.zeros((ch.n_rx, 0), dtype=complex)
    R = _receive_covariance(ch, bf.F, bf.f_ul)
    _, mu_ul, _ = aux.split_mu()
    X = _hermitian_solve(R, ch.h_ul.conj().T)                    # R^{-1} h_k^H
    coef = np.sqrt(1 + mu_ul) * bf.f_ul
    coef = np.divide(coef, aux.xi_ul.conj(), out=np.zeros_like(coef), where=aux.xi_ul != 0)
    W = X * coef
    return W if k is None else W[:, k]


def update_w_s(ch: ChannelSet, bf: Beamformers, aux: AuxVars) -> np.ndarray:
    nrm = float(np.sum(np.abs(aux.xi_s) ** 2))
    if nrm == 0.0:
        return np.zeros(ch.n_rx, dtype=complex)
    R = _receive_covariance(ch, bf.F, bf.f_ul)
    _, _, mu_s = aux.split_mu()
    t = ch.a_s.conj() @ bf.F @ aux.xi_s
    return math.sqrt(1 + mu_s) * ch.beta_s * t / nrm * _hermitian_solve(R, ch.b_s)


@dataclass
class InnerLoopState:
    bf: Beamformers
    aux: AuxVars
    g_trace: list[float] = field(default_factory=list)
    ghat_trace: list[float] = field(default_factory=list)
    power_trace: list[tuple[float, float]] = field(default_factory=list)
    iters: int = 0
    converged: bool = False

    @property
    def objective(self) -> float:
        return self.g_trace[-1]


def normalize_combiners(V: np.ndarray) -> np.ndarray:
    """Scale nonzero columns to unit norm; ratios are invariant to combiner scale."""
    n = np.linalg.norm(V, axis=0)
    return np.divide(V, n, out=np.zeros_like(V), where=n > 0)


def sweep_once(ch: ChannelSet, bf: Beamformers, aux: AuxVars, cfg: ScenarioConfig):
    """One pass F -> f_UL -> w_r -> w_s -> (mu, xi); returns new (bf, aux, link terms).

    Combiners are renormalized before the auxiliary update.  This leaves the
    objective unchanged and keeps their scale from drifting toward underflow
    when a UL user is switched off.
    """
    w = cfg.weights
    bf = bf.replace(F=update_F(ch, bf, aux, w, cfg.p_dl, cfg.tol_power))
    bf = bf.replace(f_ul=update_f_ul(ch, bf, aux, w, cfg.p_ul, cfg.tol_power))
    bf = bf.replace(w_r=update_w_r(ch, bf, aux))
    bf = bf.replace(w_s=update_w_s(ch, bf, aux))
    bf = bf.replace(w_r=normalize_combiners(bf.w_r), w_s=normalize_combiners(bf.w_s[:, None])[:, 0])
    terms = link_terms(ch, bf)
    return bf, update_aux(ch, bf, terms), terms


def inner_loop(ch: ChannelSet, bf0: Beamformers, cfg: ScenarioConfig,
               max_iters: int | None = None, tol: float | None = None) -> InnerLoopState:
    """Alternate the closed-form block updates until the objective settles.

    The auxiliary variables are initialised from ``bf0``, so the first trace
    entry is the objective of the starting point.
    """
    max_iters = cfg.max_inner_iters if max_iters is None else max_iters
    tol = cfg.tol_obj if tol is None else tol
    w = cfg.weights
    bf = bf0.copy()
    terms = link_terms(ch, bf)
    aux = update_aux(ch, bf, terms)
    g = evaluate(ch, bf, w, terms).objective
    state = InnerLoopState(bf, aux, [g], [eval_g_hat(ch, bf, aux, w, terms)],
                           [(bf.power_dl, bf.power_ul)])
    for it in range(1, max_iters + 1):
        bf, aux, terms = sweep_once(ch, bf, aux, cfg)
        g_new = evaluate(ch, bf, w, terms).objective
        state.bf, state.aux, state.iters = bf, aux, it
        state.g_trace.append(g_new)
        state.ghat_trace.append(eval_g_hat(ch, bf, aux, w, terms))
        state.power_trace.append((bf.power_dl, bf.power_ul))
        if abs(g_new - g) <= tol * max(abs(g), 1e-12):
            state.converged = True
            break
        g = g_new
    return state
