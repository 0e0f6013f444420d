"""Quadratic-transform reformulation of the weighted objective.

``eval_g_hat`` is expressed in bits: the natural-log reformulation divided
by ln 2.  With ``aux = update_aux(ch, bf)`` it coincides with
:func:`maisac.metrics.objective`, and the positive scale factor leaves every
closed-form maximizer unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .metrics import Beamformers, LinkTerms, link_terms

LN2 = math.log(2.0)


@dataclass(eq=False)
class AuxVars:
    mu: np.ndarray        # (K_DL + K_UL + 1,) nonnegative
    xi_dl: np.ndarray     # (K_DL,)
    xi_ul: np.ndarray     # (K_UL,)
    xi_s: np.ndarray      # (K_DL,)

    def split_mu(self):
        kd = self.xi_dl.shape[0]
        ku = self.xi_ul.shape[0]
        return self.mu[:kd], self.mu[kd:kd + ku], float(self.mu[kd + ku])

    def copy(self) -> "AuxVars":
        return AuxVars(self.mu.copy(), self.xi_dl.copy(), self.xi_ul.copy(), self.xi_s.copy())


def eval_g_hat(ch: ChannelSet, bf: Beamformers, aux: AuxVars, weights,
               terms: LinkTerms | None = None) -> float:
    w_dl, w_ul, w_sense = weights
    t = link_terms(ch, bf) if terms is None else terms
    mu_dl, mu_ul, mu_s = aux.split_mu()
    val = (w_dl * np.sum(np.log1p(mu_dl) - mu_dl)
           + w_ul * np.sum(np.log1p(mu_ul) - mu_ul)
           + w_sense * (math.log1p(mu_s) - mu_s))
    val += w_dl * np.sum(2 * np.sqrt(1 + mu_dl) * np.real(aux.xi_dl * t.num_dl)
                         - np.abs(aux.xi_dl) ** 2 * (t.int_dl + t.own_dl))
    val += w_ul * np.sum(2 * np.sqrt(1 + mu_ul) * np.real(aux.xi_ul * t.num_ul)
                         - np.abs(aux.xi_ul) ** 2 * (t.int_ul + t.own_ul))
    val += w_sense * (2 * math.sqrt(1 + mu_s) * np.real(np.dot(t.num_s, aux.xi_s))
                      - np.sum(np.abs(aux.xi_s) ** 2) * (t.int_s + t.own_s))
    return float(val) / LN2


def update_mu(ch: ChannelSet, bf: Beamformers, terms: LinkTerms | None = None) -> np.ndarray:
    """Current DL SINRs, UL SINRs and the SCNR, concatenated."""
    t = link_terms(ch, bf) if terms is None else terms
    return np.concatenate([t.sinr_dl(), t.sinr_ul(), [t.scnr()]])


def _safe_div(num, den):
    num = np.asarray(num, dtype=complex)
    den = np.broadcast_to(np.asarray(den, dtype=float), num.shape)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def update_xi(ch: ChannelSet, bf: Beamformers, mu: np.ndarray, terms: LinkTerms | None = None):
    """Maximizers of G-hat over the quadratic-transform variables for fixed ``mu``."""
    t = link_terms(ch, bf) if terms is None else terms
    kd = t.num_dl.shape[0]
    ku = t.num_ul.shape[0]
    xi_dl = np.sqrt(1 + mu[:kd]) * _safe_div(t.num_dl.conj(), t.int_dl + t.own_dl)
    xi_ul = np.sqrt(1 + mu[kd:kd + ku]) * _safe_div(t.num_ul.conj(), t.int_ul + t.own_ul)
    xi_s = np.sqrt(1 + mu[kd + ku]) * _safe_div(t.num_s.conj(), t.int_s + t.own_s)
    return xi_dl, xi_ul, xi_s


def update_aux(ch: ChannelSet, bf: Beamformers, terms: LinkTerms | None = None) -> AuxVars:
    t = link_terms(ch, bf) if terms is None else terms
    mu = update_mu(ch, bf, t)
    return AuxVars(mu, *update_xi(ch, bf, mu, t))
