"""SINR, SCNR, rates and the weighted objective for given beamformers."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .channel import ChannelSet


@dataclass(eq=False)
class Beamformers:
    """Transmit precoder ``F`` (N_t x K_DL), sensing combiner ``w_s`` (N_r),
    UL combiners ``w_r`` (N_r x K_UL) and UL user coefficients ``f_ul`` (K_UL)."""

    F: np.ndarray
    w_s: np.ndarray
    w_r: np.ndarray
    f_ul: np.ndarray

    def copy(self) -> "Beamformers":
        return Beamformers(self.F.copy(), self.w_s.copy(), self.w_r.copy(), self.f_ul.copy())

    def replace(self, **kw) -> "Beamformers":
        cur = {f.name: getattr(self, f.name) for f in fields(self)}
        cur.update(kw)
        return Beamformers(**cur)

    @property
    def power_dl(self) -> float:
        return float(np.sum(np.abs(self.F) ** 2))

    @property
    def power_ul(self) -> float:
        return float(np.sum(np.abs(self.f_ul) ** 2))

    def same_as(self, other: "Beamformers") -> bool:
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))


@dataclass
class ReceiveTerms:
    """Received powers seen through each combiner column of ``V`` (length M)."""

    clutter: np.ndarray      # C_v
    target: np.ndarray       # S_v
    si: np.ndarray           # SI_v
    ul: np.ndarray           # (K_UL, M): |w^H h_j^H f_j|^2
    noise: np.ndarray        # ||v||^2 sigma^2
    wb_s: np.ndarray         # v^H b_s
    aF_s: np.ndarray         # a_s^H F, (K_DL,)
    hv: np.ndarray           # h_ul[j] @ v, (K_UL, M)


def receive_terms(ch: ChannelSet, F: np.ndarray, f_ul: np.ndarray, V: np.ndarray) -> ReceiveTerms:
    V = V.reshape(ch.n_rx, -1)
    aF_s = ch.a_s.conj() @ F
    aF_c = ch.a_c.conj() @ F                       # (C, K_DL)
    wb_s = V.conj().T @ ch.b_s                     # (M,)
    wb_c = V.conj().T @ ch.b_c.T                   # (M, C)
    target = abs(ch.beta_s) ** 2 * np.abs(wb_s) ** 2 * np.sum(np.abs(aF_s) ** 2)
    clutter = (np.abs(wb_c) ** 2) @ (np.abs(ch.beta_c) ** 2 * np.sum(np.abs(aF_c) ** 2, axis=1))
    si = np.sum(np.abs(F.conj().T @ ch.h_si @ V) ** 2, axis=0)
    hv = ch.h_ul @ V
    ul = np.abs(hv) ** 2 * (np.abs(f_ul) ** 2)[:, None]
    noise = np.sum(np.abs(V) ** 2, axis=0) * ch.noise
    return ReceiveTerms(clutter, target, si, ul, noise, wb_s, aF_s, hv)


def interference_powers(ch: ChannelSet, F, f_ul, w):
    """(C, S, SI, UL_j) received through a single combiner ``w``."""
    t = receive_terms(ch, F, f_ul, np.asarray(w).reshape(-1, 1))
    return float(t.clutter[0]), float(t.target[0]), float(t.si[0]), t.ul[:, 0]


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass
class LinkTerms:
    """Useful-signal amplitudes and interference-plus-noise powers of every link.

    ``num_dl[k] = h_k^H f_k``, ``num_ul[k] = w_k^H h_k^H f_k`` and
    ``num_s = beta_s (w_s^H b_s) a_s^H F``; the ``int_*`` entries exclude the
    useful signal.
    """

    num_dl: np.ndarray
    int_dl: np.ndarray
    num_ul: np.ndarray
    int_ul: np.ndarray
    num_s: np.ndarray
    int_s: float

    @property
    def own_dl(self):
        return np.abs(self.num_dl) ** 2

    @property
    def own_ul(self):
        return np.abs(self.num_ul) ** 2

    @property
    def own_s(self) -> float:
        return float(np.sum(np.abs(self.num_s) ** 2))

    def sinr_dl(self):
        return _ratio(self.own_dl, self.int_dl)

    def sinr_ul(self):
        return _ratio(self.own_ul, self.int_ul)

    def scnr(self) -> float:
        return float(_ratio(self.own_s, self.int_s))


def link_terms(ch: ChannelSet, bf: Beamformers) -> LinkTerms:
    hf = ch.h_dl.conj() @ bf.F                     # [k, j] = h_k^H f_j
    num_dl = np.diag(hf).copy()
    cross = np.abs(hf) ** 2
    np.fill_diagonal(cross, 0.0)
    int_dl = cross.sum(axis=1) + np.sum(np.abs(ch.g) ** 2, axis=0) + ch.noise

    V = np.column_stack([bf.w_s.reshape(-1, 1), bf.w_r])
    t = receive_terms(ch, bf.F, bf.f_ul, V)
    ku = ch.k_ul
    ul_other = t.ul.copy()
    ul_other[np.arange(ku), np.arange(1, ku + 1)] = 0.0
    base = t.clutter + t.si + ul_other.sum(axis=0) + t.noise
    num_ul = bf.f_ul * np.diag(t.hv[:, 1:]).conj()
    int_ul = base[1:] + t.target[1:]
    num_s = ch.beta_s * t.wb_s[0] * t.aF_s
    return LinkTerms(num_dl, int_dl, num_ul, int_ul, num_s, float(base[0]))


def sinr_dl(ch: ChannelSet, F: np.ndarray, k: int | None = None):
    hf = np.abs(ch.h_dl.conj() @ F) ** 2           # [k, j] = |h_k^H f_j|^2
    own = np.diag(hf).copy()
    np.fill_diagonal(hf, 0.0)
    out = own / (hf.sum(axis=1) + np.sum(np.abs(ch.g) ** 2, axis=0) + ch.noise)
    return out if k is None else float(out[k])


def sinr_ul(ch: ChannelSet, bf: Beamformers, k: int | None = None):
    out = link_terms(ch, bf).sinr_ul()
    return out if k is None else float(out[k])


def scnr(ch: ChannelSet, bf: Beamformers) -> float:
    return link_terms(ch, bf).scnr()


@dataclass
class Metrics:
    sinr_dl: np.ndarray
    sinr_ul: np.ndarray
    scnr: float
    r_dl: np.ndarray
    r_ul: np.ndarray
    r_s: float
    objective: float


def evaluate(ch: ChannelSet, bf: Beamformers, weights, terms: LinkTerms | None = None) -> Metrics:
    w_dl, w_ul, w_sense = weights
    terms = link_terms(ch, bf) if terms is None else terms
    s_dl, s_ul, s_s = terms.sinr_dl(), terms.sinr_ul(), terms.scnr()
    r_dl, r_ul, r_s = np.log2(1 + s_dl), np.log2(1 + s_ul), float(np.log2(1 + s_s))
    obj = w_sense * r_s + w_dl * float(r_dl.sum()) + w_ul * float(r_ul.sum())
    return Metrics(s_dl, s_ul, s_s, r_dl, r_ul, r_s, obj)


def objective(ch: ChannelSet, bf: Beamformers, weights) -> float:
    """Weighted sum of DL rates, UL rates and sensing MI, in bits."""
    return evaluate(ch, bf, weights).objective
