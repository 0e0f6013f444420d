"""Channel matrices and their derivatives with respect to antenna coordinates.

Conventions
-----------
``h_dl[k]`` is the length-N_t column channel of DL user k, used as
``h_dl[k].conj() @ f``.  ``h_ul[k]`` is the 1 x N_r *row* channel of UL
user k, built from conjugated steering vectors, so ``h_ul[k] @ w`` equals
``(w^H h_ul[k]^H)^*``.  ``h_si[i, j]`` couples transmit antenna i and
receive antenna j; the received SI is ``h_si^H F``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .scenario import AntennaLayout, ChannelRealization, path_loss

__all__ = [
    "ChannelSet", "ChannelDerivatives", "steering_delay", "steering_vector",
    "steering_derivative", "path_loss", "dl_channel", "ul_channel", "si_channel",
    "si_amplitude", "build_channels", "rebuild_channels", "channel_derivatives",
]


def steering_delay(pos, theta, phi):
    """Path-length difference of position(s) ``pos`` relative to the origin."""
    pos = np.asarray(pos, dtype=float)
    return pos[..., 0] * np.cos(theta) * np.sin(phi) + pos[..., 1] * np.sin(theta)


def steering_vector(positions, theta, phi, wavelength):
    """Unit-modulus phase response ``exp(j 2 pi / lambda * delay)`` per antenna."""
    k = 2.0 * np.pi / wavelength
    return np.exp(1j * k * steering_delay(positions, theta, phi))


def steering_derivative(positions, theta, phi, wavelength, axis, m):
    """d a / d x_m (axis 0) or d a / d y_m (axis 1); only entry m is nonzero."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    a = steering_vector(positions, theta, phi, wavelength)
    k = 2.0 * np.pi / wavelength
    coef = np.cos(theta) * np.sin(phi) if axis == 0 else np.sin(theta)
    out = np.zeros_like(a)
    out[m] = 1j * k * coef * a[m]
    return out


def _path_steering(points, theta, phi, wavelength):
    """Steering tensor (K, L, N) and the per-axis phase slopes (K, L)."""
    k = 2.0 * np.pi / wavelength
    cx = np.cos(theta) * np.sin(phi)
    sy = np.sin(theta)
    delay = cx[..., None] * points[:, 0] + sy[..., None] * points[:, 1]
    return np.exp(1j * k * delay), 1j * k * cx, 1j * k * sy


def dl_channel(real: ChannelRealization, layout: AntennaLayout, k: int | None = None):
    """DL channels ``sqrt(eta_k / L) sum_l rho_kl a_kl(p_t)``; shape (K_DL, N_t)."""
    a, _, _ = _path_steering(layout.tx, real.dl_theta, real.dl_phi, real.wavelength)
    scale = np.sqrt(real.eta_dl / real.dl_theta.shape[1])
    h = scale[:, None] * np.einsum("kl,kln->kn", real.dl_gain, a)
    return h if k is None else h[k]


def ul_channel(real: ChannelRealization, layout: AntennaLayout, k: int | None = None):
    """UL row channels ``sqrt(eta_k / L) sum_l rho_kl b_kl(p_r)^H``; shape (K_UL, N_r)."""
    b, _, _ = _path_steering(layout.rx, real.ul_theta, real.ul_phi, real.wavelength)
    scale = np.sqrt(real.eta_ul / real.ul_theta.shape[1])
    h = scale[:, None] * np.einsum("kl,kln->kn", real.ul_gain, b.conj())
    return h if k is None else h[k]


def si_amplitude(r, wavelength, gain=1.0):
    """Near-field SI amplitude and its derivative with respect to distance."""
    r = np.asarray(r, dtype=float)
    u = wavelength / (2.0 * np.pi * r)
    poly = u ** 2 - u ** 4 + u ** 6
    amp = np.sqrt(0.25 * gain * poly)
    dpoly_du = 2 * u - 4 * u ** 3 + 6 * u ** 5
    with np.errstate(divide="ignore", invalid="ignore"):
        damp = np.where(amp > 0, 0.25 * gain * dpoly_du * (-u / r) / (2.0 * amp), 0.0)
    return amp, damp


def _si_geometry(tx, rx, d_si):
    dx = tx[:, None, 0] - rx[None, :, 0] + d_si
    dy = tx[:, None, 1] - rx[None, :, 1]
    return dx, dy, np.sqrt(dx ** 2 + dy ** 2)


def si_channel(layout: AntennaLayout, d_si: float, wavelength: float, gain: float = 1.0):
    """N_t x N_r self-interference matrix with near-field amplitude and phase ``exp(-j k r)``."""
    _, _, r = _si_geometry(layout.tx, layout.rx, d_si)
    if np.any(r <= 0):
        raise ValueError("coincident transmit/receive antennas: SI distance is zero")
    amp, _ = si_amplitude(r, wavelength, gain)
    return amp * np.exp(-2j * np.pi / wavelength * r)


@dataclass(eq=False)
class ChannelSet:
    """Every channel object evaluated at one antenna layout."""

    h_dl: np.ndarray       # (K_DL, N_t)
    h_ul: np.ndarray       # (K_UL, N_r) rows
    a_s: np.ndarray        # (N_t,)
    b_s: np.ndarray        # (N_r,)
    a_c: np.ndarray        # (C, N_t)
    b_c: np.ndarray        # (C, N_r)
    beta_s: complex        # sqrt(eta_s) alpha_s
    beta_c: np.ndarray     # (C,)
    g: np.ndarray          # (K_UL, K_DL)
    h_si: np.ndarray       # (N_t, N_r)
    noise: float

    @property
    def n_tx(self) -> int:
        return self.a_s.shape[0]

    @property
    def n_rx(self) -> int:
        return self.b_s.shape[0]

    @property
    def k_dl(self) -> int:
        return self.h_dl.shape[0]

    @property
    def k_ul(self) -> int:
        return self.h_ul.shape[0]


def build_channels(real: ChannelRealization, layout: AntennaLayout, d_si: float,
                   noise: float) -> ChannelSet:
    lam = real.wavelength
    return ChannelSet(
        h_dl=dl_channel(real, layout),
        h_ul=ul_channel(real, layout),
        a_s=steering_vector(layout.tx, real.tgt_theta, real.tgt_phi, lam),
        b_s=steering_vector(layout.rx, real.tgt_theta, real.tgt_phi, lam),
        a_c=_clutter_steering(layout.tx, real),
        b_c=_clutter_steering(layout.rx, real),
        beta_s=complex(np.sqrt(real.eta_s) * real.tgt_rcs),
        beta_c=np.sqrt(real.eta_c) * real.clu_rcs,
        g=real.cross_channel(),
        h_si=si_channel(layout, d_si, lam, real.path_gain),
        noise=float(noise),
    )


def _clutter_steering(points, real: ChannelRealization):
    c = real.clu_theta.shape[0]
    a = steering_vector(points[None, :, :], real.clu_theta[:, None], real.clu_phi[:, None],
                        real.wavelength)
    return a.reshape(c, points.shape[0])


def rebuild_channels(ch: ChannelSet, real: ChannelRealization, layout: AntennaLayout,
                     which: str, d_si: float) -> ChannelSet:
    """Channels after moving only the transmit (``"tx"``) or receive (``"rx"``) array.

    Equal to ``build_channels`` at ``layout`` when ``ch`` was built for a
    layout sharing the other array.
    """
    lam = real.wavelength
    h_si = si_channel(layout, d_si, lam, real.path_gain)
    if which == "tx":
        return dataclasses.replace(
            ch, h_dl=dl_channel(real, layout), h_si=h_si,
            a_s=steering_vector(layout.tx, real.tgt_theta, real.tgt_phi, lam),
            a_c=_clutter_steering(layout.tx, real))
    if which == "rx":
        return dataclasses.replace(
            ch, h_ul=ul_channel(real, layout), h_si=h_si,
            b_s=steering_vector(layout.rx, real.tgt_theta, real.tgt_phi, lam),
            b_c=_clutter_steering(layout.rx, real))
    raise ValueError(f"which must be 'tx' or 'rx', got {which!r}")


@dataclass(eq=False)
class ChannelDerivatives:
    """Per-antenna partial derivatives of the position-dependent channels.

    Steering-type objects depend on antenna m only through entry m, so each
    array stores that diagonal: e.g. ``dh_dl[0][k, m] = d h_dl[k, m] / d x_m``.
    Index 0 is the x-axis, 1 the y-axis.  ``dc_ul`` differentiates the columns
    ``h_ul[k]^H``.  ``dsi_tx[0][i, j] = d h_si[i, j] / d x_{t,i}`` and
    ``dsi_rx[0][i, j] = d h_si[i, j] / d x_{r,j}``.
    """

    dh_dl: tuple[np.ndarray, np.ndarray]
    da_s: tuple[np.ndarray, np.ndarray]
    da_c: tuple[np.ndarray, np.ndarray]
    dc_ul: tuple[np.ndarray, np.ndarray]
    db_s: tuple[np.ndarray, np.ndarray]
    db_c: tuple[np.ndarray, np.ndarray]
    dsi_tx: tuple[np.ndarray, np.ndarray]
    dsi_rx: tuple[np.ndarray, np.ndarray]


def channel_derivatives(real: ChannelRealization, layout: AntennaLayout,
                        d_si: float) -> ChannelDerivatives:
    lam = real.wavelength
    k = 2.0 * np.pi / lam
    lp = real.dl_theta.shape[1]

    a, jx, jy = _path_steering(layout.tx, real.dl_theta, real.dl_phi, lam)
    sc = np.sqrt(real.eta_dl / lp)[:, None]
    dh_dl = (sc * np.einsum("kl,kln->kn", real.dl_gain * jx, a),
             sc * np.einsum("kl,kln->kn", real.dl_gain * jy, a))

    b, jx, jy = _path_steering(layout.rx, real.ul_theta, real.ul_phi, lam)
    sc = np.sqrt(real.eta_ul / real.ul_theta.shape[1])[:, None]
    rho = real.ul_gain.conj()
    dc_ul = (sc * np.einsum("kl,kln->kn", rho * jx, b),
             sc * np.einsum("kl,kln->kn", rho * jy, b))

    def _single(points, theta, phi):
        s = steering_vector(points, theta, phi, lam)
        return (1j * k * np.cos(theta) * np.sin(phi) * s, 1j * k * np.sin(theta) * s)

    th_c, ph_c = real.clu_theta[:, None], real.clu_phi[:, None]
    c = real.clu_theta.shape[0]
    da_c = tuple(d.reshape(c, layout.tx.shape[0]) for d in _single(layout.tx[None], th_c, ph_c))
    db_c = tuple(d.reshape(c, layout.rx.shape[0]) for d in _single(layout.rx[None], th_c, ph_c))

    dx, dy, r = _si_geometry(layout.tx, layout.rx, d_si)
    amp, damp = si_amplitude(r, lam, real.path_gain)
    dh_dr = (damp - 1j * k * amp) * np.exp(-1j * k * r)
    dsi_tx = (dh_dr * dx / r, dh_dr * dy / r)
    dsi_rx = (-dsi_tx[0], -dsi_tx[1])

    return ChannelDerivatives(
        dh_dl=dh_dl,
        da_s=_single(layout.tx, real.tgt_theta, real.tgt_phi),
        da_c=da_c,
        dc_ul=dc_ul,
        db_s=_single(layout.rx, real.tgt_theta, real.tgt_phi),
        db_c=db_c,
        dsi_tx=dsi_tx,
        dsi_rx=dsi_rx,
    )
