import dataclasses
import math

import numpy as np
import pytest

import _oracle
from conftest import make_state
from maisac.channel import ChannelSet
from maisac.metrics import (Beamformers, evaluate, interference_powers, link_terms, objective, scnr,
                            sinr_dl, sinr_ul)
from maisac.scenario import ScenarioConfig

NOISE = 1e-9


def toy_channels(h_dl=(), h_ul=(), n_tx=1, n_rx=1, beta_s=0.0, a_s=None, b_s=None, noise=NOISE, h_si=None):
    """Hand-built ChannelSet with no clutter."""
    h_dl = np.asarray(h_dl, dtype=complex).reshape(-1, n_tx)
    h_ul = np.asarray(h_ul, dtype=complex).reshape(-1, n_rx)
    return ChannelSet(
        h_dl=h_dl, h_ul=h_ul,
        a_s=np.ones(n_tx, complex) if a_s is None else np.asarray(a_s, complex),
        b_s=np.ones(n_rx, complex) if b_s is None else np.asarray(b_s, complex),
        a_c=np.zeros((0, n_tx), complex), b_c=np.zeros((0, n_rx), complex),
        beta_s=complex(beta_s), beta_c=np.zeros(0, complex),
        g=np.zeros((h_ul.shape[0], h_dl.shape[0]), complex),
        h_si=np.zeros((n_tx, n_rx), complex) if h_si is None else np.asarray(h_si, complex),
        noise=noise)


def toy_bf(F, w_s, w_r, f_ul):
    return Beamformers(np.asarray(F, complex), np.asarray(w_s, complex).ravel(),
                       np.asarray(w_r, complex), np.asarray(f_ul, complex))


class TestDownlink:
    def test_scalar(self):
        ch = toy_channels(h_dl=[1.0])
        P = 2.0
        assert sinr_dl(ch, np.array([[math.sqrt(P)]]), 0) == pytest.approx(P / NOISE, rel=1e-14)

    def test_zero_beam(self):
        st = make_state(0)
        F = st.bf.F.copy()
        F[:, 1] = 0
        assert sinr_dl(st.ch, F, 1) == 0.0

    @pytest.mark.parametrize("index", range(3))
    def test_oracle(self, index):
        st = make_state(index, ScenarioConfig(k_dl=2, n_tx=4))
        np.testing.assert_allclose(sinr_dl(st.ch, st.bf.F), _oracle.sinr_dl(st.ch, st.bf.F), rtol=1e-12)

    def test_all_minus_own(self, state):
        ch, F = state.ch, state.bf.F
        total = np.sum(np.abs(ch.h_dl.conj() @ F) ** 2, axis=1)
        own = np.abs(np.einsum("kn,nk->k", ch.h_dl.conj(), F)) ** 2
        den = total - own + np.sum(np.abs(ch.g) ** 2, axis=0) + ch.noise
        np.testing.assert_allclose(sinr_dl(ch, F), own / den, rtol=1e-10)


class TestReceive:
    def test_no_clutter(self):
        st = make_state(0, ScenarioConfig(n_clutter=0))
        c, *_ = interference_powers(st.ch, st.bf.F, st.bf.f_ul, st.bf.w_s)
        assert c == 0.0

    def test_null_on_target(self, state):
        b = state.ch.b_s
        w = np.random.default_rng(0).standard_normal(b.shape) + 0j
        w -= b * np.vdot(b, w) / np.vdot(b, b)
        _, s, _, _ = interference_powers(state.ch, state.bf.F, state.bf.f_ul, w)
        assert s == pytest.approx(0.0, abs=1e-25)

    def test_powers_oracle(self, state):
        w = state.bf.w_r[:, 1]
        got = interference_powers(state.ch, state.bf.F, state.bf.f_ul, w)
        ref = _oracle._receive_powers(state.ch, state.bf.F, state.bf.f_ul, w)
        for g, r in zip(got[:3], ref[:3]):
            assert g == pytest.approx(r, rel=1e-12)
        np.testing.assert_allclose(got[3], ref[3], rtol=1e-12)

    def test_scalar_scnr(self):
        ch = toy_channels(h_dl=[0.0], beta_s=0.5)
        bf = toy_bf([[2.0]], [3.0], np.zeros((1, 0)), [])
        s = abs(0.5) ** 2 * 9.0 * 4.0
        assert scnr(ch, bf) == pytest.approx(s / (9.0 * NOISE), rel=1e-14)

    def test_scale_invariance(self, state):
        bf = state.bf
        double = bf.replace(w_s=2 * bf.w_s, w_r=(3 - 1j) * bf.w_r)
        assert scnr(state.ch, double) == pytest.approx(scnr(state.ch, bf), rel=1e-12)
        np.testing.assert_allclose(sinr_ul(state.ch, double), sinr_ul(state.ch, bf), rtol=1e-12)

    @pytest.mark.parametrize("index", range(3))
    def test_ul_oracle(self, index):
        st = make_state(index, warm=1)
        np.testing.assert_allclose(sinr_ul(st.ch, st.bf), _oracle.sinr_ul(st.ch, st.bf), rtol=1e-12)
        assert scnr(st.ch, st.bf) == pytest.approx(_oracle.scnr(st.ch, st.bf), rel=1e-12)


class TestObjective:
    def test_unit_sinrs(self):
        # two receive antennas: the UL combiner nulls the target, the sensing combiner nulls the UL user
        r = 1 / math.sqrt(2)
        ch = toy_channels(h_dl=[1.0], h_ul=[r, -r], n_rx=2, beta_s=math.sqrt(0.5), b_s=[1.0, 1.0], noise=1.0)
        bf = toy_bf([[1.0]], [r, r], [[r], [-r]], [1.0])
        m = evaluate(ch, bf, (0.3, 0.3, 0.4))
        np.testing.assert_allclose([m.sinr_dl[0], m.sinr_ul[0], m.scnr], 1.0, rtol=1e-14)
        assert m.objective == pytest.approx(1.0, rel=1e-14)

    def test_zero_beamformers(self, state):
        bf = Beamformers(np.zeros_like(state.bf.F), state.bf.w_s, state.bf.w_r, np.zeros_like(state.bf.f_ul))
        assert objective(state.ch, bf, (0.3, 0.3, 0.4)) == 0.0

    @pytest.mark.parametrize("index", range(3))
    def test_oracle(self, index):
        st = make_state(index, warm=2)
        w = st.cfg.weights
        assert objective(st.ch, st.bf, w) == pytest.approx(_oracle.objective(st.ch, st.bf, w), rel=1e-10)

    def test_rate_relation(self, state):
        m = evaluate(state.ch, state.bf, state.cfg.weights)
        np.testing.assert_allclose(m.r_dl, np.log2(1 + m.sinr_dl))
        assert m.objective == pytest.approx(0.3 * m.r_dl.sum() + 0.3 * m.r_ul.sum() + 0.4 * m.r_s)
        assert np.all(m.sinr_dl >= 0) and np.all(m.sinr_ul >= 0) and m.scnr >= 0

    def test_phase_invariance(self, state):
        bf = state.bf
        F = bf.F * np.exp(1j * np.arange(bf.F.shape[1]))
        rot = bf.replace(F=F, w_s=bf.w_s * np.exp(0.7j), w_r=bf.w_r * np.exp(-0.3j))
        w = state.cfg.weights
        assert objective(state.ch, rot, w) == pytest.approx(objective(state.ch, bf, w), abs=1e-10)

    def test_noise_monotone(self, state):
        louder = dataclasses.replace(state.ch, noise=state.ch.noise * 2)
        a = evaluate(state.ch, state.bf, state.cfg.weights)
        b = evaluate(louder, state.bf, state.cfg.weights)
        assert np.all(b.r_dl < a.r_dl) and np.all(b.r_ul < a.r_ul) and b.r_s < a.r_s

    def test_link_terms_consistent(self, state):
        t = link_terms(state.ch, state.bf)
        np.testing.assert_allclose(t.sinr_dl(), sinr_dl(state.ch, state.bf.F), rtol=1e-12)
