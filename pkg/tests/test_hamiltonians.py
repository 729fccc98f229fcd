import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from knr02.errors import ConfigError
from knr02.fock import CompositeSpace, Mode, Qubit, basis_state, mode_operator, product_state
from knr02.hamiltonians import (
    GAUSS_NORM,
    Ancilla,
    GaussianPulse,
    KnrParams,
    QubitParams,
    SystemSpec,
    assemble,
    beam_splitter,
    jaynes_cummings,
    knr_hamiltonian,
    number_total,
)


def test_knr_matrix_elements():
    h = knr_hamiltonian(KnrParams(250, -248.43), 10).matrix
    assert h[2, 2].real == pytest.approx(3.14, abs=1e-12)
    h = knr_hamiltonian(KnrParams(250, 17.0, p=0.7), 10).matrix
    assert h[2, 0] == pytest.approx(math.sqrt(2) * 0.7)
    h = knr_hamiltonian(KnrParams(250, -250), 10).matrix
    assert h[2, 2] == pytest.approx(0)


@given(st.floats(1, 500), st.floats(-500, 500), st.floats(-5, 5), st.integers(3, 12))
def test_knr_hermitian_and_structure(K, D, p, c):
    h = knr_hamiltonian(KnrParams(K, D, p), c).matrix
    assert np.allclose(h, h.conj().T)
    n = np.arange(c + 1)
    assert np.allclose(np.diag(h).real, K * n * (n - 1) + D * n)
    off = h - np.diag(np.diag(h))
    i, j = np.nonzero(off)
    assert np.all(np.abs(i - j) == 2)


def test_knr_params_validation():
    with pytest.raises(ConfigError):
        KnrParams(0.0, 1.0)
    with pytest.raises(ConfigError):
        KnrParams(1.0, math.nan)


def test_beam_splitter_elements():
    s = CompositeSpace.modes(3, 3)
    h = beam_splitter(1.0, s, 0, 1).matrix
    out = h @ basis_state(s, [1, 0]).amplitudes
    assert np.allclose(out, basis_state(s, [0, 1]).amplitudes)
    g = 0.37
    h = beam_splitter(g, s, 0, 1).matrix
    i11 = np.ravel_multi_index((1, 1), s.dims)
    i20 = np.ravel_multi_index((2, 0), s.dims)
    assert h[i11, i20] == pytest.approx(g * math.sqrt(2))
    N = number_total(s)
    assert np.allclose(h @ N - N @ h, 0)
    with pytest.raises(ConfigError):
        beam_splitter(1.0, s, 0, 0)


def test_jaynes_cummings_elements():
    s = CompositeSpace((Mode(3), Qubit()))
    gp = 0.9
    h = jaynes_cummings(gp, s, 0, 1).matrix
    idx = lambda n, q: np.ravel_multi_index((n, q), s.dims)  # noqa: E731
    assert h[idx(0, 1), idx(1, 0)] == pytest.approx(gp)
    assert h[idx(1, 1), idx(2, 0)] == pytest.approx(gp * math.sqrt(2))
    assert np.allclose(h @ product_state(s, [0, "down"]).amplitudes, 0)
    N = number_total(s)
    assert np.allclose(h @ N - N @ h, 0)
    assert np.allclose(h, h.conj().T)


def test_pulse_shape():
    p = GaussianPulse.centered(15.0, 0.4)
    assert p.t0 == pytest.approx(1.2)
    assert p.window == pytest.approx((0.0, 2.4))
    assert p(p.t0) == pytest.approx(15.0 * GAUSS_NORM)
    assert p(-0.1) == 0.0 and p(2.5) == 0.0
    wide = GaussianPulse(1.0, 0.0, 1.0, window=(-10.0, 10.0))
    assert wide(5.0) < 2e-11
    ts = np.linspace(0, 2.4, 7)
    assert np.allclose(p(ts), [p(float(t)) for t in ts])
    with pytest.raises(ConfigError):
        GaussianPulse(1.0, 0.0, 0.0)


@given(st.floats(0.01, 3), st.floats(0, 1))
def test_pulse_symmetric(tau, frac):
    p = GaussianPulse.centered(2.0, tau)
    s = frac * p.t0
    assert p(p.t0 + s) == pytest.approx(p(p.t0 - s), rel=1e-12, abs=1e-300)


@given(st.floats(0.05, 2), st.floats(1, 4))
def test_pulse_squared_integral(tau, wf):
    from scipy.integrate import quad

    p = GaussianPulse.centered(3.0, tau, wf)
    num, _ = quad(lambda t: p(t) ** 2, *p.window, points=[p.t0], epsabs=1e-13, epsrel=1e-12)
    assert p.squared_integral() == pytest.approx(num, rel=1e-9)


def test_shifted_pulse():
    p = GaussianPulse.centered(1.0, 0.3)
    q = p.shifted(2.0)
    assert q(2.0 + p.t0) == pytest.approx(p(p.t0))
    assert q.window == pytest.approx((2.0, 2.0 + p.duration))


def test_assemble_lindblads_and_pulses():
    pulse = GaussianPulse.centered(25.0, 0.6)
    spec = SystemSpec(modes=(KnrParams(250, 250),), cutoff=5,
                      ancillas=(Ancilla(QubitParams(500), 0, pulse),))
    ham, lind = assemble(spec)
    assert lind == []
    h = ham(pulse.t0)
    s = spec.space
    i_up0 = np.ravel_multi_index((0, 1), s.dims)
    i_dn1 = np.ravel_multi_index((1, 0), s.dims)
    assert h[i_up0, i_dn1] == pytest.approx(25 * GAUSS_NORM)
    for t in np.linspace(0, pulse.duration, 9):
        m = ham(float(t))
        assert np.max(np.abs(m - m.conj().T)) < 1e-12

    lossy = SystemSpec(modes=(KnrParams(250, 0), KnrParams(200, 0)), cutoff=4,
                       ancillas=(Ancilla(QubitParams(1.0), 1),), loss_rate=0.01)
    _, lind = assemble(lossy)
    assert len(lind) == 3
    a0 = mode_operator("a", lossy.space, 0).matrix
    assert np.allclose(lind[0].matrix, 0.1 * a0)
    _, lind = assemble(SystemSpec(modes=lossy.modes, cutoff=4, ancillas=lossy.ancillas,
                                  loss_rate=0.01, ancilla_decay_rate=0.0))
    assert len(lind) == 2


def test_static_commutes_with_numbers():
    spec = SystemSpec(modes=(KnrParams(250, -3), KnrParams(200, 7)), cutoff=4,
                      mode_couplings={(0, 1): 0.0})
    ham, _ = assemble(spec)
    for i in range(2):
        n = mode_operator("n", spec.space, i).matrix
        assert np.allclose(ham.static @ n, n @ ham.static)


def test_spec_validation():
    m = (KnrParams(1, 0),)
    with pytest.raises(ConfigError):
        SystemSpec(modes=())
    with pytest.raises(ConfigError):
        SystemSpec(modes=m, mode_couplings={(0, 1): 1.0})
    with pytest.raises(ConfigError):
        SystemSpec(modes=m, loss_rate=-1)
    with pytest.raises(ConfigError):
        SystemSpec(modes=m, ancillas=(Ancilla(QubitParams(1), 3),))
    with pytest.raises(ConfigError):
        SystemSpec(modes=m + m, cutoff=(3, 4, 5))
