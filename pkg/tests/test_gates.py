import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from knr02.dynamics import evolve_kets
from knr02.errors import (
    CalibrationQualityError,
    ConfigError,
    DegenerateDetuningError,
    ParityConditionError,
    ZeroDriveError,
)
from knr02.fock import basis_state, logical_state
from knr02.hamiltonians import GaussianPulse, KnrParams, SystemSpec, assemble
from knr02.gates import (
    PulseSchedule,
    apply_schedule,
    calibrate_cz,
    calibrate_parity_measurement,
    calibrate_rx,
    calibrate_rz,
    correction_phases,
    extract_cz_phase_corrections,
    idle,
    parallel_rz,
    physical_corrections,
    wrap_angle,
)

CZ = dict(K1=250.0, K2=200.0, D1=-250.0, D2=-170.0, g0=15.0)


def single_mode(cutoff=8, K=250.0):
    return SystemSpec(modes=(KnrParams(K, -K),), cutoff=cutoff)


def cz_system(cutoff=6, p=CZ):
    return SystemSpec(modes=(KnrParams(p["K1"], p["D1"]), KnrParams(p["K2"], p["D2"])), cutoff=cutoff)


def run(spec, schedules, psi):
    amps = psi.amplitudes
    for s in schedules:
        ham, _ = assemble(apply_schedule(spec, s))
        amps = evolve_kets(ham, amps, (0.0, s.duration)) * correction_phases(s, spec)
    return amps


def overlap2(a, b):
    return abs(np.vdot(a, b)) ** 2


def test_wrap_angle():
    assert wrap_angle(-1e-18) == 0.0
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi / 2) == pytest.approx(1.5 * math.pi)


def test_rz_duration():
    s = calibrate_rz(math.pi, 250, -248.43)
    assert s.duration == pytest.approx(math.pi / 3.14, rel=1e-12)
    assert s.duration == pytest.approx(1.00051, abs=1e-5)
    assert s.override(0, "p", 1.0) == 0.0
    assert calibrate_rz(1e-9, 250, -248.43).duration < 1e-9


def test_rz_negative_splitting_uses_equivalent_angle():
    s = calibrate_rz(math.pi / 2, 250, -251.0)
    assert s.duration == pytest.approx((math.pi / 2 - 2 * math.pi) / -2.0)


def test_rz_errors():
    with pytest.raises(DegenerateDetuningError):
        calibrate_rz(math.pi, 250, -250)
    with pytest.raises(ConfigError):
        calibrate_rz(0.0, 250, -240)
    with pytest.raises(ConfigError):
        calibrate_rz(7.0, 250, -240)


def test_rz_full_turn_is_identity():
    spec = single_mode()
    psi = logical_state(spec.space, "+")
    out = run(spec, [calibrate_rz(2 * math.pi, 250, -248.43)], psi)
    assert overlap2(psi.amplitudes, out) >= 1 - 1e-6


def test_rz_flips_plus():
    spec = single_mode()
    out = run(spec, [calibrate_rz(math.pi, 250, -248.43)], logical_state(spec.space, "+"))
    assert overlap2(logical_state(spec.space, "-").amplitudes, out) >= 1 - 1e-8


@settings(max_examples=8)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_rz_composition(a, b):
    spec = single_mode(cutoff=4)
    psi = logical_state(spec.space, "+")
    two = run(spec, [calibrate_rz(a, 250, -240), calibrate_rz(b, 250, -240)], psi)
    one = run(spec, [calibrate_rz(a + b, 250, -240)], psi)
    assert overlap2(one, two) >= 1 - 1e-8


def test_rx_duration():
    s = calibrate_rx(math.pi, 250, 1.11)
    assert s.duration == pytest.approx(math.pi / (2 * math.sqrt(2) * 1.11), rel=1e-12)
    assert s.duration == pytest.approx(1.000649, abs=1e-6)
    assert s.override(0, "delta", 0.0) == -250
    assert calibrate_rx(1e-9, 250, 1.11).duration < 1e-9


def test_rx_negative_angle_flips_drive():
    s = calibrate_rx(-math.pi / 2, 250, 1.11)
    assert s.override(0, "p", 0.0) == -1.11
    assert s.duration == pytest.approx(calibrate_rx(math.pi / 2, 250, 1.11).duration)


def test_rx_errors_and_warning():
    with pytest.raises(ZeroDriveError):
        calibrate_rx(math.pi, 250, 0.0)
    with pytest.raises(ConfigError):
        calibrate_rx(0.0, 250, 1.11)
    with pytest.warns(RuntimeWarning, match="confined"):
        calibrate_rx(math.pi, 250, 30.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        calibrate_rx(math.pi, 250, 1.11)


def test_rx_pi_leaks_slightly():
    spec = single_mode(cutoff=10)
    out = run(spec, [calibrate_rx(math.pi, 250, 1.11)], basis_state(spec.space, [0]))
    f = abs(out[2]) ** 2
    assert 0.999 < f < 1 - 1e-7


def test_rx_twice_matches_double_angle():
    spec = single_mode(cutoff=8)
    psi = basis_state(spec.space, [0])
    th = 0.7
    two = run(spec, [calibrate_rx(th, 250, 1.11)] * 2, psi)
    one = run(spec, [calibrate_rx(2 * th, 250, 1.11)], psi)
    assert overlap2(one, two) >= 1 - 1e-8


def test_rx_matches_logical_rotation():
    spec = single_mode(cutoff=8)
    th = -1.3
    out = run(spec, [calibrate_rx(th, 250, 1.11)], basis_state(spec.space, [0]))
    ref = np.zeros_like(out)
    ref[0], ref[2] = math.cos(th / 2), -1j * math.sin(th / 2)
    assert overlap2(ref, out) >= 1 - 1e-5


def test_idle_preserves_code_states():
    spec = single_mode()
    psi = logical_state(spec.space, "+")
    out = run(spec, [idle(1.0, [(0, 250.0)])], psi)
    assert overlap2(psi.amplitudes, out) >= 1 - 1e-12


def test_parallel_rz():
    spec = SystemSpec(modes=(KnrParams(250, -250), KnrParams(250, -250)), cutoff=4)
    s = parallel_rz([(0, 250.0, math.pi), (1, 250.0, -math.pi / 2)], 3.14)
    assert s.duration == pytest.approx(math.pi / 3.14)
    psi = logical_state(spec.space, "++")
    out = run(spec, [s], psi)
    ref = np.kron([1, math.e ** (-1j * math.pi)], [1, math.e ** (1j * math.pi / 2)]) / 2
    idx = [np.ravel_multi_index(x, spec.space.dims) for x in ((0, 0), (0, 2), (2, 0), (2, 2))]
    assert overlap2(ref, out[idx]) >= 1 - 1e-10
    with pytest.raises(ConfigError):
        parallel_rz([(0, 250.0, 0.0)], 3.14)


def test_cz_duration_and_erf():
    s = calibrate_cz(math.pi, **CZ)
    tau = s.diagnostics["tau"]
    assert tau == pytest.approx(math.pi / (8.158 * math.erf(3 * math.sqrt(2))), rel=1e-4)
    assert tau == pytest.approx(0.3851, abs=1e-4)
    assert s.duration == pytest.approx(6 * tau)
    assert s.duration == pytest.approx(2.3106, abs=1e-3)
    assert calibrate_cz(1e-6, **CZ).duration < 1e-6


def test_cz_integrated_shift_is_theta():
    s = calibrate_cz(math.pi, **CZ)
    pulse = s.pulses[0][1]
    de = s.diagnostics["delta_e"] / CZ["g0"] ** 2
    val, _ = quad(lambda t: de * pulse(t) ** 2, *pulse.window, limit=200)
    assert abs(val) == pytest.approx(math.pi, rel=1e-8)


def test_cz_errors():
    with pytest.raises(ZeroDriveError):
        calibrate_cz(math.pi, **{**CZ, "g0": 0.0})
    with pytest.raises(ConfigError):
        calibrate_cz(0.0, **CZ)


def test_schedule_json_round_trip():
    s = calibrate_parity_measurement(250, 25, 250, 500)
    back = PulseSchedule.from_json(s.to_json())
    assert back == s
    with pytest.raises(ConfigError):
        PulseSchedule.from_dict({"duration": 1.0})
    with pytest.raises(ConfigError):
        PulseSchedule(kind="x", duration=-1.0)


def test_phase_corrections_wrapped():
    s = PulseSchedule(kind="cz", duration=1.0, phase_corrections=((0, -1.0), (1, 7.0)))
    assert s.phase_corrections == ((0, 2 * math.pi - 1.0), (1, 7.0 - 2 * math.pi))


def test_zero_coupling_corrections_are_free_phases():
    spec = cz_system(cutoff=4)
    T = 1.3
    pulse = GaussianPulse(0.0, T / 2, T / 6, (0.0, T))
    s = PulseSchedule(kind="cz", duration=T, pulses=(("bs:0-1", pulse),))
    out = extract_cz_phase_corrections(s, spec)
    E20 = 2 * CZ["D1"] + 2 * CZ["K1"]
    E02 = 2 * CZ["D2"] + 2 * CZ["K2"]
    got = dict(out.phase_corrections)
    assert got[0] == pytest.approx(wrap_angle(E20 * T), abs=1e-9)
    assert got[1] == pytest.approx(wrap_angle(E02 * T), abs=1e-9)


def test_leakage_guard():
    spec = SystemSpec(modes=(KnrParams(250, -250), KnrParams(250, -250)), cutoff=4)
    pulse = GaussianPulse.centered(20.0, 0.3)
    s = PulseSchedule(kind="cz", duration=pulse.duration, pulses=(("bs:0-1", pulse),))
    with pytest.raises(CalibrationQualityError):
        extract_cz_phase_corrections(s, spec)
    with pytest.raises(ConfigError):
        extract_cz_phase_corrections(calibrate_rz(1.0, 250, -249), spec)


CZ_IN = ((0, 0), (0, 2), (2, 0), (2, 2))


def cz_fidelity(spec, sched, repeats=1):
    space = spec.space
    psi = sum(basis_state(space, lab).amplitudes for lab in CZ_IN) / 2
    out = psi
    for _ in range(repeats):
        out = run(spec, [sched], type(basis_state(space, [0, 0]))(space, out, normalized=False))
    ref = psi.copy()
    ref[np.ravel_multi_index((2, 2), space.dims)] *= -1
    return overlap2(ref, out)


@pytest.fixture(scope="module")
def corrected_cz():
    spec = cz_system(cutoff=6)
    s = extract_cz_phase_corrections(calibrate_cz(math.pi, **CZ), spec)
    return spec, s


def test_corrected_cz_fidelity(corrected_cz):
    spec, s = corrected_cz
    assert s.diagnostics["leakage"] < 1e-3
    assert abs(wrap_angle(s.diagnostics["measured_conditional_phase"]) - math.pi) < 0.05
    assert cz_fidelity(spec, s) >= 0.9999


def test_double_correction_degrades(corrected_cz):
    spec, s = corrected_cz
    doubled = s.with_corrections([(m, 2 * a) for m, a in s.phase_corrections])
    assert cz_fidelity(spec, doubled) < cz_fidelity(spec, s) - 0.1


def test_physical_corrections(corrected_cz):
    spec, s = corrected_cz
    phys = physical_corrections(s, spec)
    assert phys.kind == "rz"
    raw = s.with_corrections(())
    space = spec.space
    psi = sum(basis_state(space, lab).amplitudes for lab in CZ_IN) / 2
    virt = run(spec, [s], type(basis_state(space, [0, 0]))(space, psi, normalized=False))
    real = run(spec, [raw, phys], type(basis_state(space, [0, 0]))(space, psi, normalized=False))
    idx = [np.ravel_multi_index(x, space.dims) for x in CZ_IN]
    assert overlap2(virt[idx], real[idx]) >= 1 - 1e-6
    assert physical_corrections(raw, spec) is None


def test_cz_mode_swap_symmetry():
    a = calibrate_cz(math.pi, **CZ)
    swapped = dict(K1=CZ["K2"], K2=CZ["K1"], D1=CZ["D2"], D2=CZ["D1"], g0=CZ["g0"])
    b = calibrate_cz(math.pi, **swapped)
    assert abs(a.diagnostics["delta_e"]) == pytest.approx(abs(b.diagnostics["delta_e"]), rel=1e-12)
    ca = dict(extract_cz_phase_corrections(a, cz_system(4)).phase_corrections)
    cb = dict(extract_cz_phase_corrections(b, cz_system(4, swapped)).phase_corrections)
    assert ca[0] == pytest.approx(cb[1], abs=1e-7)
    assert ca[1] == pytest.approx(cb[0], abs=1e-7)


def test_cz_adiabaticity_trend():
    spec = cz_system(cutoff=4)
    fs = []
    for g0 in (15.0, 15.0 / math.sqrt(2)):
        s = extract_cz_phase_corrections(calibrate_cz(math.pi, **{**CZ, "g0": g0}), spec)
        fs.append(cz_fidelity(spec, s))
    assert fs[1] > fs[0]


def test_parity_schedule():
    s = calibrate_parity_measurement(250, 25, 250, 500)
    tau = s.diagnostics["tau"]
    assert tau == pytest.approx(math.pi / 5, rel=1e-12)
    assert s.duration == pytest.approx(6 * tau)
    assert calibrate_parity_measurement(250, 50, 250, 500).diagnostics["tau"] == pytest.approx(tau / 4)
    pulse = s.pulses[0][1]
    val, _ = quad(lambda t: 2 * pulse(t) ** 2 / 250, *pulse.window, limit=200)
    assert val == pytest.approx(math.pi, abs=1e-6)


def test_parity_errors():
    with pytest.raises(ParityConditionError):
        calibrate_parity_measurement(250, 25, 250, 400)
    with pytest.raises(ConfigError):
        calibrate_parity_measurement(250, 25, 250, 400)
    with pytest.raises(ZeroDriveError):
        calibrate_parity_measurement(250, 0.0, 250, 500)
