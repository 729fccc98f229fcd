"""Reproduction targets at their stated tolerances.

Every check prints one ``PASS``/``FAIL`` line; the lines are collected again
in the terminal summary. Targets that the model does not reach are marked
``xfail(strict=True)``: they still run and print FAIL, and an unexpected pass
turns the suite red.
"""

import math
import time

import numpy as np
import pytest

from knr02.dynamics import (
    IntegratorConfig,
    kraus_free_decay,
    propagate_gksl,
    propagate_nonhermitian,
)
from knr02.experiments import RUNNERS, resolve_config
from knr02.fock import CompositeSpace, annihilation, basis_state, logical_state, parity_operator, trace_distance
from knr02.hamiltonians import KnrParams, TimeDependentHamiltonian, knr_hamiltonian
from knr02.perturbation import delta_e, exact_delta_e, fit_dispersive_coefficients, parity_point_coefficients

pytestmark = pytest.mark.slow

REPORT = []


def report(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    REPORT.append(line)
    print(line)
    return ok


def timed(name, **overrides):
    t = time.perf_counter()
    res = RUNNERS[name](resolve_config(name, overrides))
    return res, time.perf_counter() - t


def within(value, target, tol):
    return abs(value - target) <= tol


# ---------------------------------------------------------------------------
# CZ gate fidelity


@pytest.fixture(scope="module")
def cz_table():
    res, secs = timed("cz-table")
    return dict(zip(res.column("case"), res.column("fidelity"))), secs


def test_cz_unitary(cz_table):
    f, _ = cz_table
    assert report("cz unitary fidelity", within(f["unitary"], 0.999960, 1e-4),
                  f"{f['unitary']:.6f} vs 0.999960 +- 1e-4")


@pytest.mark.xfail(strict=True, reason="loss over the 2.31 us pulse gives 0.9907; target implies a longer gate")
def test_cz_noisy(cz_table):
    f, _ = cz_table
    assert report("cz noisy fidelity", within(f["noisy"], 0.987634, 2e-3),
                  f"{f['noisy']:.6f} vs 0.987634 +- 2e-3")


def test_cz_detected(cz_table):
    f, _ = cz_table
    assert report("cz detected fidelity", within(f["detected"], 0.999912, 2e-4),
                  f"{f['detected']:.6f} vs 0.999912 +- 2e-4")


def test_cz_runtime(cz_table):
    _, secs = cz_table
    assert report("cz table runtime", secs < 300, f"{secs:.0f} s vs < 300 s")


# ---------------------------------------------------------------------------
# parity measurement process fidelity


@pytest.fixture(scope="module")
def parity_pf():
    res, secs = timed("parity-pf")
    return dict(zip(res.column("gamma"), res.column("process_fidelity"))), secs


@pytest.mark.parametrize("gamma, target", [(0.0, 0.998), (0.002, 0.991)])
def test_parity_process_fidelity(parity_pf, gamma, target):
    f, _ = parity_pf
    assert report(f"parity process fidelity gamma={gamma}", within(f[gamma], target, 2e-3),
                  f"{f[gamma]:.6f} vs {target} +- 2e-3")


def test_parity_runtime(parity_pf):
    _, secs = parity_pf
    assert report("parity process fidelity runtime", secs < 300, f"{secs:.0f} s vs < 300 s")


# ---------------------------------------------------------------------------
# ansatz sweeps


@pytest.fixture(scope="module")
def ansatz():
    res, secs = timed("ansatz-sweep")
    means = {c: float(np.mean(res.where(policy=c).column("fidelity"))) for c in set(res.column("policy"))}
    return res, means, secs


def test_ansatz_unitary_floor(ansatz):
    res, _, secs = ansatz
    f = res.where(policy="unitary").column("fidelity")
    assert len(f) == 80
    assert report("ansatz unitary minimum", min(f) >= 0.9995, f"{min(f):.6f} vs >= 0.9995 over {len(f)} sets")
    assert report("ansatz sweep runtime", secs < 1800, f"{secs:.0f} s vs < 1800 s")


def test_ansatz_detection_ordering(ansatz):
    _, m, _ = ansatz
    singles = (m["after_first_cz"], m["after_last_rz"])
    ok = m["unitary"] > max(singles) and min(singles) > m["none"]
    detail = ", ".join(f"{k}={m[k]:.5f}" for k in ("unitary", "after_first_cz", "after_last_rz", "none"))
    assert report("ansatz means unitary > single detection > none", ok, detail)


@pytest.mark.xfail(strict=True, reason="two rounds beat the first-CZ round: loss removed outweighs measurement error")
def test_ansatz_double_detection_worse(ansatz):
    _, m, _ = ansatz
    ok = m["both"] < min(m["after_first_cz"], m["after_last_rz"])
    detail = f"both={m['both']:.5f}, after_first_cz={m['after_first_cz']:.5f}, after_last_rz={m['after_last_rz']:.5f}"
    assert report("ansatz both detections < single detection", ok, detail)


@pytest.fixture(scope="module")
def depth():
    res, _ = timed("depth-sweep")
    return {p: np.array(res.where(policy=p).column("fidelity")) for p in set(res.column("policy"))}


def test_depth_every_50_beats_none(depth):
    a, b = depth["every_50"][99], depth["none"][99]
    assert report("depth 100 every_50 > none", a > b, f"{a:.4f} vs {b:.4f}")


@pytest.mark.xfail(strict=True, reason="renormalized postselection keeps every_5 above none at all depths")
def test_depth_every_5_crosses_none(depth):
    diff = depth["every_5"][200:] - depth["none"][200:]
    k = int(np.argmin(diff))
    assert report("every_5 below none beyond depth 200", bool((diff < 0).any()),
                  f"smallest margin {diff[k]:.4f} at depth {201 + k}")


# ---------------------------------------------------------------------------
# single-gate sweeps


@pytest.fixture(scope="module")
def gate_sweeps():
    return {name: timed(name)[0] for name in ("z-sweep", "x-sweep")}


@pytest.mark.parametrize("name", ["z-sweep", "x-sweep"])
def test_detection_beats_loss(gate_sweeps, name):
    r = gate_sweeps[name]
    n = np.array(r.column("infid_noisy"))
    d = np.array(r.column("infid_detected"))
    assert report(f"{name} detected < noisy everywhere", bool((d < n).all()),
                  f"{int((d < n).sum())}/{len(n)} points")


def test_x_gate_detected_optimum_later(gate_sweeps):
    r = gate_sweeps["x-sweep"]
    t = np.array(r.column("gate_time_us"))
    tn = t[np.argmin(r.column("infid_noisy"))]
    td = t[np.argmin(r.column("infid_detected"))]
    assert report("x-sweep optimum with detection is later", td > tn, f"{td:.5f} us vs {tn:.5f} us")


def test_z_gate_unitary_floor(gate_sweeps):
    r = gate_sweeps["z-sweep"]
    mid = len(r.rows) // 2
    u = r.column("infid_unitary")[mid]
    assert report("z-sweep unitary infidelity at calibrated time", u <= 1e-6, f"{u:.2e} vs <= 1e-6")


# ---------------------------------------------------------------------------
# oracle suites


def test_oracle_kraus_decay():
    cutoff, gamma = 6, 0.5
    space = CompositeSpace.modes(cutoff)
    rho0 = basis_state(space, [2]).to_density()
    ham = TimeDependentHamiltonian(space, np.zeros((space.dim, space.dim)))
    ts = np.linspace(0.3, 3.0, 10)
    traj = propagate_gksl(ham, [math.sqrt(gamma) * annihilation(cutoff)], rho0, (0, 3.0), sample_times=ts)
    worst = max(trace_distance(s.matrix, kraus_free_decay(rho0, gamma, t).matrix)
                for t, s in zip(traj.times[1:], traj.states[1:]))
    assert report("oracle: GKSL vs Kraus decay", worst < 1e-6, f"max trace distance {worst:.2e}")


def _no_jump_distances(gamma_ts):
    cutoff, gamma, K = 8, 0.002, 250.0
    space = CompositeSpace.modes(cutoff)
    H = knr_hamiltonian(KnrParams(K, -K, 1.11), cutoff)
    L = [math.sqrt(gamma) * annihilation(cutoff)]
    psi0 = logical_state(space, "+")
    P = (np.eye(cutoff + 1) + parity_operator(cutoff).matrix) / 2
    out = []
    for gt in gamma_ts:
        t = gt / gamma
        rho = propagate_gksl(H, L, psi0.to_density(), (0, t)).final.matrix
        post = P @ rho @ P
        post /= np.trace(post).real
        nj = propagate_nonhermitian(H, L, psi0, (0, t)).final.normalize().to_density().matrix
        out.append(trace_distance(post, nj))
    return out


def test_oracle_no_jump():
    gts = (0.001, 0.003, 0.005)
    d = _no_jump_distances(gts)
    # the kept two-loss branch bounds the gap
    bound_ok = all(x <= 0.5 * (1 - math.exp(-gt)) ** 2 for x, gt in zip(d, gts))
    assert report("oracle: no-jump vs postselected GKSL, gamma*t <= 0.005", max(d) < 1e-5 and bound_ok,
                  f"max trace distance {max(d):.2e}")


@pytest.mark.xfail(strict=True, reason="two-photon loss survives parity postselection; gap ~ (gamma t)^2 passes 1e-5 near 0.006")
def test_oracle_no_jump_full_range():
    d = _no_jump_distances((0.007, 0.009))
    assert report("oracle: no-jump vs postselected GKSL, gamma*t < 0.01", max(d) < 1e-5,
                  f"max trace distance {max(d):.2e}")


def test_oracle_delta_e():
    p = (250.0, 200.0, -250.0, -170.0)
    errs = []
    for g in (15.0, 10.0, 5.0, 2.0):
        a, e = delta_e(*p, g).delta_e, exact_delta_e(*p, g).delta_e
        errs.append(abs(a - e) / abs(e))
    ok = errs[0] < 0.05 and all(x > y for x, y in zip(errs, errs[1:]))
    assert report("oracle: analytic vs exact conditional shift", ok,
                  "relative errors " + ", ".join(f"{x:.2e}" for x in errs))


def test_oracle_x_frequency():
    K, p, gamma, cutoff = 250.0, 1.11, 1.0, 4
    space = CompositeSpace.modes(cutoff)
    H = knr_hamiltonian(KnrParams(K, -K, p), cutoff)
    ts = np.arange(0, 6.0, 1e-3)
    traj = propagate_nonhermitian(H, [math.sqrt(gamma) * annihilation(cutoff)], basis_state(space, [0]),
                                  (0, 6.0), sample_times=ts, config=IntegratorConfig())
    c0 = np.array([s.amplitudes[0] for s in traj.states]).real
    idx = np.flatnonzero(np.sign(c0[:-1]) != np.sign(c0[1:]))
    t = traj.times
    zeros = t[idx] - c0[idx] * (t[idx + 1] - t[idx]) / (c0[idx + 1] - c0[idx])
    omega = 2 * math.pi / np.mean(np.diff(zeros))
    ref = math.sqrt(8 * p**2 - gamma**2)
    rel = abs(omega - ref) / ref
    assert report("oracle: damped X frequency", rel < 1e-4, f"relative error {rel:.2e}")


def test_oracle_dispersive_fit():
    K, D, gp = 250.0, 250.0, 25.0
    on = fit_dispersive_coefficients(K, D, D + K, gp)
    off = fit_dispersive_coefficients(K, D, D + K + 50.0, gp, resonance_factor=1.0)
    form, ref = on.sigma_z_form(), parity_point_coefficients(K, D, D + K, gp)
    worst = max(abs(form[k] - ref[k]) for k in ("n2", "n", "sz", "n_up", "n2_up"))
    ok = abs(on.b2) < 1e-10 and abs(off.b2) > 1e-6 and worst < 1e-10
    assert report("oracle: dispersive fit", ok, f"b2={on.b2:.1e} on, {off.b2:.1e} off; max deviation {worst:.1e}")


# ---------------------------------------------------------------------------
# determinism


@pytest.mark.parametrize("name, overrides", [
    ("z-sweep", {"n_points": 11}),
    ("parity-pf", {"cutoff": 6, "gammas": [0.0]}),
    ("ansatz-sweep", {"n_samples": 4}),
    ("depth-sweep", {"n_layers": 20}),
])
def test_determinism(name, overrides):
    a = RUNNERS[name](resolve_config(name, overrides)).to_csv()
    b = RUNNERS[name](resolve_config(name, overrides)).to_csv()
    assert report(f"{name} CSV byte-identical on re-run", a == b, f"{len(a)} bytes")
