"""Named experiments: gate-time sweeps, CZ fidelity table, parity process fidelity, ansatz sweeps.

Every runner takes a fully resolved config mapping (see :data:`DEFAULTS`)
and returns an :class:`ExperimentResult`.
"""

from __future__ import annotations

import copy
import datetime as _dt
import functools
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable

import numpy as np

from . import __version__
from .circuits import (
    SWEEP_CASES,
    AnsatzParams,
    AnsatzSystem,
    DetectionPolicy,
    depth_sweep,
    n_parameters,
    random_parameter_sweep,
    sweep_parameters,
)
from .detection import (
    DetectionParams,
    even_parity_projector,
    logical_projector,
    parity_sigma_basis,
    parity_unitary,
    postselect,
    process_fidelity,
)
from .dynamics import (
    IntegratorConfig,
    evolve_kets,
    evolve_operators,
    propagate_gksl,
    propagate_schrodinger,
)
from .errors import ConfigError, ParityConditionError
from .fock import (
    CompositeSpace,
    DensityOperator,
    StateVector,
    basis_state,
    embed_logical,
    fidelity_pure_vs_mixed,
    logical_state,
)
from .gates import (
    apply_schedule,
    calibrate_cz,
    calibrate_parity_measurement,
    calibrate_rx,
    calibrate_rz,
    correction_phases,
    extract_cz_phase_corrections,
)
from .hamiltonians import KnrParams, SystemSpec, assemble
from .perturbation import (
    adiabaticity_diagnostic,
    check_parity_condition,
    delta_e,
    exact_delta_e,
    fit_dispersive_coefficients,
)
from .results import ExperimentResult

INTEGRATOR_DEFAULTS = {"step": 1e-4}

_SYSTEM_DEFAULTS = {
    "K": [250.0, 250.0],
    "rx_drive": 1.11,
    "rz_rate": 3.14,
    "cz_delta": [-250.0, -170.0],
    "cz_g0": 15.0,
    "detect_delta": 250.0,
    "detect_E": 500.0,
    "detect_g0": 25.0,
    "cutoff": 4,
    "layout": ["rx", "rz", "cz", "rx", "rz"],
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "z-sweep": {
        "K": 250.0, "delta": -248.43, "theta": math.pi, "gamma": 0.002, "cutoff": 10,
        "rel_span": 0.2, "n_points": 41, "projector": "logical",
    },
    "x-sweep": {
        "K": 250.0, "p": 1.11, "theta": math.pi, "gamma": 0.002, "cutoff": 10,
        "rel_span": 0.04, "n_points": 401, "projector": "logical",
    },
    "cz-table": {
        "K1": 250.0, "K2": 200.0, "D1": -250.0, "D2": -170.0, "g0": 15.0, "theta": math.pi,
        "width_factor": 3.0, "gamma": 0.002, "cutoff": 10, "projector": "logical",
    },
    "parity-pf": {
        "K": 250.0, "delta": 250.0, "E": 500.0, "g0": 25.0, "gammas": [0.0, 0.002],
        "ancilla_gamma": None, "cutoff": 10,
    },
    "ansatz-sweep": {
        "n_samples": 80, "gamma": 0.002, "cases": list(SWEEP_CASES), "projector": "dynamical",
        "system": _SYSTEM_DEFAULTS,
    },
    "depth-sweep": {
        "n_layers": 300, "gamma": 0.002, "policies": ["none", "every_5", "every_50"],
        "thetas": None, "projector": "dynamical", "system": _SYSTEM_DEFAULTS,
    },
    "calibrate": {
        "rz": {"theta": math.pi, "K": 250.0, "delta": -248.43},
        "rx": {"theta": math.pi, "K": 250.0, "p": 1.11},
        "cz": {"theta": math.pi, "K1": 250.0, "K2": 200.0, "D1": -250.0, "D2": -170.0, "g0": 15.0,
               "width_factor": 3.0},
        "parity": {"K": 250.0, "delta": 250.0, "E": 500.0, "g0": 25.0, "width_factor": 3.0},
    },
    "check": {
        "cz": {"K1": 250.0, "K2": 200.0, "D1": -250.0, "D2": -170.0, "g0": 15.0, "width_factor": 3.0,
               "theta": math.pi},
        "parity": {"K": 250.0, "delta": 250.0, "E": 500.0, "g0": 25.0},
    },
}

COMMON_DEFAULTS = {"seed": 0, "jobs": 1, "out": "results", "integrator": INTEGRATOR_DEFAULTS}


def _merge(base: dict, override: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and base[key] is not None:
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(experiment: str, user: dict | None = None, **flags) -> dict:
    """Defaults, then the user document, then non-``None`` CLI flags."""
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {sorted(DEFAULTS)}")
    user = dict(user or {})
    named = user.pop("experiment", experiment)
    if named != experiment:
        raise ConfigError(f"config is for experiment {named!r}, not {experiment!r}")
    base = {**copy.deepcopy(COMMON_DEFAULTS), **copy.deepcopy(DEFAULTS[experiment])}
    cfg = _merge(base, user, "")
    for k, v in flags.items():
        if v is not None:
            if k not in cfg:
                raise ConfigError(f"unknown flag {k!r}")
            cfg[k] = v
    if int(cfg["jobs"]) != cfg["jobs"] or cfg["jobs"] < 1:
        raise ConfigError("jobs must be a positive integer")
    if int(cfg["seed"]) != cfg["seed"]:
        raise ConfigError("seed must be an integer")
    cfg["experiment"] = experiment
    return cfg


def _integrator(cfg: dict) -> IntegratorConfig:
    return IntegratorConfig(**cfg["integrator"])


def _metadata(cfg: dict, **extra) -> dict:
    meta = {
        "config": cfg,
        "code_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    meta.update(extra)
    return meta


def _parallel(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


def _projector(name: str, space: CompositeSpace, modes):
    if name == "logical":
        return logical_projector(space, modes)
    if name == "even":
        return even_parity_projector(space, modes)
    raise ConfigError(f"unknown projector {name!r}; expected 'logical' or 'even'")


# ---------------------------------------------------------------------------
# single-mode gate-time sweeps


def _sweep_times(tau: float, rel_span: float, n_points: int) -> np.ndarray:
    if int(n_points) != n_points or n_points < 1:
        raise ConfigError("n_points must be a positive integer")
    if not 0 <= rel_span < 2:
        raise ConfigError("rel_span must lie in [0, 2)")
    if n_points == 1:
        return np.array([tau])
    if rel_span == 0:
        raise ConfigError("empty sweep range: rel_span = 0 with several points")
    return tau * (1.0 + np.linspace(-0.5 * rel_span, 0.5 * rel_span, int(n_points)))


def _gate_time_sweep(name: str, cfg: dict, knr: KnrParams, tau: float, psi0: StateVector,
                     target: StateVector) -> ExperimentResult:
    cutoff = cfg["cutoff"]
    times = _sweep_times(tau, cfg["rel_span"], cfg["n_points"])
    spec = SystemSpec(modes=(knr,), cutoff=cutoff, loss_rate=cfg["gamma"])
    ham, lind = assemble(spec)
    config = _integrator(cfg)
    traj_u = propagate_schrodinger(ham, psi0, (0.0, times[-1]), config, sample_times=times)
    rho0 = psi0.to_density()
    traj_n = propagate_gksl(ham, lind, rho0, (0.0, times[-1]), config, sample_times=times)
    proj = _projector(cfg["projector"], spec.space, [0])
    off = len(traj_u) - len(times)
    res = ExperimentResult(name, ("gate_time_us", "infid_unitary", "infid_noisy", "infid_detected"),
                           metadata=_metadata(cfg, calibrated_time_us=tau))
    for k, t in enumerate(times):
        phi = traj_u.states[off + k]
        f_u = abs(target.overlap(phi)) ** 2
        rho = traj_n.states[off + k]
        f_n = fidelity_pure_vs_mixed(target, rho)
        f_d = fidelity_pure_vs_mixed(target, postselect(rho, proj).state)
        res.append(float(t), 1.0 - f_u, 1.0 - f_n, 1.0 - f_d)
    return res


def run_z_gate_sweep(cfg: dict) -> ExperimentResult:
    """``|+_L> -> |-_L>`` under free evolution at fixed detuning, as a function of duration."""
    K, delta = cfg["K"], cfg["delta"]
    sched = calibrate_rz(cfg["theta"], K, delta)
    space = CompositeSpace.modes(cfg["cutoff"])
    return _gate_time_sweep("z_sweep", cfg, KnrParams(K, delta), sched.duration,
                            logical_state(space, "+"), logical_state(space, "-"))


def run_x_gate_sweep(cfg: dict) -> ExperimentResult:
    """``|0> -> |2>`` under the parametric drive at ``delta = -K``, as a function of duration."""
    K = cfg["K"]
    sched = calibrate_rx(cfg["theta"], K, cfg["p"])
    space = CompositeSpace.modes(cfg["cutoff"])
    p = sched.override(0, "p", cfg["p"])
    return _gate_time_sweep("x_sweep", cfg, KnrParams(K, -K, p), sched.duration,
                            basis_state(space, [0]), basis_state(space, [2]))


# ---------------------------------------------------------------------------
# CZ table

CZ_INPUT = np.array([0.5, 0.5, 0.5, 0.5])


def cz_schedule(cfg: dict, config: IntegratorConfig):
    sched = calibrate_cz(cfg["theta"], cfg["K1"], cfg["K2"], cfg["D1"], cfg["D2"], cfg["g0"],
                         width_factor=cfg["width_factor"])
    base = SystemSpec(modes=(KnrParams(cfg["K1"], cfg["D1"]), KnrParams(cfg["K2"], cfg["D2"])),
                      cutoff=cfg["cutoff"])
    return extract_cz_phase_corrections(sched, base, config), base


def _cz_target(space: CompositeSpace, sched) -> StateVector:
    # realized conditional phase exp(i phi) on |22>
    phi = sched.diagnostics["conditional_phase"]
    v = CZ_INPUT.astype(complex).copy()
    v[3] *= np.exp(1j * phi)
    return embed_logical(space, v)


def _cz_case(case: str, cfg: dict) -> float:
    config = _integrator(cfg)
    sched, base = cz_schedule(cfg, config)
    gamma = 0.0 if case == "unitary" else cfg["gamma"]
    spec = SystemSpec(modes=base.modes, cutoff=base.cutoff, loss_rate=gamma)
    seg = apply_schedule(spec, sched)
    ham, lind = assemble(seg)
    space = seg.space
    c = correction_phases(sched, seg)
    psi0 = embed_logical(space, CZ_INPUT)
    target = _cz_target(space, sched)
    T = (0.0, sched.duration)
    if case == "unitary":
        phi = c * evolve_kets(ham, psi0.amplitudes, T, config)
        return float(abs(np.vdot(target.amplitudes, phi)) ** 2)
    rho = propagate_gksl(ham, lind, psi0.to_density(), T, config).final.matrix
    rho = DensityOperator(space, c[:, None] * rho * c.conj()[None, :])
    if case == "detected":
        rho = postselect(rho, _projector(cfg["projector"], space, [0, 1])).state
    return fidelity_pure_vs_mixed(target, rho)


CZ_CASES = ("unitary", "noisy", "detected")


def run_cz_table(cfg: dict) -> ExperimentResult:
    """CZ fidelity on ``(|00> + |02> + |20> + |22>)/2``: unitary, lossy, lossy and postselected."""
    config = _integrator(cfg)
    sched, _ = cz_schedule(cfg, config)
    fids = _parallel(functools.partial(_cz_case, cfg=cfg), list(CZ_CASES), cfg["jobs"])
    res = ExperimentResult("cz_table", ("case", "fidelity"),
                           metadata=_metadata(cfg, schedule=sched.to_dict()))
    for case, f in zip(CZ_CASES, fids):
        res.append(case, f)
    return res


# ---------------------------------------------------------------------------
# parity measurement process fidelity


def parity_channel(params: DetectionParams, config: IntegratorConfig) -> Callable[[np.ndarray], np.ndarray]:
    """Linear map on mode (x) ancilla: pulse, then the virtual frame correction."""
    spec = params.spec()
    sched = params.schedule()
    seg = apply_schedule(spec, sched)
    ham, lind = assemble(seg)
    c = correction_phases(sched, seg)
    T = (0.0, sched.duration)
    if not lind:
        d = seg.space.dim
        U = c[:, None] * evolve_kets(ham, np.eye(d, dtype=complex), T, config)
        return lambda X: U @ X @ U.conj().T

    def channel(X):
        out = evolve_operators(ham, lind, X[None], T, config)[0]
        return c[:, None] * out * c.conj()[None, :]

    return channel


def parity_process_fidelity(params: DetectionParams, config: IntegratorConfig | None = None) -> float:
    config = config or IntegratorConfig()
    space = params.spec().space
    u = parity_unitary(space, 0, 1)
    ideal = lambda X: u[:, None] * X * u.conj()[None, :]  # noqa: E731
    return process_fidelity(ideal, parity_channel(params, config), parity_sigma_basis(params.cutoff))


def _pf_one(gamma: float, cfg: dict) -> float:
    params = DetectionParams(K=cfg["K"], delta=cfg["delta"], E=cfg["E"], g0=cfg["g0"], gamma=gamma,
                             ancilla_gamma=cfg["ancilla_gamma"], cutoff=cfg["cutoff"])
    return parity_process_fidelity(params, _integrator(cfg))


def run_parity_process_fidelity(cfg: dict) -> ExperimentResult:
    """Process fidelity of the ancilla parity check against the ideal controlled parity."""
    check = check_parity_condition(cfg["K"], cfg["delta"], cfg["E"])
    if not check.ok:
        raise ParityConditionError(f"delta - E + K = {check.residual:g} != 0")
    gammas = [float(g) for g in cfg["gammas"]]
    if not gammas:
        raise ConfigError("gammas must not be empty")
    fids = _parallel(functools.partial(_pf_one, cfg=cfg), gammas, cfg["jobs"])
    res = ExperimentResult("parity_pf", ("gamma", "process_fidelity"), metadata=_metadata(cfg))
    for g, f in zip(gammas, fids):
        res.append(g, f)
    return res


# ---------------------------------------------------------------------------
# circuits


def _system(cfg: dict) -> AnsatzSystem:
    s = dict(cfg["system"])
    return AnsatzSystem(step=cfg["integrator"]["step"], **{
        k: tuple(v) if isinstance(v, list) else v for k, v in s.items()
    })


ANGLE_MAPPING = (
    "angles set durations at a fixed drive magnitude rx_drive and Z rate rz_rate, "
    "not amplitudes p_i = theta_i or detunings delta_i = -K - theta_i"
)


def run_ansatz_sweep(cfg: dict) -> ExperimentResult:
    res = random_parameter_sweep(cfg["n_samples"], cfg["seed"], cfg["gamma"], cfg["cases"],
                                 _system(cfg), cfg["projector"], cfg["jobs"])
    res.metadata = {**_metadata(cfg, angle_mapping=ANGLE_MAPPING), **res.metadata}
    return res


def run_depth_sweep(cfg: dict) -> ExperimentResult:
    system = _system(cfg)
    if cfg["thetas"] is None:
        params = sweep_parameters(1, cfg["seed"], n_parameters(system.layout))[0]
    else:
        params = AnsatzParams(tuple(cfg["thetas"]))
    policies = [DetectionPolicy.parse(p, cfg["projector"]) for p in cfg["policies"]]
    res = depth_sweep(params, cfg["n_layers"], policies, cfg["gamma"], system, cfg["jobs"])
    res.metadata = {**_metadata(cfg, angle_mapping=ANGLE_MAPPING,
                                prng="numpy.random.PCG64"), **res.metadata}
    return res


# ---------------------------------------------------------------------------
# calibration and diagnostics


def run_calibrate(cfg: dict) -> dict:
    """All four schedules as JSON-ready dicts."""
    rz, rx, cz, par = cfg["rz"], cfg["rx"], cfg["cz"], cfg["parity"]
    out = {
        "rz": calibrate_rz(rz["theta"], rz["K"], rz["delta"]).to_dict(),
        "rx": calibrate_rx(rx["theta"], rx["K"], rx["p"]).to_dict(),
        "parity": calibrate_parity_measurement(par["K"], par["g0"], par["delta"], par["E"],
                                               par["width_factor"]).to_dict(),
    }
    cz_cfg = {**cz, "cutoff": 10}
    out["cz"] = cz_schedule(cz_cfg, _integrator(cfg))[0].to_dict()
    return out


def run_check(cfg: dict) -> ExperimentResult:
    """Perturbative and adiabatic diagnostics; raises on resonance or a broken parity condition."""
    cz, par = cfg["cz"], cfg["parity"]
    res = ExperimentResult("check", ("quantity", "value"), metadata=_metadata(cfg))
    a = delta_e(cz["K1"], cz["K2"], cz["D1"], cz["D2"], cz["g0"])
    e = exact_delta_e(cz["K1"], cz["K2"], cz["D1"], cz["D2"], cz["g0"])
    res.append("cz.delta_e_analytic", a.delta_e)
    res.append("cz.delta_e_exact", e.delta_e)
    res.append("cz.delta_e_rel_error", abs(a.delta_e - e.delta_e) / abs(e.delta_e))
    sched = calibrate_cz(cz["theta"], cz["K1"], cz["K2"], cz["D1"], cz["D2"], cz["g0"],
                         width_factor=cz["width_factor"])
    pulse = sched.pulses[0][1]
    ad = adiabaticity_diagnostic(cz["K1"], cz["K2"], cz["D1"], cz["D2"], pulse)
    res.append("cz.tau_us", sched.diagnostics["tau"])
    res.append("cz.duration_us", sched.duration)
    res.append("cz.min_gap", ad.min_gap)
    res.append("cz.adiabatic_timescale_us", ad.timescale)
    res.append("cz.adiabaticity_ratio", ad.ratio)
    chk = check_parity_condition(par["K"], par["delta"], par["E"])
    res.append("parity.condition_residual", chk.residual)
    if not chk.ok:
        raise ParityConditionError(f"delta - E + K = {chk.residual:g} != 0")
    coeffs = fit_dispersive_coefficients(par["K"], par["delta"], par["E"], par["g0"])
    res.append("parity.chi", coeffs.chi)
    res.append("parity.b2", coeffs.b2)
    return res


RUNNERS: dict[str, Callable[[dict], Any]] = {
    "z-sweep": run_z_gate_sweep,
    "x-sweep": run_x_gate_sweep,
    "cz-table": run_cz_table,
    "parity-pf": run_parity_process_fidelity,
    "ansatz-sweep": run_ansatz_sweep,
    "depth-sweep": run_depth_sweep,
    "calibrate": run_calibrate,
    "check": run_check,
}


__all__ = [
    "CZ_CASES",
    "DEFAULTS",
    "RUNNERS",
    "parity_channel",
    "parity_process_fidelity",
    "resolve_config",
    "run_ansatz_sweep",
    "run_calibrate",
    "run_check",
    "run_cz_table",
    "run_depth_sweep",
    "run_parity_process_fidelity",
    "run_x_gate_sweep",
    "run_z_gate_sweep",
]
