"""Closed-form calibration of Rz, Rx, CZ and the parity-measurement pulse.

A :class:`PulseSchedule` is a constant-parameter segment (per-mode detuning
and drive overrides) plus optional Gaussian couplings. Logical conventions:
``Rz(theta) = diag(1, e^{-i theta})``, ``Rx(theta) = exp(-i theta X / 2)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import IntegratorConfig, evolve_kets
from .errors import (
    CalibrationQualityError,
    ConfigError,
    DegenerateDetuningError,
    ParityConditionError,
    ZeroDriveError,
)
from .fock import basis_state
from .hamiltonians import Ancilla, GaussianPulse, KnrParams, SystemSpec, assemble
from .perturbation import adiabaticity_diagnostic, check_parity_condition, delta_e

TWO_PI = 2.0 * math.pi
ERF_WINDOW = math.erf(3.0 * math.sqrt(2.0))
RX_CONFINEMENT_LIMIT = 0.1
LEAKAGE_LIMIT = 1e-3


def wrap_angle(x: float) -> float:
    """Reduce into ``[0, 2 pi)``."""
    y = math.fmod(x, TWO_PI)
    if y < 0:
        y += TWO_PI
    # fmod can round a tiny negative up to exactly 2 pi
    return 0.0 if y >= TWO_PI else y


@dataclass(frozen=True)
class FrameCorrection:
    """Diagonal phase ``exp(i (c_n2 n^2 + c_n n + c_sz sigma_z))`` on a mode and its ancilla."""

    mode: int
    ancilla: int
    c_n2: float
    c_n: float
    c_sz: float


@dataclass(frozen=True)
class PulseSchedule:
    """One gate segment.

    ``overrides`` holds ``(mode, "delta" | "p", value)``; ``pulses`` holds
    ``(target, GaussianPulse)`` with target ``"bs:i-j"`` or ``"jc:k"``.
    ``phase_corrections`` are ``(mode, angle)``, applied as
    ``exp(i angle n / 2)`` (a phase ``angle`` on ``|2>``).
    """

    kind: str
    duration: float
    theta: float = 0.0
    overrides: tuple = ()
    pulses: tuple = ()
    phase_corrections: tuple = ()
    frame_corrections: tuple = ()
    diagnostics: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ConfigError(f"schedule duration must be positive, got {self.duration}")
        for m, key, _ in self.overrides:
            if key not in ("delta", "p"):
                raise ConfigError(f"unknown override {key!r}")
        for target, pulse in self.pulses:
            _parse_target(target)
            if not isinstance(pulse, GaussianPulse):
                raise ConfigError("schedule pulses must be GaussianPulse instances")
        object.__setattr__(
            self,
            "phase_corrections",
            tuple((int(m), wrap_angle(float(a))) for m, a in self.phase_corrections),
        )

    def with_corrections(self, corrections) -> "PulseSchedule":
        return replace(self, phase_corrections=tuple(corrections))

    def override(self, mode: int, key: str, default: float) -> float:
        for m, k, v in self.overrides:
            if m == mode and k == key:
                return v
        return default

    # serialization
    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "duration": self.duration,
            "theta": self.theta,
            "overrides": [list(o) for o in self.overrides],
            "pulses": [
                {"target": t, "g0": p.g0, "t0": p.t0, "tau": p.tau, "window": list(p.window)}
                for t, p in self.pulses
            ],
            "phase_corrections": [list(c) for c in self.phase_corrections],
            "frame_corrections": [vars(c).copy() for c in self.frame_corrections],
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSchedule":
        try:
            return cls(
                kind=d["kind"],
                duration=float(d["duration"]),
                theta=float(d.get("theta", 0.0)),
                overrides=tuple((int(m), str(k), float(v)) for m, k, v in d.get("overrides", ())),
                pulses=tuple(
                    (p["target"], GaussianPulse(p["g0"], p["t0"], p["tau"], tuple(p["window"])))
                    for p in d.get("pulses", ())
                ),
                phase_corrections=tuple((int(m), float(a)) for m, a in d.get("phase_corrections", ())),
                frame_corrections=tuple(FrameCorrection(**c) for c in d.get("frame_corrections", ())),
                diagnostics=dict(d.get("diagnostics", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed schedule: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "PulseSchedule":
        return cls.from_dict(json.loads(text))


def _parse_target(target: str) -> tuple:
    try:
        kind, rest = target.split(":")
        if kind == "bs":
            i, j = (int(x) for x in rest.split("-"))
            return ("bs", i, j)
        if kind == "jc":
            return ("jc", int(rest))
    except ValueError:
        pass
    raise ConfigError(f"invalid pulse target {target!r}")


def apply_schedule(spec: SystemSpec, schedule: PulseSchedule) -> SystemSpec:
    """System for one segment: base parameters with the schedule's overrides.

    Couplings not driven by the schedule are switched off, so idle modes
    evolve freely under their (possibly overridden) KNR Hamiltonians.
    """
    modes = []
    for i, m in enumerate(spec.modes):
        modes.append(KnrParams(m.K, schedule.override(i, "delta", m.delta), schedule.override(i, "p", m.p)))
    couplings = {}
    anc_coupling = {}
    for target, pulse in schedule.pulses:
        parsed = _parse_target(target)
        if parsed[0] == "bs":
            couplings[(parsed[1], parsed[2])] = pulse
        else:
            if not 0 <= parsed[1] < len(spec.ancillas):
                raise ConfigError(f"schedule drives missing ancilla {parsed[1]}")
            anc_coupling[parsed[1]] = pulse
    ancillas = tuple(
        Ancilla(a.qubit, a.mode, anc_coupling.get(k, 0.0)) for k, a in enumerate(spec.ancillas)
    )
    return replace(spec, modes=tuple(modes), mode_couplings=couplings, ancillas=ancillas)


# ---------------------------------------------------------------------------
# single-mode rotations


def calibrate_rz(theta: float, K: float, delta: float, mode: int = 0) -> PulseSchedule:
    """Free evolution at detuning ``delta``: ``2 (K + delta) tau = theta``.

    With a negative level splitting the equivalent angle ``theta - 2 pi`` is
    used, so the duration stays positive.
    """
    if not 0.0 < theta <= TWO_PI:
        raise ConfigError(f"Rz angle must lie in (0, 2 pi], got {theta}")
    rate = 2.0 * (K + delta)
    if rate == 0.0:
        raise DegenerateDetuningError(f"delta = -K = {delta} leaves |0> and |2> degenerate")
    if rate > 0:
        tau = theta / rate
    else:
        tau = (theta - TWO_PI) / rate
        if tau == 0.0:
            tau = TWO_PI / -rate
    return PulseSchedule(
        kind="rz",
        duration=tau,
        theta=theta,
        overrides=((mode, "delta", delta), (mode, "p", 0.0)),
        diagnostics={"rate": rate},
    )


def calibrate_rx(theta: float, K: float, p: float, mode: int = 0) -> PulseSchedule:
    """Parametric drive at ``delta = -K``: ``2 sqrt(2) p tau = theta``.

    ``p`` is the drive magnitude; a negative ``theta`` flips the drive sign
    so that the duration ``|theta| / (2 sqrt(2) |p|)`` stays positive.
    """
    if p == 0.0:
        raise ZeroDriveError("Rx needs a non-zero parametric drive")
    if theta == 0.0 or abs(theta) > TWO_PI:
        raise ConfigError(f"Rx angle must lie in [-2 pi, 2 pi] \\ {{0}}, got {theta}")
    if abs(p) / K >= RX_CONFINEMENT_LIMIT:
        warnings.warn(
            f"p/K = {abs(p) / K:.3g} >= {RX_CONFINEMENT_LIMIT}: drive is not confined to the code space",
            RuntimeWarning,
            stacklevel=2,
        )
    signed_p = math.copysign(abs(p), theta)
    tau = abs(theta) / (2.0 * math.sqrt(2.0) * abs(p))
    return PulseSchedule(
        kind="rx",
        duration=tau,
        theta=theta,
        overrides=((mode, "delta", -K), (mode, "p", signed_p)),
        diagnostics={"p_over_K": abs(p) / K},
    )


def idle(duration: float, modes: list[tuple[int, float]]) -> PulseSchedule:
    """Logical identity: every listed ``(mode, K)`` held at ``delta = -K``, no drive."""
    ov = []
    for m, K in modes:
        ov += [(m, "delta", -K), (m, "p", 0.0)]
    return PulseSchedule(kind="idle", duration=duration, overrides=tuple(ov))


def parallel_rz(angles: list[tuple[int, float, float]], rate: float) -> PulseSchedule:
    """Simultaneous Z rotations ``(mode, K, angle)`` that all finish together.

    Each angle is taken the short way round and the common duration is set
    by the largest one at ``|2 (K + delta)| = rate``; the other modes get a
    proportionally smaller detuning offset.
    """
    if not rate > 0:
        raise ConfigError("rotation rate must be positive")
    short = []
    for m, K, a in angles:
        a = wrap_angle(a)
        if a > math.pi:
            a -= TWO_PI
        short.append((m, K, a))
    biggest = max((abs(a) for _, _, a in short), default=0.0)
    if biggest == 0.0:
        raise ConfigError("all rotation angles vanish")
    tau = biggest / rate
    ov = []
    for m, K, a in short:
        ov += [(m, "delta", -K + a / (2.0 * tau)), (m, "p", 0.0)]
    return PulseSchedule(
        kind="rz", duration=tau, overrides=tuple(ov), diagnostics={"angles": [a for *_, a in short]}
    )


# ---------------------------------------------------------------------------
# two-mode CZ


def calibrate_cz(theta: float, K1: float, K2: float, D1: float, D2: float, g0: float,
                 width_factor: float = 3.0, modes: tuple[int, int] = (0, 1),
                 resonance_factor: float = 10.0) -> PulseSchedule:
    """Gaussian beam-splitter pulse with ``|dE(g0)| tau erf(sqrt(2) t0 / tau) = theta``.

    The realized conditional phase on ``|22>`` is ``exp(-i sign(dE) theta)``
    (recorded as ``diagnostics["conditional_phase"]``). Phase corrections are
    filled in by :func:`extract_cz_phase_corrections`.
    """
    if not 0.0 < theta <= TWO_PI:
        raise ConfigError(f"CZ angle must lie in (0, 2 pi], got {theta}")
    if g0 == 0.0:
        raise ZeroDriveError("CZ needs a non-zero coupling amplitude")
    corr = delta_e(K1, K2, D1, D2, g0, resonance_factor)
    if corr.delta_e == 0.0:
        raise DegenerateDetuningError("conditional shift vanishes")
    window_erf = math.erf(math.sqrt(2.0) * width_factor)
    tau = theta / (corr.magnitude * window_erf)
    pulse = GaussianPulse.centered(g0, tau, width_factor)
    adiab = adiabaticity_diagnostic(K1, K2, D1, D2, pulse)
    i, j = modes
    return PulseSchedule(
        kind="cz",
        duration=pulse.duration,
        theta=theta,
        overrides=((i, "delta", D1), (i, "p", 0.0), (j, "delta", D2), (j, "p", 0.0)),
        pulses=((f"bs:{i}-{j}", pulse),),
        diagnostics={
            "delta_e": corr.delta_e,
            "dE02": corr.dE02,
            "dE20": corr.dE20,
            "dE22": corr.dE22,
            "tau": tau,
            "conditional_phase": -corr.sign * theta,
            "adiabaticity_ratio": adiab.ratio,
            "adiabatic_timescale": adiab.timescale,
        },
    )


def _cz_basis_amplitudes(schedule: PulseSchedule, spec: SystemSpec, config: IntegratorConfig | None):
    if len(spec.modes) != 2 or spec.ancillas:
        raise ConfigError("CZ phase extraction needs a two-mode system without ancillas")
    seg = apply_schedule(spec, schedule)
    ham, _ = assemble(seg)
    space = seg.space
    labels = [(0, 0), (0, 2), (2, 0), (2, 2)]
    kets = np.stack([basis_state(space, lab).amplitudes for lab in labels], axis=1)
    out = evolve_kets(ham, kets, (0.0, schedule.duration), config)
    idx = [np.ravel_multi_index(lab, space.dims) for lab in labels]
    return out[idx, :], out


def extract_cz_phase_corrections(schedule: PulseSchedule, spec: SystemSpec,
                                 config: IntegratorConfig | None = None,
                                 leakage_limit: float = LEAKAGE_LIMIT) -> PulseSchedule:
    """Simulate ``|00>, |02>, |20>`` and record the single-mode phases to undo.

    Mode 0 gets ``-arg(c20 / c00)`` and mode 1 gets ``-arg(c02 / c00)``.
    """
    if schedule.kind != "cz":
        raise ConfigError("phase extraction needs a CZ schedule")
    amps, _ = _cz_basis_amplitudes(schedule, spec, config)
    leak = [1.0 - abs(amps[k, k]) ** 2 for k in range(4)]
    worst = max(leak)
    if worst > leakage_limit:
        raise CalibrationQualityError(f"basis-state leakage {worst:.3g} exceeds {leakage_limit:g}")
    ph = np.angle(np.diag(amps))
    phi02 = ph[1] - ph[0]
    phi20 = ph[2] - ph[0]
    cond = ph[3] - ph[1] - ph[2] + ph[0]
    diag = dict(schedule.diagnostics)
    diag.update({"leakage": worst, "measured_conditional_phase": float(wrap_angle(cond))})
    return replace(
        schedule,
        phase_corrections=((0, -phi20), (1, -phi02)),
        diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# parity measurement


def calibrate_parity_measurement(K: float, g0p: float, delta: float, E: float,
                                 width_factor: float = 3.0, mode: int = 0, ancilla: int = 0,
                                 tol: float = 1e-9) -> PulseSchedule:
    """Gaussian JC pulse with ``2 g0'^2 tau' / K = pi`` and its frame correction.

    The undone phases are the deterministic, number-dependent parts of the
    dispersive effective Hamiltonian integrated over the window:
    ``(K T + 2G/K) n^2 + ((delta - K) T - 3G/K) n + (E T / 2 + G / 2K) sigma_z``
    with ``G = int g'(t)^2 dt``.
    """
    if not K > 0:
        raise ConfigError("K must be positive")
    if g0p == 0.0:
        raise ZeroDriveError("parity measurement needs a non-zero JC coupling")
    check = check_parity_condition(K, delta, E, tol)
    if not check.ok:
        raise ParityConditionError(f"delta - E + K = {check.residual:g} != 0")
    tau = math.pi * K / (2.0 * g0p**2)
    pulse = GaussianPulse.centered(g0p, tau, width_factor)
    T = pulse.duration
    G = pulse.squared_integral()
    fc = FrameCorrection(
        mode=mode,
        ancilla=ancilla,
        c_n2=K * T + 2.0 * G / K,
        c_n=(delta - K) * T - 3.0 * G / K,
        c_sz=0.5 * E * T + 0.5 * G / K,
    )
    return PulseSchedule(
        kind="parity",
        duration=T,
        theta=math.pi,
        overrides=((mode, "delta", delta), (mode, "p", 0.0)),
        pulses=((f"jc:{ancilla}", pulse),),
        frame_corrections=(fc,),
        diagnostics={"tau": tau, "dispersive_phase": 2.0 * G / K},
    )


# ---------------------------------------------------------------------------
# corrections as diagonal phases


def correction_phases(schedule: PulseSchedule, spec: SystemSpec) -> np.ndarray:
    """Diagonal of the virtual correction unitary on the full space of ``spec``."""
    space = spec.space
    grids = np.meshgrid(*[np.arange(d) for d in space.dims], indexing="ij")
    phase = np.zeros(space.dims)
    for m, angle in schedule.phase_corrections:
        phase = phase + angle * grids[m] / 2.0
    for fc in schedule.frame_corrections:
        n = grids[fc.mode]
        sz = 2.0 * grids[spec.qubit_index(fc.ancilla)] - 1.0
        phase = phase + fc.c_n2 * n**2 + fc.c_n * n + fc.c_sz * sz
    return np.exp(1j * phase).reshape(-1)


def physical_corrections(schedule: PulseSchedule, spec: SystemSpec, rate: float = 3.14) -> PulseSchedule | None:
    """Z-rotation segment realizing ``schedule.phase_corrections`` with real detunings.

    ``exp(i a n / 2)`` on the code space is ``Rz(-a)``; the angle is taken the
    short way round. Returns ``None`` when no correction is needed.
    """
    ang = [(m, spec.modes[m].K, -a) for m, a in schedule.phase_corrections if wrap_angle(a) != 0.0]
    if not ang:
        return None
    return parallel_rz(ang, rate)


__all__ = [
    "ERF_WINDOW",
    "FrameCorrection",
    "PulseSchedule",
    "apply_schedule",
    "calibrate_cz",
    "calibrate_parity_measurement",
    "calibrate_rx",
    "calibrate_rz",
    "correction_phases",
    "extract_cz_phase_corrections",
    "idle",
    "parallel_rz",
    "physical_corrections",
    "wrap_angle",
]
