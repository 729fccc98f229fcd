"""Two-mode ansatz circuits: ideal reference, pulse-level simulation, detection policies.

The default layer is ``Rx (x) Rx, Rz (x) Rz, CZ, Rx (x) Rx, Rz (x) Rz`` on
``|0_L 0_L>``; each rotation layer consumes two angles.
"""

from __future__ import annotations

import functools
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .detection import DetectionParams, apply_mode_map, detection_kraus, detection_map
from .dynamics import IntegratorConfig, gksl_propagator, liouvillian, unitary_propagator
from .errors import ConfigError, RejectionError
from .fock import CompositeSpace, Qubit, StateVector, annihilation, embed_logical
from .gates import (
    TWO_PI,
    apply_schedule,
    calibrate_cz,
    calibrate_rx,
    correction_phases,
    extract_cz_phase_corrections,
    parallel_rz,
)
from .hamiltonians import KnrParams, SystemSpec, assemble, knr_hamiltonian
from .results import ExperimentResult

DEFAULT_LAYOUT = ("rx", "rz", "cz", "rx", "rz")
STAGE_KINDS = ("rx", "rz", "cz")


def reduce_angle(x: float) -> float:
    """Representative of ``x`` modulo ``2 pi`` in ``(-pi, pi]``."""
    r = math.remainder(float(x), TWO_PI)
    return math.pi if r <= -math.pi else r


def _check_layout(layout: Sequence[str]) -> tuple[str, ...]:
    layout = tuple(layout)
    if not layout:
        raise ConfigError("circuit layout is empty")
    bad = [k for k in layout if k not in STAGE_KINDS]
    if bad:
        raise ConfigError(f"unknown layout stages {bad}; expected {STAGE_KINDS}")
    return layout


def n_parameters(layout: Sequence[str] = DEFAULT_LAYOUT) -> int:
    return 2 * sum(k != "cz" for k in _check_layout(layout))


@dataclass(frozen=True)
class AnsatzParams:
    """Rotation angles in layout order, stored reduced to ``(-pi, pi]``."""

    thetas: tuple[float, ...]

    def __post_init__(self):
        th = tuple(float(t) for t in self.thetas)
        if not all(math.isfinite(t) for t in th):
            raise ConfigError("ansatz angles must be finite")
        object.__setattr__(self, "thetas", tuple(reduce_angle(t) for t in th))

    @classmethod
    def random(cls, rng: np.random.Generator, n: int = 8) -> "AnsatzParams":
        return cls(tuple(rng.uniform(-math.pi, math.pi, size=n)))

    def split(self, layout: Sequence[str] = DEFAULT_LAYOUT) -> list[tuple[str, tuple[float, float] | None]]:
        layout = _check_layout(layout)
        if len(self.thetas) != n_parameters(layout):
            raise ConfigError(f"layout needs {n_parameters(layout)} angles, got {len(self.thetas)}")
        it = iter(self.thetas)
        return [(k, None if k == "cz" else (next(it), next(it))) for k in layout]


# ---------------------------------------------------------------------------
# ideal reference


def rx_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([1.0, np.exp(-1j * theta)])


CZ_MATRIX = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
LOGICAL_PAIR = CompositeSpace.bare(Qubit(), Qubit())


def ideal_ansatz_unitary(params: AnsatzParams, layout: Sequence[str] = DEFAULT_LAYOUT) -> np.ndarray:
    U = np.eye(4, dtype=complex)
    for kind, ang in params.split(layout):
        if kind == "cz":
            G = CZ_MATRIX
        else:
            f = rx_matrix if kind == "rx" else rz_matrix
            G = np.kron(f(ang[0]), f(ang[1]))
        U = G @ U
    return U


def ideal_ansatz_state(params: AnsatzParams, layout: Sequence[str] = DEFAULT_LAYOUT) -> StateVector:
    """Exact ansatz output on ``|0_L 0_L>``, basis ``|00>, |01>, |10>, |11>``."""
    return StateVector(LOGICAL_PAIR, ideal_ansatz_unitary(params, layout)[:, 0])


# ---------------------------------------------------------------------------
# detection policies

POLICY_MODES = ("none", "after_first_cz", "after_last_rz", "both", "every_k_layers")
PROJECTORS = ("dynamical", "logical", "even")
_EVERY = re.compile(r"^every_(?:k_layers\()?(\d+)(?:\))?(?:_layers)?$")


@dataclass(frozen=True)
class DetectionPolicy:
    """Where parity checks run and how: the full ancilla protocol or an ideal projector."""

    mode: str = "none"
    k: int | None = None
    projector: str = "dynamical"

    def __post_init__(self):
        if self.mode not in POLICY_MODES:
            raise ConfigError(f"unknown detection policy {self.mode!r}")
        if self.projector not in PROJECTORS:
            raise ConfigError(f"unknown projector {self.projector!r}; expected {PROJECTORS}")
        if self.mode == "every_k_layers":
            if self.k is None or int(self.k) != self.k or self.k < 1:
                raise ConfigError("every_k_layers needs an integer k >= 1")
        elif self.k is not None:
            raise ConfigError(f"policy {self.mode!r} takes no k")

    @classmethod
    def parse(cls, text: str, projector: str = "dynamical") -> "DetectionPolicy":
        """``none``, ``both``, ... or ``every_5`` / ``every_k_layers(5)``."""
        m = _EVERY.match(text)
        if m:
            return cls("every_k_layers", int(m.group(1)), projector)
        return cls(text, None, projector)

    @property
    def name(self) -> str:
        return f"every_{self.k}" if self.mode == "every_k_layers" else self.mode

    def rounds(self, layout: Sequence[str], n_layers: int) -> frozenset[tuple[int, int]]:
        """Set of ``(layer, stage)`` positions followed by a detection round."""
        layout = _check_layout(layout)
        last = len(layout) - 1
        out = set()
        if self.mode in ("after_first_cz", "both"):
            if "cz" not in layout:
                raise ConfigError("layout has no CZ stage to detect after")
            out.add((0, layout.index("cz")))
        if self.mode in ("after_last_rz", "both"):
            if "rz" not in layout:
                raise ConfigError("layout has no Z rotation stage to detect after")
            out.add((n_layers - 1, last - layout[::-1].index("rz")))
        if self.mode == "every_k_layers":
            out.update((l, last) for l in range(n_layers) if (l + 1) % self.k == 0)
        return frozenset(out)


# ---------------------------------------------------------------------------
# system


@dataclass(frozen=True)
class AnsatzSystem:
    """Hardware parameters of the two-mode circuit (rad/us, us).

    Rotations use a fixed drive magnitude ``rx_drive`` and Z rate
    ``rz_rate = |2 (K + delta)|``, so durations scale with the angle.
    Noisy evolution is carried out on a per-mode Fock ``cutoff``.
    """

    K: tuple[float, float] = (250.0, 250.0)
    rx_drive: float = 1.11
    rz_rate: float = 3.14
    cz_delta: tuple[float, float] = (-250.0, -170.0)
    cz_g0: float = 15.0
    detect_delta: float = 250.0
    detect_E: float = 500.0
    detect_g0: float = 25.0
    cutoff: int = 4
    step: float = 1e-4
    layout: tuple[str, ...] = DEFAULT_LAYOUT

    def __post_init__(self):
        for name in ("K", "cz_delta", "layout"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(self.K) != 2 or len(self.cz_delta) != 2:
            raise ConfigError("two modes expected")
        if not self.rx_drive > 0 or not self.rz_rate > 0:
            raise ConfigError("rotation drive and rate must be positive")
        if int(self.cutoff) < 3:
            raise ConfigError("circuit cutoff must be >= 3")
        _check_layout(self.layout)

    @property
    def space(self) -> CompositeSpace:
        return CompositeSpace.modes(self.cutoff, self.cutoff)

    def detection_params(self, mode: int, gamma: float) -> DetectionParams:
        # one extra level so that the restriction to ``cutoff`` is exact for n < cutoff
        return DetectionParams(
            K=self.K[mode], delta=self.detect_delta, E=self.detect_E, g0=self.detect_g0,
            gamma=gamma, cutoff=self.cutoff + 1,
        )

    def cz_schedule(self):
        K1, K2 = self.K
        D1, D2 = self.cz_delta
        sched = calibrate_cz(math.pi, K1, K2, D1, D2, self.cz_g0)
        base = SystemSpec(modes=(KnrParams(K1, D1), KnrParams(K2, D2)), cutoff=self.cutoff)
        return extract_cz_phase_corrections(sched, base, IntegratorConfig(step=self.step)), base


@dataclass(frozen=True, eq=False)
class _Channels:
    """Gamma-dependent fixed channels: CZ and per-mode detection on the circuit space."""

    gamma: float
    cz: np.ndarray
    detect: tuple[np.ndarray, np.ndarray]
    cz_duration: float
    detect_duration: float


def _restrict(op: np.ndarray, dm: int, superop: bool) -> np.ndarray:
    if not superop:
        return np.ascontiguousarray(op[:dm, :dm])
    big = math.isqrt(op.shape[0])
    return np.ascontiguousarray(op.reshape(big, big, big, big)[:dm, :dm, :dm, :dm].reshape(dm * dm, dm * dm))


@functools.lru_cache(maxsize=8)
def build_channels(system: AnsatzSystem, gamma: float) -> _Channels:
    if not gamma >= 0:
        raise ConfigError("loss rate must be >= 0")
    sched, base = system.cz_schedule()
    spec = SystemSpec(modes=base.modes, cutoff=base.cutoff, loss_rate=gamma)
    seg = apply_schedule(spec, sched)
    ham, lind = assemble(seg)
    config = IntegratorConfig(step=system.step)
    c = correction_phases(sched, seg)
    t = (0.0, sched.duration)
    if gamma == 0:
        cz = c[:, None] * unitary_propagator(ham, t, config)
    else:
        cz = np.outer(c, c.conj()).reshape(-1)[:, None] * gksl_propagator(ham, lind, t, config)
    dm = system.cutoff + 1
    det = []
    for m in range(2):
        p = system.detection_params(m, gamma)
        op = detection_kraus(p, system.step) if gamma == 0 else detection_map(p, system.step)
        det.append(_restrict(op, dm, gamma != 0))
    t_det = system.detection_params(0, gamma).schedule().duration
    return _Channels(gamma, cz, tuple(det), sched.duration, t_det)


# ---------------------------------------------------------------------------
# pulse-level simulation


def _mode_channel(knr: KnrParams, cutoff: int, gamma: float, t: float) -> np.ndarray:
    h = knr_hamiltonian(knr, cutoff).matrix
    if gamma == 0:
        return scipy.linalg.expm(-1j * h * t)
    a = math.sqrt(gamma) * annihilation(cutoff).matrix
    return scipy.linalg.expm(liouvillian(h, [a]) * t)


def _compose(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    return second @ first


def rotation_layer(system: AnsatzSystem, kind: str, angles: tuple[float, float],
                   gamma: float) -> tuple[list[np.ndarray], float] | None:
    """Per-mode channels of one parallel rotation layer and its duration.

    The shorter rotation idles at ``delta = -K`` until the layer ends.
    Returns ``None`` when both angles vanish.
    """
    c = system.cutoff
    if kind == "rx":
        segs = []
        for m, th in enumerate(angles):
            K = system.K[m]
            if th == 0.0:
                segs.append((K, 0.0, 0.0))
            else:
                s = calibrate_rx(th, K, system.rx_drive, mode=m)
                segs.append((K, s.override(m, "p", 0.0), s.duration))
        T = max(tau for *_, tau in segs)
        if T == 0.0:
            return None
        ops = []
        for K, p, tau in segs:
            op = _mode_channel(KnrParams(K, -K, p), c, gamma, tau)
            if T > tau:
                op = _compose(op, _mode_channel(KnrParams(K, -K), c, gamma, T - tau))
            ops.append(op)
        return ops, T
    if kind == "rz":
        if all(th == 0.0 for th in angles):
            return None
        sched = parallel_rz([(m, system.K[m], th) for m, th in enumerate(angles)], system.rz_rate)
        T = sched.duration
        ops = []
        for m in range(2):
            K = system.K[m]
            ops.append(_mode_channel(KnrParams(K, sched.override(m, "delta", -K)), c, gamma, T))
        return ops, T
    raise ConfigError(f"not a rotation stage: {kind!r}")


class _State:
    """Unnormalized ket (no dissipation) or density matrix on the two-mode space."""

    def __init__(self, system: AnsatzSystem, density: bool):
        self.dims = system.space.dims
        d = system.space.dim
        self.density = density
        if density:
            self.data = np.zeros((d, d), dtype=complex)
            self.data[0, 0] = 1.0
        else:
            self.data = np.zeros(d, dtype=complex)
            self.data[0] = 1.0

    @property
    def weight(self) -> float:
        if self.density:
            return float(np.trace(self.data).real)
        return float(np.vdot(self.data, self.data).real)

    def local(self, ops: Sequence[np.ndarray]) -> None:
        if self.density:
            for m, S in enumerate(ops):
                self.data = apply_mode_map(self.data, S, m, self.dims)
        else:
            self.data = np.kron(ops[0], ops[1]) @ self.data

    def full(self, op: np.ndarray) -> None:
        if self.density:
            self.data = (op @ self.data.reshape(-1)).reshape(self.data.shape)
        else:
            self.data = op @ self.data

    def project(self, keep: np.ndarray) -> None:
        if self.density:
            self.data = keep[:, None] * self.data * keep[None, :]
        else:
            self.data = keep * self.data

    def renormalize(self) -> float:
        w = self.weight
        if w < 1e-12:
            raise RejectionError(f"success probability {w:.3g} below 1e-12")
        self.data = self.data / (w if self.density else math.sqrt(w))
        return w

    def fidelity(self, target: np.ndarray) -> float:
        if self.density:
            f = np.vdot(target, self.data @ target).real
        else:
            f = abs(np.vdot(target, self.data)) ** 2
        return float(f / self.weight)


def _code_mask(system: AnsatzSystem, projector: str) -> np.ndarray:
    n = np.arange(system.cutoff + 1)
    one = (n % 2 == 0) if projector == "even" else ((n == 0) | (n == 2))
    return np.kron(one, one).astype(float)


class CircuitRun(NamedTuple):
    fidelities: tuple[float, ...]
    success_probabilities: tuple[float, ...]
    round_probabilities: tuple[float, ...]
    duration: float


def run_circuit(params: AnsatzParams, system: AnsatzSystem | None = None, gamma: float = 0.0,
                policy: DetectionPolicy | None = None, n_layers: int = 1) -> CircuitRun:
    """Repeat the ansatz ``n_layers`` times without reset; per-layer fidelity and success.

    Fidelities are against the ideal circuit repeated the same number of
    times, evaluated on the renormalized kept state.
    """
    system = system or AnsatzSystem()
    policy = policy or DetectionPolicy()
    if int(n_layers) != n_layers or n_layers < 1:
        raise ConfigError("n_layers must be a positive integer")
    stages = params.split(system.layout)
    ch = build_channels(system, float(gamma))
    rounds = policy.rounds(system.layout, n_layers)
    layers = []
    duration_layer = 0.0
    for kind, ang in stages:
        if kind == "cz":
            layers.append(None)
            duration_layer += ch.cz_duration
        else:
            r = rotation_layer(system, kind, ang, gamma)
            layers.append(r[0] if r else ())
            duration_layer += r[1] if r else 0.0
    U_ideal = ideal_ansatz_unitary(params, system.layout)
    space = system.space
    mask = None if policy.projector == "dynamical" else _code_mask(system, policy.projector)
    state = _State(system, density=gamma > 0)
    psi = np.zeros(4, dtype=complex)
    psi[0] = 1.0
    fids, succ, probs = [], [], []
    cumulative = 1.0
    duration = 0.0
    for layer in range(n_layers):
        for s, ops in enumerate(layers):
            if ops is None:
                state.full(ch.cz)
            elif ops:
                state.local(ops)
            if (layer, s) in rounds:
                if mask is None:
                    state.local(ch.detect)
                    duration += ch.detect_duration
                else:
                    state.project(mask)
                p = state.renormalize()
                probs.append(p)
                cumulative *= p
        duration += duration_layer
        psi = U_ideal @ psi
        target = embed_logical(space, psi).amplitudes
        fids.append(state.fidelity(target))
        succ.append(cumulative)
    return CircuitRun(tuple(fids), tuple(succ), tuple(probs), duration)


class AnsatzOutcome(NamedTuple):
    fidelity: float
    success_probability: float


def simulate_ansatz(params: AnsatzParams, system: AnsatzSystem | None = None, gamma: float = 0.0,
                    policy: DetectionPolicy | None = None) -> AnsatzOutcome:
    run = run_circuit(params, system, gamma, policy, 1)
    return AnsatzOutcome(run.fidelities[0], run.success_probabilities[0])


# ---------------------------------------------------------------------------
# sweeps

# name -> (noisy?, policy mode)
SWEEP_CASES = {
    "unitary": (False, "none"),
    "none": (True, "none"),
    "after_first_cz": (True, "after_first_cz"),
    "after_last_rz": (True, "after_last_rz"),
    "both": (True, "both"),
}


@dataclass(frozen=True)
class _SweepTask:
    system: AnsatzSystem
    gamma: float
    cases: tuple[str, ...]
    projector: str


def _sweep_one(task: _SweepTask, params: AnsatzParams) -> list[tuple[str, float, float]]:
    rows = []
    for case in task.cases:
        noisy, mode = SWEEP_CASES[case]
        out = simulate_ansatz(params, task.system, task.gamma if noisy else 0.0,
                              DetectionPolicy(mode, None, task.projector))
        rows.append((case, out.fidelity, out.success_probability))
    return rows


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def sweep_parameters(n: int, seed: int, n_params: int = 8) -> list[AnsatzParams]:
    if int(n) != n or n < 1:
        raise ConfigError("number of samples must be a positive integer")
    rng = np.random.Generator(np.random.PCG64(seed))
    return [AnsatzParams.random(rng, n_params) for _ in range(n)]


def random_parameter_sweep(n: int, seed: int, gamma: float = 0.002,
                           cases: Sequence[str] = tuple(SWEEP_CASES),
                           system: AnsatzSystem | None = None, projector: str = "dynamical",
                           jobs: int = 1) -> ExperimentResult:
    """Per-sample fidelity and success probability for each named case.

    Cases: ``unitary`` (no loss, no detection), ``none`` (loss, no
    detection) and the three detection placements under loss.
    """
    system = system or AnsatzSystem()
    cases = tuple(cases)
    unknown = [c for c in cases if c not in SWEEP_CASES]
    if unknown:
        raise ConfigError(f"unknown sweep cases {unknown}; expected {tuple(SWEEP_CASES)}")
    samples = sweep_parameters(n, seed, n_parameters(system.layout))
    # build shared channels before any worker starts
    if any(not SWEEP_CASES[c][0] for c in cases):
        build_channels(system, 0.0)
    if any(SWEEP_CASES[c][0] for c in cases):
        build_channels(system, float(gamma))
    task = _SweepTask(system, float(gamma), cases, projector)
    per_sample = _map(functools.partial(_sweep_one, task), samples, jobs)
    res = ExperimentResult(
        "ansatz_sweep",
        ("sample_or_depth", "policy", "fidelity", "success_prob"),
        metadata={
            "seed": seed,
            "prng": "numpy.random.PCG64",
            "gamma": gamma,
            "projector": projector,
            "thetas": [list(p.thetas) for p in samples],
        },
    )
    for k, rows in enumerate(per_sample):
        for case, f, p in rows:
            res.append(k, case, f, p)
    return res


@dataclass(frozen=True)
class _DepthTask:
    params: AnsatzParams
    system: AnsatzSystem
    gamma: float
    n_layers: int


def _depth_one(task: _DepthTask, policy: DetectionPolicy) -> CircuitRun:
    return run_circuit(task.params, task.system, task.gamma, policy, task.n_layers)


def depth_sweep(params: AnsatzParams, n_layers_max: int, policies: Sequence[DetectionPolicy],
                gamma: float = 0.002, system: AnsatzSystem | None = None,
                jobs: int = 1) -> ExperimentResult:
    """Fidelity after every repetition ``1..n_layers_max`` of the ansatz for each policy."""
    system = system or AnsatzSystem()
    if int(n_layers_max) != n_layers_max or n_layers_max < 1:
        raise ConfigError("n_layers_max must be a positive integer")
    policies = list(policies)
    if not policies:
        raise ConfigError("need at least one detection policy")
    build_channels(system, float(gamma))
    task = _DepthTask(params, system, float(gamma), int(n_layers_max))
    runs = _map(functools.partial(_depth_one, task), policies, jobs)
    res = ExperimentResult(
        "depth_sweep",
        ("sample_or_depth", "policy", "fidelity", "success_prob"),
        metadata={"gamma": gamma, "thetas": list(params.thetas)},
    )
    for pol, run in zip(policies, runs):
        for depth, (f, p) in enumerate(zip(run.fidelities, run.success_probabilities), start=1):
            res.append(depth, pol.name, f, p)
    return res


__all__ = [
    "AnsatzOutcome",
    "AnsatzParams",
    "AnsatzSystem",
    "CZ_MATRIX",
    "CircuitRun",
    "DEFAULT_LAYOUT",
    "DetectionPolicy",
    "SWEEP_CASES",
    "build_channels",
    "depth_sweep",
    "ideal_ansatz_state",
    "ideal_ansatz_unitary",
    "n_parameters",
    "random_parameter_sweep",
    "reduce_angle",
    "rotation_layer",
    "run_circuit",
    "rx_matrix",
    "rz_matrix",
    "simulate_ansatz",
    "sweep_parameters",
]
