"""Hamiltonians and collapse operators for coupled Kerr resonators and ancillas.

All coefficients are angular frequencies in rad/us, times are in us.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ConfigError
from .fock import (
    CompositeSpace,
    LinearOperator,
    Mode,
    Qubit,
    annihilation,
    embed,
    mode_operator,
    qubit_operator,
)

GAUSS_NORM = (2.0 / math.pi) ** 0.25


@dataclass(frozen=True)
class KnrParams:
    """``K n(n-1) + delta n + p (a^2 + adag^2)``."""

    K: float
    delta: float
    p: float = 0.0

    def __post_init__(self):
        for name in ("K", "delta", "p"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"KnrParams.{name} must be finite")
        if self.K <= 0:
            raise ConfigError(f"Kerr nonlinearity must be positive, got K={self.K}")


@dataclass(frozen=True)
class QubitParams:
    E: float

    def __post_init__(self):
        if not math.isfinite(self.E):
            raise ConfigError("QubitParams.E must be finite")


@dataclass(frozen=True)
class GaussianPulse:
    """``g0 (2/pi)^(1/4) exp(-(t - t0)^2 / tau^2)`` inside ``window``, zero outside.

    The window defaults to ``[0, 2 t0]``.
    """

    g0: float
    t0: float
    tau: float
    window: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"pulse width must be positive, got tau={self.tau}")
        if self.window is None:
            object.__setattr__(self, "window", (0.0, 2.0 * self.t0))

    @classmethod
    def centered(cls, g0: float, tau: float, width_factor: float = 3.0) -> "GaussianPulse":
        return cls(g0=g0, t0=width_factor * tau, tau=tau)

    @property
    def peak(self) -> float:
        return self.g0 * GAUSS_NORM

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]

    def __call__(self, t):
        if isinstance(t, (float, int)):
            lo, hi = self.window
            if t < lo or t > hi:
                return 0.0
            return self.peak * math.exp(-((t - self.t0) ** 2) / self.tau**2)
        t = np.asarray(t, dtype=float)
        lo, hi = self.window
        val = self.peak * np.exp(-((t - self.t0) ** 2) / self.tau**2)
        val = np.where((t >= lo) & (t <= hi), val, 0.0)
        return float(val) if val.ndim == 0 else val

    def squared_integral(self) -> float:
        """Closed-form integral of ``g(t)^2`` over the window."""
        lo, hi = self.window
        s = math.sqrt(2.0) / self.tau
        half = 0.5 * (math.erf(s * (hi - self.t0)) - math.erf(s * (lo - self.t0)))
        return self.g0**2 * self.tau * half

    def shifted(self, dt: float) -> "GaussianPulse":
        lo, hi = self.window
        return GaussianPulse(self.g0, self.t0 + dt, self.tau, (lo + dt, hi + dt))


Coupling = Union[float, GaussianPulse]


@dataclass(frozen=True)
class Ancilla:
    qubit: QubitParams
    mode: int
    coupling: Coupling = 0.0


@dataclass(frozen=True)
class SystemSpec:
    """Modes (subsystems ``0..M-1``) followed by one qubit per ancilla.

    ``cutoff`` is shared or per mode. ``ancilla_decay_rate`` overrides the
    shared ``loss_rate`` for the ``sigma_-`` channels.
    """

    modes: tuple[KnrParams, ...]
    cutoff: int | tuple[int, ...] = 10
    mode_couplings: dict = field(default_factory=dict)
    ancillas: tuple[Ancilla, ...] = ()
    loss_rate: float = 0.0
    ancilla_decay_rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "ancillas", tuple(self.ancillas))
        if not self.modes:
            raise ConfigError("a system needs at least one mode")
        cut = self.cutoff
        if np.ndim(cut) == 0:
            cut = (int(cut),) * len(self.modes)
        cut = tuple(int(c) for c in cut)
        if len(cut) != len(self.modes):
            raise ConfigError("one cutoff per mode required")
        object.__setattr__(self, "cutoff", cut)
        m = len(self.modes)
        for (i, j) in self.mode_couplings:
            if i == j or not (0 <= i < m and 0 <= j < m):
                raise ConfigError(f"invalid mode coupling indices ({i}, {j})")
        for anc in self.ancillas:
            if not 0 <= anc.mode < m:
                raise ConfigError(f"ancilla attached to missing mode {anc.mode}")
        if not self.loss_rate >= 0:
            raise ConfigError("loss rate must be >= 0")
        if self.ancilla_decay_rate is not None and not self.ancilla_decay_rate >= 0:
            raise ConfigError("ancilla decay rate must be >= 0")

    @property
    def space(self) -> CompositeSpace:
        return CompositeSpace(tuple(Mode(c) for c in self.cutoff) + tuple(Qubit() for _ in self.ancillas))

    def qubit_index(self, k: int) -> int:
        return len(self.modes) + k


Envelope = Callable[[float], float]


@dataclass(frozen=True, eq=False)
class TimeDependentHamiltonian:
    """``H(t) = static + sum_k envelope_k(t) * operator_k``."""

    space: CompositeSpace
    static: np.ndarray
    terms: tuple[tuple[Envelope, np.ndarray], ...] = ()

    def __post_init__(self):
        d = self.space.dim
        st = np.array(self.static, dtype=complex)
        if st.shape != (d, d):
            raise ConfigError("static part has wrong shape")
        object.__setattr__(self, "static", st)
        terms = []
        for env, op in self.terms:
            op = np.array(op.matrix if isinstance(op, LinearOperator) else op, dtype=complex)
            if op.shape != (d, d):
                raise ConfigError("coupling operator has wrong shape")
            terms.append((env, op))
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def constant(cls, op: LinearOperator | np.ndarray, space: CompositeSpace | None = None):
        if isinstance(op, LinearOperator):
            return cls(op.space, op.matrix)
        return cls(space, op)

    def __call__(self, t: float) -> np.ndarray:
        h = self.static.copy()
        for env, op in self.terms:
            h += env(t) * op
        return h

    @property
    def is_constant(self) -> bool:
        return not self.terms


def knr_hamiltonian(params: KnrParams, cutoff: int) -> LinearOperator:
    """Single-mode ``K adag^2 a^2 + delta adag a + p (a^2 + adag^2)``."""
    space = CompositeSpace((Mode(cutoff),))
    n = np.arange(cutoff + 1, dtype=float)
    a = annihilation(cutoff).matrix
    a2 = a @ a
    h = np.diag(params.K * n * (n - 1) + params.delta * n) + params.p * (a2 + a2.conj().T)
    return LinearOperator(space, h)


def beam_splitter(g: float, space: CompositeSpace, i: int, j: int) -> LinearOperator:
    """``g (adag_i a_j + adag_j a_i)``."""
    if i == j:
        raise ConfigError("beam splitter needs two distinct modes")
    ai = mode_operator("a", space, i).matrix
    aj = mode_operator("a", space, j).matrix
    h = ai.conj().T @ aj
    return LinearOperator(space, g * (h + h.conj().T))


def jaynes_cummings(gp: float, space: CompositeSpace, mode_i: int, qubit_j: int) -> LinearOperator:
    """``g' (a sigma_+ + adag sigma_-)``."""
    a = mode_operator("a", space, mode_i).matrix
    sp = qubit_operator("sp", space, qubit_j).matrix
    h = a @ sp
    return LinearOperator(space, gp * (h + h.conj().T))


def static_hamiltonian(spec: SystemSpec) -> np.ndarray:
    """Drift part without any coupling (KNR terms and ancilla ``E/2 sigma_z``)."""
    space = spec.space
    h = np.zeros((space.dim, space.dim), dtype=complex)
    for i, (params, cut) in enumerate(zip(spec.modes, spec.cutoff)):
        h += embed(knr_hamiltonian(params, cut).matrix, space, i).matrix
    for k, anc in enumerate(spec.ancillas):
        h += 0.5 * anc.qubit.E * qubit_operator("sz", space, spec.qubit_index(k)).matrix
    return h


def assemble(spec: SystemSpec) -> tuple[TimeDependentHamiltonian, list[LinearOperator]]:
    """Build ``H(t)`` and the collapse operators of ``spec``.

    Collapse operators are ``sqrt(gamma) a_i`` for every mode and
    ``sqrt(gamma_anc) sigma_-`` for every ancilla; zero rates are omitted.
    """
    space = spec.space
    static = static_hamiltonian(spec)
    terms = []

    def add(coupling: Coupling, op: np.ndarray):
        nonlocal static
        if isinstance(coupling, GaussianPulse):
            terms.append((coupling, op))
        elif callable(coupling):
            terms.append((coupling, op))
        else:
            static = static + float(coupling) * op

    for (i, j), coupling in spec.mode_couplings.items():
        add(coupling, beam_splitter(1.0, space, i, j).matrix)
    for k, anc in enumerate(spec.ancillas):
        add(anc.coupling, jaynes_cummings(1.0, space, anc.mode, spec.qubit_index(k)).matrix)

    ham = TimeDependentHamiltonian(space, static, tuple(terms))

    lindblads = []
    if spec.loss_rate > 0:
        for i in range(len(spec.modes)):
            lindblads.append(math.sqrt(spec.loss_rate) * mode_operator("a", space, i))
    anc_rate = spec.loss_rate if spec.ancilla_decay_rate is None else spec.ancilla_decay_rate
    if anc_rate > 0:
        for k in range(len(spec.ancillas)):
            lindblads.append(math.sqrt(anc_rate) * qubit_operator("sm", space, spec.qubit_index(k)))
    return ham, lindblads


def number_total(space: CompositeSpace) -> np.ndarray:
    """Sum of mode number operators plus ``|up><up|`` on each qubit."""
    d = space.dim
    out = np.zeros((d, d), dtype=complex)
    for i in space.mode_indices():
        out += mode_operator("n", space, i).matrix
    for j in space.qubit_indices():
        out += qubit_operator("up", space, j).matrix
    return out


__all__ = [
    "GAUSS_NORM",
    "Ancilla",
    "GaussianPulse",
    "KnrParams",
    "QubitParams",
    "SystemSpec",
    "TimeDependentHamiltonian",
    "assemble",
    "beam_splitter",
    "jaynes_cummings",
    "knr_hamiltonian",
    "number_total",
    "static_hamiltonian",
]
