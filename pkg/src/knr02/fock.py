"""Truncated Fock-space and qubit linear algebra.

Composite spaces are ordered tensor products of bosonic modes and two-level
ancillas. Basis index conventions:

* mode ``Mode(cutoff)`` has basis ``|0>, ..., |cutoff>``;
* qubit index 0 is ``|down>``, index 1 is ``|up>``; ``sigma_z = diag(-1, 1)``.

The 02 code embeds ``|0_L> = |0>`` and ``|1_L> = |2>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ConfigError

MIN_CUTOFF = 3


@dataclass(frozen=True)
class Mode:
    cutoff: int

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ConfigError(f"mode cutoff must be a positive integer, got {self.cutoff}")

    @property
    def dim(self) -> int:
        return self.cutoff + 1


@dataclass(frozen=True)
class Qubit:
    @property
    def dim(self) -> int:
        return 2


Subsystem = Union[Mode, Qubit]


@dataclass(frozen=True)
class CompositeSpace:
    """Ordered tensor product of modes and qubits.

    Every mode must have ``cutoff >= 3``: the X rotation leaks into ``|4>`` and
    smaller truncations silently change the dynamics. Single-mode primitives
    with smaller cutoffs are built with :meth:`bare`.
    """

    subsystems: tuple[Subsystem, ...]
    checked: bool = True

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        if not self.subsystems:
            raise ConfigError("a composite space needs at least one subsystem")
        for s in self.subsystems:
            if not isinstance(s, (Mode, Qubit)):
                raise ConfigError(f"unknown subsystem {s!r}")
            if self.checked and isinstance(s, Mode) and s.cutoff < MIN_CUTOFF:
                raise ConfigError(
                    f"mode cutoff {s.cutoff} < {MIN_CUTOFF}; the X gate leaks to |4>"
                )

    @classmethod
    def bare(cls, *subsystems: Subsystem) -> "CompositeSpace":
        return cls(tuple(subsystems), checked=False)

    @classmethod
    def modes(cls, *cutoffs: int, qubits: int = 0) -> "CompositeSpace":
        return cls(tuple(Mode(c) for c in cutoffs) + tuple(Qubit() for _ in range(qubits)))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self) -> int:
        return len(self.subsystems)

    def check_index(self, index: int, kind: type | None = None) -> Subsystem:
        if not 0 <= index < len(self.subsystems):
            raise ConfigError(f"subsystem index {index} out of range for {len(self)} subsystems")
        sub = self.subsystems[index]
        if kind is not None and not isinstance(sub, kind):
            raise ConfigError(f"subsystem {index} is {type(sub).__name__}, expected {kind.__name__}")
        return sub

    def mode_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.subsystems) if isinstance(s, Mode)]

    def qubit_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.subsystems) if isinstance(s, Qubit)]


def _as_matrix(m, dim: int) -> np.ndarray:
    m = np.array(m, dtype=complex)
    if m.shape != (dim, dim):
        raise ConfigError(f"matrix shape {m.shape} does not match dimension {dim}")
    return m


@dataclass(frozen=True, eq=False)
class LinearOperator:
    space: CompositeSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.matrix, self.space.dim)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def dag(self) -> "LinearOperator":
        return LinearOperator(self.space, self.matrix.conj().T)

    def _check(self, other) -> None:
        if other.space != self.space:
            raise ConfigError("operators live on different spaces")

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            self._check(other)
            return LinearOperator(self.space, self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            self._check(other)
            return StateVector(self.space, self.matrix @ other.amplitudes, normalized=False)
        return NotImplemented

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        self._check(other)
        return LinearOperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "LinearOperator") -> "LinearOperator":
        self._check(other)
        return LinearOperator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "LinearOperator":
        return LinearOperator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "LinearOperator":
        return LinearOperator(self.space, -self.matrix)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= atol)


@dataclass(frozen=True, eq=False)
class StateVector:
    space: CompositeSpace
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if a.shape != (self.space.dim,):
            raise ConfigError(f"amplitude length {a.size} != space dimension {self.space.dim}")
        if self.normalized:
            nrm = np.linalg.norm(a)
            if abs(nrm - 1.0) > 1e-9:
                raise ConfigError(f"state norm {nrm:.12f} is not 1")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        return StateVector(self.space, self.amplitudes / self.norm)

    def to_density(self) -> "DensityOperator":
        a = self.amplitudes
        return DensityOperator(self.space, np.outer(a, a.conj()))

    def overlap(self, other: "StateVector") -> complex:
        if other.space != self.space:
            raise ConfigError("states live on different spaces")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    space: CompositeSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.matrix, self.space.dim)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def normalize(self) -> "DensityOperator":
        return DensityOperator(self.space, self.matrix / self.trace)

    def expect(self, op: LinearOperator) -> complex:
        if op.space != self.space:
            raise ConfigError("operator and state live on different spaces")
        return complex(np.trace(op.matrix @ self.matrix))

    def validate(self, herm_tol: float = 1e-9, trace_tol: float = 1e-8, pos_tol: float = 1e-8) -> None:
        m = self.matrix
        herm = np.max(np.abs(m - m.conj().T))
        if herm > herm_tol:
            raise ConfigError(f"density matrix not Hermitian (deviation {herm:.3g})")
        if abs(self.trace - 1.0) > trace_tol:
            raise ConfigError(f"density matrix trace {self.trace:.12f} != 1")
        lo = np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min()
        if lo < -pos_tol:
            raise ConfigError(f"density matrix has negative eigenvalue {lo:.3g}")


# ---------------------------------------------------------------------------
# single-subsystem primitives


def _single_mode_space(cutoff: int) -> CompositeSpace:
    return CompositeSpace.bare(Mode(cutoff))


def annihilation(cutoff: int) -> LinearOperator:
    """Truncated ``a`` with ``<n-1|a|n> = sqrt(n)``."""
    if int(cutoff) != cutoff or cutoff < 1:
        raise ConfigError(f"cutoff must be >= 1, got {cutoff}")
    m = np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), k=1)
    return LinearOperator(_single_mode_space(cutoff), m)


def creation(cutoff: int) -> LinearOperator:
    return annihilation(cutoff).dag()


def number_operator(cutoff: int) -> LinearOperator:
    if int(cutoff) != cutoff or cutoff < 1:
        raise ConfigError(f"cutoff must be >= 1, got {cutoff}")
    return LinearOperator(_single_mode_space(cutoff), np.diag(np.arange(cutoff + 1, dtype=float)))


def parity_operator(cutoff: int) -> LinearOperator:
    """``(-1)^n`` as a diagonal matrix."""
    if int(cutoff) != cutoff or cutoff < 1:
        raise ConfigError(f"cutoff must be >= 1, got {cutoff}")
    signs = np.where(np.arange(cutoff + 1) % 2 == 0, 1.0, -1.0)
    return LinearOperator(_single_mode_space(cutoff), np.diag(signs))


_QUBIT = CompositeSpace.bare(Qubit())


def sigma_minus() -> LinearOperator:
    """``|down><up|``."""
    return LinearOperator(_QUBIT, np.array([[0, 1], [0, 0]]))


def sigma_plus() -> LinearOperator:
    return sigma_minus().dag()


def sigma_z() -> LinearOperator:
    return LinearOperator(_QUBIT, np.diag([-1.0, 1.0]))


def projector_up() -> LinearOperator:
    return LinearOperator(_QUBIT, np.diag([0.0, 1.0]))


def qubit_state(label: str) -> np.ndarray:
    """Amplitudes of ``down``, ``up``, ``plus`` or ``minus``."""
    s = 1 / np.sqrt(2)
    table = {
        "down": [1, 0],
        "up": [0, 1],
        "plus": [s, s],
        "minus": [s, -s],
    }
    try:
        return np.array(table[label], dtype=complex)
    except KeyError:
        raise ConfigError(f"unknown qubit state {label!r}") from None


# ---------------------------------------------------------------------------
# composite-space construction


def identity(space: CompositeSpace) -> LinearOperator:
    return LinearOperator(space, np.eye(space.dim))


def embed(op: LinearOperator | np.ndarray, space: CompositeSpace, index: int) -> LinearOperator:
    """Tensor ``op`` into subsystem ``index`` of ``space``, identity elsewhere."""
    sub = space.check_index(index)
    m = op.matrix if isinstance(op, LinearOperator) else np.asarray(op, dtype=complex)
    if m.shape != (sub.dim, sub.dim):
        raise ConfigError(
            f"operator of dimension {m.shape[0]} cannot act on subsystem {index} of dimension {sub.dim}"
        )
    factors = [np.eye(d) for d in space.dims]
    factors[index] = m
    return LinearOperator(space, reduce(np.kron, factors))


def mode_operator(name: str, space: CompositeSpace, index: int) -> LinearOperator:
    """Embedded ``a``, ``adag``, ``n`` or ``parity`` on mode ``index``."""
    mode = space.check_index(index, Mode)
    builders = {
        "a": annihilation,
        "adag": creation,
        "n": number_operator,
        "parity": parity_operator,
    }
    if name not in builders:
        raise ConfigError(f"unknown mode operator {name!r}")
    return embed(builders[name](mode.cutoff), space, index)


def qubit_operator(name: str, space: CompositeSpace, index: int) -> LinearOperator:
    """Embedded ``sm``, ``sp``, ``sz`` or ``up`` on qubit ``index``."""
    space.check_index(index, Qubit)
    builders = {"sm": sigma_minus, "sp": sigma_plus, "sz": sigma_z, "up": projector_up}
    if name not in builders:
        raise ConfigError(f"unknown qubit operator {name!r}")
    return embed(builders[name](), space, index)


def product_state(space: CompositeSpace, factors: Sequence) -> StateVector:
    """Tensor product of per-subsystem states.

    Each factor is an int (Fock/qubit basis index), a qubit label, or an
    amplitude array of the subsystem's dimension.
    """
    if len(factors) != len(space):
        raise ConfigError(f"need {len(space)} factors, got {len(factors)}")
    vecs = []
    for sub, f in zip(space.subsystems, factors):
        if isinstance(f, str):
            if not isinstance(sub, Qubit):
                raise ConfigError("qubit labels only apply to qubits")
            v = qubit_state(f)
        elif np.ndim(f) == 0:
            if not 0 <= int(f) < sub.dim:
                raise ConfigError(f"basis index {f} out of range for dimension {sub.dim}")
            v = np.zeros(sub.dim, dtype=complex)
            v[int(f)] = 1.0
        else:
            v = np.asarray(f, dtype=complex)
            if v.shape != (sub.dim,):
                raise ConfigError(f"factor shape {v.shape} != ({sub.dim},)")
        vecs.append(v)
    return StateVector(space, reduce(np.kron, vecs), normalized=False)


def basis_state(space: CompositeSpace, occupations: Iterable[int]) -> StateVector:
    return product_state(space, list(occupations))


def logical_amplitudes(cutoff: int, label: str) -> np.ndarray:
    """Single-mode amplitudes of ``0``, ``1``, ``+`` or ``-`` in the 02 code."""
    v = np.zeros(cutoff + 1, dtype=complex)
    s = 1 / np.sqrt(2)
    coeffs = {"0": (1, 0), "1": (0, 1), "+": (s, s), "-": (s, -s)}
    if label not in coeffs:
        raise ConfigError(f"unknown logical label {label!r}")
    v[0], v[2] = coeffs[label]
    return v


def logical_state(space: CompositeSpace, labels: str | Sequence[str], qubits: Sequence = ()) -> StateVector:
    """02-code product state, e.g. ``logical_state(space, "0+")``.

    Qubit subsystems (which must come after the modes) take their factors
    from ``qubits``.
    """
    modes = space.mode_indices()
    labels = list(labels)
    if len(labels) != len(modes):
        raise ConfigError(f"need {len(modes)} logical labels, got {len(labels)}")
    factors = []
    it_l, it_q = iter(labels), iter(qubits)
    for sub in space.subsystems:
        if isinstance(sub, Mode):
            factors.append(logical_amplitudes(sub.cutoff, next(it_l)))
        else:
            try:
                factors.append(next(it_q))
            except StopIteration:
                raise ConfigError("missing qubit factor") from None
    return product_state(space, factors).normalize()


def embed_logical(space: CompositeSpace, vec: np.ndarray) -> StateVector:
    """Map a ``2**k`` logical amplitude vector (k modes, no qubits) into Fock space."""
    modes = space.mode_indices()
    if len(modes) != len(space):
        raise ConfigError("embed_logical expects a modes-only space")
    vec = np.asarray(vec, dtype=complex).reshape((2,) * len(modes))
    out = np.zeros(space.dims, dtype=complex)
    idx = np.ix_(*[[0, 2]] * len(modes))
    out[idx] = vec
    return StateVector(space, out.reshape(-1), normalized=False)


# ---------------------------------------------------------------------------
# state functionals


def fidelity_pure_vs_mixed(target: StateVector, state: DensityOperator) -> float:
    """``<psi|rho|psi>``, clamped into [0, 1] when within 1e-9 of it."""
    if target.space != state.space:
        raise ConfigError("target and state live on different spaces")
    psi = target.amplitudes
    f = float(np.real(np.vdot(psi, state.matrix @ psi)))
    if -1e-9 <= f < 0.0:
        f = 0.0
    elif 1.0 < f <= 1.0 + 1e-9:
        f = 1.0
    return f


def partial_trace(state: DensityOperator, keep: Iterable[int]) -> DensityOperator:
    keep = sorted(set(int(k) for k in keep))
    n = len(state.space)
    if not keep or any(not 0 <= k < n for k in keep):
        raise ConfigError(f"invalid keep set {keep} for {n} subsystems")
    dims = state.space.dims
    rho = state.matrix.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # contract each traced subsystem's ket and bra index, highest first
    for i in sorted(traced, reverse=True):
        m = rho.ndim // 2
        rho = np.trace(rho, axis1=i, axis2=i + m)
    sub = tuple(state.space.subsystems[k] for k in keep)
    space = CompositeSpace(sub, checked=state.space.checked)
    d = space.dim
    return DensityOperator(space, rho.reshape(d, d))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the trace norm of ``a - b`` (matrices, or DensityOperators)."""
    a = a.matrix if isinstance(a, DensityOperator) else np.asarray(a)
    b = b.matrix if isinstance(b, DensityOperator) else np.asarray(b)
    diff = a - b
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))
