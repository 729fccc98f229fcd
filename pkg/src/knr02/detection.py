"""Photon-loss detection: projectors, postselection, dynamical parity measurement.

Superoperators use row-major vectorization, ``vec(rho) = rho.reshape(-1)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import IntegratorConfig, evolve_kets, gksl_propagator, propagate_gksl
from .errors import ConfigError, RejectionError
from .fock import CompositeSpace, DensityOperator, LinearOperator, Mode, embed, qubit_state
from .gates import PulseSchedule, _parse_target, apply_schedule, calibrate_parity_measurement, correction_phases
from .hamiltonians import Ancilla, KnrParams, QubitParams, SystemSpec, assemble

REJECTION_THRESHOLD = 1e-12


def _mode_projector(space: CompositeSpace, modes: Sequence[int], keep: Callable[[np.ndarray], np.ndarray]):
    if not modes:
        raise ConfigError("need at least one mode index")
    out = np.eye(space.dim, dtype=complex)
    for m in modes:
        cut = space.check_index(m, Mode).cutoff
        n = np.arange(cut + 1)
        out = out @ embed(np.diag(keep(n).astype(float)), space, m).matrix
    return LinearOperator(space, out)


def even_parity_projector(space: CompositeSpace, modes: Sequence[int]) -> LinearOperator:
    """``prod_i (I + (-1)^{n_i}) / 2``."""
    return _mode_projector(space, modes, lambda n: n % 2 == 0)


def logical_projector(space: CompositeSpace, modes: Sequence[int]) -> LinearOperator:
    """Projector onto ``span{|0>, |2>}`` on every listed mode."""
    return _mode_projector(space, modes, lambda n: (n == 0) | (n == 2))


@dataclass(frozen=True, eq=False)
class PostselectionResult:
    state: DensityOperator
    success_probability: float


def postselect(rho: DensityOperator, projector: LinearOperator,
               threshold: float = REJECTION_THRESHOLD) -> PostselectionResult:
    """``P rho P / Tr(P rho P)``; raises :class:`RejectionError` below ``threshold``."""
    if projector.space != rho.space:
        raise ConfigError("projector and state live on different spaces")
    P = projector.matrix
    if np.max(np.abs(P @ P - P)) > 1e-10 or not projector.is_hermitian(1e-10):
        raise ConfigError("postselection needs a Hermitian idempotent projector")
    kept = P @ rho.matrix @ P
    prob = float(np.trace(kept).real)
    if prob < threshold:
        raise RejectionError(f"success probability {prob:.3g} below {threshold:g}")
    return PostselectionResult(DensityOperator(rho.space, kept / prob), prob)


# ---------------------------------------------------------------------------
# process fidelity


def parity_sigma_basis(cutoff: int) -> np.ndarray:
    """The four orthonormal operators on ``span{|0>,|2>} (x) |+><+|`` (mode, then qubit)."""
    def ket_bra(a, b):
        m = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
        m[a, b] = 1.0
        return m

    s = 1.0 / math.sqrt(2.0)
    plus = qubit_state("plus")
    pp = np.outer(plus, plus.conj())
    mode_ops = [
        s * (ket_bra(0, 0) + ket_bra(2, 2)),
        s * (ket_bra(2, 0) + ket_bra(0, 2)),
        s * (-1j * ket_bra(2, 0) + 1j * ket_bra(0, 2)),
        s * (ket_bra(0, 0) - ket_bra(2, 2)),
    ]
    return np.array([np.kron(m, pp) for m in mode_ops])


def check_orthonormal(basis: np.ndarray, tol: float = 1e-10) -> None:
    B = np.asarray(basis)
    gram = np.einsum("iab,jab->ij", B.conj(), B)
    if np.max(np.abs(gram - np.eye(len(B)))) > tol:
        raise ConfigError("operator basis is not orthonormal under the Hilbert-Schmidt product")


def process_fidelity(channel_a: Callable, channel_b: Callable, basis: np.ndarray) -> float:
    """``(1/d^2) sum_i Tr[A(s_i^dag) B(s_i)]`` with ``d^2 = len(basis)``.

    Channels map a ``(d, d)`` array to a ``(d, d)`` array and are applied to
    non-positive operators, so they must be linear maps, not state maps.
    """
    B = np.asarray(basis, dtype=complex)
    check_orthonormal(B)
    total = 0.0 + 0.0j
    for s in B:
        total += np.trace(channel_a(s.conj().T) @ channel_b(s))
    f = total / len(B)
    return float(f.real)


def parity_unitary(space: CompositeSpace, mode: int, qubit: int) -> np.ndarray:
    """Diagonal of ``(-1)^n |up><up| + I |down><down|``."""
    grids = np.meshgrid(*[np.arange(d) for d in space.dims], indexing="ij")
    n, up = grids[mode], grids[qubit]
    return np.where(up == 1, (-1.0) ** n, 1.0).reshape(-1).astype(complex)


# ---------------------------------------------------------------------------
# dynamical parity measurement


@dataclass(frozen=True)
class DetectionParams:
    """Mode/ancilla parameters of one parity measurement (one mode, one ancilla)."""

    K: float = 250.0
    delta: float = 250.0
    E: float = 500.0
    g0: float = 25.0
    gamma: float = 0.0
    ancilla_gamma: float | None = None
    cutoff: int = 10

    def spec(self) -> SystemSpec:
        return SystemSpec(
            modes=(KnrParams(self.K, self.delta),),
            cutoff=self.cutoff,
            ancillas=(Ancilla(QubitParams(self.E), 0),),
            loss_rate=self.gamma,
            ancilla_decay_rate=self.ancilla_gamma,
        )

    def schedule(self) -> PulseSchedule:
        return calibrate_parity_measurement(self.K, self.g0, self.delta, self.E)


def _driven_ancillas(schedule: PulseSchedule) -> list[int]:
    return sorted(_parse_target(t)[1] for t, _ in schedule.pulses if _parse_target(t)[0] == "jc")


def simulate_parity_measurement(rho: DensityOperator, spec: SystemSpec, schedule: PulseSchedule,
                                config: IntegratorConfig | None = None,
                                apply_corrections: bool = True) -> PostselectionResult:
    """Run the ancilla-assisted parity check on ``rho`` (modes only) and keep ``+``.

    ``spec`` must hold the same modes as ``rho`` plus exactly the ancillas
    driven by ``schedule``; each starts in ``|+>`` and is traced out after
    the projective ``X`` measurement.
    """
    if schedule.kind != "parity":
        raise ConfigError("schedule is not a parity measurement")
    n_modes = len(spec.modes)
    if rho.space.dims != spec.space.dims[:n_modes] or len(rho.space) != n_modes:
        raise ConfigError("state must live on the modes of the measurement system")
    if _driven_ancillas(schedule) != list(range(len(spec.ancillas))):
        raise ConfigError("every ancilla of the system must be driven by the schedule")
    seg = apply_schedule(spec, schedule)
    ham, lind = assemble(seg)
    space = seg.space
    plus = qubit_state("plus")
    pp = np.outer(plus, plus.conj())
    full = rho.matrix
    for _ in spec.ancillas:
        full = np.kron(full, pp)
    T = schedule.duration
    if lind:
        out = propagate_gksl(ham, lind, DensityOperator(space, full), (0.0, T), config).final.matrix
    else:
        w, v = np.linalg.eigh(0.5 * (full + full.conj().T))
        keep = w > 1e-15
        kets = evolve_kets(ham, v[:, keep] * np.sqrt(w[keep]), (0.0, T), config)
        out = kets @ kets.conj().T
    if apply_corrections:
        c = correction_phases(schedule, seg)
        out = c[:, None] * out * c.conj()[None, :]
    dm = rho.space.dim
    na = len(spec.ancillas)
    kept = _project_plus(out, dm, na)
    prob = float(np.trace(kept).real)
    if prob < REJECTION_THRESHOLD:
        raise RejectionError(f"success probability {prob:.3g} below {REJECTION_THRESHOLD:g}")
    return PostselectionResult(DensityOperator(rho.space, kept / prob), prob)


def _project_plus(out: np.ndarray, dm: int, na: int) -> np.ndarray:
    """``<+...+| out |+...+>`` over the trailing ``na`` qubits."""
    plus = qubit_state("plus")
    vec = plus
    for _ in range(na - 1):
        vec = np.kron(vec, plus)
    da = 2**na
    t = out.reshape(dm, da, dm, da)
    return np.einsum("iajb,a,b->ij", t, vec.conj(), vec)


# ---------------------------------------------------------------------------
# cached single-mode detection maps


def _detection_model(params: DetectionParams):
    spec = params.spec()
    sched = params.schedule()
    seg = apply_schedule(spec, sched)
    ham, lind = assemble(seg)
    return sched, ham, lind, correction_phases(sched, seg)


@functools.lru_cache(maxsize=16)
def detection_kraus(params: DetectionParams, step: float = 1e-4) -> np.ndarray:
    """Single Kraus operator ``M = <+| C U |+>`` of the kept branch; needs no dissipation."""
    sched, ham, lind, c = _detection_model(params)
    if lind:
        raise ConfigError("a dissipative measurement has no single Kraus operator")
    dm = params.cutoff + 1
    plus = qubit_state("plus")
    kets = np.kron(np.eye(dm), plus.reshape(2, 1))
    u = evolve_kets(ham, kets, (0.0, sched.duration), IntegratorConfig(step=step))
    u = c[:, None] * u
    return np.einsum("iaj,a->ij", u.reshape(dm, 2, dm), plus.conj())


@functools.lru_cache(maxsize=16)
def detection_map(params: DetectionParams, step: float = 1e-4) -> np.ndarray:
    """Unnormalized kept-branch map ``rho -> <+| C G(rho (x) |+><+|) C^dag |+>`` on one mode.

    Returned as a ``(c+1)^2 x (c+1)^2`` row-major superoperator. With no
    dissipation it is ``M (x) M*`` for the single Kraus operator ``M``.
    """
    sched, ham, lind, c = _detection_model(params)
    if not lind:
        M = detection_kraus(params, step)
        return np.kron(M, M.conj())
    config = IntegratorConfig(step=step)
    dm = params.cutoff + 1
    plus = qubit_state("plus")
    S = gksl_propagator(ham, lind, (0.0, sched.duration), config)
    d = 2 * dm
    pp = np.outer(plus, plus.conj())
    # input embedding rho -> rho (x) |+><+| and output <+|C . C^dag|+>
    emb = np.zeros((d * d, dm * dm), dtype=complex)
    for a in range(dm):
        for b in range(dm):
            emb[:, a * dm + b] = np.kron(np.outer(np.eye(dm)[a], np.eye(dm)[b]), pp).reshape(-1)
    cc = np.outer(c, c.conj()).reshape(-1)
    # vec(X) on (mode, qubit) -> vec(<+|X|+>) on the mode
    out_map = np.zeros((dm * dm, d * d), dtype=complex)
    idx = np.arange(d * d).reshape(dm, 2, dm, 2)
    for i in range(dm):
        for j in range(dm):
            for a in range(2):
                for b in range(2):
                    out_map[i * dm + j, idx[i, a, j, b]] = plus[a].conj() * plus[b]
    return out_map @ (cc[:, None] * (S @ emb))


def apply_mode_map(rho: np.ndarray, D: np.ndarray, mode: int, dims: Sequence[int]) -> np.ndarray:
    """Apply a single-mode superoperator ``D`` to subsystem ``mode`` of ``rho``."""
    dims = tuple(dims)
    k = len(dims)
    dm = dims[mode]
    t = rho.reshape(dims + dims)
    D4 = D.reshape(dm, dm, dm, dm)
    # move the mode's ket and bra axes to the front, contract, move back
    t = np.moveaxis(t, (mode, k + mode), (0, 1))
    t = np.tensordot(D4, t, axes=([2, 3], [0, 1]))
    t = np.moveaxis(t, (0, 1), (mode, k + mode))
    return t.reshape(rho.shape)


__all__ = [
    "DetectionParams",
    "PostselectionResult",
    "apply_mode_map",
    "check_orthonormal",
    "detection_kraus",
    "detection_map",
    "even_parity_projector",
    "logical_projector",
    "parity_sigma_basis",
    "parity_unitary",
    "postselect",
    "process_fidelity",
    "simulate_parity_measurement",
]
