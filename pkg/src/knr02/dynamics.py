"""Time evolution: Schrodinger, GKSL, no-jump, and the analytic loss channel.

The fixed-step integrators run classical RK4 in the interaction frame of the
diagonal part ``D`` of the static Hamiltonian: ``D`` is propagated exactly as
phases and RK4 only integrates the remainder (drives, couplings,
dissipators). This removes the ``K n^2`` stiffness of the upper Fock levels,
which would otherwise make explicit RK4 unstable at ordinary step sizes.
Envelopes are evaluated at the RK4 stage times ``t, t + h/2, t + h``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, NumericalError
from .fock import (
    DensityOperator,
    LinearOperator,
    StateVector,
    annihilation,
    embed,
)
from .hamiltonians import GaussianPulse, TimeDependentHamiltonian

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integrator settings.

    ``reduce`` restricts propagation to the invariant subspace reachable from
    the initial support (exact, see :func:`invariant_subspace`).
    ``stability_limit`` bounds ``step * ||R||``, where ``R`` is the part of
    the generator RK4 actually integrates (everything but the diagonal drift).
    """

    step: float = 1e-4
    method: str = "rk4"
    renormalize: bool = False
    reduce: bool = True
    stability_limit: float = 0.1
    trace_tol: float = 1e-7
    positivity_tol: float = 1e-7

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError(f"integrator step must be positive, got {self.step}")
        if self.method != "rk4":
            raise ConfigError(f"unknown integration method {self.method!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: list

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) != len(self.states):
            raise ConfigError("times and states must align")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def final(self):
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.times)


# ---------------------------------------------------------------------------
# internal generator machinery


def _matrix(op) -> np.ndarray:
    if isinstance(op, LinearOperator):
        return op.matrix
    return np.asarray(op, dtype=complex)


def _as_hamiltonian(H) -> TimeDependentHamiltonian:
    if isinstance(H, TimeDependentHamiltonian):
        return H
    if isinstance(H, LinearOperator):
        return TimeDependentHamiltonian(H.space, H.matrix)
    raise ConfigError("Hamiltonian must be a TimeDependentHamiltonian or LinearOperator")


DENSE_MAX_DIM = 48


class _DenseStack:
    """Linear combination of fixed small dense matrices."""

    def __init__(self, mats: Sequence[np.ndarray]):
        self.mats = np.array(mats, dtype=complex)
        self.empty = not np.any(self.mats)

    def combine(self, coeffs: Sequence[complex]) -> np.ndarray:
        out = coeffs[0] * self.mats[0]
        for c, m in zip(coeffs[1:], self.mats[1:]):
            if c != 0:
                out = out + c * m
        return out


class _SharedPattern:
    """Linear combination of fixed sparse matrices on one CSR pattern."""

    def __init__(self, mats: Sequence[np.ndarray]):
        d = mats[0].shape[0]
        mask = np.zeros((d, d), dtype=bool)
        for m in mats:
            mask |= m != 0
        rows, cols = np.nonzero(mask)
        indptr = np.zeros(d + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        indptr = np.cumsum(indptr)
        self.data = [m[rows, cols].astype(complex) for m in mats]
        self.csr = sp.csr_matrix((self.data[0].copy(), cols, indptr), shape=(d, d))
        self.empty = rows.size == 0

    def combine(self, coeffs: Sequence[complex]) -> sp.csr_matrix:
        buf = self.csr.data
        buf[:] = 0.0
        for c, dat in zip(coeffs, self.data):
            if c != 0:
                buf += c * dat
        return self.csr


def _lmul(S, X: np.ndarray) -> np.ndarray:
    """``S @ X`` for sparse ``S`` and ``X`` of shape ``(..., d, m)`` or ``(d,)``."""
    if X.ndim <= 2 or isinstance(S, np.ndarray):
        return S @ X
    d, m = X.shape[-2:]
    batch = X.shape[:-2]
    Y = np.moveaxis(X, -2, 0).reshape(d, -1)
    return np.moveaxis((S @ Y).reshape((d,) + batch + (m,)), 0, -2)


def _dag(X: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(X, -1, -2))


def _envelope_bound(env, t0: float, t1: float) -> float:
    if isinstance(env, GaussianPulse):
        return abs(env.peak)
    ts = np.linspace(t0, t1, 201)
    return float(max(abs(env(t)) for t in ts))


def _norm_bound(m: np.ndarray) -> float:
    if not np.any(m):
        return 0.0
    a = np.abs(m)
    return float(math.sqrt(a.sum(axis=0).max() * a.sum(axis=1).max()))


def invariant_subspace(H, collapse, seed: np.ndarray) -> np.ndarray:
    """Smallest set of basis indices containing ``seed`` that the dynamics cannot leave.

    Closure is taken under the sparsity graphs of every Hamiltonian term, every
    collapse operator and every ``L^dag L``. Propagating on this set is exact.
    """
    ham = _as_hamiltonian(H)
    mask = ham.static != 0
    for _, op in ham.terms:
        mask |= op != 0
    mask |= mask.T
    for L in collapse:
        L = _matrix(L)
        LdL = L.conj().T @ L != 0
        mask |= (L != 0) | LdL | LdL.T
    reach = np.zeros(mask.shape[0], dtype=bool)
    reach[np.asarray(seed, dtype=int)] = True
    while True:
        new = reach | mask[:, reach].any(axis=1)
        if new.sum() == reach.sum():
            return np.flatnonzero(reach)
        reach = new


def _support(y: np.ndarray, density: bool) -> np.ndarray:
    if density:
        nz = np.abs(y) > 0
        axes = tuple(range(nz.ndim - 2))
        if axes:
            nz = nz.any(axis=axes)
        return np.flatnonzero(nz.any(axis=0) | nz.any(axis=1))
    nz = np.abs(y) > 0
    if nz.ndim > 1:
        nz = nz.any(axis=1)
    return np.flatnonzero(nz)


def _make_generator(H, collapse, mode: str, y0: np.ndarray, density: bool, reduce: bool) -> "_Generator":
    keep = None
    if reduce:
        keep = invariant_subspace(H, list(collapse), _support(y0, density))
        if keep.size == y0.shape[-1]:
            keep = None
    return _Generator(H, collapse, mode=mode, keep=keep)


class _Generator:
    """Splits ``-i H(t)`` (plus dissipator) into exact phases and an RK4 remainder."""

    def __init__(self, H, collapse=(), mode: str = "schrodinger", keep=None):
        ham = _as_hamiltonian(H)
        self.space = ham.space
        self.mode = mode
        self.keep = keep
        sub = (lambda m: m) if keep is None else (lambda m: m[np.ix_(keep, keep)])
        static = sub(ham.static)
        d = static.shape[0]
        Ls = [sub(_matrix(L)) for L in collapse]
        term_ops = [sub(op) for _, op in ham.terms]
        M = sum((L.conj().T @ L for L in Ls), np.zeros((d, d), dtype=complex))
        diag = np.diag(static).copy()
        if mode == "nonhermitian":
            # -i(H - i/2 M): diagonal of M goes into the exact phases
            diag = diag - 0.5j * np.diag(M)
            rem0 = static - np.diag(np.diag(static)) - 0.5j * (M - np.diag(np.diag(M)))
        else:
            diag = diag.real.astype(complex)
            rem0 = static - np.diag(np.diag(static))
            if mode == "gksl":
                rem0 = rem0 - 0.5j * M
        self.diag = diag
        self.frame = bool(np.any(diag != 0))
        self.envelopes = [env for env, _ in ham.terms]
        # generator A(t) = -i R(t), R = rem0 + sum f_k V_k
        mats = [-1j * rem0] + [-1j * op for op in term_ops]
        small = d <= DENSE_MAX_DIM
        self.small = small
        self.pattern = _DenseStack(mats) if small else _SharedPattern(mats)
        conv = (lambda m: m) if small else sp.csr_matrix
        self.collapse = [(conv(L), L.conj().T.copy()) for L in Ls] if mode == "gksl" else []
        self._cache_t = None
        self._cache = None
        self._rem0 = rem0
        self._terms = term_ops

    def restrict(self, y: np.ndarray, density: bool) -> np.ndarray:
        if self.keep is None:
            return y
        if density:
            return y[..., self.keep[:, None], self.keep[None, :]]
        return y[self.keep]

    def expand(self, y: np.ndarray, density: bool) -> np.ndarray:
        if self.keep is None:
            return y
        d = self.space.dim
        if density:
            out = np.zeros(y.shape[:-2] + (d, d), dtype=complex)
            out[..., self.keep[:, None], self.keep[None, :]] = y
        else:
            out = np.zeros((d,) + y.shape[1:], dtype=complex)
            out[self.keep] = y
        return out

    def remainder_bound(self, t0: float, t1: float) -> float:
        b = _norm_bound(self._rem0)
        for env, op in zip(self.envelopes, self._terms):
            b += _envelope_bound(env, t0, t1) * _norm_bound(op)
        return b

    def _at(self, t: float):
        # RK4 evaluates each stage time twice in a row; cache the last one
        if self._cache_t != t:
            A = self.pattern.combine([1.0] + [env(t) for env in self.envelopes])
            Ah = A.conj().T if self.small else None
            u = self.phases(t) if self.frame else None
            phase = np.outer(u, u.conj()) if self.frame else None
            self._cache = (A, Ah, u, phase)
            self._cache_t = t
        return self._cache

    def A(self, t: float):
        return self._at(t)[0]

    def phases(self, t: float) -> np.ndarray:
        return np.exp(1j * self.diag * t)

    # state-vector right-hand side in the frame
    def rhs_state(self, t: float, y: np.ndarray) -> np.ndarray:
        if self.pattern.empty:
            return np.zeros_like(y)
        A, _, u, _ = self._at(t)
        if not self.frame:
            return A @ y
        if y.ndim == 1:
            return u * (A @ (y / u))
        return u[:, None] * (A @ (y / u[:, None]))

    # density-matrix right-hand side in the frame (``y`` may be batched)
    def rhs_density(self, t: float, y: np.ndarray) -> np.ndarray:
        A, Ah, _, phase = self._at(t)
        rho = y * phase.conj() if self.frame else y
        if self.small:
            out = A @ rho + rho @ Ah if not self.pattern.empty else np.zeros_like(rho)
            for L, Lh in self.collapse:
                out += L @ rho @ Lh
        else:
            out = np.zeros_like(rho)
            if not self.pattern.empty:
                out += _lmul(A, rho)
                out += _dag(_lmul(A, _dag(rho)))
            for L, _ in self.collapse:
                out += _dag(_lmul(L, _dag(_lmul(L, rho))))
        if self.frame:
            out *= phase
        return out

    def to_frame(self, y: np.ndarray, t: float, density: bool) -> np.ndarray:
        if not self.frame:
            return y.copy()
        u = self.phases(t)
        if density:
            return y * np.outer(u, u.conj())
        return (u * y.T).T if y.ndim > 1 else u * y

    def from_frame(self, y: np.ndarray, t: float, density: bool) -> np.ndarray:
        if not self.frame:
            return y.copy()
        u = self.phases(t)
        if density:
            return y * np.outer(u, u.conj()).conj()
        return (y.T / u).T if y.ndim > 1 else y / u


def _rk4(f, y: np.ndarray, t: float, h: float, n: int) -> np.ndarray:
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
        k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + h
    return y


def _sample_grid(t_span: Sequence[float], sample_times) -> np.ndarray:
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 >= t0:
        raise ConfigError(f"invalid time span {t_span}")
    if sample_times is None:
        return np.array([t0, t1]) if t1 > t0 else np.array([t0])
    ts = np.asarray(sample_times, dtype=float)
    if ts.ndim != 1 or ts.size == 0:
        raise ConfigError("sample_times must be a non-empty 1-d array")
    if np.any(np.diff(ts) <= 0) or ts[0] < t0 - 1e-12 or ts[-1] > t1 + 1e-12:
        raise ConfigError("sample_times must increase strictly within t_span")
    if ts[0] > t0:
        ts = np.concatenate([[t0], ts])
    return ts


def evolve(gen: _Generator, y0: np.ndarray, times: np.ndarray, config: IntegratorConfig,
           density: bool) -> list[np.ndarray]:
    """Integrate from ``times[0]`` and return lab-frame snapshots at every entry of ``times``."""
    if len(times) > 1:
        bound = gen.remainder_bound(times[0], times[-1])
        if config.step * bound >= config.stability_limit:
            raise ConfigError(
                f"step {config.step:g} too coarse: step*||R|| = {config.step * bound:.3g} "
                f">= {config.stability_limit}"
            )
    f = gen.rhs_density if density else gen.rhs_state
    y = gen.to_frame(gen.restrict(np.array(y0, dtype=complex), density), times[0], density)
    out = [np.array(y0, dtype=complex)]
    for ta, tb in zip(times[:-1], times[1:]):
        n = max(1, math.ceil((tb - ta) / config.step - 1e-9))
        h = (tb - ta) / n
        y = _rk4(f, y, ta, h, n)
        out.append(gen.expand(gen.from_frame(y, tb, density), density))
    return out


# ---------------------------------------------------------------------------
# public propagators


def _check_positive(rho: np.ndarray, tol: float, t: float) -> None:
    herm = 0.5 * (rho + rho.conj().T)
    lo = np.linalg.eigvalsh(herm).min()
    if lo < -tol:
        raise NumericalError(f"positivity violated at t={t:g}: min eigenvalue {lo:.3g}")


def propagate_schrodinger(H, psi0: StateVector, t_span, config: IntegratorConfig | None = None,
                          sample_times=None) -> Trajectory:
    config = config or IntegratorConfig()
    gen = _make_generator(H, (), "schrodinger", psi0.amplitudes, False, config.reduce)
    if psi0.space != gen.space:
        raise ConfigError("initial state and Hamiltonian live on different spaces")
    times = _sample_grid(t_span, sample_times)
    ys = evolve(gen, psi0.amplitudes, times, config, density=False)
    drift = abs(np.linalg.norm(ys[-1]) - psi0.norm)
    if drift > config.trace_tol:
        raise NumericalError(f"norm drift {drift:.3g} exceeds {config.trace_tol:g}")
    if config.renormalize:
        ys = [y / np.linalg.norm(y) for y in ys]
    return Trajectory(times, [StateVector(gen.space, y, normalized=False) for y in ys])


def propagate_nonhermitian(H, collapse_ops, psi0: StateVector, t_span,
                           config: IntegratorConfig | None = None, sample_times=None) -> Trajectory:
    """No-jump evolution under ``H - (i/2) sum L^dag L``; the norm decays."""
    config = config or IntegratorConfig()
    gen = _make_generator(H, collapse_ops, "nonhermitian", psi0.amplitudes, False, config.reduce)
    if psi0.space != gen.space:
        raise ConfigError("initial state and Hamiltonian live on different spaces")
    times = _sample_grid(t_span, sample_times)
    ys = evolve(gen, psi0.amplitudes, times, config, density=False)
    return Trajectory(times, [StateVector(gen.space, y, normalized=False) for y in ys])


def propagate_gksl(H, lindblads, rho0: DensityOperator, t_span,
                   config: IntegratorConfig | None = None, sample_times=None) -> Trajectory:
    config = config or IntegratorConfig()
    gen = _make_generator(H, lindblads, "gksl", rho0.matrix, True, config.reduce)
    if rho0.space != gen.space:
        raise ConfigError("initial state and Hamiltonian live on different spaces")
    times = _sample_grid(t_span, sample_times)
    ys = evolve(gen, rho0.matrix, times, config, density=True)
    drift = abs(np.trace(ys[-1]).real - rho0.trace)
    if drift > config.trace_tol:
        raise NumericalError(f"trace drift {drift:.3g} exceeds {config.trace_tol:g}")
    for t, y in zip(times, ys):
        _check_positive(y, config.positivity_tol, t)
    return Trajectory(times, [DensityOperator(gen.space, y) for y in ys])


def evolve_operators(H, lindblads, ops: np.ndarray, t_span,
                     config: IntegratorConfig | None = None) -> np.ndarray:
    """Push a batch ``(k, d, d)`` of arbitrary operators through the GKSL map.

    The map is linear, so non-positive inputs (operator bases) are allowed.
    """
    config = config or IntegratorConfig()
    ops = np.asarray(ops, dtype=complex)
    gen = _make_generator(H, lindblads, "gksl", ops, True, config.reduce)
    times = _sample_grid(t_span, None)
    return evolve(gen, ops, times, config, density=True)[-1]


def evolve_kets(H, kets: np.ndarray, t_span, config: IntegratorConfig | None = None,
                collapse_ops=()) -> np.ndarray:
    """Propagate the columns of ``kets`` (``(d,)`` or ``(d, k)``); returns the final array."""
    config = config or IntegratorConfig()
    mode = "nonhermitian" if collapse_ops else "schrodinger"
    kets = np.asarray(kets, dtype=complex)
    gen = _make_generator(H, collapse_ops, mode, kets, False, config.reduce)
    times = _sample_grid(t_span, None)
    return evolve(gen, kets, times, config, density=False)[-1]


# ---------------------------------------------------------------------------
# exact propagation for constant generators (small spaces)


def unitary(H, t: float) -> np.ndarray:
    """``exp(-i H t)`` for a constant Hamiltonian."""
    return scipy.linalg.expm(-1j * _matrix(H) * t)


def liouvillian(H, lindblads=()) -> np.ndarray:
    """Row-major vectorized GKSL generator: ``vec(rho) = rho.reshape(-1)``."""
    h = _matrix(H)
    d = h.shape[0]
    eye = np.eye(d)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for L in lindblads:
        L = _matrix(L)
        LdL = L.conj().T @ L
        gen += np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))
    return gen


def gksl_superoperator(H, lindblads, t: float, max_dim: int = 64) -> np.ndarray:
    """``exp(L t)`` acting on row-major ``vec(rho)``; only for ``dim <= max_dim``."""
    d = _matrix(H).shape[0]
    if d > max_dim:
        raise ConfigError(f"superoperator of dimension {d}^2 is too large (max_dim={max_dim})")
    return scipy.linalg.expm(liouvillian(H, lindblads) * t)


def _liouville_parts(ham: TimeDependentHamiltonian, lindblads) -> list[sp.csr_matrix]:
    d = ham.static.shape[0]
    eye = sp.identity(d, dtype=complex, format="csr")

    def comm(h):
        h = sp.csr_matrix(h)
        return -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))

    L0 = comm(ham.static)
    for L in lindblads:
        L = sp.csr_matrix(_matrix(L))
        LdL = (L.conj().T @ L).tocsr()
        L0 = L0 + sp.kron(L, L.conj()) - 0.5 * (sp.kron(LdL, eye) + sp.kron(eye, LdL.T))
    return [sp.csr_matrix(L0)] + [sp.csr_matrix(comm(op)) for _, op in ham.terms]


def _split_buckets(sizes: list[int]) -> list[list[int]]:
    """Partition block indices (sorted by size) into at most two padded buckets."""
    order = sorted(range(len(sizes)), key=lambda k: -sizes[k])
    best, cut = None, len(order)
    for c in range(1, len(order) + 1):
        cost = c * sizes[order[0]] ** 3
        if c < len(order):
            cost += (len(order) - c) * sizes[order[c]] ** 3
        if best is None or cost < best:
            best, cut = cost, c
    return [order[:cut], order[cut:]] if cut < len(order) else [order]


def _block_propagators(parts, envs, lam_parts, blocks, t0, t1, config):
    """Interaction-frame RK4 for ``dP/dt = A(t) P`` on a padded stack of blocks."""
    nb = len(blocks)
    smax = max(len(b) for b in blocks)
    stacks = np.zeros((len(parts), nb, smax, smax), dtype=complex)
    for k, b in enumerate(blocks):
        ix = np.ix_(b, b)
        for j, P in enumerate(parts):
            stacks[j, k, : len(b), : len(b)] = P[ix].toarray()
    lam = np.zeros((nb, smax), dtype=complex)
    for k, b in enumerate(blocks):
        lam[k, : len(b)] = lam_parts[b]
        np.fill_diagonal(stacks[0, k], 0.0)
    ops = [(env, stacks[j]) for env, j in zip(envs, range(1, len(parts)))]
    cache = {}

    def rhs(t, z):
        if t not in cache:
            cache.clear()
            A = stacks[0].copy()
            for env, op in ops:
                c = env(t)
                if c != 0:
                    A += c * op
            u = np.exp(lam * t)
            cache[t] = (u[:, None, :] / u[:, :, None]) * A
        return cache[t] @ z

    z = np.broadcast_to(np.eye(smax, dtype=complex), (nb, smax, smax)).copy()
    if t1 > t0:
        n = max(1, math.ceil((t1 - t0) / config.step - 1e-9))
        z = _rk4(rhs, z, t0, (t1 - t0) / n, n)
        z = np.exp(lam * t1)[:, :, None] * z / np.exp(lam * t0)[:, None, :]
    return [z[k, : len(b), : len(b)] for k, b in enumerate(blocks)]


def gksl_propagator(H, lindblads, t_span, config: IntegratorConfig | None = None,
                    max_dim: int = 32) -> np.ndarray:
    """Superoperator of the GKSL evolution over ``t_span`` on row-major ``vec(rho)``.

    Liouville space is split into the connected components of the
    generator's sparsity graph; each block is integrated with the same
    interaction-frame RK4 as the state propagators, starting from identity.
    A block that is the transpose image of an already computed one is filled
    in by complex conjugation, since the map preserves Hermiticity.
    """
    config = config or IntegratorConfig()
    ham = _as_hamiltonian(H)
    d = ham.static.shape[0]
    if d > max_dim:
        raise ConfigError(f"propagator of dimension {d}^2 is too large (max_dim={max_dim})")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 >= t0:
        raise ConfigError(f"invalid time span {t_span}")
    parts = _liouville_parts(ham, list(lindblads))
    pattern = parts[0] != 0
    for P in parts[1:]:
        pattern = pattern + (P != 0)
    ncomp, labels = connected_components(pattern, directed=True, connection="weak")
    blocks = [np.flatnonzero(labels == c) for c in range(ncomp)]
    envs = [env for env, _ in ham.terms]
    lam_parts = parts[0].diagonal()

    if t1 > t0:
        r0 = parts[0] - sp.diags(lam_parts)
        bound = _norm_bound(r0.toarray())
        for env, P in zip(envs, parts[1:]):
            bound += _envelope_bound(env, t0, t1) * _norm_bound(P.toarray())
        if config.step * bound >= config.stability_limit:
            raise ConfigError(
                f"step {config.step:g} too coarse: step*||R|| = {config.step * bound:.3g} "
                f">= {config.stability_limit}"
            )

    swap = np.arange(d * d).reshape(d, d).T.reshape(-1)
    todo, mirror = [], {}
    for c, b in enumerate(blocks):
        partner = labels[swap[b[0]]]
        if partner < c and partner not in mirror:
            mirror[c] = partner
        else:
            todo.append(c)
    results = {}
    for bucket in _split_buckets([len(blocks[c]) for c in todo]):
        cs = [todo[k] for k in bucket]
        for c, P in zip(cs, _block_propagators(parts, envs, lam_parts, [blocks[c] for c in cs], t0, t1, config)):
            results[c] = P
    out = np.zeros((d * d, d * d), dtype=complex)
    for c, P in results.items():
        out[np.ix_(blocks[c], blocks[c])] = P
    for c, partner in mirror.items():
        b = blocks[c]
        out[np.ix_(b, b)] = out[np.ix_(swap[b], swap[b])].conj()
    return out


def unitary_propagator(H, t_span, config: IntegratorConfig | None = None) -> np.ndarray:
    """Full propagator ``U(t1, t0)`` of a time-dependent Hamiltonian.

    Integrated block by block over the connected components of the
    Hamiltonian's sparsity graph (e.g. fixed total photon number).
    """
    config = config or IntegratorConfig()
    ham = _as_hamiltonian(H)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 >= t0:
        raise ConfigError(f"invalid time span {t_span}")
    parts = [sp.csr_matrix(-1j * ham.static)] + [sp.csr_matrix(-1j * op) for _, op in ham.terms]
    pattern = parts[0] != 0
    for P in parts[1:]:
        pattern = pattern + (P != 0)
    ncomp, labels = connected_components(pattern, directed=False)
    blocks = [np.flatnonzero(labels == c) for c in range(ncomp)]
    envs = [env for env, _ in ham.terms]
    lam_parts = parts[0].diagonal()
    if t1 > t0:
        gen = _Generator(ham)
        bound = gen.remainder_bound(t0, t1)
        if config.step * bound >= config.stability_limit:
            raise ConfigError(
                f"step {config.step:g} too coarse: step*||R|| = {config.step * bound:.3g} "
                f">= {config.stability_limit}"
            )
    d = ham.static.shape[0]
    out = np.zeros((d, d), dtype=complex)
    sizes = [len(b) for b in blocks]
    for bucket in _split_buckets(sizes):
        bl = [blocks[k] for k in bucket]
        for b, P in zip(bl, _block_propagators(parts, envs, lam_parts, bl, t0, t1, config)):
            out[np.ix_(b, b)] = P
    return out


def apply_superoperator(S: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[-1]
    flat = rho.reshape(rho.shape[:-2] + (d * d,))
    return (flat @ S.T).reshape(rho.shape)


# ---------------------------------------------------------------------------
# analytic photon-loss channel


def loss_kraus_operators(cutoff: int, gamma: float, t: float, l_max: int) -> list[np.ndarray]:
    """``E_l = sqrt((1 - e^{-gt})^l / l!) e^{-gt n / 2} a^l`` for ``l = 0..l_max``."""
    a = annihilation(cutoff).matrix
    n = np.arange(cutoff + 1)
    damp = np.diag(np.exp(-0.5 * gamma * t * n))
    q = 1.0 - math.exp(-gamma * t)
    ops = []
    al = np.eye(cutoff + 1)
    for ell in range(l_max + 1):
        ops.append(math.sqrt(q**ell / math.factorial(ell)) * damp @ al)
        al = al @ a
    return ops


def kraus_free_decay(rho0: DensityOperator, gamma: float, t: float, l_max: int | None = None,
                     mode: int = 0) -> DensityOperator:
    """Apply the closed-form photon-loss channel to mode ``mode`` of ``rho0``."""
    space = rho0.space
    cutoff = space.check_index(mode).cutoff
    if l_max is None:
        l_max = cutoff
    kraus = loss_kraus_operators(cutoff, gamma, t, l_max)
    full = [embed(k, space, mode).matrix for k in kraus] if len(space) > 1 else kraus
    rho = sum(K @ rho0.matrix @ K.conj().T for K in full)
    if l_max < cutoff:
        deficit = rho0.trace - np.trace(rho).real
        warnings.warn(
            f"l_max={l_max} < cutoff={cutoff}: loss channel incomplete, trace deficit {deficit:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return DensityOperator(space, rho)


def apply_kraus(rho: np.ndarray, kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(K @ rho @ K.conj().T for K in kraus)


__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "apply_kraus",
    "evolve",
    "evolve_kets",
    "evolve_operators",
    "apply_superoperator",
    "gksl_propagator",
    "gksl_superoperator",
    "invariant_subspace",
    "kraus_free_decay",
    "liouvillian",
    "loss_kraus_operators",
    "propagate_gksl",
    "propagate_nonhermitian",
    "propagate_schrodinger",
    "unitary",
    "unitary_propagator",
]
