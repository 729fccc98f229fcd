"""Second-order effective theory for the beam-splitter CZ and the dispersive ancilla.

Two-mode bare energies are ``E_{n1 n2} = sum_i K_i n_i (n_i - 1) + Delta_i n_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ResonanceError
from .fock import CompositeSpace, LinearOperator, Mode, Qubit

DEFAULT_RESONANCE_FACTOR = 10.0


@dataclass(frozen=True)
class CzEnergyCorrections:
    """Level shifts of ``|02>, |20>, |22>`` and the signed conditional shift."""

    dE02: float
    dE20: float
    dE22: float
    delta_e: float

    @property
    def magnitude(self) -> float:
        return abs(self.delta_e)

    @property
    def sign(self) -> int:
        return 1 if self.delta_e >= 0 else -1

    def scaled(self, factor: float) -> "CzEnergyCorrections":
        """Corrections at coupling ``g * sqrt(factor)``; everything is ``g^2``-linear."""
        return CzEnergyCorrections(
            self.dE02 * factor, self.dE20 * factor, self.dE22 * factor, self.delta_e * factor
        )


def bare_energy(K: tuple[float, float], delta: tuple[float, float], n1: int, n2: int) -> float:
    return K[0] * n1 * (n1 - 1) + delta[0] * n1 + K[1] * n2 * (n2 - 1) + delta[1] * n2


def _check_denominators(dens: dict[str, float], g: float, factor: float) -> None:
    limit = factor * abs(g)
    for term, den in dens.items():
        if abs(den) < limit or den == 0:
            raise ResonanceError(term, den, limit)


def delta_e(K1: float, K2: float, D1: float, D2: float, g: float,
            resonance_factor: float = DEFAULT_RESONANCE_FACTOR) -> CzEnergyCorrections:
    """Analytic second-order shifts with ``dt = D1 - D2``.

    Raises :class:`ResonanceError` when a denominator is smaller than
    ``resonance_factor * |g|``; with ``g = 0`` only exact zeros are rejected.
    """
    dt = D1 - D2
    dens = {
        "dE02 (2K2 - dD)": 2 * K2 - dt,
        "dE20 (2K1 + dD)": 2 * K1 + dt,
        "dE22 (4K1 - 2K2 + dD)": 4 * K1 - 2 * K2 + dt,
        "dE22 (4K2 - 2K1 - dD)": 4 * K2 - 2 * K1 - dt,
    }
    _check_denominators(dens, g, resonance_factor)
    d02, d20, d22a, d22b = dens.values()
    g2 = g * g
    e02 = 2 * g2 / d02
    e20 = 2 * g2 / d20
    e22 = -6 * g2 / d22a - 6 * g2 / d22b
    return CzEnergyCorrections(e02, e20, e22, e22 - e02 - e20)


def _block(total: int) -> list[tuple[int, int]]:
    return [(n1, total - n1) for n1 in range(total + 1)]


def _block_hamiltonian(K, D, g, states):
    h = np.diag([bare_energy(K, D, *s) for s in states]).astype(float)
    for a, (n1, n2) in enumerate(states):
        for b, (m1, m2) in enumerate(states):
            # a1^dag a2 |m1, m2> -> sqrt((m1 + 1) m2) |m1 + 1, m2 - 1>
            if n1 == m1 + 1 and n2 == m2 - 1:
                h[a, b] += g * math.sqrt((m1 + 1) * m2)
                h[b, a] += g * math.sqrt((m1 + 1) * m2)
    return h


def _dressed_shift(K, D, g, target: tuple[int, int]) -> float:
    states = _block(sum(target))
    h = _block_hamiltonian(K, D, g, states)
    w, v = np.linalg.eigh(h)
    k = states.index(target)
    j = int(np.argmax(np.abs(v[k, :])))
    return float(w[j] - h[k, k])


def exact_delta_e(K1: float, K2: float, D1: float, D2: float, g: float) -> CzEnergyCorrections:
    """Shifts from exact diagonalization of the number-conserving blocks.

    Each bare level is identified with the eigenvector of largest overlap,
    which is unambiguous while the couplings stay perturbative.
    """
    K, D = (K1, K2), (D1, D2)
    e02 = _dressed_shift(K, D, g, (0, 2))
    e20 = _dressed_shift(K, D, g, (2, 0))
    e22 = _dressed_shift(K, D, g, (2, 2))
    return CzEnergyCorrections(e02, e20, e22, e22 - e02 - e20)


class AdiabaticityDiagnostic(NamedTuple):
    max_coupling: float
    min_gap: float
    timescale: float
    duration: float

    @property
    def ratio(self) -> float:
        """``duration / (max g / min gap^2)``; adiabatic when this is large."""
        return self.duration / self.timescale


def adiabaticity_diagnostic(K1, K2, D1, D2, pulse, samples: int = 201) -> AdiabaticityDiagnostic:
    """Compare a pulse duration with ``max g(t) / gap(t)^2``.

    ``gap(t)`` is the smallest distance between the instantaneous level
    connected to ``|02>`` or ``|20>`` and any other level of its block.
    """
    lo, hi = pulse.window
    ts = np.linspace(lo, hi, samples)
    K, D = (K1, K2), (D1, D2)
    states = _block(2)
    worst = 0.0
    gmax = 0.0
    gap_min = math.inf
    for t in ts:
        gt = float(pulse(float(t)))
        w, v = np.linalg.eigh(_block_hamiltonian(K, D, gt, states))
        for target in ((0, 2), (2, 0)):
            j = int(np.argmax(np.abs(v[states.index(target), :])))
            gap = float(np.min(np.abs(np.delete(w, j) - w[j])))
            if gap == 0:
                raise ResonanceError(f"instantaneous gap of |{target[0]}{target[1]}>", 0.0, 0.0)
            gap_min = min(gap_min, gap)
            worst = max(worst, abs(gt) / gap**2)
        gmax = max(gmax, abs(gt))
    return AdiabaticityDiagnostic(gmax, gap_min, worst, hi - lo)


# ---------------------------------------------------------------------------
# dispersive ancilla coupling


def _jc_denominators(K: float, D: float, E: float, n: int) -> tuple[float, float]:
    return 2 * K * (n - 1) + D - E, 2 * K * n + D - E


def effective_jc_hamiltonian(K: float, D: float, E: float, gp: float, cutoff: int,
                             resonance_factor: float = DEFAULT_RESONANCE_FACTOR) -> LinearOperator:
    """Diagonal second-order JC shift on mode (x) qubit, qubit index 0 = down.

    ``down: gp^2 n / (2K(n-1) + D - E)``, ``up: -gp^2 (n+1) / (2Kn + D - E)``.
    """
    space = CompositeSpace((Mode(cutoff), Qubit()))
    diag = np.zeros(space.dim)
    limit = resonance_factor * abs(gp)
    g2 = gp * gp
    for n in range(cutoff + 1):
        den_dn, den_up = _jc_denominators(K, D, E, n)
        if n > 0:
            if abs(den_dn) < limit or den_dn == 0:
                raise ResonanceError(f"down branch at n={n}", den_dn, limit)
            diag[2 * n] = g2 * n / den_dn
        if abs(den_up) < limit or den_up == 0:
            raise ResonanceError(f"up branch at n={n}", den_up, limit)
        diag[2 * n + 1] = -g2 * (n + 1) / den_up
    return LinearOperator(space, np.diag(diag))


@dataclass(frozen=True)
class DispersiveCoefficients:
    """``a0 + a1 n + a2 n^2 + b0 |up><up| + (b1 n + b2 n^2) |up><up|``.

    Includes the bare ``K n(n-1) + D n + E/2 sigma_z``; ``chi`` is ``b1``.
    """

    a0: float
    a1: float
    a2: float
    b0: float
    b1: float
    b2: float

    @property
    def chi(self) -> float:
        return self.b1

    def energy(self, n: int, up: bool) -> float:
        e = self.a0 + self.a1 * n + self.a2 * n * n
        if up:
            e += self.b0 + self.b1 * n + self.b2 * n * n
        return e

    def sigma_z_form(self) -> dict[str, float]:
        """Rewrite with ``|up><up| = (I + sigma_z)/2``; valid when ``b2 = 0``.

        Keys: ``n2``, ``n``, ``sz``, ``n_up`` and the global ``const``.
        """
        return {
            "n2": self.a2,
            "n": self.a1,
            "sz": 0.5 * self.b0,
            "n_up": self.b1,
            "n2_up": self.b2,
            "const": self.a0 + 0.5 * self.b0,
        }


def fit_dispersive_coefficients(K: float, D: float, E: float, gp: float,
                                resonance_factor: float = DEFAULT_RESONANCE_FACTOR) -> DispersiveCoefficients:
    """Exact 6x6 fit of bare plus second-order energies on ``n = 0, 1, 2``."""
    hi = np.diag(effective_jc_hamiltonian(K, D, E, gp, 3, resonance_factor).matrix).real
    rows, rhs = [], []
    for n in range(3):
        for up in (0, 1):
            bare = K * n * (n - 1) + D * n + (0.5 * E if up else -0.5 * E)
            rows.append([1, n, n * n, up, up * n, up * n * n])
            rhs.append(bare + hi[2 * n + up])
    coeffs = np.linalg.solve(np.array(rows, dtype=float), np.array(rhs))
    return DispersiveCoefficients(*(float(c) for c in coeffs))


def parity_point_coefficients(K: float, D: float, E: float, gp: float) -> dict[str, float]:
    """Closed-form effective Hamiltonian at ``D - E = -K`` in ``sigma_z_form`` keys."""
    s = gp * gp / K
    return {
        "n2": K + 2 * s,
        "n": D - K - 3 * s,
        "sz": 0.5 * E + 0.5 * s,
        "n_up": -2 * s,
        "n2_up": 0.0,
    }


class ParityCheck(NamedTuple):
    ok: bool
    residual: float


def check_parity_condition(K: float, D: float, E: float, tol: float = 1e-9) -> ParityCheck:
    """``D - E = -K`` makes the dispersive shift linear in ``n``."""
    if not tol >= 0:
        raise ConfigError("tolerance must be non-negative")
    residual = D - E + K
    return ParityCheck(abs(residual) <= tol, residual)


__all__ = [
    "AdiabaticityDiagnostic",
    "CzEnergyCorrections",
    "DispersiveCoefficients",
    "ParityCheck",
    "parity_point_coefficients",
    "adiabaticity_diagnostic",
    "bare_energy",
    "check_parity_condition",
    "delta_e",
    "effective_jc_hamiltonian",
    "exact_delta_e",
    "fit_dispersive_coefficients",
]
