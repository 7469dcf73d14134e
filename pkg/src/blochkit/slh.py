"""Network-parameter algebra for open systems.

An open system is summarised by a pair G = (L, H): a vector of coupling
operators L (one per field channel) and a self-adjoint Hamiltonian H.
Systems compose by concatenation (stack channels, add Hamiltonians) and
by the series product (cascade one system's output field into another's
input). The scattering matrix is fixed to the identity and not
represented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from blochkit.algebra import (
    HERMITIAN_TOL,
    SIGMA_MINUS,
    SIGMA_X,
    SIGMA_Z,
    is_hermitian,
    lindblad_dissipator,
    matrix_from_json,
    matrix_to_json,
)


@dataclass(frozen=True)
class SLHParams:
    """Coupling-operator vector plus Hamiltonian of an open system."""

    couplings: tuple
    hamiltonian: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        if not is_hermitian(h, HERMITIAN_TOL):
            raise ValueError("hamiltonian must be self-adjoint")
        couplings = tuple(np.asarray(l, dtype=complex) for l in self.couplings)
        for l in couplings:
            if l.shape != h.shape:
                raise ValueError(f"coupling shape {l.shape} does not match system dimension {h.shape}")
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "hamiltonian", h)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n_channels(self) -> int:
        return len(self.couplings)


def operator_im(a: np.ndarray) -> np.ndarray:
    """Operator imaginary part (A - A*) / 2i; self-adjoint for any A."""
    a = np.asarray(a, dtype=complex)
    return (a - a.conj().T) / 2.0j


def concat(g1: SLHParams, g2: SLHParams) -> SLHParams:
    """Side-by-side assembly: channels of g1 then g2, Hamiltonians added."""
    if g1.dim != g2.dim:
        raise ValueError(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    return SLHParams(g1.couplings + g2.couplings, g1.hamiltonian + g2.hamiltonian)


def series(g2: SLHParams, g1: SLHParams) -> SLHParams:
    """Cascade g1's output field into g2: (L2, H2) <| (L1, H1).

    Both factors must be single-channel; route multi-channel systems
    explicitly through concat and per-channel decomposition. The result
    is (L1 + L2, H1 + H2 + Im[L2* L1]).
    """
    for name, g in (("g2", g2), ("g1", g1)):
        if g.n_channels != 1:
            raise ValueError(f"series requires single-channel factors, {name} has {g.n_channels}")
    if g1.dim != g2.dim:
        raise ValueError(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    l1 = g1.couplings[0]
    l2 = g2.couplings[0]
    h = g1.hamiltonian + g2.hamiltonian + operator_im(l2.conj().T @ l1)
    return SLHParams((l1 + l2,), h)


def master_rhs(g: SLHParams, rho: np.ndarray) -> np.ndarray:
    """Right-hand side i[rho, H] + sum of channel dissipators."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != g.hamiltonian.shape:
        raise ValueError(f"state shape {rho.shape} does not match system dimension {g.hamiltonian.shape}")
    h = g.hamiltonian
    out = 1.0j * (rho @ h - h @ rho)
    for l in g.couplings:
        out = out + lindblad_dissipator(l, rho)
    return out


def atom_params(kappa1: float, kappa2: float, omega: float, u: float = 0.0) -> SLHParams:
    """Two-channel atom: couplings sqrt(k) sigma_minus, H(u) = (omega sz + u sx)/2."""
    if kappa1 < 0 or kappa2 < 0:
        raise ValueError("coupling rates must be nonnegative")
    h = 0.5 * (omega * SIGMA_Z + u * SIGMA_X)
    return SLHParams((np.sqrt(kappa1) * SIGMA_MINUS, np.sqrt(kappa2) * SIGMA_MINUS), h)


def slh_to_json(g: SLHParams) -> dict:
    return {
        "couplings": [matrix_to_json(l) for l in g.couplings],
        "hamiltonian": matrix_to_json(g.hamiltonian),
    }


def slh_from_json(data: dict) -> SLHParams:
    return SLHParams(
        tuple(matrix_from_json(l) for l in data["couplings"]),
        matrix_from_json(data["hamiltonian"]),
    )
