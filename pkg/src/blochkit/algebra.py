"""Dense complex-matrix core for two-level (and two-qubit) systems.

Pauli constants, Bloch-vector conversions, spectral decomposition with
degeneracy merging, the projective measurement rule, Lindblad
dissipators, and tensor-product helpers. All matrices are small dense
numpy arrays (2x2 here, 4x4 for bipartite systems); functions never
mutate their arguments.

Basis convention: |up> = (1, 0)^T is the +1 eigenvector of sigma_z
(the excited state), |down> = (0, 1)^T the ground state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-10
# Freshly constructed states satisfy trace/positivity to 1e-12; validation
# admits 1e-9 so states carried through long float pipelines still pass.
DENSITY_VALIDATION_TOL = 1e-9
EIGENVALUE_MERGE_TOL = 1e-9
BLOCH_NORM_TOL = 1e-9

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T


def adjoint(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.asarray(a).conj().T


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def _require_square(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def validate_density(rho: np.ndarray) -> np.ndarray:
    """Check that rho is a valid density matrix and return it as complex."""
    rho = _require_square(rho, "rho")
    if not is_hermitian(rho):
        raise ValueError("density matrix must be self-adjoint")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > DENSITY_VALIDATION_TOL:
        raise ValueError(f"density matrix must have unit trace, got {tr}")
    eigs = np.linalg.eigvalsh(rho)
    if eigs.min() < -DENSITY_VALIDATION_TOL:
        raise ValueError(f"density matrix must be positive, min eigenvalue {eigs.min()}")
    return rho


def density_from_bloch(r) -> np.ndarray:
    """Build the density matrix (I + x sx + y sy + z sz) / 2 for a Bloch vector."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise ValueError(f"Bloch vector must have 3 components, got shape {r.shape}")
    norm = float(np.linalg.norm(r))
    if norm > 1.0 + BLOCH_NORM_TOL:
        raise ValueError(f"Bloch vector length {norm} exceeds 1, not a state")
    x, y, z = r
    return 0.5 * (SIGMA_0 + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


def bloch_from_density(rho: np.ndarray) -> np.ndarray:
    """Bloch coordinates (tr[rho sx], tr[rho sy], tr[rho sz]) of a 2x2 state."""
    rho = validate_density(rho)
    if rho.shape != (2, 2):
        raise ValueError("Bloch coordinates are defined for 2x2 states")
    return np.array(
        [
            np.trace(rho @ SIGMA_X).real,
            np.trace(rho @ SIGMA_Y).real,
            np.trace(rho @ SIGMA_Z).real,
        ]
    )


@dataclass(frozen=True)
class SpectralDecomposition:
    """Distinct eigenvalues and the projectors onto their eigenspaces.

    Projectors resolve the identity, are mutually orthogonal, and
    reconstruct the decomposed operator as sum(a * P_a).
    """

    eigenvalues: np.ndarray
    projectors: tuple

    def reconstruct(self) -> np.ndarray:
        out = np.zeros_like(self.projectors[0])
        for a, p in zip(self.eigenvalues, self.projectors):
            out = out + a * p
        return out


def spectral_decompose(a: np.ndarray) -> SpectralDecomposition:
    """Spectral decomposition of a self-adjoint matrix.

    Eigenvalues closer than EIGENVALUE_MERGE_TOL are merged into a single
    projector. 2x2 inputs use the closed-form quadratic eigensolve; larger
    self-adjoint inputs fall back to numpy's eigh.
    """
    a = _require_square(a, "a")
    if not is_hermitian(a):
        raise ValueError("spectral decomposition requires a self-adjoint matrix")
    if a.shape == (2, 2):
        return _spectral_2x2(a)
    eigvals, vecs = np.linalg.eigh(a)
    groups: list[list[int]] = [[0]]
    for i in range(1, len(eigvals)):
        if eigvals[i] - eigvals[groups[-1][-1]] <= EIGENVALUE_MERGE_TOL:
            groups[-1].append(i)
        else:
            groups.append([i])
    values = []
    projectors = []
    for idx in groups:
        values.append(float(np.mean(eigvals[idx])))
        v = vecs[:, idx]
        projectors.append(v @ v.conj().T)
    return SpectralDecomposition(np.array(values), tuple(projectors))


def _spectral_2x2(a: np.ndarray) -> SpectralDecomposition:
    m = 0.5 * (a[0, 0].real + a[1, 1].real)
    s = np.sqrt(0.25 * (a[0, 0].real - a[1, 1].real) ** 2 + abs(a[0, 1]) ** 2)
    if 2.0 * s <= EIGENVALUE_MERGE_TOL:
        return SpectralDecomposition(np.array([m]), (np.eye(2, dtype=complex),))
    lo, hi = m - s, m + s
    # P_hi = (A - lo I) / (hi - lo), and its complement; exact for 2x2
    p_hi = (a - lo * np.eye(2)) / (hi - lo)
    p_lo = np.eye(2) - p_hi
    return SpectralDecomposition(np.array([lo, hi]), (p_lo, p_hi))


def measurement_probabilities(rho: np.ndarray, a: np.ndarray) -> list[tuple[float, float]]:
    """Outcome probabilities tr[rho P_a] for measuring observable a in state rho."""
    rho = validate_density(rho)
    dec = spectral_decompose(a)
    return [(float(val), float(np.trace(rho @ p).real)) for val, p in zip(dec.eigenvalues, dec.projectors)]


def project_postulate(rho: np.ndarray, a: np.ndarray, outcome: float) -> np.ndarray:
    """Post-measurement state P rho P / tr[rho P] for the given eigenvalue outcome."""
    rho = validate_density(rho)
    dec = spectral_decompose(a)
    idx = int(np.argmin(np.abs(dec.eigenvalues - outcome)))
    if abs(dec.eigenvalues[idx] - outcome) > EIGENVALUE_MERGE_TOL:
        raise ValueError(f"{outcome} is not an eigenvalue of the observable")
    p = dec.projectors[idx]
    prob = np.trace(rho @ p).real
    if prob <= 1e-12:
        raise ValueError("conditioning on a zero-probability outcome")
    return p @ rho @ p / prob


def lindblad_dissipator(l_op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Dissipator ([L, rho L*] + [L rho, L*]) / 2 for coupling operator L."""
    l_op = _require_square(l_op, "l_op")
    rho = _require_square(rho, "rho")
    if l_op.shape != rho.shape:
        raise ValueError(f"dimension mismatch: {l_op.shape} vs {rho.shape}")
    ld = l_op.conj().T
    rl = rho @ ld
    lr = l_op @ rho
    return 0.5 * (l_op @ rl - rl @ l_op) + 0.5 * (lr @ ld - ld @ lr)


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, first factor on the left."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def partial_trace(m: np.ndarray, subsystem: int) -> np.ndarray:
    """Trace a 4x4 bipartite operator over one 2-level subsystem.

    subsystem selects which factor to trace out: 0 for the first,
    1 for the second.
    """
    m = _require_square(m, "m")
    if m.shape != (4, 4):
        raise ValueError(f"partial trace expects a 4x4 matrix, got {m.shape}")
    if subsystem not in (0, 1):
        raise ValueError("subsystem must be 0 or 1")
    r = m.reshape(2, 2, 2, 2)
    if subsystem == 1:
        return np.einsum("ikjk->ij", r)
    return np.einsum("kikj->ij", r)


def matrix_to_json(a: np.ndarray) -> list:
    """Encode a complex matrix as nested lists of [re, im] pairs."""
    a = np.asarray(a, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in a]


def matrix_from_json(data) -> np.ndarray:
    """Decode the [re, im]-pair representation produced by matrix_to_json."""
    return np.array([[complex(entry[0], entry[1]) for entry in row] for row in data])
