"""Direct-coupling coherent feedback on a plant-controller qubit pair.

Plant and controller are idle two-level systems; all dynamics happens
through impulsively applied bipartite unitaries (CNOT gates). The
canonical schedule CNOT with plant control followed by CNOT with
controller control moves any pure plant state onto the controller and
leaves the plant in its ground state.

Bit convention: |0> is the ground state |down> = (0, 1)^T and |1> the
excited state |up> = (1, 0)^T. Two-qubit amplitudes are ordered
|q_plant q_controller> with the plant as the left (slow) factor.
"""

from __future__ import annotations

import numpy as np

from blochkit.algebra import partial_trace, tensor

KET_UP = np.array([1.0, 0.0], dtype=complex)
KET_DOWN = np.array([0.0, 1.0], dtype=complex)

_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_EXCITED = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
_GROUND = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)


def cnot(control: str) -> np.ndarray:
    """CNOT with the named subsystem ('P' or 'C') as the control bit.

    Flips the other qubit when the control is excited (bit 1).
    """
    if control == "P":
        return tensor(_EXCITED, _X) + tensor(_GROUND, np.eye(2))
    if control == "C":
        return tensor(_X, _EXCITED) + tensor(np.eye(2), _GROUND)
    raise ValueError("control must be 'P' or 'C'")


def transfer_schedule() -> list[tuple[float, np.ndarray]]:
    """The canonical ground-state transfer schedule."""
    return [(0.0, cnot("P")), (1.0, cnot("C"))]


def apply_direct_schedule(state: np.ndarray, schedule) -> np.ndarray:
    """Apply a sequence of (time, unitary) impulses to a two-qubit state.

    Between impulses both systems are idle, so only the ordering of the
    unitaries matters; times must still be increasing.
    """
    psi = np.asarray(state, dtype=complex)
    if psi.shape != (4,):
        raise ValueError("state must be a 4-component amplitude vector")
    prev = -np.inf
    for t, v in schedule:
        if t <= prev:
            raise ValueError("schedule times must be strictly increasing")
        prev = t
        v = np.asarray(v, dtype=complex)
        if v.shape != (4, 4):
            raise ValueError("impulse unitaries must be 4x4")
        psi = v @ psi
    return psi


def heisenberg_conjugate(v: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Heisenberg-picture update V* X V of an observable across an impulse."""
    v = np.asarray(v, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if v.shape != x.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs {x.shape}")
    return v.conj().T @ x @ v


def verify_transfer(plant_state) -> tuple[bool, float]:
    """Run the transfer schedule from controller |down>; report ground fidelity.

    Returns (reached, fidelity) where fidelity is <down| rho_P |down> of
    the plant's reduced state after the schedule.
    """
    plant = np.asarray(plant_state, dtype=complex)
    if plant.shape != (2,):
        raise ValueError("plant state must be a 2-component amplitude vector")
    norm = np.linalg.norm(plant)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError("plant state must be normalized")
    psi = np.kron(plant, KET_DOWN)
    psi = apply_direct_schedule(psi, transfer_schedule())
    rho = np.outer(psi, psi.conj())
    rho_plant = partial_trace(rho, subsystem=1)
    fidelity = float((KET_DOWN.conj() @ rho_plant @ KET_DOWN).real)
    return fidelity >= 1.0 - 1e-12, fidelity
