"""Minimum-time impulse control on the sphere: quasivariational inequality.

Continuous motion is the pure drift rotation about z at rate omega;
control acts only through instantaneous rotations about x, available at
zero time cost from a discretized set of angles. The value function is
computed by iterating the combined Bellman operator

    S <- min( S + dtau * (drift upwind term + 1), min_v S(rotate(., v)) )

downward from a large constant supersolution (the target clamped to
zero). Because the identity rotation belongs to the impulse set, the
all-zero function is a fixed point of this operator from below, so the
iteration must start from above; at its fixed point the impulse branch
residual vanishes identically and the drift branch residual is
nonnegative, which is exactly the discrete quasivariational inequality
with complementarity.
"""

from __future__ import annotations

import numpy as np

from blochkit.errors import ConvergenceError
from blochkit.hjb.grids import FeedbackLaw, PolarGrid, ValueFunction, polar_to_sphere, sphere_to_polar
from blochkit.hjb.time_optimal import _directional_diff, _target_clamp
from blochkit.hybrid import impulse_matrix


def default_impulse_angles(n: int = 64) -> np.ndarray:
    """n rotation angles uniform in [0, 2pi), including the identity."""
    return 2.0 * np.pi * np.arange(n) / n


def _impulse_stencils(grid: PolarGrid, angles: np.ndarray):
    """Bilinear gather stencils for every (node, rotation angle) pair.

    Returns flat node indices (4, n_angles, n_nodes) and matching
    weights for evaluating S(rotate(node, v)) by interpolation.
    """
    nodes = grid.cartesian().reshape(-1, 3)
    idx = np.empty((4, len(angles), nodes.shape[0]), dtype=np.intp)
    wgt = np.empty((4, len(angles), nodes.shape[0]))
    for k, v in enumerate(angles):
        rotated = nodes @ impulse_matrix(v).T
        th, ph = sphere_to_polar(rotated)
        pairs, weights = grid.interp_weights(th, ph)
        for c, ((i, j), w) in enumerate(zip(pairs, weights)):
            idx[c, k] = i * grid.n_phi + j
            wgt[c, k] = w
    return idx, wgt


def _impulse_min(flat_values: np.ndarray, idx, wgt) -> np.ndarray:
    """min over angles of the interpolated rotated values, per node."""
    interp = (
        wgt[0] * flat_values[idx[0]]
        + wgt[1] * flat_values[idx[1]]
        + wgt[2] * flat_values[idx[2]]
        + wgt[3] * flat_values[idx[3]]
    )
    return interp.min(axis=0)


def solve_qvi(
    grid: PolarGrid,
    omega: float,
    target: tuple[float, float],
    impulse_angles: np.ndarray | None = None,
    tol: float = 1e-6,
    max_sweeps: int = 500_000,
    cfl_safety: float = 0.9,
    supersolution: float = 1e3,
) -> tuple[ValueFunction, FeedbackLaw]:
    """Solve the impulse-control minimum-time problem on the sphere.

    Returns the value function and a feedback law assigning each node
    either the drift action (code -1) or the index of the best impulse
    angle.
    """
    if abs(omega) <= 0:
        raise ValueError("the drift rate omega must be nonzero for reachability")
    angles = default_impulse_angles() if impulse_angles is None else np.asarray(impulse_angles, dtype=float)
    clamp, target_node = _target_clamp(grid, target)
    free = ~clamp
    idx, wgt = _impulse_stencils(grid, angles)
    a_phi = omega * np.ones((grid.n_theta, grid.n_phi))
    dtau = cfl_safety * grid.d_phi / abs(omega)
    stop = 0.05 * tol * dtau

    values = np.full((grid.n_theta, grid.n_phi), float(supersolution))
    values[clamp] = 0.0
    monotone = True
    for sweep in range(max_sweeps):
        drift = values + dtau * (
            _directional_diff(values, a_phi, 1, grid.d_phi, periodic=True) + 1.0
        )
        impulse = _impulse_min(values.ravel(), idx, wgt).reshape(values.shape)
        new_values = np.minimum(drift, impulse)
        new_values[clamp] = 0.0
        change = new_values - values
        if change[free].max() > 1e-12:
            monotone = False
        delta = float(np.max(np.abs(change)))
        values = new_values
        if delta < stop:
            break
    else:
        raise ConvergenceError(
            f"QVI iteration did not converge in {max_sweeps} sweeps", residual=delta
        )

    value = ValueFunction(
        grid=grid,
        values=values,
        converged=True,
        residual=delta / dtau,
        info={
            "omega": omega,
            "target": target,
            "target_node": target_node,
            "clamp": clamp,
            "angles": angles,
            "dtau": dtau,
            "sweeps": sweep + 1,
            "monotone_decreasing": monotone,
        },
    )
    law = _extract_law(value, idx, wgt, tol)
    return value, law


def _extract_law(value: ValueFunction, idx, wgt, tol: float) -> FeedbackLaw:
    grid = value.grid
    flat = value.values.ravel()
    interp = (
        wgt[0] * flat[idx[0]]
        + wgt[1] * flat[idx[1]]
        + wgt[2] * flat[idx[2]]
        + wgt[3] * flat[idx[3]]
    )
    best_angle = interp.argmin(axis=0).reshape(value.values.shape)
    drift_residual = _drift_residual(value)
    actions = np.where(drift_residual <= tol, -1, best_angle)
    return FeedbackLaw(
        grid=grid,
        values=actions.astype(int),
        kind="impulse",
        info={"angles": value.info["angles"], "target_node": value.info["target_node"]},
    )


def _drift_residual(value: ValueFunction) -> np.ndarray:
    grid = value.grid
    a_phi = value.info["omega"] * np.ones_like(value.values)
    return _directional_diff(value.values, a_phi, 1, grid.d_phi, periodic=True) + 1.0


def qvi_residuals(value: ValueFunction) -> dict:
    """Branch and complementarity residuals of the discrete QVI.

    drift_branch is the upwinded drift equation value (must be >= -tol),
    impulse_branch is min_v S(rotate(., v)) - S (must be >= -tol), and at
    every node at least one of the two must vanish to within tol.
    Residuals are reported over unclamped nodes.
    """
    grid = value.grid
    idx, wgt = _impulse_stencils(grid, value.info["angles"])
    free = ~value.info["clamp"]
    r_drift = _drift_residual(value)
    r_impulse = (_impulse_min(value.values.ravel(), idx, wgt).reshape(value.values.shape)
                 - value.values)
    complementarity = np.minimum(np.abs(r_drift), np.abs(r_impulse))
    return {
        "drift_branch_min": float(r_drift[free].min()),
        "impulse_branch_min": float(r_impulse[free].min()),
        "complementarity_max": float(complementarity[free].max()),
        "drift_branch": r_drift,
        "impulse_branch": r_impulse,
    }


def qvi_apply_action(law: FeedbackLaw, r, action: int) -> np.ndarray:
    """Apply a law action (drift does nothing instantaneous) to a Bloch point."""
    if action < 0:
        return np.asarray(r, dtype=float)
    return impulse_matrix(law.info["angles"][action]) @ np.asarray(r, dtype=float)
