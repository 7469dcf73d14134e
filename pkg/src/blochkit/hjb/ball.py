"""Finite-horizon dynamic programming on the solid Bloch ball.

Backward explicit time marching for the measurement-feedback control
problems: the risk-neutral problem on the conditional Bloch vector, and
the risk-sensitive problem reduced by multiplicative homogeneity to a
fixed slice of the extended (n, x, y, z) state. Advection is first-order
upwind, diffusion (rank-one, from the single measurement channel) is
central second-order with one-sided fallbacks where the stencil leaves
the ball. The inner minimization over the control is closed-form since
the Hamiltonian is quadratic in u.
"""

from __future__ import annotations

import numpy as np

from blochkit.filtering import _normalized_step, NoiseSource
from blochkit.hjb.grids import BallGrid, FeedbackLaw, ValueFunction
from blochkit.hybrid import SystemConfig


class _BallStencil:
    """Gather-based finite differences on the masked ball lattice.

    Invalid neighbors (outside the ball or the cube) point back at the
    center node, which turns central differences into one-sided ones and
    removes the missing contributions from second differences.
    """

    def __init__(self, grid: BallGrid):
        self.grid = grid
        n = grid.n
        mask = grid.mask
        self.mask = mask
        self.h = grid.spacing
        flat_of_cube = -np.ones(mask.size, dtype=np.intp)
        flat_of_cube[mask.ravel()] = np.arange(mask.sum())
        self.n_nodes = int(mask.sum())
        ii, jj, kk = np.nonzero(mask)
        self.indices = np.stack([ii, jj, kk], axis=1)
        x, y, z = grid.mesh()
        self.coords = np.stack([x[mask], y[mask], z[mask]], axis=1)

        def lookup(di, dj, dk):
            i2, j2, k2 = ii + di, jj + dj, kk + dk
            inside = (
                (i2 >= 0) & (i2 < n) & (j2 >= 0) & (j2 < n) & (k2 >= 0) & (k2 < n)
            )
            flat = np.where(inside, (np.clip(i2, 0, n - 1) * n + np.clip(j2, 0, n - 1)) * n + np.clip(k2, 0, n - 1), 0)
            m = np.where(inside, flat_of_cube[flat], -1)
            valid = m >= 0
            return np.where(valid, m, np.arange(self.n_nodes)), valid

        steps = {0: (1, 0, 0), 1: (0, 1, 0), 2: (0, 0, 1)}
        self.plus, self.plus_valid = {}, {}
        self.minus, self.minus_valid = {}, {}
        for d, step in steps.items():
            self.plus[d], self.plus_valid[d] = lookup(*step)
            self.minus[d], self.minus_valid[d] = lookup(*(-s for s in step))
        self.diag = {}
        for d1, d2 in ((0, 1), (0, 2), (1, 2)):
            s1, s2 = np.array(steps[d1]), np.array(steps[d2])
            self.diag[(d1, d2)] = {
                "pp": lookup(*(s1 + s2))[0],
                "mm": lookup(*(-s1 - s2))[0],
                "pm": lookup(*(s1 - s2))[0],
                "mp": lookup(*(s2 - s1))[0],
            }

    def gradient(self, s: np.ndarray, d: int) -> np.ndarray:
        """Central difference, one-sided at the mask boundary."""
        cnt = self.plus_valid[d].astype(float) + self.minus_valid[d].astype(float)
        num = s[self.plus[d]] - s[self.minus[d]]
        return np.where(cnt > 0, num / (self.h * np.maximum(cnt, 1.0)), 0.0)

    def upwind(self, s: np.ndarray, a: np.ndarray, d: int) -> np.ndarray:
        """a times the difference taken in the flow direction of a."""
        fwd = (s[self.plus[d]] - s) / self.h
        bwd = (s - s[self.minus[d]]) / self.h
        return np.where(a > 0.0, a * fwd, a * bwd)

    def second(self, s: np.ndarray, d: int) -> np.ndarray:
        return (s[self.plus[d]] - 2.0 * s + s[self.minus[d]]) / self.h**2

    def cross(self, s: np.ndarray, pair: tuple[int, int]) -> np.ndarray:
        g = self.diag[pair]
        return (s[g["pp"]] + s[g["mm"]] - s[g["pm"]] - s[g["mp"]]) / (4.0 * self.h**2)

    def generator(self, s: np.ndarray, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Upwind advection along f plus second-order rank-one diffusion g g^T / 2."""
        out = np.zeros_like(s)
        for d in range(3):
            out += self.upwind(s, f[:, d], d)
            out += 0.5 * g[:, d] ** 2 * self.second(s, d)
        for d1, d2 in ((0, 1), (0, 2), (1, 2)):
            out += g[:, d1] * g[:, d2] * self.cross(s, (d1, d2))
        return out

    def to_cube(self, s: np.ndarray, fill: float = np.nan) -> np.ndarray:
        cube = np.full(self.mask.shape, fill)
        cube[self.mask] = s
        return cube


def _extend_outside(cube: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Fill nodes outside the mask with averages of filled neighbors.

    Keeps trilinear interpolation well defined in boundary cells whose
    corners poke out of the ball.
    """
    out = cube.copy()
    filled = mask.copy()
    while not filled.all():
        acc = np.zeros_like(out)
        cnt = np.zeros(out.shape)
        for axis in range(3):
            for shift in (1, -1):
                shifted = np.roll(np.where(filled, out, 0.0), shift, axis=axis)
                shifted_ok = np.roll(filled, shift, axis=axis)
                edge = np.zeros_like(filled)
                # roll wraps around; kill the wrapped layer
                index = [slice(None)] * 3
                index[axis] = 0 if shift == 1 else -1
                edge[tuple(index)] = True
                shifted_ok = shifted_ok & ~edge
                acc += np.where(shifted_ok, shifted, 0.0)
                cnt += shifted_ok
        newly = ~filled & (cnt > 0)
        out[newly] = acc[newly] / cnt[newly]
        filled |= newly
    return out


def solve_risk_neutral(
    grid: BallGrid,
    cfg: SystemConfig,
    c1: float,
    c2: float,
    horizon: float,
    nt: int,
    umax: float = 10.0,
    cfl_safety: float = 0.5,
    n_stored: int = 101,
) -> tuple[ValueFunction, FeedbackLaw]:
    """Backward-march the integral-cost (risk-neutral) control problem.

    Running cost (1 - z + c1 u^2)/2, terminal cost c2 (1 - z)/2; the
    minimizing control is (S_y z - S_z y)/c1, clamped to |u| <= umax.
    Returns stored value and law slices on an ascending time grid that
    always includes t = 0 and t = horizon.
    """
    if c1 <= 0 or c2 < 0:
        raise ValueError("cost weights must satisfy c1 > 0, c2 >= 0")
    if horizon <= 0 or nt < 1:
        raise ValueError("horizon must be positive and nt >= 1")
    stencil = _BallStencil(grid)
    x, y, z = stencil.coords.T
    kap, om = cfg.kappa, cfg.omega
    sk1 = np.sqrt(cfg.kappa1)
    g = np.stack([sk1 * (1.0 + z - x * x), -sk1 * x * y, -sk1 * x * (1.0 + z)], axis=1)
    f_base = np.stack([-om * y - 0.5 * kap * x, om * x - 0.5 * kap * y, -kap * z - kap], axis=1)
    u_dir = np.stack([np.zeros_like(x), -z, y], axis=1)

    h = stencil.h
    worst = (
        (np.abs(f_base) + umax * np.abs(u_dir)).sum(axis=1) / h
        + (g**2).sum(axis=1) / h**2
        + (np.abs(g[:, 0] * g[:, 1]) + np.abs(g[:, 0] * g[:, 2]) + np.abs(g[:, 1] * g[:, 2])) / h**2
    ).max()
    dt_cfl = cfl_safety / worst
    nt_eff = max(nt, int(np.ceil(horizon / dt_cfl)))
    dt = horizon / nt_eff

    stride = max(1, nt_eff // max(n_stored - 1, 1))
    s = 0.5 * c2 * (1.0 - z)
    u_star = _minimizer_rn(stencil, s, c1, umax)
    stored = {nt_eff: (s.copy(), u_star.copy())}
    for k in range(nt_eff - 1, -1, -1):
        u_star = _minimizer_rn(stencil, s, c1, umax)
        f = f_base + u_star[:, None] * u_dir
        run = 0.5 * (1.0 - z + c1 * u_star**2)
        s = s + dt * (stencil.generator(s, f, g) + run)
        if k % stride == 0 or k == 0:
            stored[k] = (s.copy(), _minimizer_rn(stencil, s, c1, umax))

    keys = sorted(stored)
    times = np.array([k * dt for k in keys])
    mask = grid.mask
    val_slices = np.stack([_extend_outside(stencil.to_cube(stored[k][0]), mask) for k in keys])
    law_slices = np.stack([_extend_outside(stencil.to_cube(stored[k][1]), mask) for k in keys])
    info = {
        "cfg": cfg,
        "c1": c1,
        "c2": c2,
        "horizon": horizon,
        "nt": nt_eff,
        "nt_requested": nt,
        "dt": dt,
        "cfl_dt": dt_cfl,
        "umax": umax,
    }
    value = ValueFunction(grid=grid, values=val_slices, converged=True, residual=0.0, times=times, info=info)
    law = FeedbackLaw(grid=grid, values=law_slices, kind="continuous", times=times, info=info)
    return value, law


def _minimizer_rn(stencil: _BallStencil, s: np.ndarray, c1: float, umax: float) -> np.ndarray:
    _, y, z = stencil.coords.T
    sy = stencil.gradient(s, 1)
    sz = stencil.gradient(s, 2)
    return np.clip((sy * z - sz * y) / c1, -umax, umax)


def solve_risk_sensitive(
    grid: BallGrid,
    cfg: SystemConfig,
    mu: float,
    c1: float,
    c2: float,
    horizon: float,
    nt: int,
    umax: float = 10.0,
    cfl_safety: float = 0.5,
    n_stored: int = 101,
    value_floor: float = 1e-12,
) -> tuple[ValueFunction, FeedbackLaw]:
    """Backward-march the multiplicative-cost (risk-sensitive) problem.

    The grid radius plays the role of the fixed normalization slice: a
    grid of radius alpha computes S(alpha, x, y, z, t), and values off
    the slice follow from homogeneity of degree one in the extended
    state. Terminal data (alpha - z) exp(mu c2) / 2; the running cost
    enters multiplicatively as a zeroth-order term. The minimizing
    control divides by the value, so nodes where the value is below
    value_floor get u = 0 (counted in info['floored_nodes']).
    """
    if mu <= 0:
        raise ValueError("risk parameter mu must be positive")
    if c1 <= 0 or c2 < 0:
        raise ValueError("cost weights must satisfy c1 > 0, c2 >= 0")
    if horizon <= 0 or nt < 1:
        raise ValueError("horizon must be positive and nt >= 1")
    alpha = grid.radius
    stencil = _BallStencil(grid)
    x, y, z = stencil.coords.T
    kap, om = cfg.kappa, cfg.omega
    sk1 = np.sqrt(cfg.kappa1)
    g = np.stack(
        [sk1 * (alpha + z - x * x / alpha), -sk1 * x * y / alpha, -sk1 * x * (1.0 + z / alpha)],
        axis=1,
    )
    f_base = np.stack(
        [
            -om * y - 0.5 * kap * x + 0.5 * mu * x * z / alpha,
            om * x - 0.5 * kap * y + 0.5 * mu * y * z / alpha,
            -kap * z - kap * alpha - 0.5 * mu * (alpha * alpha - z * z) / alpha,
        ],
        axis=1,
    )
    u_dir = np.stack([np.zeros_like(x), -z, y], axis=1)

    h = stencil.h
    worst = (
        (np.abs(f_base) + umax * np.abs(u_dir)).sum(axis=1) / h
        + (g**2).sum(axis=1) / h**2
        + (np.abs(g[:, 0] * g[:, 1]) + np.abs(g[:, 0] * g[:, 2]) + np.abs(g[:, 1] * g[:, 2])) / h**2
    ).max()
    dt_cfl = cfl_safety / worst
    nt_eff = max(nt, int(np.ceil(horizon / dt_cfl)))
    dt = horizon / nt_eff

    stride = max(1, nt_eff // max(n_stored - 1, 1))
    s = 0.5 * (alpha - z) * np.exp(mu * c2)
    floored = 0

    def minimizer(sv):
        nonlocal floored
        sy = stencil.gradient(sv, 1)
        sz = stencil.gradient(sv, 2)
        ok = sv > value_floor
        floored += int(np.count_nonzero(~ok))
        return np.where(ok, np.clip((sy * z - sz * y) / (mu * c1 * np.maximum(sv, value_floor)), -umax, umax), 0.0)

    stored = {nt_eff: (s.copy(), minimizer(s))}
    for k in range(nt_eff - 1, -1, -1):
        u_star = minimizer(s)
        f = f_base + u_star[:, None] * u_dir
        mult = 0.5 * mu * (1.0 - z / alpha + c1 * u_star**2)
        s = s + dt * (stencil.generator(s, f, g) + mult * s)
        if k % stride == 0 or k == 0:
            stored[k] = (s.copy(), minimizer(s))

    keys = sorted(stored)
    times = np.array([k * dt for k in keys])
    mask = grid.mask
    val_slices = np.stack([_extend_outside(stencil.to_cube(stored[k][0]), mask) for k in keys])
    law_slices = np.stack([_extend_outside(stencil.to_cube(stored[k][1]), mask) for k in keys])
    info = {
        "cfg": cfg,
        "mu": mu,
        "c1": c1,
        "c2": c2,
        "horizon": horizon,
        "nt": nt_eff,
        "dt": dt,
        "cfl_dt": dt_cfl,
        "umax": umax,
        "slice": alpha,
        "floored_nodes": floored,
        "min_value": float(s.min()),
    }
    value = ValueFunction(grid=grid, values=val_slices, converged=True, residual=0.0, times=times, info=info)
    law = FeedbackLaw(grid=grid, values=law_slices, kind="continuous", times=times, info=info)
    return value, law


def interpolate_slices(times: np.ndarray, slices: np.ndarray, grid: BallGrid, r, t: float):
    """Space-trilinear, time-linear lookup in stored slices."""
    t = float(np.clip(t, times[0], times[-1]))
    j = int(np.searchsorted(times, t, side="right") - 1)
    j = min(max(j, 0), len(times) - 1)
    lo = grid.interpolate(slices[j], r)
    if j == len(times) - 1 or times[j] == t:
        return lo
    hi = grid.interpolate(slices[j + 1], r)
    w = (t - times[j]) / (times[j + 1] - times[j])
    return (1.0 - w) * lo + w * hi


def feedback_rn(law: FeedbackLaw, r, t: float):
    """Evaluate a stored feedback law at Bloch point(s) r and time t.

    Points outside the ball are projected radially onto it first.
    """
    pts = np.asarray(r, dtype=float)
    norm = np.linalg.norm(pts, axis=-1, keepdims=True)
    radius = law.grid.radius
    pts = np.where(norm > radius, pts * (radius / np.maximum(norm, 1e-300)), pts)
    return interpolate_slices(law.times, law.values, law.grid, pts, t)


def value_at(value: ValueFunction, r, t: float):
    """Interpolated value lookup, projecting outside points onto the ball."""
    pts = np.asarray(r, dtype=float)
    norm = np.linalg.norm(pts, axis=-1, keepdims=True)
    radius = value.grid.radius
    pts = np.where(norm > radius, pts * (radius / np.maximum(norm, 1e-300)), pts)
    return interpolate_slices(value.times, value.values, value.grid, pts, t)


def closed_loop_cost(
    cfg: SystemConfig,
    c1: float,
    c2: float,
    horizon: float,
    n_paths: int,
    noise: NoiseSource,
    r0,
    law: FeedbackLaw | None = None,
    block_size: int = 4096,
) -> dict:
    """Monte Carlo estimate of the risk-neutral cost of a feedback law.

    law None means the uncontrolled baseline u = 0. Paths follow the
    normalized filter under the physical law; the running cost uses the
    left endpoint of each step. Returns mean, standard error, and the
    per-path costs (for paired comparisons under shared seeds).
    """
    dt = cfg.dt
    n_steps = int(round(horizon / dt))
    sk1 = np.sqrt(cfg.kappa1)
    costs = np.empty(n_paths)
    done = 0
    while done < n_paths:
        nb = min(block_size, n_paths - done)
        gens = NoiseSource(noise.seed).path_generators(nb, offset=done)
        dW = np.stack([gg.normal(0.0, np.sqrt(dt), size=n_steps) for gg in gens])
        states = np.tile(np.asarray(r0, dtype=float), (nb, 1))
        acc = np.zeros(nb)
        for step in range(n_steps):
            t = step * dt
            if law is None:
                u = np.zeros(nb)
            else:
                u = np.asarray(feedback_rn(law, states, t))
            acc += 0.5 * (1.0 - states[:, 2] + c1 * u**2) * dt
            dY = dW[:, step] + sk1 * states[:, 0] * dt
            states, _ = _normalized_step(states, u, dY, cfg)
        acc += 0.5 * c2 * (1.0 - states[:, 2])
        costs[done : done + nb] = acc
        done += nb
    mean = float(costs.mean())
    se = float(costs.std(ddof=1) / np.sqrt(n_paths))
    return {"mean": mean, "se": se, "costs": costs}
