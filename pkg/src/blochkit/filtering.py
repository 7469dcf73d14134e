"""Stochastic filtering of the atom from a homodyne record.

The normalized filter propagates the conditional Bloch vector through an
Euler-Maruyama step of the coupled measurement SDEs; the unnormalized
(linear) filter propagates an extended vector (n, x, y, z) carrying the
normalization factor, and the risk-sensitive filter augments it with
multiplicative running-cost terms. Records are generated through the
innovations representation: the innovation process is a standard Wiener
process under the physical distribution, so dY = dW + sqrt(kappa1) x dt.

All step functions broadcast over leading axes, so a batch of paths is
stepped with the same code as a single path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from blochkit.hybrid import SystemConfig


@dataclass(frozen=True)
class MeasurementRecord:
    """Homodyne record increments dY on a uniform grid of step dt."""

    dt: float
    dY: np.ndarray

    def __post_init__(self):
        dy = np.asarray(self.dY, dtype=float)
        if not np.all(np.isfinite(dy)):
            raise ValueError("record contains non-finite increments")
        object.__setattr__(self, "dY", dy)

    def coarsen(self, factor: int) -> "MeasurementRecord":
        """Aggregate consecutive increments into a coarser record."""
        n = (len(self.dY) // factor) * factor
        dy = self.dY[:n].reshape(-1, factor).sum(axis=1)
        return MeasurementRecord(self.dt * factor, dy)


@dataclass(frozen=True)
class NoiseSource:
    """Seeded Gaussian increment source with per-path substreams.

    Path i always receives substream i of the root seed, so results do
    not depend on batch sizes or execution order.
    """

    seed: int

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def path_generators(self, n_paths: int, offset: int = 0) -> list[np.random.Generator]:
        children = np.random.SeedSequence(self.seed).spawn(offset + n_paths)
        return [np.random.default_rng(s) for s in children[offset:]]


@dataclass
class FilterRun:
    """A simulated record and the filter trajectory it drives."""

    record: MeasurementRecord
    times: np.ndarray
    states: np.ndarray
    n_projected: int = 0


@dataclass
class McResult:
    """Componentwise sample mean and standard error on a time grid."""

    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n_paths: int
    projection_fraction: float = 0.0


def _as_batch_control(u):
    """Normalize a control argument to a callable (t, states) -> array."""
    if u is None:
        return lambda t, states: 0.0
    if callable(u):
        return u
    val = float(u)
    return lambda t, states: val


def _normalized_step(states, u, dY, cfg: SystemConfig):
    """Euler-Maruyama step of the normalized filter; returns (states, n_clipped).

    Excursions outside the Bloch ball are projected radially back onto
    the sphere (the scheme does not preserve the state space).
    """
    s = np.asarray(states, dtype=float)
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    dt = cfg.dt
    kap = cfg.kappa
    sk1 = np.sqrt(cfg.kappa1)
    dW = dY - sk1 * x * dt
    fx = -cfg.omega * y - 0.5 * kap * x
    fy = cfg.omega * x - 0.5 * kap * y - u * z
    fz = -kap * z - kap + u * y
    gx = sk1 * (1.0 + z - x * x)
    gy = -sk1 * x * y
    gz = -sk1 * x * (1.0 + z)
    out = np.stack(
        [x + fx * dt + gx * dW, y + fy * dt + gy * dW, z + fz * dt + gz * dW],
        axis=-1,
    )
    norm = np.linalg.norm(out, axis=-1)
    over = norm > 1.0
    n_clipped = int(np.count_nonzero(over))
    if n_clipped:
        out = np.where(over[..., None], out / np.maximum(norm, 1.0)[..., None], out)
    return out, n_clipped


def filter_step_normalized(state, u, dY, cfg: SystemConfig) -> np.ndarray:
    """One step of the normalized conditional-state filter."""
    out, _ = _normalized_step(state, u, dY, cfg)
    return out


def filter_step_unnormalized(state, dY, cfg: SystemConfig, u=0.0) -> np.ndarray:
    """One step of the linear unnormalized filter in (n, x, y, z) coordinates."""
    s = np.asarray(state, dtype=float)
    n, x, y, z = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    dt = cfg.dt
    kap = cfg.kappa
    sk1 = np.sqrt(cfg.kappa1)
    n_new = n + sk1 * x * dY
    x_new = x + (-cfg.omega * y - 0.5 * kap * x) * dt + sk1 * (n + z) * dY
    y_new = y + (cfg.omega * x - 0.5 * kap * y - u * z) * dt
    z_new = z + (-kap * z - kap * n + u * y) * dt - sk1 * x * dY
    if np.any(n_new <= 0.0):
        raise ArithmeticError("normalization factor became nonpositive; shrink dt")
    return np.stack([n_new, x_new, y_new, z_new], axis=-1)


def risk_filter_step(state, u, mu, c1, dY, cfg: SystemConfig) -> np.ndarray:
    """One step of the risk-sensitive (cost-augmented) unnormalized filter.

    mu = 0 reduces term by term to filter_step_unnormalized with the same
    control. The running-cost contributions are linear in (n, x, y, z),
    so the step is homogeneous of degree one in the state.
    """
    if mu < 0:
        raise ValueError("risk parameter mu must be nonnegative")
    if c1 <= 0:
        raise ValueError("control weight c1 must be positive")
    s = np.asarray(state, dtype=float)
    n, x, y, z = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    dt = cfg.dt
    kap = cfg.kappa
    sk1 = np.sqrt(cfg.kappa1)
    uu = np.asarray(u) ** 2
    half_mu = 0.5 * mu
    n_new = n + half_mu * (n - z + c1 * uu * n) * dt + sk1 * x * dY
    x_new = x + (-cfg.omega * y - 0.5 * kap * x + half_mu * (x + c1 * uu * x)) * dt + sk1 * (n + z) * dY
    y_new = y + (cfg.omega * x - 0.5 * kap * y - u * z + half_mu * (y + c1 * uu * y)) * dt
    z_new = z + (-kap * z - kap * n + u * y - half_mu * (n - z - c1 * uu * z)) * dt - sk1 * x * dY
    if np.any(n_new <= 0.0):
        raise ArithmeticError("normalization factor became nonpositive; shrink dt")
    return np.stack([n_new, x_new, y_new, z_new], axis=-1)


def normalize_extended(state) -> np.ndarray:
    """Conditional Bloch vector (x, y, z) / n of an extended state."""
    s = np.asarray(state, dtype=float)
    n = s[..., 0]
    if np.any(n <= 0.0):
        raise ValueError("normalization factor must be positive")
    return s[..., 1:] / n[..., None]


def simulate_record(
    cfg: SystemConfig,
    t_final: float,
    noise: NoiseSource,
    u=None,
    r0=(0.0, 0.0, 0.0),
) -> FilterRun:
    """Sample a physical homodyne record and co-integrate the normalized filter.

    The innovation increments are drawn as Wiener increments and the
    record is reconstructed as dY = dW + sqrt(kappa1) x dt, so the record
    and the trajectory are mutually consistent: replaying the record
    reproduces the trajectory exactly.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    control = _as_batch_control(u)
    dt = cfg.dt
    n_steps = max(1, int(round(t_final / dt)))
    rng = noise.generator()
    dW = rng.normal(0.0, np.sqrt(dt), size=n_steps)
    sk1 = np.sqrt(cfg.kappa1)

    states = np.empty((n_steps + 1, 3))
    states[0] = np.asarray(r0, dtype=float)
    dY = np.empty(n_steps)
    n_projected = 0
    for k in range(n_steps):
        r = states[k]
        dY[k] = dW[k] + sk1 * r[0] * dt
        states[k + 1], clipped = _normalized_step(r, control(k * dt, r), dY[k], cfg)
        n_projected += clipped
    times = dt * np.arange(n_steps + 1)
    return FilterRun(MeasurementRecord(dt, dY), times, states, n_projected)


def replay_record(
    record: MeasurementRecord,
    cfg: SystemConfig,
    u=None,
    r0=(0.0, 0.0, 0.0),
) -> FilterRun:
    """Run the normalized filter on a previously recorded signal."""
    if abs(record.dt - cfg.dt) > 1e-15:
        raise ValueError("record step size does not match the configuration")
    control = _as_batch_control(u)
    n_steps = len(record.dY)
    states = np.empty((n_steps + 1, 3))
    states[0] = np.asarray(r0, dtype=float)
    n_projected = 0
    for k in range(n_steps):
        states[k + 1], clipped = _normalized_step(states[k], control(k * cfg.dt, states[k]), record.dY[k], cfg)
        n_projected += clipped
    times = cfg.dt * np.arange(n_steps + 1)
    return FilterRun(record, times, states, n_projected)


def replay_record_unnormalized(
    record: MeasurementRecord,
    cfg: SystemConfig,
    u=None,
    s0=(1.0, 0.0, 0.0, 0.0),
) -> np.ndarray:
    """Run the unnormalized filter on a recorded signal; returns (steps+1, 4) states."""
    if abs(record.dt - cfg.dt) > 1e-15:
        raise ValueError("record step size does not match the configuration")
    control = _as_batch_control(u)
    n_steps = len(record.dY)
    states = np.empty((n_steps + 1, 4))
    states[0] = np.asarray(s0, dtype=float)
    for k in range(n_steps):
        uval = control(k * cfg.dt, normalize_extended(states[k]))
        states[k + 1] = filter_step_unnormalized(states[k], record.dY[k], cfg, u=uval)
    return states


def _checkpoint_indices(t_grid, dt: float, n_steps: int) -> np.ndarray:
    idx = np.round(np.asarray(t_grid, dtype=float) / dt).astype(int)
    if np.any(idx < 0) or np.any(idx > n_steps):
        raise ValueError("checkpoint outside the simulated horizon")
    return idx


def monte_carlo_mean(
    cfg: SystemConfig,
    t_grid,
    n_paths: int,
    noise: NoiseSource,
    u=None,
    r0=(0.0, 0.0, 0.0),
    block_size: int = 2048,
) -> McResult:
    """Sample mean and standard error of the normalized filter over n_paths.

    Paths are independent (one noise substream each) and processed in
    blocks of vectorized Euler-Maruyama steps. Checkpoints in t_grid are
    snapped to the nearest step boundary.
    """
    if n_paths < 2:
        raise ValueError("need at least 2 paths for a standard error")
    control = _as_batch_control(u)
    dt = cfg.dt
    t_grid = np.asarray(t_grid, dtype=float)
    n_steps = int(round(t_grid.max() / dt))
    idx = _checkpoint_indices(t_grid, dt, n_steps)
    check_at = {int(i): k for k, i in enumerate(idx)}

    sums = np.zeros((len(t_grid), 3))
    sumsq = np.zeros((len(t_grid), 3))
    sk1 = np.sqrt(cfg.kappa1)
    clipped_total = 0
    done = 0
    while done < n_paths:
        nb = min(block_size, n_paths - done)
        gens = NoiseSource(noise.seed).path_generators(nb, offset=done)
        dW = np.stack([g.normal(0.0, np.sqrt(dt), size=n_steps) for g in gens])
        states = np.tile(np.asarray(r0, dtype=float), (nb, 1))
        if 0 in check_at:
            k = check_at[0]
            sums[k] += states.sum(axis=0)
            sumsq[k] += (states**2).sum(axis=0)
        for step in range(n_steps):
            dY = dW[:, step] + sk1 * states[:, 0] * dt
            states, clipped = _normalized_step(states, control(step * dt, states), dY, cfg)
            clipped_total += clipped
            if step + 1 in check_at:
                k = check_at[step + 1]
                sums[k] += states.sum(axis=0)
                sumsq[k] += (states**2).sum(axis=0)
        done += nb

    mean = sums / n_paths
    var = np.maximum(sumsq / n_paths - mean**2, 0.0) * n_paths / (n_paths - 1)
    se = np.sqrt(var / n_paths)
    return McResult(
        times=idx * dt,
        mean=mean,
        se=se,
        n_paths=n_paths,
        projection_fraction=clipped_total / (n_paths * n_steps),
    )


def monte_carlo_unnormalized_reference(
    cfg: SystemConfig,
    t_grid,
    n_paths: int,
    noise: NoiseSource,
    s0=(1.0, 0.0, 0.0, 0.0),
    block_size: int = 2048,
) -> McResult:
    """Mean and standard error of the extended state under the reference law.

    Under the reference distribution the record itself is a Wiener
    process, so dY is drawn directly as a Gaussian increment; the
    normalization factor n is then a martingale with mean one.
    """
    if n_paths < 2:
        raise ValueError("need at least 2 paths for a standard error")
    dt = cfg.dt
    t_grid = np.asarray(t_grid, dtype=float)
    n_steps = int(round(t_grid.max() / dt))
    idx = _checkpoint_indices(t_grid, dt, n_steps)
    check_at = {int(i): k for k, i in enumerate(idx)}

    sums = np.zeros((len(t_grid), 4))
    sumsq = np.zeros((len(t_grid), 4))
    done = 0
    while done < n_paths:
        nb = min(block_size, n_paths - done)
        gens = NoiseSource(noise.seed).path_generators(nb, offset=done)
        dY = np.stack([g.normal(0.0, np.sqrt(dt), size=n_steps) for g in gens])
        states = np.tile(np.asarray(s0, dtype=float), (nb, 1))
        if 0 in check_at:
            k = check_at[0]
            sums[k] += states.sum(axis=0)
            sumsq[k] += (states**2).sum(axis=0)
        for step in range(n_steps):
            states = filter_step_unnormalized(states, dY[:, step], cfg)
            if step + 1 in check_at:
                k = check_at[step + 1]
                sums[k] += states.sum(axis=0)
                sumsq[k] += (states**2).sum(axis=0)
        done += nb

    mean = sums / n_paths
    var = np.maximum(sumsq / n_paths - mean**2, 0.0) * n_paths / (n_paths - 1)
    se = np.sqrt(var / n_paths)
    return McResult(times=idx * dt, mean=mean, se=se, n_paths=n_paths)


def master_mean_solution(cfg: SystemConfig, r0, t) -> np.ndarray:
    """Closed-form uncontrolled ensemble mean: rotation with transverse
    decay at kappa/2 and z relaxation at kappa toward -1."""
    t = np.asarray(t, dtype=float)
    x0, y0, z0 = np.asarray(r0, dtype=float)
    kap, om = cfg.kappa, cfg.omega
    decay_t = np.exp(-0.5 * kap * t)
    x = decay_t * (x0 * np.cos(om * t) - y0 * np.sin(om * t))
    y = decay_t * (x0 * np.sin(om * t) + y0 * np.cos(om * t))
    z = (z0 + 1.0) * np.exp(-kap * t) - 1.0
    return np.stack([x, y, z], axis=-1)


def pathwise_consistency_report(
    cfg: SystemConfig,
    t_final: float,
    noise: NoiseSource,
    r0=(0.0, 0.0, 0.5),
    n_levels: int = 2,
    n_records: int = 1,
) -> dict:
    """Compare normalized and normalize(unnormalized) filters on shared records.

    A physical record is sampled at the finest resolution (cfg.dt divided
    by 2^(n_levels-1)); coarser filters consume the aggregated record.
    Returns the sup-norm differences per level (finest last) and the
    ratios between consecutive levels, averaged over n_records records.
    """
    factors = [2 ** (n_levels - 1 - k) for k in range(n_levels)]
    fine_dt = cfg.dt / factors[0]
    fine_cfg = SystemConfig(cfg.omega, cfg.kappa1, cfg.kappa2, fine_dt)
    sup = np.zeros(n_levels)
    rng_seeds = NoiseSource(noise.seed).path_generators(n_records)
    for rec_idx in range(n_records):
        seed = int(rng_seeds[rec_idx].integers(0, 2**63 - 1))
        fine_run = simulate_record(fine_cfg, t_final, NoiseSource(seed), r0=r0)
        for lvl, factor in enumerate(factors):
            rec = fine_run.record.coarsen(factor) if factor > 1 else fine_run.record
            level_cfg = SystemConfig(cfg.omega, cfg.kappa1, cfg.kappa2, rec.dt)
            run_n = replay_record(rec, level_cfg, r0=r0)
            ext = replay_record_unnormalized(rec, level_cfg, s0=(1.0, *np.asarray(r0, dtype=float)))
            diff = np.abs(run_n.states - normalize_extended(ext))
            sup[lvl] += np.max(diff)
    sup /= n_records
    ratios = [float(sup[k] / sup[k + 1]) for k in range(n_levels - 1)]
    return {
        "dt_levels": [fine_dt * f for f in factors],
        "sup_diff": sup.tolist(),
        "ratios": ratios,
    }
