"""Deterministic hybrid Bloch dynamics: smooth flow plus impulse rotations.

Between impulses the Bloch vector follows either the closed bilinear
rotation (controlled by u and the detuning omega) or the relaxing flow of
an atom losing energy to its field channels. Impulses act instantly as
rotations in the yz plane. Integration is fixed-step classical RK4 with
steps aligned so every impulse time is a step boundary; an impulse is
applied after integrating up to its time (right-limit convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from blochkit.errors import ConvergenceError


@dataclass(frozen=True)
class SystemConfig:
    """Atom and integration parameters.

    omega is the level splitting, kappa1/kappa2 the channel coupling
    rates, dt the integrator step size.
    """

    omega: float
    kappa1: float = 0.0
    kappa2: float = 0.0
    dt: float = 1e-3

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.kappa1 < 0 or self.kappa2 < 0:
            raise ValueError("coupling rates must be nonnegative")

    @property
    def kappa(self) -> float:
        return self.kappa1 + self.kappa2


@dataclass(frozen=True)
class ImpulseSchedule:
    """Ordered (time, rotation angle) pairs, optionally with a periodic tail.

    A periodic entry (period, v) fires at period, 2*period, ... and may be
    combined with explicit entries as long as all resulting times stay
    strictly increasing.
    """

    entries: tuple = ()
    periodic: tuple | None = None

    def __post_init__(self):
        entries = tuple((float(t), float(v)) for t, v in self.entries)
        times = [t for t, _ in entries]
        if any(t < 0 for t in times):
            raise ValueError("impulse times must be nonnegative")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("impulse times must be strictly increasing")
        if self.periodic is not None:
            period, v = self.periodic
            if period <= 0:
                raise ValueError("period must be positive")
            object.__setattr__(self, "periodic", (float(period), float(v)))
        object.__setattr__(self, "entries", entries)

    def impulses_until(self, t_final: float) -> list[tuple[float, float]]:
        """All (time, angle) pairs with time <= t_final, sorted."""
        out = [(t, v) for t, v in self.entries if t <= t_final]
        if self.periodic is not None:
            period, v = self.periodic
            k = 1
            while k * period <= t_final + 1e-12:
                out.append((k * period, v))
                k += 1
        out.sort(key=lambda tv: tv[0])
        times = [t for t, _ in out]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("explicit and periodic impulse times collide")
        return out


@dataclass
class Trajectory:
    """Sampled hybrid trajectory.

    At an impulse time two samples share the same time stamp: the
    pre-impulse state followed by the post-impulse state. events holds
    the indices of the post-impulse rows.
    """

    times: np.ndarray
    states: np.ndarray
    events: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))


def closed_bloch_rhs(r: np.ndarray, u: float, omega: float) -> np.ndarray:
    """Skew generator of the closed dynamics: rotation by omega about z and u about x."""
    x, y, z = r
    return np.array([-omega * y, omega * x - u * z, u * y])


def relaxation_bloch_rhs(r: np.ndarray, omega: float, kappa: float) -> np.ndarray:
    """Relaxing flow: transverse decay at kappa/2, z decay at kappa toward -1."""
    x, y, z = r
    return np.array([-0.5 * kappa * x - omega * y, omega * x - 0.5 * kappa * y, -kappa * z - kappa])


def bloch_rhs(r: np.ndarray, u: float, omega: float, kappa: float) -> np.ndarray:
    """Relaxing flow with the control rotation included (kappa = 0 gives the closed flow)."""
    x, y, z = r
    return np.array(
        [
            -0.5 * kappa * x - omega * y,
            omega * x - 0.5 * kappa * y - u * z,
            -kappa * z - kappa + u * y,
        ]
    )


def impulse_matrix(v: float) -> np.ndarray:
    """Rotation by angle v in the yz plane (about the x axis)."""
    c, s = np.cos(v), np.sin(v)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def apply_impulse(r: np.ndarray, v: float) -> np.ndarray:
    return impulse_matrix(v) @ np.asarray(r, dtype=float)


def rk4_step(rhs, r: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step for an autonomous right-hand side."""
    k1 = rhs(r)
    k2 = rhs(r + 0.5 * h * k1)
    k3 = rhs(r + 0.5 * h * k2)
    k4 = rhs(r + h * k3)
    return r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_step_time(rhs, t: float, r: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, r)
    k2 = rhs(t + 0.5 * h, r + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, r + 0.5 * h * k2)
    k4 = rhs(t + h, r + h * k3)
    return r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _as_control(u):
    if u is None:
        return lambda t: 0.0
    if callable(u):
        return u
    val = float(u)
    return lambda t: val


def simulate_hybrid(
    config: SystemConfig,
    schedule: ImpulseSchedule,
    u,
    t_final: float,
    mode: str = "closed",
    r0=(0.0, 0.0, 1.0),
) -> Trajectory:
    """Integrate the hybrid dynamics up to t_final.

    mode "closed" ignores the field couplings; mode "relaxing" includes
    them with total rate kappa1 + kappa2. u may be None, a constant, or a
    callable of time. Impulse times beyond t_final are ignored; each
    segment between impulses is integrated with steps of size at most
    config.dt chosen so the segment ends exactly on the impulse time.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    if mode not in ("closed", "relaxing"):
        raise ValueError(f"unknown mode {mode!r}")
    kappa = 0.0 if mode == "closed" else config.kappa
    control = _as_control(u)
    omega = config.omega

    impulses = schedule.impulses_until(t_final)
    times = [0.0]
    states = [np.asarray(r0, dtype=float)]
    events = []

    def rhs(t, r):
        return bloch_rhs(r, control(t), omega, kappa)

    def integrate_to(t_start: float, t_end: float):
        if t_end <= t_start + 1e-15:
            return
        n = max(1, int(np.ceil((t_end - t_start) / config.dt - 1e-12)))
        h = (t_end - t_start) / n
        for i in range(n):
            t = t_start + i * h
            times.append(t + h)
            states.append(_rk4_step_time(rhs, t, states[-1], h))

    t_prev = 0.0
    for tau, v in impulses:
        integrate_to(t_prev, tau)
        times.append(tau)
        states.append(apply_impulse(states[-1], v))
        events.append(len(states) - 1)
        t_prev = tau
    integrate_to(t_prev, t_final)

    return Trajectory(np.array(times), np.array(states), np.array(events, dtype=int))


def flow_matrix_affine(config: SystemConfig, duration: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact relaxing flow over a duration as an affine map r -> M r + b."""
    kappa, omega = config.kappa, config.omega
    decay_t = np.exp(-0.5 * kappa * duration)
    decay_z = np.exp(-kappa * duration)
    c, s = np.cos(omega * duration), np.sin(omega * duration)
    m = np.array(
        [
            [decay_t * c, -decay_t * s, 0.0],
            [decay_t * s, decay_t * c, 0.0],
            [0.0, 0.0, decay_z],
        ]
    )
    b = np.array([0.0, 0.0, decay_z - 1.0])
    return m, b


def periodic_fixed_point_affine(config: SystemConfig, period: float, v: float) -> np.ndarray:
    """Closed-form post-impulse fixed point of the period map.

    One period of relaxing flow followed by an impulse is the affine map
    r -> R (M r + b); the fixed point solves (I - R M) r = R b.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    m, b = flow_matrix_affine(config, period)
    rot = impulse_matrix(v)
    return np.linalg.solve(np.eye(3) - rot @ m, rot @ b)


def periodic_steady_state(
    config: SystemConfig,
    period: float,
    v: float,
    r0=(0.0, 0.0, 1.0),
    tol: float = 1e-10,
    max_iterations: int = 100_000,
) -> np.ndarray:
    """Post-impulse fixed point of the pulsed relaxation, found by iteration.

    Repeats (integrate one period, apply the impulse) until successive
    post-impulse states differ by less than tol.
    """
    if config.kappa <= 0:
        raise ValueError("periodic steady state requires a positive total coupling rate")
    if period <= 0:
        raise ValueError("period must be positive")
    n_steps = max(1, int(np.ceil(period / config.dt - 1e-12)))
    h = period / n_steps
    rhs = lambda r: relaxation_bloch_rhs(r, config.omega, config.kappa)
    rot = impulse_matrix(v)
    r = np.asarray(r0, dtype=float)
    for _ in range(max_iterations):
        r_next = r
        for _ in range(n_steps):
            r_next = rk4_step(rhs, r_next, h)
        r_next = rot @ r_next
        if np.max(np.abs(r_next - r)) < tol:
            return r_next
        r = r_next
    raise ConvergenceError(
        f"period map did not reach a fixed point in {max_iterations} iterations",
        residual=float(np.max(np.abs(r_next - r))),
    )
