"""Grids and containers for the dynamic-programming solvers.

The sphere solvers use polar coordinates x = sin(theta) cos(phi),
y = sin(theta) sin(phi), z = cos(theta) on a pole-excluded rectangle:
theta rows are cell-centered in (0, pi) so cot(theta) stays finite, phi
is uniform and periodic. The finite-horizon solvers use a uniform
cubic lattice masked to the solid ball.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PolarGrid:
    """Cell-centered (theta, phi) grid with theta in [dtheta/2, pi - dtheta/2]."""

    n_theta: int
    n_phi: int

    def __post_init__(self):
        if self.n_theta < 4 or self.n_phi < 4:
            raise ValueError("grid must have at least 4 nodes per axis")
        if self.n_phi % 2:
            raise ValueError("n_phi must be even (pole continuation shifts phi by pi)")

    @property
    def d_theta(self) -> float:
        return np.pi / self.n_theta

    @property
    def d_phi(self) -> float:
        return 2.0 * np.pi / self.n_phi

    @property
    def theta(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * self.d_theta

    @property
    def phi(self) -> np.ndarray:
        return np.arange(self.n_phi) * self.d_phi

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    def cartesian(self) -> np.ndarray:
        """Unit Bloch vectors of all nodes, shape (n_theta, n_phi, 3)."""
        th, ph = self.mesh()
        return np.stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1
        )

    def snap(self, theta: float, phi: float) -> tuple[int, int]:
        """Indices of the node nearest to (theta, phi)."""
        i = int(np.clip(np.round(theta / self.d_theta - 0.5), 0, self.n_theta - 1))
        j = int(np.round((phi % (2.0 * np.pi)) / self.d_phi)) % self.n_phi
        return i, j

    def interp_weights(self, theta, phi):
        """Bilinear stencil (4 node index pairs and weights) for points.

        phi wraps periodically. Points inside the excluded polar caps are
        continued across the pole: the missing row at -dtheta/2 is row 0
        with phi shifted by pi (and likewise at the south pole), so
        interpolation stays first-order accurate through the caps.
        """
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        tq = np.clip(theta / self.d_theta - 0.5, -0.5, self.n_theta - 0.5)
        i0 = np.floor(tq).astype(int)
        ft = tq - i0
        i1 = i0 + 1
        pq = (phi % (2.0 * np.pi)) / self.d_phi
        j0 = np.floor(pq).astype(int) % self.n_phi
        j1 = (j0 + 1) % self.n_phi
        fp = pq - np.floor(pq)

        half = self.n_phi // 2

        def wrap(i, j):
            over_north = i < 0
            over_south = i > self.n_theta - 1
            i_wrapped = np.where(over_north, 0, np.where(over_south, self.n_theta - 1, i))
            j_wrapped = np.where(over_north | over_south, (j + half) % self.n_phi, j)
            return i_wrapped, j_wrapped

        idx = (
            wrap(i0, j0),
            wrap(i0, j1),
            wrap(i1, j0),
            wrap(i1, j1),
        )
        w = (
            (1.0 - ft) * (1.0 - fp),
            (1.0 - ft) * fp,
            ft * (1.0 - fp),
            ft * fp,
        )
        return idx, w

    def interpolate(self, values: np.ndarray, theta, phi):
        idx, w = self.interp_weights(theta, phi)
        out = 0.0
        for (i, j), weight in zip(idx, w):
            out = out + weight * values[i, j]
        return out


def sphere_to_polar(r) -> tuple[np.ndarray, np.ndarray]:
    """Angles (theta, phi) of points on (or near) the unit sphere."""
    r = np.asarray(r, dtype=float)
    norm = np.linalg.norm(r, axis=-1)
    z = np.where(norm > 0, r[..., 2] / np.maximum(norm, 1e-300), 1.0)
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.arctan2(r[..., 1], r[..., 0]) % (2.0 * np.pi)
    return theta, phi


def polar_to_sphere(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1
    )


@dataclass(frozen=True)
class BallGrid:
    """Uniform cubic lattice on [-radius, radius]^3 masked to the solid ball."""

    h: float
    radius: float = 1.0

    def __post_init__(self):
        if self.h <= 0 or self.radius <= 0:
            raise ValueError("spacing and radius must be positive")
        n_half = int(round(self.radius / self.h))
        if n_half < 2:
            raise ValueError("spacing too coarse for the specified radius")
        object.__setattr__(self, "_n_half", n_half)

    @property
    def n(self) -> int:
        return 2 * self._n_half + 1

    @property
    def spacing(self) -> float:
        return self.radius / self._n_half

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.n)

    def mesh(self):
        ax = self.axis
        return np.meshgrid(ax, ax, ax, indexing="ij")

    @property
    def mask(self) -> np.ndarray:
        x, y, z = self.mesh()
        return x * x + y * y + z * z <= self.radius**2 + 1e-12

    def interpolate(self, values: np.ndarray, points) -> np.ndarray:
        """Trilinear interpolation at Cartesian points clipped to the cube."""
        pts = np.asarray(points, dtype=float)
        q = np.clip((pts + self.radius) / self.spacing, 0.0, self.n - 1.000001)
        i0 = np.floor(q).astype(int)
        f = q - i0
        out = 0.0
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = (
                        (f[..., 0] if dx else 1.0 - f[..., 0])
                        * (f[..., 1] if dy else 1.0 - f[..., 1])
                        * (f[..., 2] if dz else 1.0 - f[..., 2])
                    )
                    out = out + w * values[i0[..., 0] + dx, i0[..., 1] + dy, i0[..., 2] + dz]
        return out


@dataclass
class ValueFunction:
    """Value grid plus convergence metadata.

    For stationary problems values matches the grid shape; for
    finite-horizon problems a leading axis indexes the stored time
    slices listed in times.
    """

    grid: object
    values: np.ndarray
    converged: bool
    residual: float
    times: np.ndarray | None = None
    info: dict = field(default_factory=dict)


@dataclass
class FeedbackLaw:
    """Control value per node (per stored slice for finite-horizon laws).

    kind is one of 'bang_bang' (values in {-1, +1}), 'impulse' (integer
    action codes, -1 for drift, k >= 0 for the k-th rotation angle in
    info['angles']) or 'continuous'.
    """

    grid: object
    values: np.ndarray
    kind: str
    times: np.ndarray | None = None
    info: dict = field(default_factory=dict)
