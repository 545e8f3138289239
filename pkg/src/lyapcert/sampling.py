"""Deterministic state-space sampling on level shells of V plus a Sobol fill."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc
from scipy.special import ndtri


@dataclass(frozen=True)
class Sampling:
    """Sampling and tolerance parameters shared by the checker stages."""

    density: int = 10_000
    level_range: tuple[float, float] = (1e-4, 1e4)
    seed: int = 0
    shell_fraction: float = 0.6
    scalar_levels: int = 1000
    near_zero_levels: int = 100
    near_zero_floor: float = 1e-8
    delta_strict: float = 1e-9
    eps_region: float = 1e-12

    def __post_init__(self):
        lo, hi = self.level_range
        if not (0 < lo <= hi):
            raise ValueError("level range must satisfy 0 < V_min <= V_max")
        if self.density < 1:
            raise ValueError("density must be positive")
        if not (0.0 < self.shell_fraction <= 1.0):
            raise ValueError("shell_fraction must lie in (0, 1]")
        if self.delta_strict <= 0 or self.eps_region <= 0:
            raise ValueError("tolerances must be positive")

    def levels(self) -> np.ndarray:
        lo, hi = self.level_range
        if lo == hi:
            return np.array([lo])
        return np.geomspace(lo, hi, self.scalar_levels)

    def near_zero(self) -> np.ndarray:
        top = min(self.level_range[0], 1e-2)
        return np.geomspace(self.near_zero_floor, max(top, 10 * self.near_zero_floor), self.near_zero_levels)


def directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Unit vectors: equally spaced angles in the plane, Sobol-normal otherwise."""
    if n == 1:
        return np.array([[1.0], [-1.0]])[np.arange(count) % 2]
    if n == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    u = qmc.Sobol(n, scramble=True, seed=seed).random(count)
    z = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def radius_for_level(V, dirs: np.ndarray, level) -> np.ndarray:
    """Row-wise ``t > 0`` with ``V(t * u) = level`` (first bracketed crossing)."""
    level = np.broadcast_to(np.asarray(level, dtype=float), (dirs.shape[0],))
    ev = lambda t: np.asarray(V.fn(t[:, None] * dirs), dtype=float)
    hi = np.ones(dirs.shape[0])
    for _ in range(400):
        low = ev(hi) < level
        if not np.any(low):
            break
        hi = np.where(low, hi * 2.0, hi)
    lo = np.zeros_like(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        shrink = ev(mid) >= level
        if not np.any(shrink & (mid > 1e-300)):
            break
        hi = np.where(shrink, mid, hi)
        lo = np.where(shrink, lo, mid)
        if np.all(hi - lo <= 1e-15 * hi):
            break
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        up = ev(mid) >= level
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    return hi


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray
    shell_levels: np.ndarray   # level of each shell point (nan for fill points)
    n_shell: int

    def __len__(self):
        return self.points.shape[0]


def sample_states(V, n: int, sampling: Sampling) -> SampleSet:
    total = sampling.density
    n_shell = max(1, int(round(total * sampling.shell_fraction)))
    lo, hi = sampling.level_range
    if lo == hi:
        n_lev = 1
    else:
        n_lev = max(2, int(round(np.sqrt(n_shell / (4 if n == 2 else 1)))))
    per = max(2, n_shell // n_lev)
    levels = np.geomspace(lo, hi, n_lev) if n_lev > 1 else np.array([lo])
    dirs = directions(n, per, sampling.seed)
    pts, lev = [], []
    for s in levels:
        t = radius_for_level(V, dirs, s)
        pts.append(t[:, None] * dirs)
        lev.append(np.full(per, s))
    shell = np.vstack(pts)
    shell_lev = np.concatenate(lev)
    n_fill = total - shell.shape[0]
    if n_fill > 0:
        R = float(np.max(np.linalg.norm(shell, axis=1)))
        m = int(np.ceil(np.log2(max(n_fill, 2))))
        u = qmc.Sobol(n, scramble=True, seed=sampling.seed + 1).random_base2(m)[:n_fill]
        fill = R * (2.0 * u - 1.0)
        fill = fill[np.any(fill != 0.0, axis=1)]
        points = np.vstack([shell, fill])
        shell_levels = np.concatenate([shell_lev, np.full(fill.shape[0], np.nan)])
    else:
        points, shell_levels = shell, shell_lev
    return SampleSet(points, shell_levels, shell.shape[0])
