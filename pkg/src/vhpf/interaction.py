"""Pairwise conflict-resolution forces and localized obstacle repulsion.

Two agents interact only while their separation sits in the annulus between
contact distance and contact + delta; inside it a weight profile scales a
radial push-apart term plus a circulating term orthogonal to it. Every agent
circulates the same way, which is what lets jams unwind instead of locking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .world import ConfigError, GridSpec

LINEAR = "linear"
SINUSOIDAL = "sinusoidal"
EXPONENTIAL = "exponential"
SPRING = "spring"
PROFILE_KINDS = (LINEAR, SINUSOIDAL, EXPONENTIAL, SPRING)

UNIT_MODE = "unit"
SPRING_MODE = "spring"

CCW = "ccw"
CW = "cw"


class CoincidentCentersError(ValueError):
    """Direction query for two agents at numerically the same point."""


@dataclass(frozen=True)
class WeightProfile:
    """Locality envelope for the pair force. delta is the annulus width."""

    kind: str = LINEAR
    delta: float = 1.5
    beta: float = 0.05  # exponential tail value at contact + delta

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown weight profile kind {self.kind!r}")
        if self.delta <= 0:
            raise ConfigError(f"profile width must be positive, got {self.delta}")
        if self.kind == EXPONENTIAL and not 0 < self.beta < 1:
            raise ConfigError(f"exponential tail must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class InteractionParams:
    """Gains and conventions for the pair force; shared by every agent in a run."""

    kr: float = 2.0
    kt: float = 1.0
    mode: str = SPRING_MODE
    circulation: str = CCW
    axis: tuple = (0.0, 0.0, 1.0)  # circulation axis, 3-D only

    def __post_init__(self):
        if self.kr < 0 or self.kt < 0:
            raise ConfigError("interaction gains must be non-negative")
        if self.mode not in (UNIT_MODE, SPRING_MODE):
            raise ConfigError(f"unknown interaction mode {self.mode!r}")
        if self.circulation not in (CCW, CW):
            raise ConfigError(f"circulation must be 'ccw' or 'cw', got {self.circulation!r}")


@dataclass(frozen=True)
class ObstacleRepulsionParams:
    """Short-range wall cushion: peak strength and influence distance."""

    strength: float = 6.0
    influence: float = 0.25

    def __post_init__(self):
        if self.influence <= 0:
            raise ConfigError(f"repulsion influence distance must be positive, got {self.influence}")
        if self.strength < 0:
            raise ConfigError(f"repulsion strength must be non-negative, got {self.strength}")


# ---------------------------------------------------------------------------
# Weight profiles
# ---------------------------------------------------------------------------

def interaction_weights(r, contact, profile: WeightProfile):
    """Vectorized weight evaluation; r and contact broadcast together.

    The weight is 1 at the contact distance, falls along the profile across
    the annulus, and is zero exactly at and beyond contact + delta (the
    exponential keeps its tail value beta at the edge and is cut beyond it).
    Below contact the linear/sinusoidal/exponential weights stay clamped at 1,
    so an (invalid) overlapping pair still repels; the spring profile keeps
    its literal step factors and vanishes there instead.
    """
    r = np.asarray(r, float)
    s = r - contact
    d = profile.delta
    if profile.kind == SPRING:
        w = np.where((s >= 0) & (s < d), 1.0 - s / d, 0.0)
    elif profile.kind == LINEAR:
        w = np.where(s < d, 1.0 - np.clip(s, 0.0, d) / d, 0.0)
    elif profile.kind == SINUSOIDAL:
        w = np.where(s < d, 0.5 * (np.cos(np.pi * np.clip(s, 0.0, d) / d) + 1.0), 0.0)
    else:
        alpha = math.log(profile.beta) / d
        w = np.where(s <= d, np.exp(alpha * np.clip(s, 0.0, d)), 0.0)
    return w


def weight(r: float, contact: float, profile: WeightProfile) -> float:
    """Scalar weight at separation r for a pair with the given contact distance."""
    return float(interaction_weights(r, contact, profile))


# ---------------------------------------------------------------------------
# Directions
# ---------------------------------------------------------------------------

def radial_direction(rel) -> np.ndarray:
    """Unit vector along rel = x_i - x_j: pushes agent i straight away from j."""
    rel = np.asarray(rel, float)
    n = np.linalg.norm(rel)
    if n < 1e-12:
        raise CoincidentCentersError("agents at numerically coincident centers")
    return rel / n


def _rot90(rel):
    rel = np.asarray(rel, float)
    return np.array([-rel[1], rel[0]])


def _circulating_vector(rel, params: InteractionParams):
    """Unnormalized vector orthogonal to rel along the shared circulation sense."""
    rel = np.asarray(rel, float)
    if rel.size == 2:
        out = _rot90(rel)
    else:
        axis = np.asarray(params.axis, float)
        out = np.cross(axis, rel)
        if np.linalg.norm(out) < 1e-9 * np.linalg.norm(rel):
            out = np.cross(np.array([1.0, 0.0, 0.0]), rel)
            if np.linalg.norm(out) < 1e-9 * np.linalg.norm(rel):
                out = np.cross(np.array([0.0, 1.0, 0.0]), rel)
    if params.circulation == CW:
        out = -out
    return out


def tangential_direction(rel, params: InteractionParams) -> np.ndarray:
    """Unit circulating direction; orthogonal to radial_direction(rel)."""
    rel = np.asarray(rel, float)
    if np.linalg.norm(rel) < 1e-12:
        raise CoincidentCentersError("agents at numerically coincident centers")
    vec = _circulating_vector(rel, params)
    return vec / np.linalg.norm(vec)


def fallback_direction(id_i: int, id_j: int, dim: int) -> np.ndarray:
    """Deterministic separation axis for coincident centers, picked by agent ids."""
    out = np.zeros(dim)
    out[(id_i + id_j) % dim] = 1.0
    return out


# ---------------------------------------------------------------------------
# Pair force
# ---------------------------------------------------------------------------

def pair_force(agent_i, agent_j, params: InteractionParams, profile: WeightProfile) -> np.ndarray:
    """Force exerted on agent i by the presence of agent j.

    Zero whenever the weight is zero, which keeps the interaction strictly
    local. In unit mode the radial and circulating parts are unit vectors
    scaled by their gains; in spring mode they scale with separation.
    """
    if agent_i.id == agent_j.id:
        raise ConfigError("pair force requires two distinct agents")
    rel = np.asarray(agent_i.x, float) - np.asarray(agent_j.x, float)
    r = float(np.linalg.norm(rel))
    w = weight(r, agent_i.radius + agent_j.radius, profile)
    if w == 0.0:
        return np.zeros(rel.size)
    if r < 1e-12:
        rad = fallback_direction(agent_i.id, agent_j.id, rel.size)
        tan = _circulating_vector(rad, params)
    elif params.mode == UNIT_MODE:
        rad = rel / r
        tan = tangential_direction(rel, params)
    else:
        rad = rel
        tan = _circulating_vector(rel, params)
    return w * (params.kr * rad + params.kt * tan)


def crf_forces(positions, radii, params: InteractionParams, profile: WeightProfile,
               suppressed=None, reach=None) -> np.ndarray:
    """Summed pair forces for all agents at once.

    positions: (L, dim); radii: (L,). Rows listed in `suppressed` get a zero
    sum (their presence still acts on everyone else). When `reach` is given,
    row i only feels agents whose bodies intersect its sensing ring, matching
    the per-agent neighbor query. Summation runs in agent index order, so
    results are reproducible bit for bit. Numerically coincident pairs (an
    upstream-prevented degenerate case) contribute nothing here; pair_force
    resolves them with its deterministic fallback axis instead.
    """
    pos = np.asarray(positions, float)
    L, dim = pos.shape
    if L < 2:
        return np.zeros_like(pos)
    rel = pos[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(rel, axis=2)
    contact = np.add.outer(radii, radii)
    w = interaction_weights(dist, contact, profile)
    np.fill_diagonal(w, 0.0)
    w = np.where(dist < 1e-12, 0.0, w)
    if reach is not None:
        in_ring = dist <= np.asarray(reach, float)[:, None] + np.asarray(radii, float)[None, :]
        w = np.where(in_ring, w, 0.0)

    if dim == 2:
        tan = np.stack([-rel[..., 1], rel[..., 0]], axis=-1)
    else:
        tan = np.cross(np.asarray(params.axis, float), rel)
        bad = (np.linalg.norm(tan, axis=2) < 1e-9 * np.maximum(dist, 1e-30)) & (w > 0)
        if np.any(bad):
            tan[bad] = np.cross(np.array([1.0, 0.0, 0.0]), rel[bad])
    if params.circulation == CW:
        tan = -tan

    if params.mode == UNIT_MODE:
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(dist > 0, 1.0 / dist, 0.0)
            tnorm = np.linalg.norm(tan, axis=2)
            tinv = np.where(tnorm > 0, 1.0 / tnorm, 0.0)
        radial = rel * inv[..., None]
        circ = tan * tinv[..., None]
    else:
        radial = rel
        circ = tan

    force = w[..., None] * (params.kr * radial + params.kt * circ)
    total = force.sum(axis=1)
    if suppressed:
        total[list(suppressed)] = 0.0
    return total


# ---------------------------------------------------------------------------
# Obstacle repulsion
# ---------------------------------------------------------------------------

class KnownBoundaryIndex:
    """Nearest-cell lookup over an agent's discovered boundary cells.

    Distances are measured to the cell boxes, not their centers, so the
    virtual wall coincides with the rasterized obstacle face.
    """

    def __init__(self, grid: GridSpec, cells):
        self.grid = grid
        idx = np.array(sorted(cells), dtype=float).reshape(-1, grid.dim)
        self.centers = np.asarray(grid.origin) + (idx + 0.5) * grid.h
        self.half = grid.h / 2.0
        self.tree = cKDTree(self.centers) if len(self.centers) else None

    def __len__(self):
        return len(self.centers)

    def clearance_normal(self, points):
        """(distance, outward unit normal) from each point to its nearest known cell."""
        X = np.atleast_2d(np.asarray(points, float))
        L = X.shape[0]
        if self.tree is None:
            return np.full(L, np.inf), np.zeros_like(X)
        k = min(4, len(self.centers))
        _, ii = self.tree.query(X, k=k)
        ii = ii.reshape(L, k)
        cand = self.centers[ii]  # (L, k, dim)
        near = np.clip(X[:, None, :], cand - self.half, cand + self.half)
        vec = X[:, None, :] - near
        d = np.linalg.norm(vec, axis=2)
        best = np.argmin(d, axis=1)
        rows = np.arange(L)
        dist = d[rows, best]
        normal = vec[rows, best]
        inside = dist < 1e-12
        if np.any(inside):
            # point sits inside the cell box: fall back to the center direction
            centers = cand[rows, best]
            alt = X - centers
            alt_n = np.linalg.norm(alt, axis=1)
            for i in np.where(inside)[0]:
                if alt_n[i] > 1e-12:
                    normal[i] = alt[i] / alt_n[i]
                else:
                    normal[i] = np.eye(X.shape[1])[0]
            dist[inside] = 0.0
        ok = ~inside & (dist > 0)
        normal[ok] = normal[ok] / dist[ok, None]
        return dist, normal


def obstacle_repulsion(x, radius, index: KnownBoundaryIndex | None,
                       params: ObstacleRepulsionParams):
    """Wall cushion for one body: (force vector, penetrated flag).

    The clearance is measured from the body surface to the nearest known
    boundary cell; the magnitude falls off quadratically and is exactly zero
    at clearance >= influence. Negative clearance returns the peak force and
    flags a penetration.
    """
    x = np.asarray(x, float)
    if index is None or len(index) == 0:
        return np.zeros_like(x), False
    dist, normal = index.clearance_normal(x[None, :])
    d = float(dist[0]) - radius
    if d >= params.influence:
        return np.zeros_like(x), False
    mag = params.strength * (1.0 - max(d, 0.0) / params.influence) ** 2
    return mag * normal[0], d < 0


def repulsion_batch(points, radii, index: KnownBoundaryIndex,
                    params: ObstacleRepulsionParams):
    """Vectorized obstacle_repulsion for several bodies sharing one index."""
    X = np.asarray(points, float)
    dist, normal = index.clearance_normal(X)
    d = dist - np.asarray(radii, float)
    active = d < params.influence
    mag = np.where(active, params.strength * (1.0 - np.clip(d, 0.0, None) / params.influence) ** 2, 0.0)
    return mag[:, None] * normal, d < 0


def circulation_bound_check(kt: float, stats) -> str | None:
    """Deadlock-freedom heuristic: the circulating gain should dominate the
    summed peak gradient magnitudes of all goal fields. Returns a warning
    message, or None when the bound holds (or cannot matter, single agent)."""
    stats = list(stats)
    if len(stats) <= 1:
        return None
    bound = float(sum(s.max_gradient for s in stats))
    if kt < bound:
        return (f"circulating gain {kt:g} is below the conservative "
                f"deadlock-freedom bound {bound:.4g}")
    return None
