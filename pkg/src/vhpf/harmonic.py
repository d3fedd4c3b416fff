"""Discrete harmonic potential on an occupancy grid.

The potential is pinned to 0 at the goal cell and to 1 on known obstacle cells
and the outer rim, and relaxed until every free cell equals the mean of its
axis neighbors to within tolerance. Relaxation is red-black Gauss-Seidel with
over-relaxation, so sweep results do not depend on traversal order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .world import ConfigError, GridSpec, _shift

FREE = 0
OBSTACLE_BC = 1
GOAL_BC = 2
OUTER_BC = 3

DEFAULT_TOL = 1e-8
DEFAULT_OMEGA = 1.8


class SolverError(RuntimeError):
    """Relaxation failed to reach the residual tolerance within the sweep cap."""


class FieldQueryError(ValueError):
    """Field sampled outside the grid or inside a known obstacle cell."""


@dataclass
class FieldStats:
    max_gradient: float
    min_interior_value: float
    iterations: int


class ScalarGridField:
    """Solved potential with per-cell classification and gradient sampling."""

    def __init__(self, grid: GridSpec, cell_class, values, known_mask, goal_cell,
                 tol=DEFAULT_TOL, inflate=0.0, omega=DEFAULT_OMEGA):
        self.grid = grid
        self.cell_class = cell_class
        self.values = values
        self.known_mask = known_mask  # raw discovered cells, without inflation
        self.goal_cell = goal_cell
        self.tol = tol
        self.inflate = inflate
        self.omega = omega
        self.residual = np.inf
        self.iterations = 0
        self._gradients = None
        self._origin = np.asarray(grid.origin, float)
        self._max_base = np.maximum(np.asarray(grid.shape, int) - 2, 0)

    # -- internals ----------------------------------------------------------

    def _invalidate(self):
        self._gradients = None

    def gradients(self):
        """Per-cell gradient components (central differences, one-sided at the
        rim), stacked as an array of shape (dim, *grid.shape)."""
        if self._gradients is None:
            g = np.gradient(self.values, self.grid.h)
            self._gradients = np.stack([g] if self.grid.dim == 1 else g)
        return self._gradients


def _neighbor_sum(v, out=None):
    """Sum of the 2*dim axis neighbors. Rim cells get partial sums, but the
    rim is always pinned, so those entries are never read."""
    if out is None:
        out = np.zeros_like(v)
    else:
        out.fill(0.0)
    for ax in range(v.ndim):
        lo = [slice(None)] * v.ndim
        hi = [slice(None)] * v.ndim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        out[tuple(lo)] += v[tuple(hi)]
        out[tuple(hi)] += v[tuple(lo)]
    return out


def optimal_omega(shape):
    """Near-optimal over-relaxation factor for a rectangular grid Laplacian."""
    rho = float(np.mean([math.cos(math.pi / max(n, 3)) for n in shape]))
    return min(1.95, 2.0 / (1.0 + math.sqrt(max(1.0 - rho * rho, 0.0))))


def _parity_masks(shape):
    grids = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    parity = np.zeros(shape, dtype=int)
    for g in grids:
        parity += g
    even = parity % 2 == 0
    return even, ~even


def _relax(field: ScalarGridField, tol: float, max_sweeps=None):
    """Run SOR sweeps until the free-cell residual drops below tol."""
    v = field.values
    free = field.cell_class == FREE
    if not np.any(free):
        field.residual = 0.0
        return
    dim = v.ndim
    even, odd = _parity_masks(v.shape)
    colors = (free & even, free & odd)
    inv = 1.0 / (2 * dim)
    omega = field.omega
    if max_sweeps is None:
        max_sweeps = 100 * int(np.sum(v.shape))
    buf = np.zeros_like(v)
    s = _neighbor_sum(v, buf)
    residual = float(np.max(np.abs(s[free] * inv - v[free])))
    if residual < tol:
        field.residual = residual
        return
    for sweep in range(1, max_sweeps + 1):
        for color in colors:
            s = _neighbor_sum(v, buf)
            v[color] += omega * (s[color] * inv - v[color])
        s = _neighbor_sum(v, buf)
        residual = float(np.max(np.abs(s[free] * inv - v[free])))
        field.iterations += 1
        if residual < tol:
            field.residual = residual
            field._invalidate()
            return
    field.residual = residual
    field._invalidate()
    raise SolverError(
        f"relaxation stalled at residual {residual:.3e} after {max_sweeps} sweeps (tol {tol:.1e})"
    )


def _inflate_mask(mask, grid: GridSpec, radius: float):
    """Cells within euclidean distance `radius` of any masked cell center."""
    if radius <= 0 or not np.any(mask):
        return mask.copy()
    reach = int(np.floor(radius / grid.h + 1e-9))
    if reach == 0:
        return mask.copy()
    out = mask.copy()
    ranges = [range(-reach, reach + 1)] * grid.dim
    for offset in itertools.product(*ranges):
        if all(o == 0 for o in offset):
            continue
        if np.linalg.norm(offset) * grid.h > radius + 1e-9:
            continue
        shifted = mask
        for ax, o in enumerate(offset):
            if o:
                shifted = _shift(shifted, ax, o)
        out |= shifted
    return out


def solve_dirichlet(grid: GridSpec, known_cells, goal, tol=DEFAULT_TOL,
                    inflate=0.0, omega=None, max_sweeps=None) -> ScalarGridField:
    """Solve the grid potential for one agent's knowledge of the boundary.

    known_cells: discovered boundary cells (pinned to 1, optionally inflated by
    `inflate` world units so a body of that radius can follow the gradient as a
    point). The outer rim is pinned to 1, the goal cell to 0. Cells the agent
    has not discovered stay free regardless of the true obstacle layout.
    omega defaults to a grid-size-tuned over-relaxation factor.
    """
    if tol <= 0:
        raise ConfigError(f"solver tolerance must be positive, got {tol}")
    if omega is None:
        omega = optimal_omega(grid.shape)
    shape = grid.shape
    cls = np.full(shape, FREE, dtype=np.int8)
    for ax in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[ax] = 0
        cls[tuple(sl)] = OUTER_BC
        sl[ax] = shape[ax] - 1
        cls[tuple(sl)] = OUTER_BC

    known_mask = np.zeros(shape, dtype=bool)
    for c in known_cells:
        known_mask[tuple(c)] = True
    pinned = _inflate_mask(known_mask, grid, inflate)
    cls[pinned] = OBSTACLE_BC

    if not grid.contains(goal):
        raise ConfigError(f"goal {goal} lies outside the grid")
    goal_cell = grid.point_to_cell(goal)
    if cls[goal_cell] == OBSTACLE_BC:
        raise ConfigError(f"goal {goal} lies inside the known obstacle region")
    cls[goal_cell] = GOAL_BC

    values = np.ones(shape, dtype=float)
    values[goal_cell] = 0.0

    field = ScalarGridField(grid, cls, values, known_mask, goal_cell,
                            tol=tol, inflate=inflate, omega=omega)
    _relax(field, tol, max_sweeps)
    return field


def resolve_incremental(field: ScalarGridField, new_cells, tol=None) -> ScalarGridField:
    """Pin newly discovered cells to 1 and re-relax from the current values.

    Warm-started: the previous solution seeds the sweeps, so small discoveries
    re-equilibrate in a few passes. The result matches a cold solve with the
    enlarged boundary set to within the solve tolerance. Mutates the field.
    """
    tol = field.tol if tol is None else tol
    fresh = [c for c in new_cells if not field.known_mask[tuple(c)]]
    if fresh:
        added = np.zeros(field.grid.shape, dtype=bool)
        for c in fresh:
            added[tuple(c)] = True
        field.known_mask |= added
        pinned = _inflate_mask(added, field.grid, field.inflate)
        if pinned[field.goal_cell]:
            raise ConfigError("discovered obstacle region swallowed the goal cell")
        field.cell_class[pinned & (field.cell_class != GOAL_BC)] = OBSTACLE_BC
        field.values[field.cell_class == OBSTACLE_BC] = 1.0
    _relax(field, tol)
    return field


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _interp_setup(field: ScalarGridField, x):
    rel = (np.asarray(x, float) - field._origin) / field.grid.h - 0.5
    base = np.clip(np.floor(rel).astype(int), 0, field._max_base)
    frac = np.clip(rel - base, 0.0, 1.0)
    return base, frac


def _interp(array, base, frac):
    """Multilinear sample of an array whose trailing axes are the grid axes."""
    dim = len(base)
    if dim == 1:
        i, f = base[0], frac[0]
        return array[..., i] * (1.0 - f) + array[..., i + 1] * f
    if dim == 2:
        i, j = base
        fx, fy = frac
        block = array[..., i:i + 2, j:j + 2]
        return ((1 - fx) * ((1 - fy) * block[..., 0, 0] + fy * block[..., 0, 1])
                + fx * ((1 - fy) * block[..., 1, 0] + fy * block[..., 1, 1]))
    i, j, k = base
    fx, fy, fz = frac
    b = array[..., i:i + 2, j:j + 2, k:k + 2]
    c00 = (1 - fz) * b[..., 0, 0, 0] + fz * b[..., 0, 0, 1]
    c01 = (1 - fz) * b[..., 0, 1, 0] + fz * b[..., 0, 1, 1]
    c10 = (1 - fz) * b[..., 1, 0, 0] + fz * b[..., 1, 0, 1]
    c11 = (1 - fz) * b[..., 1, 1, 0] + fz * b[..., 1, 1, 1]
    return (1 - fx) * ((1 - fy) * c00 + fy * c01) + fx * ((1 - fy) * c10 + fy * c11)


def _check_query(field: ScalarGridField, x):
    if not field.grid.contains(x):
        raise FieldQueryError(f"query point {x} outside the grid")
    cell = field.grid.point_to_cell(x)
    if field.known_mask[cell]:
        raise FieldQueryError(f"query point {x} inside a known obstacle cell")


def gradient_at(field: ScalarGridField, x) -> np.ndarray:
    """Potential gradient at a point, multilinearly interpolated between cell centers."""
    _check_query(field, x)
    base, frac = _interp_setup(field, x)
    return np.asarray(_interp(field.gradients(), base, frac))


def value_at(field: ScalarGridField, x) -> float:
    _check_query(field, x)
    base, frac = _interp_setup(field, x)
    return float(_interp(field.values, base, frac))


def field_stats(field: ScalarGridField) -> FieldStats:
    """Max gradient magnitude and minimum value over free cells."""
    free = field.cell_class == FREE
    if not np.any(free):
        return FieldStats(0.0, 0.0, field.iterations)
    grads = field.gradients()
    mag = np.sqrt((grads * grads).sum(axis=0))
    return FieldStats(
        max_gradient=float(mag[free].max()),
        min_interior_value=float(field.values[free].min()),
        iterations=field.iterations,
    )


def dump_field_csv(field: ScalarGridField, path):
    """Debug dump: one row per cell with index, class, and value."""
    names = {FREE: "free", OBSTACLE_BC: "obstacle", GOAL_BC: "goal", OUTER_BC: "outer"}
    with open(path, "w", encoding="utf-8") as f:
        f.write("cell,class,value\n")
        for idx in np.ndindex(field.grid.shape):
            label = names[int(field.cell_class[idx])]
            f.write(f"{'/'.join(map(str, idx))},{label},{field.values[idx]!r}\n")
