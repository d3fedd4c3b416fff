"""Shared oracles for the test-suite: dense linear solves, random workspaces."""

import itertools

import numpy as np
import scipy.ndimage as ndi

from vhpf.harmonic import FREE, ScalarGridField
from vhpf.world import Ball, Box, ConfigError, Workspace


def dense_solve(field: ScalarGridField) -> np.ndarray:
    """Assemble and solve the mean-value linear system directly."""
    shape = field.grid.shape
    free_cells = [tuple(c) for c in np.argwhere(field.cell_class == FREE)]
    index = {c: k for k, c in enumerate(free_cells)}
    n = len(free_cells)
    A = np.zeros((n, n))
    b = np.zeros(n)
    dim = len(shape)
    for c, k in index.items():
        A[k, k] = 2.0 * dim
        for ax, step in itertools.product(range(dim), (-1, 1)):
            nb = list(c)
            nb[ax] += step
            nb = tuple(nb)
            if index.get(nb) is not None:
                A[k, index[nb]] = -1.0
            else:
                b[k] += field.values[nb]  # pinned neighbor
    x = np.linalg.solve(A, b)
    out = field.values.copy()
    for c, k in index.items():
        out[c] = x[k]
    return out


def component(passable, seed):
    """Connected component of `seed` over 4-neighbor adjacency."""
    seen = np.zeros_like(passable)
    stack = [tuple(seed)]
    seen[tuple(seed)] = True
    while stack:
        i, j = stack.pop()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = i + di, j + dj
            if 0 <= ni < passable.shape[0] and 0 <= nj < passable.shape[1]:
                if passable[ni, nj] and not seen[ni, nj]:
                    seen[ni, nj] = True
                    stack.append((ni, nj))
    return seen


def connected(free, seed):
    return bool(np.all(component(free, seed)[free]))


def _has_thin_necks(free):
    """True when some free cell hangs off a width-one passage. Those passages
    attenuate a harmonic field below solver resolution, leaving tolerance-flat
    pockets that no finite-precision solve can order strictly."""
    plus = ndi.generate_binary_structure(2, 1)
    # outside the grid counts as free: the outer rim is a wall, not a neck
    core = ndi.binary_erosion(free, plus, border_value=1)
    covered = ndi.binary_dilation(core, plus)
    return bool(np.any(free & ~covered))


def random_workspace(rng):
    """Small 2-D workspace with a goal whose free space is one component."""
    while True:
        size = float(rng.integers(5, 8))
        h = 0.25
        n_shapes = int(rng.integers(1, 4))
        shapes = []
        for _ in range(n_shapes):
            if rng.random() < 0.5:
                c = rng.uniform(1.0, size - 1.0, size=2)
                shapes.append(Ball(tuple(c), float(rng.uniform(0.4, 1.2))))
            else:
                lo = rng.uniform(0.5, size - 2.0, size=2)
                ext = rng.uniform(0.5, 1.8, size=2)
                hi = np.minimum(lo + ext, size - 0.5)
                if np.any(hi - lo < 0.3):
                    continue
                shapes.append(Box(tuple(lo), tuple(hi)))
        try:
            ws = Workspace((0.0, 0.0), (size, size), shapes, h=h)
        except ConfigError:
            continue
        free = np.argwhere(ws.free_mask)
        interior = [c for c in free
                    if 0 < c[0] < ws.grid.shape[0] - 1 and 0 < c[1] < ws.grid.shape[1] - 1]
        if not interior:
            continue
        goal_cell = tuple(interior[rng.integers(0, len(interior))])
        if not connected(ws.free_mask, goal_cell):
            continue
        if _has_thin_necks(ws.free_mask):
            continue
        return ws, ws.grid.cell_center(goal_cell)
