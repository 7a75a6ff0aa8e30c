"""Torus metric, circle-overlap area and the uniform spatial grid.

The parcel is a square of side L. In periodic mode distances use the
minimal-image convention with displacement components in [-L/2, L/2);
in bounded (island) mode distances are plain Euclidean.
"""

from __future__ import annotations

import math

import numpy as np


def wrap_position(x: float, L: float) -> float:
    """Map a coordinate onto [0, L)."""
    return x % L


def torus_delta(p1, p2, L: float) -> tuple[float, float]:
    """Minimal-image displacement p2 - p1 on the torus of side L.

    Each component lies in [-L/2, L/2); a displacement of exactly L/2
    maps to -L/2 (half-open representative).
    """
    half = 0.5 * L
    dx = (p2[0] - p1[0] + half) % L - half
    dy = (p2[1] - p1[1] + half) % L - half
    return dx, dy


def delta_components(x1, y1, x2, y2, L: float, periodic: bool):
    """Vectorized displacement (x2-x1, y2-y1), minimal-image when periodic."""
    dx = np.subtract(x2, x1)
    dy = np.subtract(y2, y1)
    if periodic:
        half = 0.5 * L
        dx = (dx + half) % L - half
        dy = (dy + half) % L - half
    return dx, dy


def distance(x1, y1, x2, y2, L: float, periodic: bool):
    dx, dy = delta_components(x1, y1, x2, y2, L, periodic)
    return np.hypot(dx, dy)


def lens_area(r1: float, r2: float, d: float) -> float:
    """Exact intersection area of two disks with radii r1, r2 at distance d.

    Containment and disjoint configurations are handled exactly; the
    partial overlap uses the two-circular-segment formula.
    """
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        rs = min(r1, r2)
        return math.pi * rs * rs
    # clip guards acos against roundoff at the branch boundaries
    c1 = max(-1.0, min(1.0, (d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)))
    c2 = max(-1.0, min(1.0, (d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)))
    triangle = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)
    return (r1 * r1 * math.acos(c1) + r2 * r2 * math.acos(c2)
            - 0.5 * math.sqrt(max(0.0, triangle)))


def lens_area_vec(r1, r2, d):
    """Vectorized lens_area over numpy arrays."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    d = np.asarray(d, dtype=float)
    out = np.zeros(np.broadcast(r1, r2, d).shape)
    disjoint = d >= r1 + r2
    contained = d <= np.abs(r1 - r2)
    partial = ~(disjoint | contained)
    rs = np.minimum(r1, r2)
    out = np.where(contained, np.pi * rs * rs, out)
    if np.any(partial):
        dp = d[partial] if d.shape else np.broadcast_to(d, out.shape)[partial]
        a = np.broadcast_to(r1, out.shape)[partial]
        b = np.broadcast_to(r2, out.shape)[partial]
        c1 = np.clip((dp * dp + a * a - b * b) / (2.0 * dp * a), -1.0, 1.0)
        c2 = np.clip((dp * dp + b * b - a * a) / (2.0 * dp * b), -1.0, 1.0)
        tri = (-dp + a + b) * (dp + a - b) * (dp - a + b) * (dp + a + b)
        vals = (a * a * np.arccos(c1) + b * b * np.arccos(c2)
                - 0.5 * np.sqrt(np.maximum(tri, 0.0)))
        out[partial] = vals
    return out


class SpatialGrid:
    """Uniform bucket grid over the parcel for neighbor candidate queries.

    The cell side is at least 2*r_max, so any two disks of radius <= r_max
    that intersect live in cells of the same 3x3 neighborhood. The grid is
    single-writer: one engine mutates it, concurrent read-only queries are
    fine between mutations.
    """

    def __init__(self, L: float, r_max: float, periodic: bool = True):
        if not 2.0 * r_max < L:
            raise ValueError(f"grid requires 2*r_max < L, got r_max={r_max}, L={L}")
        target = max(2.0 * r_max, L / 64.0)
        n_side = max(1, int(L / target))
        # guard against a float quotient rounding up past the true ratio
        while n_side > 1 and L / n_side < 2.0 * r_max:
            n_side -= 1
        self.L = L
        self.periodic = periodic
        self.n_side = n_side
        self.cell_size = L / n_side
        self.cells: dict[int, set[int]] = {}

    def cell_index(self, px: float, py: float) -> int:
        ix = min(int(px / self.cell_size), self.n_side - 1)
        iy = min(int(py / self.cell_size), self.n_side - 1)
        return ix * self.n_side + iy

    def insert(self, ident: int, px: float, py: float) -> None:
        self.cells.setdefault(self.cell_index(px, py), set()).add(ident)

    def remove(self, ident: int, px: float, py: float) -> None:
        idx = self.cell_index(px, py)
        bucket = self.cells.get(idx)
        if bucket is None or ident not in bucket:
            raise KeyError(f"id {ident} not registered in cell {idx}")
        bucket.discard(ident)
        if not bucket:
            del self.cells[idx]

    def neighbor_ids(self, px: float, py: float, exclude: int | None = None) -> list[int]:
        """Ids in the 3x3 cell neighborhood of (px, py), sorted ascending.

        This is a superset of all individuals whose disk (radius <= r_max)
        can intersect a disk of radius <= r_max centered at (px, py).
        """
        ix = min(int(px / self.cell_size), self.n_side - 1)
        iy = min(int(py / self.cell_size), self.n_side - 1)
        n = self.n_side
        found: set[int] = set()
        seen_cells = set()
        for ox in (-1, 0, 1):
            for oy in (-1, 0, 1):
                cx, cy = ix + ox, iy + oy
                if self.periodic:
                    cx %= n
                    cy %= n
                elif not (0 <= cx < n and 0 <= cy < n):
                    continue
                idx = cx * n + cy
                if idx in seen_cells:
                    continue
                seen_cells.add(idx)
                bucket = self.cells.get(idx)
                if bucket:
                    found.update(bucket)
        if exclude is not None:
            found.discard(exclude)
        return sorted(found)

    def occupancy(self) -> dict[int, set[int]]:
        return self.cells
