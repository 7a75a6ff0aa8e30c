"""Population state: a finite point measure over (position, radius) states.

Individuals carry stable unique ids (never reused within a run) so event
logs stay auditable. Storage is columnar with swap-remove, which keeps
additions and removals O(1) while exposing contiguous numpy views.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SpatialGrid
from .params import ModelParams


class PopulationError(ValueError):
    """Raised on invalid initial entries or broken population invariants."""


@dataclass(frozen=True)
class Individual:
    """Immutable view of one individual's state."""

    id: int
    px: float
    py: float
    r: float


class Population:
    """Finite collection of individuals plus the spatial index.

    Mutated by exactly one engine at a time (single-writer contract); all
    scalar state is plain Python/numpy values.
    """

    def __init__(self, params: ModelParams, capacity: int = 64):
        self.params = params
        self.time = 0.0
        self._n = 0
        self._ids: list[int] = []
        self._slot_of: dict[int, int] = {}
        self._px = np.empty(capacity)
        self._py = np.empty(capacity)
        self._r = np.empty(capacity)
        self._next_id = 1
        self.grid = SpatialGrid(params.L, params.r_max, periodic=params.periodic)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_entries(cls, entries, params: ModelParams) -> "Population":
        pop = cls(params, capacity=max(64, 2 * len(entries)))
        for i, (px, py, r) in enumerate(entries):
            if not (params.r_min <= r <= params.r_max):
                raise PopulationError(
                    f"entry {i}: radius {r} outside [{params.r_min}, {params.r_max}]")
            if not (0.0 <= px < params.L and 0.0 <= py < params.L):
                raise PopulationError(
                    f"entry {i}: position ({px}, {py}) outside [0, {params.L})^2")
            pop.add(px, py, r)
        return pop

    # -- accessors ---------------------------------------------------------

    @property
    def n(self) -> int:
        return self._n

    @property
    def px(self) -> np.ndarray:
        return self._px[:self._n]

    @property
    def py(self) -> np.ndarray:
        return self._py[:self._n]

    @property
    def r(self) -> np.ndarray:
        return self._r[:self._n]

    @property
    def ids(self) -> list[int]:
        return self._ids

    def slot(self, ident: int) -> int:
        return self._slot_of[ident]

    def alive(self, ident: int) -> bool:
        return ident in self._slot_of

    def individual(self, ident: int) -> Individual:
        s = self._slot_of[ident]
        return Individual(ident, float(self._px[s]), float(self._py[s]),
                          float(self._r[s]))

    def individual_at(self, slot: int) -> Individual:
        return Individual(self._ids[slot], float(self._px[slot]),
                          float(self._py[slot]), float(self._r[slot]))

    def __iter__(self):
        for s in range(self._n):
            yield self.individual_at(s)

    def __len__(self) -> int:
        return self._n

    # -- mutation ----------------------------------------------------------

    def add(self, px: float, py: float, r: float) -> int:
        if self._n == len(self._px):
            new_cap = 2 * len(self._px)
            self._px = np.resize(self._px, new_cap)
            self._py = np.resize(self._py, new_cap)
            self._r = np.resize(self._r, new_cap)
        ident = self._next_id
        self._next_id += 1
        s = self._n
        self._px[s] = px
        self._py[s] = py
        self._r[s] = r
        self._ids.append(ident)
        self._slot_of[ident] = s
        self._n += 1
        self.grid.insert(ident, px, py)
        return ident

    def remove(self, ident: int) -> None:
        s = self._slot_of.pop(ident)
        self.grid.remove(ident, float(self._px[s]), float(self._py[s]))
        last = self._n - 1
        if s != last:
            moved = self._ids[last]
            self._ids[s] = moved
            self._px[s] = self._px[last]
            self._py[s] = self._py[last]
            self._r[s] = self._r[last]
            self._slot_of[moved] = s
        self._ids.pop()
        self._n -= 1

    def set_radii(self, values: np.ndarray) -> None:
        self._r[:self._n] = values

    # -- integrity ---------------------------------------------------------

    def audit(self) -> None:
        """Check the point-measure bookkeeping; raises PopulationError."""
        if self._n != len(self._ids) or self._n != len(self._slot_of):
            raise PopulationError("count mismatch between storage structures")
        p = self.params
        for s, ident in enumerate(self._ids):
            if self._slot_of[ident] != s:
                raise PopulationError(f"slot map broken for id {ident}")
            if not (p.r_min <= self._r[s] <= p.r_max):
                raise PopulationError(f"id {ident}: radius {self._r[s]} out of range")
            if not (0.0 <= self._px[s] < p.L and 0.0 <= self._py[s] < p.L):
                raise PopulationError(f"id {ident}: position out of the parcel")
            cell = self.grid.cell_index(float(self._px[s]), float(self._py[s]))
            if ident not in self.grid.cells.get(cell, ()):
                raise PopulationError(f"id {ident} missing from grid cell {cell}")
        registered = sum(len(b) for b in self.grid.cells.values())
        if registered != self._n:
            raise PopulationError("grid holds entries for dead individuals")

    # -- snapshots ---------------------------------------------------------

    def snapshot_arrays(self):
        """Copies of (ids, px, py, r) at the current instant."""
        return (list(self._ids), self.px.copy(), self.py.copy(), self.r.copy())


SNAPSHOT_HEADER = "id,px,py,r"


def write_snapshot(path, ids, px, py, r, provenance: list[str] | None = None) -> None:
    """Write one population snapshot as CSV (17 significant digits).

    17 digits make the float round trip lossless.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for line in provenance or []:
            fh.write(f"# {line}\n")
        fh.write(SNAPSHOT_HEADER + "\n")
        for i in range(len(ids)):
            fh.write(f"{ids[i]},{px[i]:.17g},{py[i]:.17g},{r[i]:.17g}\n")


def read_snapshot(path):
    """Read a snapshot CSV back into (ids, px, py, r) arrays."""
    ids: list[int] = []
    px: list[float] = []
    py: list[float] = []
    r: list[float] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line == SNAPSHOT_HEADER:
                continue
            a, b, c, d = line.split(",")
            ids.append(int(a))
            px.append(float(b))
            py.append(float(c))
            r.append(float(d))
    return ids, np.array(px), np.array(py), np.array(r)


def new_population(initial, params: ModelParams) -> Population:
    """Build a population from (position, radius) entries with ids 1..N.

    Accepts ((px, py), r) pairs or flat (px, py, r) triples.
    """
    entries = []
    for e in initial:
        if len(e) == 2:
            (px, py), r = e
        else:
            px, py, r = e
        entries.append((float(px), float(py), float(r)))
    return Population.from_entries(entries, params)
