"""Block-scale view of large contours: traces, interior functions, coarse
cylinders, good/bad cell classification, and large-contour mass.

Blocks are B_z = [0, L)^2 + L z in continuum coordinates; a site (x, y) lies
in block (x // L, y // L).  Contour edges live on half-integer lines while
block boundaries are integer, so "closed block meets closed edge segment"
never degenerates into boundary-touching ambiguity.  Boxes used here should
be aligned with the block grid (origin (0, 0), sides multiples of the cell
scale).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .contours import CylinderCollection, GeometricContour, SignedContour
from .errors import InputError
from .lattice import Box, Site

Cell = tuple[int, int]


def coarse_trace(contour: GeometricContour | SignedContour, L: int) -> frozenset[Cell]:
    """Cells whose L-block meets the contour's edge segments."""
    if L < 1:
        raise InputError("block scale must be >= 1")
    geometry = contour.geometry if isinstance(contour, SignedContour) else contour
    cells: set[Cell] = set()
    for (o, x, y) in geometry.edges:
        if o == 0:   # segment X = x + 1/2, Y in [y - 1/2, y + 1/2]
            zx = (2 * x + 1) // (2 * L)
            for zy in range(math.floor((y - 0.5) / L), math.floor((y + 0.5) / L) + 1):
                cells.add((zx, zy))
        else:        # segment Y = y + 1/2, X in [x - 1/2, x + 1/2]
            zy = (2 * y + 1) // (2 * L)
            for zx in range(math.floor((x - 0.5) / L), math.floor((x + 0.5) / L) + 1):
                cells.add((zx, zy))
    return frozenset(cells)


def interior_function(contour: GeometricContour | SignedContour, L: int
                      ) -> tuple[frozenset[Cell], frozenset[Cell]]:
    """Coarse interior function as (trace cells, fully-inside cells): value 1/2
    on the trace, 1 on blocks entirely inside the interior, 0 elsewhere.
    Off-trace blocks are uniformly in or out, so one site decides."""
    geometry = contour.geometry if isinstance(contour, SignedContour) else contour
    trace = coarse_trace(geometry, L)
    inside = geometry.interior
    xs = [s[0] for s in inside]
    ys = [s[1] for s in inside]
    ones: set[Cell] = set()
    for zx in range(min(xs) // L, max(xs) // L + 1):
        for zy in range(min(ys) // L, max(ys) // L + 1):
            z = (zx, zy)
            if z in trace:
                continue
            if (zx * L, zy * L) in inside:
                ones.add(z)
    return trace, frozenset(ones)


def interior_value(trace: frozenset[Cell], ones: frozenset[Cell], cell: Cell) -> float:
    if cell in trace:
        return 0.5
    return 1.0 if cell in ones else 0.0


@dataclass(frozen=True)
class CoarseCylinder:
    """(trace, interior function, summed signed intensity) at one block scale."""

    trace: frozenset[Cell]
    interior_ones: frozenset[Cell]
    intensity: int
    scale: int

    def value(self, cell: Cell) -> float:
        return interior_value(self.trace, self.interior_ones, cell)


def coarse_cylinders(collection: CylinderCollection, L: int,
                     length_threshold: int) -> frozenset[CoarseCylinder]:
    """Group cylinders with length >= threshold by (trace, interior function);
    the intensity is the signed sum over the group.  Groups summing to zero
    are kept: their members still occupy space."""
    groups: dict[tuple[frozenset[Cell], frozenset[Cell]], int] = {}
    for cyl in collection:
        if cyl.contour.geometry.length < length_threshold:
            continue
        key = interior_function(cyl.contour.geometry, L)
        groups[key] = groups.get(key, 0) + cyl.contour.sign * cyl.intensity
    return frozenset(CoarseCylinder(tr, ones, q, L) for (tr, ones), q in groups.items())


def large_contour_mass(collection: CylinderCollection, length_threshold: int) -> int:
    """Total length of the contours at or above the threshold."""
    return sum(c.contour.geometry.length for c in collection
               if c.contour.geometry.length >= length_threshold)


@dataclass(frozen=True)
class CellClassification:
    """Good/bad decomposition of a box at cell scale M built on block scale L."""

    block_scale: int
    cell_scale: int
    good_cells: frozenset[Cell]
    bad_cells: frozenset[Cell]
    good_sites: frozenset[Site]
    rest_sites: frozenset[Site]
    low_density: bool | None = None


def classify_cells(coarse: Iterable[CoarseCylinder], box: Box, L: int, M: int,
                   h: float | None = None) -> CellClassification:
    """A cell is good when no trace block of any coarse cylinder meets its
    full M-block; good sites are the cell's sites at distance >= 2L from its
    edge, everything else lands in the rest."""
    if M % L != 0:
        raise InputError("cell scale must be a multiple of the block scale")
    ox, oy = box.origin
    if ox % M or oy % M or box.width % M or box.height % M:
        raise InputError("box must be aligned with and divisible by the cell scale")
    coarse = list(coarse)
    blocks_per_cell = M // L
    cells_x = range(ox // M, (ox + box.width) // M)
    cells_y = range(oy // M, (oy + box.height) // M)

    touched: set[Cell] = set()
    total_trace = 0
    for cc in coarse:
        total_trace += len(cc.trace)
        touched.update(cc.trace)

    good_cells, bad_cells = set(), set()
    for cy in cells_y:
        for cx in cells_x:
            lo_zx, lo_zy = cx * blocks_per_cell, cy * blocks_per_cell
            bad = any(lo_zx <= z[0] < lo_zx + blocks_per_cell and
                      lo_zy <= z[1] < lo_zy + blocks_per_cell for z in touched)
            (bad_cells if bad else good_cells).add((cx, cy))

    good_sites: set[Site] = set()
    for (cx, cy) in good_cells:
        x0, y0 = cx * M, cy * M
        for x in range(x0 + 2 * L, x0 + M - 2 * L):
            for y in range(y0 + 2 * L, y0 + M - 2 * L):
                good_sites.add((x, y))
    rest = frozenset(s for s in box.sites() if s not in good_sites)
    low = None if h is None else (total_trace <= math.sqrt(h) * box.area)
    return CellClassification(L, M, frozenset(good_cells), frozenset(bad_cells),
                              frozenset(good_sites), rest, low)


def bulk_height(site: Site, coarse: Iterable[CoarseCylinder]) -> int:
    """Plateau height (relative to the boundary condition) at a site far from
    large contours: the signed intensity sum over coarse cylinders whose
    interior function is 1 on the site's block."""
    out = 0
    for cc in coarse:
        z = (site[0] // cc.scale, site[1] // cc.scale)
        v = cc.value(z)
        if v == 0.5:
            raise InputError(f"site {site} lies under a coarse trace block")
        if v == 1.0:
            out += cc.intensity
    return out


def coarse_map_json(coarse: Iterable[CoarseCylinder]) -> list[dict]:
    """JSON-friendly dump of coarse cylinders for offline visualization."""
    out = []
    for cc in sorted(coarse, key=lambda c: (sorted(c.trace), c.intensity)):
        out.append({"scale": cc.scale,
                    "trace": sorted(list(z) for z in cc.trace),
                    "interior_ones": sorted(list(z) for z in cc.interior_ones),
                    "intensity": cc.intensity})
    return out
