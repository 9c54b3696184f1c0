"""Level-line representation of height fields: cylinders, compatibility, enumeration.

Geometry conventions
--------------------
Dual edges are encoded by the primal edge they cross:

    (0, x, y)  "V": vertical dual segment at x+1/2, y in [y-1/2, y+1/2],
               crossing the primal edge {(x,y), (x+1,y)}
    (1, x, y)  "H": horizontal dual segment at y+1/2, x in [x-1/2, x+1/2],
               crossing the primal edge {(x,y), (x,y+1)}

A dual vertex (i, j) stands for the point (i+1/2, j+1/2); its four incident
dual edges are N=(0,i,j+1), S=(0,i,j), E=(1,i+1,j), W=(1,i,j).  When four
edges meet at a vertex they split into the two pairs lying on the same side
of the +pi/4 diagonal through the vertex: {N,W} and {S,E} are linked.

A geometric contour is a set of dual edges forming a single closed cycle in
which every four-edge meeting uses the linked pairing.  Its interior is the
set of primal sites enclosed (even-odd crossing rule).  Interiors determine
edge sets and vice versa, so contours hash by their canonical edge set.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, NamedTuple

import numpy as np

from .errors import CapacityError, InputError
from .lattice import Box, HeightField, Site

Edge = tuple[int, int, int]

_SHAPE_GUARD_LENGTH = 16     # max contour length for shape-table enumeration
_BOX_GUARD_AREA = 36         # max area for direct in-box enumeration
_PLACEMENT_GUARD = 500_000   # max number of materialized contours


def edge_endpoints(e: Edge) -> tuple[tuple[int, int], tuple[int, int]]:
    """The two dual vertices of an edge."""
    o, x, y = e
    return ((x, y - 1), (x, y)) if o == 0 else ((x - 1, y), (x, y))


def edge_sites(e: Edge) -> tuple[Site, Site]:
    """The two primal sites separated by an edge."""
    o, x, y = e
    return ((x, y), (x + 1, y)) if o == 0 else ((x, y), (x, y + 1))


def _vertex_edges(v: tuple[int, int]) -> tuple[Edge, Edge, Edge, Edge]:
    i, j = v
    return ((0, i, j + 1), (0, i, j), (1, i + 1, j), (1, i, j))  # N, S, E, W


def _is_linked(v: tuple[int, int], a: Edge, b: Edge) -> bool:
    n, s, e, w = _vertex_edges(v)
    pair = {a, b}
    return pair == {n, w} or pair == {s, e}


def _linked_partner(v: tuple[int, int], a: Edge) -> Edge:
    n, s, e, w = _vertex_edges(v)
    return {n: w, w: n, s: e, e: s}[a]


def _interior_of_edges(edges: Iterable[Edge]) -> frozenset[Site]:
    """Enclosed primal sites by row-wise even-odd crossing counts."""
    rows: dict[int, list[int]] = defaultdict(list)
    for (o, x, y) in edges:
        if o == 0:
            rows[y].append(x)
    sites: list[Site] = []
    for y, xs in rows.items():
        xs.sort()
        for i in range(0, len(xs), 2):
            sites.extend((x, y) for x in range(xs[i] + 1, xs[i + 1] + 1))
    return frozenset(sites)


def _split_cycles(edges: list[Edge]) -> list[list[Edge]]:
    """Decompose an even-degree dual edge set into cycles, resolving four-edge
    meetings with the linked-pair rule."""
    incident: dict[tuple[int, int], list[Edge]] = defaultdict(list)
    for e in edges:
        a, b = edge_endpoints(e)
        incident[a].append(e)
        incident[b].append(e)
    follow: dict[tuple[Edge, tuple[int, int]], Edge] = {}
    for v, inc in incident.items():
        if len(inc) == 2:
            a, b = inc
            follow[(a, v)] = b
            follow[(b, v)] = a
        elif len(inc) == 4:
            for e in inc:
                follow[(e, v)] = _linked_partner(v, e)
        else:
            raise InputError(f"odd edge degree {len(inc)} at dual vertex {v}")
    unused = set(edges)
    cycles = []
    while unused:
        e0 = unused.pop()
        v = edge_endpoints(e0)[1]
        cyc = [e0]
        cur = e0
        while True:
            nxt = follow[(cur, v)]
            if nxt == e0:
                break
            cyc.append(nxt)
            unused.remove(nxt)
            a, b = edge_endpoints(nxt)
            v = b if a == v else a
            cur = nxt
        cycles.append(cyc)
    return cycles


class GeometricContour:
    """Closed dual-lattice level line, hashed by its canonical edge set."""

    __slots__ = ("edges", "_interior", "_delta", "_hash")

    def __init__(self, edges: Iterable[Edge], validate: bool = True):
        self.edges: frozenset[Edge] = frozenset(edges)
        self._interior: frozenset[Site] | None = None
        self._delta: tuple[frozenset[Site], frozenset[Site]] | None = None
        self._hash = hash(self.edges)
        if validate:
            self._validate()

    def _validate(self):
        if len(self.edges) < 4:
            raise InputError(f"contour needs at least 4 edges, got {len(self.edges)}")
        cycles = _split_cycles(list(self.edges))
        if len(cycles) != 1:
            raise InputError("edge set does not form a single linked-compatible cycle")
        if not self.interior:
            raise InputError("contour encloses no site")

    @property
    def length(self) -> int:
        return len(self.edges)

    @property
    def interior(self) -> frozenset[Site]:
        if self._interior is None:
            self._interior = _interior_of_edges(self.edges)
        return self._interior

    def _neighborhood(self) -> tuple[frozenset[Site], frozenset[Site]]:
        if self._delta is not None:
            return self._delta
        near: set[Site] = set()
        for e in self.edges:
            near.update(edge_sites(e))
        visits: dict[tuple[int, int], list[Edge]] = defaultdict(list)
        for e in self.edges:
            a, b = edge_endpoints(e)
            visits[a].append(e)
            visits[b].append(e)
        for v, inc in visits.items():
            # distance-1/sqrt(2) sites appear at turns through non-linked pairs
            if len(inc) == 2 and not _is_linked(v, inc[0], inc[1]):
                i, j = v
                near.update(((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)))
        inside = self.interior
        dm = frozenset(s for s in near if s in inside)
        dp = frozenset(s for s in near if s not in inside)
        self._delta = (dm, dp)
        return self._delta

    @property
    def delta_minus(self) -> frozenset[Site]:
        return self._neighborhood()[0]

    @property
    def delta_plus(self) -> frozenset[Site]:
        return self._neighborhood()[1]

    def translate(self, dx: int, dy: int) -> "GeometricContour":
        c = GeometricContour(((o, x + dx, y + dy) for (o, x, y) in self.edges), validate=False)
        if self._interior is not None:
            c._interior = frozenset((x + dx, y + dy) for (x, y) in self._interior)
        return c

    def sort_key(self):
        return tuple(sorted(self.edges))

    def __eq__(self, other):
        return isinstance(other, GeometricContour) and self.edges == other.edges

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"GeometricContour(length={self.length}, interior={len(self.interior)} sites)"


class SignedContour(NamedTuple):
    geometry: GeometricContour
    sign: int


class Cylinder(NamedTuple):
    contour: SignedContour
    intensity: int


def neighborhoods(c: SignedContour) -> tuple[frozenset[Site], frozenset[Site]]:
    """(internal, external) neighborhoods of the contour line."""
    return c.geometry.delta_minus, c.geometry.delta_plus


def are_compatible(a: SignedContour, b: SignedContour) -> bool:
    """Pairwise compatibility: the two unit cylinders must coexist as level
    lines of the summed cylinder field.  Equivalent conditions: non-crossing
    interiors; same-sign disjoint contours keep out of each other's external
    neighborhood; opposite-sign nested contours keep out of the internal one."""
    ga, gb = a.geometry, b.geometry
    if ga == gb:
        return False
    A, B = ga.interior, gb.interior
    inter = A & B
    if inter:
        if not (inter == A or inter == B):
            return False  # crossing
        nested = True
    else:
        nested = False
    if a.sign == b.sign:
        if not nested:
            if B & ga.delta_plus or A & gb.delta_plus:
                return False
    else:
        if nested:
            if inter == B:  # b inside a
                if B & ga.delta_minus:
                    return False
            else:
                if A & gb.delta_minus:
                    return False
    return True


@dataclass(frozen=True)
class CylinderCollection:
    """A set of cylinders with distinct signed geometries."""

    cylinders: frozenset[Cylinder]

    @classmethod
    def of(cls, items: Iterable[Cylinder]) -> "CylinderCollection":
        items = frozenset(items)
        seen = set()
        for cyl in items:
            key = (cyl.contour.geometry, cyl.contour.sign)
            if key in seen:
                raise InputError("two cylinders share the same signed contour geometry")
            seen.add(key)
            if cyl.intensity < 1:
                raise InputError("cylinder intensity must be >= 1")
        return cls(items)

    def __iter__(self) -> Iterator[Cylinder]:
        return iter(self.cylinders)

    def __len__(self) -> int:
        return len(self.cylinders)

    def contours(self) -> list[SignedContour]:
        return [c.contour for c in self.cylinders]

    def validate_compatibility(self):
        items = sorted(self.cylinders, key=lambda c: c.contour.geometry.sort_key())
        for i, ci in enumerate(items):
            for cj in items[i + 1:]:
                if not are_compatible(ci.contour, cj.contour):
                    raise InputError(
                        f"incompatible cylinder pair: {ci.contour.geometry} / {cj.contour.geometry}")


def extract_cylinders(field: HeightField) -> CylinderCollection:
    """All cylinders of a height field with its boundary condition: for every
    level the separating lines are drawn, four-edge meetings are resolved by
    the linked rule, and identical signed lines across consecutive levels
    merge into one cylinder of higher intensity."""
    box, n = field.box, field.bc
    a = field.heights
    ox, oy = box.origin
    w, h = box.width, box.height
    padded = np.full((h + 2, w + 2), n, dtype=np.int64)
    padded[1:-1, 1:-1] = a

    lo = min(int(a.min()), n)
    hi = max(int(a.max()), n)
    if lo == hi:
        return CylinderCollection.of(())

    buckets: dict[int, list[Edge]] = defaultdict(list)
    get = padded.__getitem__
    # vertical dual edges between horizontal site pairs (x,y)-(x+1,y)
    for iy in range(1, h + 1):
        y = oy + iy - 1
        row = padded[iy]
        for ix in range(0, w + 1):
            u, v = int(row[ix]), int(row[ix + 1])
            if u != v:
                e = (0, ox + ix - 1, y)
                for lev in range(min(u, v) + 1, max(u, v) + 1):
                    buckets[lev].append(e)
    # horizontal dual edges between vertical site pairs (x,y)-(x,y+1)
    for iy in range(0, h + 1):
        y = oy + iy - 1
        for ix in range(1, w + 1):
            u, v = int(get((iy, ix))), int(get((iy + 1, ix)))
            if u != v:
                e = (1, ox + ix - 1, y)
                for lev in range(min(u, v) + 1, max(u, v) + 1):
                    buckets[lev].append(e)

    def value(site: Site) -> int:
        x, y = site
        return int(padded[y - oy + 1, x - ox + 1])

    counts: dict[tuple[frozenset[Edge], int], int] = defaultdict(int)
    for level, edges in buckets.items():
        for cyc in _split_cycles(edges):
            key = frozenset(cyc)
            ve = next(e for e in cyc if e[0] == 0)
            _, x, y = ve
            high = (x, y) if value((x, y)) >= level else (x + 1, y)
            # even-odd along the row of the high site
            crossings = sum(1 for (o, ex, ey) in cyc if o == 0 and ey == high[1] and ex >= high[0])
            sign = 1 if crossings % 2 == 1 else -1
            counts[(key, sign)] += 1

    cyls = []
    for (key, sign), k in counts.items():
        geom = GeometricContour(key, validate=False)
        cyls.append(Cylinder(SignedContour(geom, sign), k))
    return CylinderCollection.of(cyls)


def reconstruct_field(collection: CylinderCollection, box: Box, bc: int,
                      validate: bool = True) -> HeightField:
    """phi(x) = bc + sum of sign*intensity over cylinders enclosing x."""
    if validate:
        collection.validate_compatibility()
    a = np.full((box.height, box.width), bc, dtype=np.int64)
    for cyl in collection:
        step = cyl.contour.sign * cyl.intensity
        for site in cyl.contour.geometry.interior:
            if site not in box:
                raise InputError(f"contour interior site {site} outside box {box}")
            a[box.index(site)] += step
    return HeightField(box, a, bc)


def contour_energy(collection: CylinderCollection) -> int:
    """Sum of intensity * contour length; equals the field Hamiltonian."""
    return sum(cyl.intensity * cyl.contour.geometry.length for cyl in collection)


def external_contours(collection: CylinderCollection) -> list[SignedContour]:
    """Contours whose interiors are inclusion-maximal in the collection."""
    items = collection.contours()
    out = []
    for c in items:
        A = c.geometry.interior
        if not any(A < d.geometry.interior for d in items if d is not c):
            out.append(c)
    return out


# ---------------------------------------------------------------------------
# enumeration


def _enumerate_cycles(anchor: Edge, edge_ok: Callable[[Edge], bool],
                      max_length: int) -> list[frozenset[Edge]]:
    """All cycles through `anchor` in which `anchor` is the minimal edge
    (orient-major order), every edge passes `edge_ok`, length <= max_length,
    and four-edge meetings are linked.  Each cycle may surface twice (two
    walk directions); callers dedupe."""
    v_start, v_goal = edge_endpoints(anchor)[1], edge_endpoints(anchor)[0]
    found: list[frozenset[Edge]] = []
    used: set[Edge] = {anchor}
    pair_at: dict[tuple[int, int], tuple[Edge, Edge]] = {}

    def departures(v, arrived):
        n, s, e, w = _vertex_edges(v)
        return [b for b in (n, s, e, w) if b != arrived]

    def pairing_ok(v, a, b):
        prev = pair_at.get(v)
        if prev is None:
            return True
        # second pass through v: both passes must be the two linked pairs
        return _is_linked(v, *prev) and _is_linked(v, a, b) and not ({a, b} & set(prev))

    def rec(arrived: Edge, v: tuple[int, int], length: int):
        if v == v_goal and length >= 3 and pairing_ok(v, arrived, anchor):
            found.append(frozenset(used))
            # fall through: longer cycles may revisit v_goal
        if length >= max_length:
            return
        remaining = max_length - length
        for b in departures(v, arrived):
            if b in used or not edge_ok(b):
                continue
            if b[0] == 0 and (b[1], b[2]) <= (anchor[1], anchor[2]):
                continue  # anchor must stay minimal
            if not pairing_ok(v, arrived, b):
                continue
            a_end, b_end = edge_endpoints(b)
            nv = b_end if a_end == v else a_end
            # lower bound on steps needed to get back to the goal vertex
            if abs(nv[0] - v_goal[0]) + abs(nv[1] - v_goal[1]) + 1 > remaining:
                continue
            prev = pair_at.get(v)
            pair_at[v] = (arrived, b)
            used.add(b)
            rec(b, nv, length + 1)
            used.discard(b)
            if prev is None:
                del pair_at[v]
            else:
                pair_at[v] = prev

    rec(anchor, v_start, 1)
    return found


_shape_cache: dict[int, list[tuple[frozenset[Edge], frozenset[Site]]]] = {}


def _contour_shapes(max_length: int) -> list[tuple[frozenset[Edge], frozenset[Site]]]:
    """Translation classes of contours, anchored so the minimal (V-type) edge
    sits at (0, 0, 0).  Cached; cost grows fast with max_length."""
    if max_length > _SHAPE_GUARD_LENGTH:
        raise CapacityError(f"shape enumeration guard: max_length {max_length} > {_SHAPE_GUARD_LENGTH}")
    key = max_length
    if key in _shape_cache:
        return _shape_cache[key]
    reach = max_length // 2 + 1

    def edge_ok(e: Edge) -> bool:
        _, x, y = e
        return -reach <= x <= reach and -reach <= y <= reach

    seen: set[frozenset[Edge]] = set()
    shapes = []
    for cyc in _enumerate_cycles((0, 0, 0), edge_ok, max_length):
        if cyc in seen:
            continue
        seen.add(cyc)
        interior = _interior_of_edges(cyc)
        if interior:
            shapes.append((cyc, interior))
    _shape_cache[key] = shapes
    return shapes


def _shape_placements(shape_interior: frozenset[Site], box: Box) -> tuple[range, range]:
    xs = [s[0] for s in shape_interior]
    ys = [s[1] for s in shape_interior]
    ox, oy = box.origin
    tx = range(ox - min(xs), ox + box.width - 1 - max(xs) + 1)
    ty = range(oy - min(ys), oy + box.height - 1 - max(ys) + 1)
    return tx, ty


_enum_cache: dict[tuple[Box, int], list[GeometricContour]] = {}


def enumerate_contours(box: Box, max_length: int) -> list[GeometricContour]:
    """Every geometric contour with interior inside the box and length at most
    max_length, each exactly once.  Guarded: direct search needs a small box,
    the shape-table route needs a small max_length."""
    if max_length < 4:
        return []
    if box.area <= _BOX_GUARD_AREA:
        key = (box, min(max_length, 4 * box.area))
        if key not in _enum_cache:
            _enum_cache[key] = _enumerate_in_box(box, key[1])
        return list(_enum_cache[key])
    shapes = _contour_shapes(max_length)  # raises CapacityError beyond the guard
    total = 0
    out: list[GeometricContour] = []
    for edges, interior in shapes:
        tx, ty = _shape_placements(interior, box)
        total += max(0, len(tx)) * max(0, len(ty))
        if total > _PLACEMENT_GUARD:
            raise CapacityError(f"placement guard: more than {_PLACEMENT_GUARD} contours")
        base = GeometricContour(edges, validate=False)
        base._interior = interior
        for dx in tx:
            for dy in ty:
                out.append(base.translate(dx, dy))
    return out


def _enumerate_in_box(box: Box, max_length: int) -> list[GeometricContour]:
    ox, oy = box.origin
    w, h = box.width, box.height
    max_length = min(max_length, 4 * box.area)

    def edge_ok(e: Edge) -> bool:
        s1, s2 = edge_sites(e)
        return s1 in box or s2 in box

    seen: set[frozenset[Edge]] = set()
    out: list[GeometricContour] = []
    for x in range(ox - 1, ox + w):
        for y in range(oy, oy + h):
            anchor = (0, x, y)
            if not edge_ok(anchor):
                continue
            for cyc in _enumerate_cycles(anchor, edge_ok, max_length):
                if cyc in seen:
                    continue
                seen.add(cyc)
                interior = _interior_of_edges(cyc)
                if interior and all(s in box for s in interior):
                    g = GeometricContour(cyc, validate=False)
                    g._interior = interior
                    out.append(g)
    return out


def contour_placement_census(box: Box, max_length: int) -> dict[int, int]:
    """Number of geometric contours in the box, by length.  Shape-table based,
    so it scales to large boxes without materializing contours."""
    census: dict[int, int] = defaultdict(int)
    for edges, interior in _contour_shapes(max_length):
        tx, ty = _shape_placements(interior, box)
        count = max(0, len(tx)) * max(0, len(ty))
        if count:
            census[len(edges)] += count
    return dict(census)


def materialize_contours_by_index(box: Box, max_length: int,
                                  indices: Iterable[int]) -> list[GeometricContour]:
    """Contours at given positions in the canonical (shape, translation) order
    used by the census.  Lets samplers avoid materializing the full list."""
    wanted = sorted(set(indices))
    out = []
    offset = 0
    wi = 0
    for edges, interior in _contour_shapes(max_length):
        tx, ty = _shape_placements(interior, box)
        block = max(0, len(tx)) * max(0, len(ty))
        while wi < len(wanted) and wanted[wi] < offset + block:
            local = wanted[wi] - offset
            dx = tx[local // len(ty)]
            dy = ty[local % len(ty)]
            base = GeometricContour(edges, validate=False)
            base._interior = interior
            out.append(base.translate(dx, dy))
            wi += 1
        offset += block
        if wi == len(wanted):
            break
    if wi != len(wanted):
        raise InputError("contour index out of range")
    return out


# ---------------------------------------------------------------------------
# debug emitters


def contour_to_json_dict(c: SignedContour, intensity: int | None = None) -> dict:
    d = {
        "edges": sorted([list(edge_sites(e)[0]), list(edge_sites(e)[1])] for e in c.geometry.edges),
        "sign": c.sign,
    }
    if intensity is not None:
        d["intensity"] = intensity
    return d


def collection_to_json(collection: CylinderCollection) -> str:
    items = sorted(collection, key=lambda cyl: cyl.contour.geometry.sort_key())
    return json.dumps({
        "cylinders": [contour_to_json_dict(cyl.contour, cyl.intensity) for cyl in items],
    }, indent=1)
