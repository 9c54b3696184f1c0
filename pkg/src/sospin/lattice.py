"""Finite-box lattice geometry, integer height fields, and SOS energy primitives.

Sites are absolute integer pairs (x, y).  A box covers x in [ox, ox+width),
y in [oy, oy+height).  Heights are stored row-major in a (height, width)
integer array indexed [y - oy, x - ox].  Energies are accumulated as exact
integers and multiplied by beta once, so Boltzmann log-weights carry no
float drift beyond the single product.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator

import numpy as np

from .errors import InputError

if TYPE_CHECKING:
    from .disorder import DisorderField

Site = tuple[int, int]


@dataclass(frozen=True)
class Box:
    """Rectangular site set with an explicit lattice origin."""

    width: int
    height: int
    origin: Site = (1, 1)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InputError(f"box sides must be positive, got {self.width}x{self.height}")

    @property
    def area(self) -> int:
        return self.width * self.height

    def sites(self) -> Iterator[Site]:
        ox, oy = self.origin
        for y in range(oy, oy + self.height):
            for x in range(ox, ox + self.width):
                yield (x, y)

    def __contains__(self, site: Site) -> bool:
        x, y = site
        ox, oy = self.origin
        return ox <= x < ox + self.width and oy <= y < oy + self.height

    def boundary(self) -> Iterator[Site]:
        """External boundary: sites outside the box adjacent to it (four strips)."""
        ox, oy = self.origin
        for x in range(ox, ox + self.width):
            yield (x, oy - 1)
            yield (x, oy + self.height)
        for y in range(oy, oy + self.height):
            yield (ox - 1, y)
            yield (ox + self.width, y)

    def index(self, site: Site) -> tuple[int, int]:
        """(row, col) array index of a site."""
        x, y = site
        ox, oy = self.origin
        return (y - oy, x - ox)

    def center(self) -> Site:
        ox, oy = self.origin
        return (ox + (self.width - 1) // 2, oy + (self.height - 1) // 2)


@dataclass(frozen=True)
class ModelParams:
    """Coupling constants and computational knobs shared across modules.

    beta: inverse temperature (> 0)
    alpha: disorder amplitude (>= 0)
    h: pinning reward collected at height 0
    bc: integer boundary condition
    height_window: optional inclusive (lo, hi) truncation for exact/MCMC work
    contour_length_cap: optional restriction to contours of length <= cap
    """

    beta: float
    alpha: float = 0.0
    h: float = 0.0
    bc: int = 0
    height_window: tuple[int, int] | None = None
    contour_length_cap: int | None = None

    def __post_init__(self):
        if self.beta <= 0:
            raise InputError("beta must be positive")
        if self.alpha < 0:
            raise InputError("alpha must be nonnegative")
        if self.height_window is not None:
            lo, hi = self.height_window
            if not (lo <= 0 <= hi and lo <= self.bc <= hi):
                raise InputError(f"height_window {self.height_window} must contain 0 and bc={self.bc}")
        if self.contour_length_cap is not None and self.contour_length_cap < 4:
            raise InputError("contour_length_cap below the minimal contour length 4")


@dataclass(frozen=True)
class HeightField:
    """Integer heights on a box, with the boundary condition pinned outside."""

    box: Box
    heights: np.ndarray = field(repr=False)
    bc: int = 0

    def __post_init__(self):
        a = np.asarray(self.heights, dtype=np.int64)
        if a.shape != (self.box.height, self.box.width):
            raise InputError(f"heights shape {a.shape} does not match box {self.box}")
        object.__setattr__(self, "heights", a)

    @classmethod
    def flat(cls, box: Box, level: int, bc: int | None = None) -> "HeightField":
        bc = level if bc is None else bc
        return cls(box, np.full((box.height, box.width), level, dtype=np.int64), bc)

    def height(self, site: Site) -> int:
        return int(self.heights[self.box.index(site)])

    def value_or_bc(self, site: Site) -> int:
        return self.height(site) if site in self.box else self.bc

    def with_height(self, site: Site, value: int) -> "HeightField":
        a = self.heights.copy()
        a[self.box.index(site)] = value
        return HeightField(self.box, a, self.bc)

    def contact_indicators(self) -> np.ndarray:
        """delta_x = 1{phi(x) = 0}, relative to absolute level 0 regardless of bc."""
        return (self.heights == 0)

    def contact_count(self) -> int:
        return int(np.count_nonzero(self.heights == 0))


def hamiltonian(field: HeightField) -> int:
    """Gradient energy: interior nearest-neighbour |differences| (each pair once)
    plus |phi - bc| across every box/boundary adjacency.  Exact integer."""
    a = field.heights
    n = field.bc
    e = 0
    if a.shape[1] > 1:
        e += int(np.abs(a[:, 1:] - a[:, :-1]).sum())
    if a.shape[0] > 1:
        e += int(np.abs(a[1:, :] - a[:-1, :]).sum())
    e += int(np.abs(a[0, :] - n).sum() + np.abs(a[-1, :] - n).sum())
    e += int(np.abs(a[:, 0] - n).sum() + np.abs(a[:, -1] - n).sum())
    return e


def boltzmann_log_weight(field: HeightField, params: ModelParams) -> float:
    """log of the unnormalized SOS weight, -beta * H(phi)."""
    return -params.beta * hamiltonian(field)


def pinning_log_weight(field: HeightField, params: ModelParams, disorder: "DisorderField") -> float:
    """-beta*H(phi) + sum over contact sites of (alpha*omega_x - lambda(alpha) + h)."""
    if disorder.box != field.box:
        raise InputError(f"disorder box {disorder.box} does not match field box {field.box}")
    base = boltzmann_log_weight(field, params)
    contacts = field.contact_indicators()
    if not contacts.any():
        return base
    site_terms = params.alpha * disorder.values - disorder.spec.log_mgf(params.alpha) + params.h
    return base + float(site_terms[contacts].sum())
