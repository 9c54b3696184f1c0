"""Ground-truth machinery: exact partition functions, marginals, peak
probabilities, product-measure sampling, and quenched free energies on strips.

Three independent routes to log Z are kept deliberately separate so they can
cross-validate each other: direct enumeration over truncated height
configurations, the contour-form sum over compatible collections, and a
column transfer matrix.  Every truncated computation reports an explicit
tail bound instead of silently dropping mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .contours import (
    CylinderCollection,
    GeometricContour,
    SignedContour,
    are_compatible,
    contour_placement_census,
    enumerate_contours,
    materialize_contours_by_index,
)
from .disorder import DisorderField, DisorderSpec, sample
from .errors import CapacityError, InputError
from .lattice import Box, HeightField, ModelParams, Site

_ENUM_GUARD = 10 ** 8
_STATE_GUARD = 2 * 10 ** 5


@dataclass(frozen=True)
class TruncationReport:
    """A log-partition-function value plus an upper bound on the truncation
    error committed by window/length caps."""

    value: float
    tail_bound: float

    def agrees_with(self, other: "TruncationReport", slack: float = 1e-9) -> bool:
        return abs(self.value - other.value) <= self.tail_bound + other.tail_bound + slack


@dataclass(frozen=True)
class ContourConfigSpace:
    """An enumerated contour list with an optional intensity cap."""

    contours: tuple[GeometricContour, ...]
    intensity_cap: int | None = None

    def __post_init__(self):
        if len(set(self.contours)) != len(self.contours):
            raise InputError("contour list contains duplicates")


def default_window(params: ModelParams, area: int) -> tuple[int, int]:
    """Height window covering 0 and bc with enough slack that the per-site
    escape probability is below 1e-12 for the whole box."""
    if params.height_window is not None:
        return params.height_window
    # smallest W with exp(-4 beta (W+1)) * area < 1e-12
    w = max(2, math.ceil(math.log(1e12 * max(area, 1)) / (4.0 * params.beta) - 1.0))
    return (min(0, params.bc) - w, max(0, params.bc) + w)


def window_tail_bound(params: ModelParams, window: tuple[int, int], area: int) -> float:
    """Crude per-site bound on the log Z mass lost to the height truncation:
    escaping the window by d costs at least 4*beta*d in energy."""
    lo, hi = window
    slack = min(hi - max(0, params.bc), min(0, params.bc) - lo)
    if slack < 0:
        return math.inf
    per_site = 2.0 * math.exp(-4.0 * params.beta * (slack + 1)) / -math.expm1(-4.0 * params.beta)
    return area * per_site


def _pin_terms(params: ModelParams, spec: DisorderSpec | None,
               disorder: DisorderField | None) -> np.ndarray | float:
    """Per-site log-weight collected at contact sites."""
    if disorder is not None:
        lam = disorder.spec.log_mgf(params.alpha)
        return params.alpha * disorder.values - lam + params.h
    return params.h


# ---------------------------------------------------------------------------
# direct enumeration


def enumerate_logZ(box: Box, params: ModelParams, disorder: DisorderField | None = None,
                   window: tuple[int, int] | None = None) -> TruncationReport:
    """log of the exact sum over all height configurations in the window,
    by brute force.  The slowest and least clever route; that is its value."""
    lo, hi = window or default_window(params, box.area)
    vals = np.arange(lo, hi + 1, dtype=np.int64)
    nvals = len(vals)
    area = box.area
    total = nvals ** area
    if total > _ENUM_GUARD:
        raise CapacityError(
            f"enumerate_logZ guard: {nvals}^{area} > {_ENUM_GUARD}; use the transfer matrix")

    if disorder is not None and disorder.box != box:
        raise InputError("disorder box mismatch")
    pin = _pin_terms(params, None, disorder)
    pin_flat = pin.reshape(-1) if isinstance(pin, np.ndarray) else None

    h, w = box.height, box.width
    beta, bc = params.beta, params.bc
    radix = nvals ** np.arange(area, dtype=np.int64)

    running_max = -math.inf
    running_sum = 0.0
    chunk = max(1, min(total, 1 << 20))
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % nvals
        heights = vals[digits].reshape(-1, h, w)
        e = np.zeros(len(idx), dtype=np.int64)
        if w > 1:
            e += np.abs(np.diff(heights, axis=2)).sum(axis=(1, 2))
        if h > 1:
            e += np.abs(np.diff(heights, axis=1)).sum(axis=(1, 2))
        e += np.abs(heights[:, 0, :] - bc).sum(axis=1) + np.abs(heights[:, -1, :] - bc).sum(axis=1)
        e += np.abs(heights[:, :, 0] - bc).sum(axis=1) + np.abs(heights[:, :, -1] - bc).sum(axis=1)
        logw = -beta * e.astype(np.float64)
        contacts = (heights == 0).reshape(len(idx), area)
        if pin_flat is not None:
            logw += contacts @ pin_flat
        elif params.h != 0.0:
            logw += params.h * contacts.sum(axis=1)
        m = float(logw.max())
        if m > running_max:
            running_sum *= math.exp(running_max - m) if running_max > -math.inf else 0.0
            running_max = m
        running_sum += float(np.exp(logw - running_max).sum())
    value = running_max + math.log(running_sum)
    return TruncationReport(value, window_tail_bound(params, (lo, hi), area))


# ---------------------------------------------------------------------------
# contour-form partition function and compatible-subset sums


def _signed_contour_weights(box: Box, params: ModelParams, max_length: int | None,
                            intensity_cap: int | None) -> tuple[list[SignedContour], np.ndarray, float]:
    full_cap = 4 * box.area
    cap = min(max_length, full_cap) if max_length is not None else full_cap
    geoms = enumerate_contours(box, cap)
    signed = [SignedContour(g, s) for g in geoms for s in (1, -1)]
    beta = params.beta
    weights = np.empty(len(signed))
    for i, c in enumerate(signed):
        q = math.exp(-beta * c.geometry.length)
        if intensity_cap is None:
            weights[i] = q / (1.0 - q)          # sum of q^k, k >= 1
        else:
            weights[i] = q * (1.0 - q ** intensity_cap) / (1.0 - q)
    # mass excluded by the length cap: counting bound, contours of length l
    # anchored anywhere in the box are fewer than area * l * 4^l
    tail = 0.0
    if cap < full_cap:
        r = 4.0 * math.exp(-params.beta)
        if r < 1.0:
            L = cap + 1
            tail = 2 * box.area * (r ** L) * (L * (1 - r) + r) / (1 - r) ** 2
        else:
            tail = math.inf
    if intensity_cap is not None:
        tail += float(sum(math.exp(-beta * c.geometry.length * intensity_cap) for c in signed))
    return signed, weights, tail


def _compatible_sum(signed: Sequence[SignedContour], weights: np.ndarray,
                    tol: float = 1e-18) -> tuple[float, np.ndarray, float, float]:
    """Sum of prod(weights) over all pairwise-compatible subsets (the empty
    subset contributes 1).  Returns (Z, per-contour inclusion sums,
    size-weighted sum, pruning bound).  Backtracking over an incompatibility
    graph, largest contours first for early cutoffs."""
    order = sorted(range(len(signed)), key=lambda i: -signed[i].geometry.length)
    items = [signed[i] for i in order]
    w = weights[order]
    n = len(items)
    compat_mask = [0] * n
    for i in range(n):
        mask = 0
        for j in range(i + 1, n):
            if are_compatible(items[i], items[j]):
                mask |= 1 << j
        compat_mask[i] = mask
    suffix = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    tally = np.zeros(n)
    pruned = 0.0

    def rec(avail: int, start: int, prod: float, depth: int) -> tuple[float, float]:
        nonlocal pruned
        total = prod
        sized = depth * prod
        bound = prod * math.expm1(suffix[start]) if suffix[start] < 700 else math.inf
        if bound < tol:
            pruned += bound
            return total, sized
        i = start
        rest = avail >> start
        while rest:
            step = (rest & -rest).bit_length() - 1
            i += step
            rest >>= step
            sub_total, sub_sized = rec(avail & compat_mask[i], i + 1, prod * w[i], depth + 1)
            tally[i] += sub_total
            total += sub_total
            sized += sub_sized
            rest >>= 1
            i += 1
        return total, sized

    all_mask = (1 << n) - 1
    z, size_sum = rec(all_mask, 0, 1.0, 0)
    out_tally = np.zeros(n)
    out_tally[order] = tally
    return z, out_tally, size_sum, pruned


def contour_config_space(box: Box, params: ModelParams, max_length: int | None = None,
                         intensity_cap: int | None = None) -> ContourConfigSpace:
    """The enumerated contour list behind the contour-form computations."""
    full_cap = 4 * box.area
    cap = min(max_length, full_cap) if max_length is not None else full_cap
    return ContourConfigSpace(tuple(enumerate_contours(box, cap)), intensity_cap)


def contour_logZ(box: Box, params: ModelParams, max_length: int | None = None,
                 intensity_cap: int | None = None) -> TruncationReport:
    """log Z via the level-line representation: sum over compatible contour
    collections of prod 1/(e^{beta|edges|} - 1)."""
    signed, weights, length_tail = _signed_contour_weights(box, params, max_length, intensity_cap)
    z, _, _, pruned = _compatible_sum(signed, weights)
    # log(1+t) <= t converts missing summand mass into a log Z bound
    return TruncationReport(math.log(z), length_tail + pruned)


def expected_contour_count_exact(box: Box, params: ModelParams) -> float:
    """E[number of contours] under the SOS measure, via the compatible-subset
    representation (exact up to the reported pruning, kept below 1e-12)."""
    signed, weights, _ = _signed_contour_weights(box, params, None, None)
    z, _, size_sum, pruned = _compatible_sum(signed, weights, tol=1e-22)
    if pruned > 1e-12:
        raise CapacityError("pruning too coarse for an exact expectation")
    return size_sum / z


def expected_contour_count_product(box: Box, params: ModelParams,
                                   max_length: int | None = None) -> float:
    """E[number of contours] under the independent product measure: each signed
    contour is present with probability e^{-beta|edges|}."""
    if box.area <= 36:
        space = contour_config_space(box, params, max_length)
        return float(sum(2.0 * math.exp(-params.beta * g.length) for g in space.contours))
    census = contour_placement_census(box, max_length if max_length is not None else 12)
    return float(sum(2.0 * n * math.exp(-params.beta * ell) for ell, n in census.items()))


# ---------------------------------------------------------------------------
# transfer matrix on strips


class _Strip:
    """Column transfer engine for a width x length strip with bc on all four
    sides.  Column states are height vectors over the transverse direction,
    truncated to the window; all passes renormalize per column and track the
    log of the normalization."""

    def __init__(self, width: int, length: int, params: ModelParams,
                 disorder: DisorderField | None = None,
                 window: tuple[int, int] | None = None):
        if disorder is not None and (disorder.box.width, disorder.box.height) not in (
                (length, width), (width, length)):
            raise InputError("disorder box does not match strip geometry")
        lo, hi = window or default_window(params, width * length)
        vals = np.arange(lo, hi + 1, dtype=np.int64)
        nv = len(vals)
        m = nv ** width
        if m > _STATE_GUARD:
            raise CapacityError(f"transfer-matrix guard: {nv}^{width} = {m} > {_STATE_GUARD} states")
        digits = np.stack(np.unravel_index(np.arange(m), (nv,) * width), axis=1)
        states = vals[digits]
        bc, beta = params.bc, params.beta
        intra = np.abs(states[:, 0] - bc) + np.abs(states[:, -1] - bc)
        if width > 1:
            intra = intra + np.abs(np.diff(states, axis=1)).sum(axis=1)
        self.base_diag = np.exp(-beta * intra.astype(np.float64))
        self.contacts = (states == 0)
        self.T1 = np.exp(-beta * np.abs(vals[:, None] - vals[None, :]).astype(np.float64))
        self.v0 = np.exp(-beta * np.abs(states - bc).sum(axis=1).astype(np.float64))
        self.vals, self.nv, self.m = vals, nv, m
        self.width, self.length, self.params = width, length, params
        self.window = (lo, hi)
        self.states = states
        if disorder is not None:
            lam = disorder.spec.log_mgf(params.alpha)
            field = disorder.values
            if field.shape != (width, length):
                field = field.T
            self.pin = params.alpha * field - lam + params.h  # (width, length)
        elif params.h != 0.0 or params.alpha != 0.0:
            self.pin = np.full((width, length), params.h)
        else:
            self.pin = None

    def diag(self, c: int) -> np.ndarray:
        if self.pin is None:
            return self.base_diag
        return self.base_diag * np.exp(self.contacts @ self.pin[:, c])

    def link(self, v: np.ndarray) -> np.ndarray:
        t = v.reshape((self.nv,) * self.width)
        for ax in range(self.width):
            t = np.moveaxis(np.tensordot(t, self.T1, axes=([ax], [0])), -1, ax)
        return t.reshape(self.m)

    def log_partition(self, column_mask: dict[int, np.ndarray] | None = None) -> float:
        v = self.v0.copy()
        lognorm = 0.0
        for c in range(self.length):
            v = v * self.diag(c)
            if column_mask and c in column_mask:
                v = v * column_mask[c]
            if c < self.length - 1:
                v = self.link(v)
            nrm = float(v.max())
            if nrm <= 0.0:
                return -math.inf
            v /= nrm
            lognorm += math.log(nrm)
        return lognorm + math.log(float(v @ self.v0))

    def _sweeps(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        fs, v = [], self.v0.copy()
        for c in range(self.length):
            v = v / float(v.max())
            fs.append(v)
            v = v * self.diag(c)
            if c < self.length - 1:
                v = self.link(v)
        gs, v = [None] * self.length, self.v0.copy()
        for c in range(self.length - 1, -1, -1):
            v = v / float(v.max())
            gs[c] = v
            v = v * self.diag(c)
            if c > 0:
                v = self.link(v)
        return fs, gs

    def column_marginals(self) -> list[np.ndarray]:
        """Per column, the state distribution of the column height vector."""
        fs, gs = self._sweeps()
        out = []
        for c in range(self.length):
            p = fs[c] * self.diag(c) * gs[c]
            out.append(p / p.sum())
        return out

    def contact_expectation(self) -> float:
        nc = self.contacts.sum(axis=1).astype(np.float64)
        return float(sum(p @ nc for p in self.column_marginals()))

    def site_marginal(self, row: int, col: int) -> dict[int, float]:
        p = self.column_marginals()[col]
        out = {}
        for k, val in enumerate(self.vals):
            out[int(val)] = float(p[self.states[:, row] == val].sum())
        return out


def _strip_for_box(box: Box, params: ModelParams, disorder: DisorderField | None = None,
                   window: tuple[int, int] | None = None) -> tuple[_Strip, bool]:
    """Orient the transfer direction along the long side; returns (engine,
    transposed?)."""
    if box.height <= box.width:
        return _Strip(box.height, box.width, params, disorder, window), False
    return _Strip(box.width, box.height, params, disorder, window), True


def transfer_matrix_logZ(width: int, length: int, params: ModelParams,
                         disorder: DisorderField | None = None,
                         window: tuple[int, int] | None = None) -> TruncationReport:
    strip = _Strip(width, length, params, disorder, window)
    return TruncationReport(strip.log_partition(),
                            window_tail_bound(params, strip.window, width * length))


def transfer_matrix_contacts(width: int, length: int, params: ModelParams,
                             disorder: DisorderField | None = None,
                             window: tuple[int, int] | None = None) -> float:
    """Exact expectation of the number of contact sites on the strip."""
    return _Strip(width, length, params, disorder, window).contact_expectation()


# ---------------------------------------------------------------------------
# marginals and peak probabilities


def marginal_height_distribution(box: Box, params: ModelParams, site: Site,
                                 window: tuple[int, int] | None = None) -> dict[int, float]:
    """Exact height law at one site.  With a contour_length_cap in the params,
    the restricted measure is evaluated through the contour representation
    (small boxes only); otherwise the transfer matrix is used."""
    if params.contour_length_cap is not None:
        return _restricted_marginal(box, params, site)
    strip, transposed = _strip_for_box(box, params, None, window)
    row, col = box.index(site)
    if not transposed:
        return strip.site_marginal(row, col)
    return strip.site_marginal(col, row)


def peak_tail_probability(box: Box, params: ModelParams, site: Site, n: int,
                          window: tuple[int, int] | None = None) -> float:
    """P[phi(site) >= n]."""
    if window is None:
        lo, hi = default_window(params, box.area)
        window = (lo, max(hi, n + 3))
    marg = marginal_height_distribution(box, params, site, window)
    return float(sum(p for v, p in marg.items() if v >= n))


def joint_peak_probability(box: Box, params: ModelParams, sites: Iterable[Site], n: int,
                           window: tuple[int, int] | None = None) -> float:
    """P[min over sites of phi >= n], by masking transfer columns."""
    if window is None:
        lo, hi = default_window(params, box.area)
        window = (lo, max(hi, n + 3))
    strip, transposed = _strip_for_box(box, params, None, window)
    masks: dict[int, np.ndarray] = {}
    for site in sites:
        row, col = box.index(site)
        if transposed:
            row, col = col, row
        m = (strip.states[:, row] >= n).astype(np.float64)
        masks[col] = masks[col] * m if col in masks else m
    log_masked = strip.log_partition(masks)
    log_full = strip.log_partition()
    return math.exp(log_masked - log_full)


@dataclass(frozen=True)
class Theta1Report:
    theta1: float
    stability: float
    table: tuple[tuple[int, float], ...]   # (n, e^{4 beta n} P[phi >= n])
    box_side: int


def theta1_estimate(params: ModelParams, box_sizes: Sequence[int], n_range: Sequence[int],
                    prob_floor: float = 1e-200) -> Theta1Report:
    """Spike constant from the largest feasible box: theta1 ~ e^{4 beta n}
    P[phi(center) >= n], with the max relative change over consecutive n
    reported as the stability."""
    best_side = None
    for side in sorted(box_sizes, reverse=True):
        lo, hi = default_window(params, side * side)
        nv = max(hi, max(n_range) + 3) - lo + 1  # peak window used downstream
        if nv ** side <= _STATE_GUARD:
            best_side = side
            break
    if best_side is None:
        raise CapacityError("no feasible box size for theta1")
    box = Box(best_side, best_side)
    center = box.center()
    table = []
    for n in sorted(n_range):
        p = peak_tail_probability(box, params, center, n)
        if p < prob_floor:
            break
        table.append((n, math.exp(4.0 * params.beta * n) * p))
    if len(table) < 2:
        raise CapacityError("not enough usable levels above the probability floor")
    ratios = [abs(table[i + 1][1] / table[i][1] - 1.0) for i in range(len(table) - 1)]
    return Theta1Report(theta1=table[-1][1], stability=max(ratios),
                        table=tuple(table), box_side=best_side)


# ---------------------------------------------------------------------------
# product measure sampling


def sample_Q(box: Box, params: ModelParams, seed: int,
             max_length: int | None = None) -> list[SignedContour]:
    """Independent draw of a signed-contour set: each contour present with
    probability e^{-beta |edges|}.  Sampled per length class (binomial count,
    then uniform placements), which matches the product law exactly."""
    counts = _sample_length_counts(box, params, seed, 1, max_length)[2][0]
    return _materialize_sample(box, params, seed, counts, max_length)


def _census(box: Box, params: ModelParams, max_length: int | None) -> dict[int, int]:
    cap = max_length if max_length is not None else params.contour_length_cap
    if cap is None:
        if box.area > 36:
            raise CapacityError("sample_Q needs a contour length cap on large boxes")
        cap = 4 * box.area
    if box.area <= 36:
        census: dict[int, int] = {}
        for g in enumerate_contours(box, cap):
            census[g.length] = census.get(g.length, 0) + 1
        return census
    return contour_placement_census(box, cap)


def _sample_length_counts(box: Box, params: ModelParams, seed: int, n_samples: int,
                          max_length: int | None):
    census = _census(box, params, max_length)
    lengths = sorted(census)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    counts = np.zeros((n_samples, len(lengths)), dtype=np.int64)
    for j, ell in enumerate(lengths):
        p = math.exp(-params.beta * ell)
        counts[:, j] = gen.binomial(2 * census[ell], p, size=n_samples)
    return lengths, census, counts


def sample_Q_length_counts(box: Box, params: ModelParams, seed: int, n_samples: int,
                           max_length: int | None = None):
    """(lengths, census, counts): per-sample number of present contours in each
    length class.  Enough to study any statistic that depends on lengths only."""
    return _sample_length_counts(box, params, seed, n_samples, max_length)


def _materialize_sample(box: Box, params: ModelParams, seed: int, counts, max_length):
    census = _census(box, params, max_length)
    lengths = sorted(census)
    cap = max_length if max_length is not None else (params.contour_length_cap or 4 * box.area)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 1))))
    out: list[SignedContour] = []
    small = box.area <= 36
    by_length: dict[int, list[GeometricContour]] = {}
    if small:
        for g in enumerate_contours(box, cap):
            by_length.setdefault(g.length, []).append(g)
    for j, ell in enumerate(lengths):
        k = int(counts[j])
        if k == 0:
            continue
        chosen: set[int] = set()
        while len(chosen) < k:
            chosen.add(int(gen.integers(0, 2 * census[ell])))
        for idx in sorted(chosen):
            sign = 1 if idx % 2 == 0 else -1
            gi = idx // 2
            if small:
                out.append(SignedContour(by_length[ell][gi], sign))
            else:
                geoms = _length_class_contour(box, cap, ell, gi)
                out.append(SignedContour(geoms, sign))
    return out


def _length_class_contour(box: Box, cap: int, ell: int, index: int) -> GeometricContour:
    from .contours import _contour_shapes, _shape_placements  # internal reuse
    offset = 0
    for edges, interior in _contour_shapes(cap):
        if len(edges) != ell:
            continue
        tx, ty = _shape_placements(interior, box)
        block = max(0, len(tx)) * max(0, len(ty))
        if index < offset + block:
            local = index - offset
            base = GeometricContour(edges, validate=False)
            base._interior = interior
            return base.translate(tx[local // len(ty)], ty[local % len(ty)])
        offset += block
    raise InputError("length-class index out of range")


# ---------------------------------------------------------------------------
# intensity law


@dataclass(frozen=True)
class IntensityLawReport:
    tv_distance: float
    tail_bound: float
    conditional: tuple[float, ...]
    geometric: tuple[float, ...]
    presence_probability: float


def intensity_law_check(box: Box, params: ModelParams, contour: SignedContour,
                        window: tuple[int, int] | None = None) -> IntensityLawReport:
    """Exact conditional intensity distribution of a length-4 contour against
    the geometric law with parameter e^{-4 beta}."""
    if contour.geometry.length != 4:
        raise CapacityError("exact intensity law implemented for length-4 contours")
    (site,) = contour.geometry.interior
    lo, hi = window or default_window(params, box.area)
    vals = np.arange(lo, hi + 1, dtype=np.int64)
    nvals = len(vals)
    area = box.area
    if nvals ** area > _ENUM_GUARD:
        raise CapacityError("intensity law enumeration guard exceeded")

    h, w = box.height, box.width
    beta, bc = params.beta, params.bc
    radix = nvals ** np.arange(area, dtype=np.int64)
    ring = sorted(contour.geometry.delta_plus)
    ring_idx = []
    for s in ring:
        ring_idx.append(None if s not in box else box.index(s))
    c_idx = box.index(site)

    kmax = hi - lo
    mass = np.zeros(kmax + 1)        # mass[k] for k = 1..kmax; index 0 holds "absent"
    total = nvals ** area
    chunk = max(1, min(total, 1 << 20))
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % nvals
        heights = vals[digits].reshape(-1, h, w)
        e = np.zeros(len(idx), dtype=np.int64)
        if w > 1:
            e += np.abs(np.diff(heights, axis=2)).sum(axis=(1, 2))
        if h > 1:
            e += np.abs(np.diff(heights, axis=1)).sum(axis=(1, 2))
        e += np.abs(heights[:, 0, :] - bc).sum(axis=1) + np.abs(heights[:, -1, :] - bc).sum(axis=1)
        e += np.abs(heights[:, :, 0] - bc).sum(axis=1) + np.abs(heights[:, :, -1] - bc).sum(axis=1)
        # energies are nonnegative, so the flat field pins the scale at 1
        wgt = np.exp(-beta * e.astype(np.float64))
        ring_stack = []
        for s, rc in zip(ring, ring_idx):
            if rc is None:
                ring_stack.append(np.full(len(idx), bc, dtype=np.int64))
            else:
                ring_stack.append(heights[:, rc[0], rc[1]])
        ring_arr = np.stack(ring_stack, axis=1)
        center = heights[:, c_idx[0], c_idx[1]]
        if contour.sign > 0:
            k = center - ring_arr.max(axis=1)
        else:
            k = ring_arr.min(axis=1) - center
        k = np.clip(k, 0, kmax)
        np.add.at(mass, np.where(k >= 1, k, 0), wgt)
    present = mass[1:kmax + 1]
    total_present = present.sum()
    conditional = present / total_present
    q = math.exp(-4.0 * beta)
    geometric = np.array([(1 - q) * q ** (m - 1) for m in range(1, kmax + 1)])
    tv = 0.5 * float(np.abs(conditional - geometric).sum()) + 0.5 * (1.0 - float(geometric.sum()))
    # the window caps the intensity headroom above the dominant ring level
    headroom = max(1, (hi - max(0, bc)) if contour.sign > 0 else (min(0, bc) - lo))
    tail = 2.0 * q ** headroom / (1.0 - q) + 10.0 * window_tail_bound(params, (lo, hi), area)
    z = mass.sum()
    return IntensityLawReport(tv_distance=tv, tail_bound=tail,
                              conditional=tuple(conditional), geometric=tuple(geometric),
                              presence_probability=float(total_present / z))


# ---------------------------------------------------------------------------
# restricted-measure marginal (contour route)


def _restricted_marginal(box: Box, params: ModelParams, site: Site) -> dict[int, float]:
    cap = params.contour_length_cap
    signed, weights, _ = _signed_contour_weights(box, params, cap, None)
    lo, hi = default_window(params, box.area)
    span = hi - lo
    offsets = np.arange(-span, span + 1)
    acc = np.zeros(len(offsets))
    beta = params.beta

    containing = [i for i, c in enumerate(signed) if site in c.geometry.interior]
    containing_set = set(containing)

    def geom_pmf(c: SignedContour) -> np.ndarray:
        q = math.exp(-beta * c.geometry.length)
        pmf = np.zeros(len(offsets))
        for k in range(1, span + 1):
            pmf[span + c.sign * k] = (1 - q) * q ** (k - 1)
        return pmf / pmf.sum()

    pmfs = {i: geom_pmf(signed[i]) for i in containing}

    order = sorted(range(len(signed)), key=lambda i: -signed[i].geometry.length)
    items = [signed[i] for i in order]
    w = weights[order]
    n = len(items)
    compat_mask = [0] * n
    for i in range(n):
        m = 0
        for j in range(i + 1, n):
            if are_compatible(items[i], items[j]):
                m |= 1 << j
        compat_mask[i] = m
    delta0 = np.zeros(len(offsets))
    delta0[span] = 1.0
    suffix = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])

    def rec(avail: int, start: int, prod: float, dist: np.ndarray):
        nonlocal acc
        acc = acc + prod * dist
        if prod * (math.expm1(suffix[start]) if suffix[start] < 700 else math.inf) < 1e-18:
            return
        i = start
        rest = avail >> start
        while rest:
            step = (rest & -rest).bit_length() - 1
            i += step
            rest >>= step
            orig = order[i]
            nd = dist
            if orig in containing_set:
                nd = np.convolve(dist, pmfs[orig])[span:span + len(offsets)]
            rec(avail & compat_mask[i], i + 1, prod * w[i], nd)
            rest >>= 1
            i += 1

    rec((1 << n) - 1, 0, 1.0, delta0)
    z = acc.sum()
    return {int(params.bc + offsets[j]): float(acc[j] / z)
            for j in range(len(offsets)) if acc[j] > 0.0}


# ---------------------------------------------------------------------------
# quenched free energy on strips


@dataclass(frozen=True)
class QuenchedFreeEnergy:
    mean: float          # disorder average of log Z / area
    stderr: float
    annealed: float      # log of the disorder-averaged partition function / area
    values: tuple[float, ...]


def quenched_free_energy_exact(width: int, length: int, params: ModelParams,
                               spec: DisorderSpec, n_samples: int, seed: int,
                               window: tuple[int, int] | None = None) -> QuenchedFreeEnergy:
    """Monte Carlo over disorder of the exact strip log-partition function."""
    area = width * length
    box = Box(length, width)
    vals = []
    for r in range(n_samples):
        field = sample(spec, box, derive_seed(seed, r)) if params.alpha != 0.0 else None
        rep = transfer_matrix_logZ(width, length, params, field, window)
        vals.append(rep.value / area)
        if params.alpha == 0.0:
            break
    arr = np.array(vals)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    ann_params = ModelParams(beta=params.beta, alpha=0.0, h=params.h, bc=params.bc,
                             height_window=params.height_window,
                             contour_length_cap=params.contour_length_cap)
    annealed = transfer_matrix_logZ(width, length, ann_params, None, window).value / area
    return QuenchedFreeEnergy(mean, stderr, annealed, tuple(float(v) for v in arr))


def derive_seed(master: int, *key: int) -> int:
    """Stable per-work-item seed derivation."""
    ss = np.random.SeedSequence(entropy=master & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(int(k) & 0xFFFFFFFF for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
