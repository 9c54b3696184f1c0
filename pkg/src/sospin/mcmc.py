"""Heat-bath sampler for boxes beyond exact reach, plus thermodynamic
integration of the excess free energy through the contact fraction.

Sweeps are systematic two-color (checkerboard) scans: within a color class no
two sites are neighbours, so the whole class is resampled from its exact
single-site conditionals in one vectorized draw.  Heights live in a fixed
window around the boundary condition and level 0; the window bias is
checked, not assumed.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .disorder import DisorderField, DisorderSpec, sample
from .errors import InputError
from .lattice import Box, HeightField, ModelParams, Site
from .oracle import derive_seed

_MAGIC = b"SOS1"


def default_mcmc_window(params: ModelParams) -> tuple[int, int]:
    """Contiguous hull of [bc-6, bc+6] and [-2, 2]: the bulk lives near bc,
    contacts happen at 0, nothing else matters at beta >= 3."""
    if params.height_window is not None:
        return params.height_window
    return (min(params.bc - 6, -2), max(params.bc + 6, 2))


@dataclass
class ChainState:
    field: HeightField
    rng: np.random.Generator
    sweep_count: int = 0

    def clone(self) -> "ChainState":
        gen = np.random.Generator(np.random.Philox())
        gen.bit_generator.state = self.rng.bit_generator.state
        return ChainState(HeightField(self.field.box, self.field.heights.copy(),
                                      self.field.bc), gen, self.sweep_count)


def _pin_values(params: ModelParams, disorder: DisorderField | None, box: Box) -> np.ndarray:
    if disorder is None:
        return np.full((box.height, box.width), params.h)
    if disorder.box != box:
        raise InputError("disorder box mismatch")
    lam = disorder.spec.log_mgf(params.alpha)
    return params.alpha * disorder.values - lam + params.h


def conditional_distribution(field: HeightField, params: ModelParams,
                             disorder: DisorderField | None, site: Site,
                             window: tuple[int, int] | None = None
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Exact single-site conditional: (window values, probabilities)."""
    lo, hi = window or default_mcmc_window(params)
    vals = np.arange(lo, hi + 1)
    x, y = site
    nbrs = [field.value_or_bc(s) for s in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))]
    logw = -params.beta * sum(np.abs(vals - v) for v in nbrs).astype(float)
    pin = _pin_values(params, disorder, field.box)[field.box.index(site)]
    logw = logw + pin * (vals == 0)
    logw -= logw.max()
    p = np.exp(logw)
    return vals, p / p.sum()


def heat_bath_site(state: ChainState, params: ModelParams,
                   disorder: DisorderField | None, site: Site,
                   window: tuple[int, int] | None = None) -> ChainState:
    """Resample one site from its exact conditional; other sites unchanged."""
    new = sample_conditional(state.field, params, disorder, site, state.rng, 1)[0]
    return ChainState(state.field.with_height(site, int(new)), state.rng, state.sweep_count)


def sample_conditional(field: HeightField, params: ModelParams,
                       disorder: DisorderField | None, site: Site,
                       gen: np.random.Generator, size: int,
                       window: tuple[int, int] | None = None) -> np.ndarray:
    """iid draws from the single-site conditional (Gumbel-max, the same draw
    path the sweep engine uses)."""
    vals, p = conditional_distribution(field, params, disorder, site, window)
    logp = np.where(p > 0, np.log(np.maximum(p, 1e-300)), -np.inf)
    picks = np.argmax(logp[:, None] + gen.gumbel(size=(len(vals), size)), axis=0)
    return vals[picks]


class _SweepEngine:
    """Vectorized checkerboard heat bath over a fixed window.

    Keeps a padded height buffer alive across sweeps and resolves the
    single-site energies through a lookup table, so one sweep costs a handful
    of gathers on (window, sites/2) arrays."""

    def __init__(self, box: Box, params: ModelParams, disorder: DisorderField | None,
                 window: tuple[int, int] | None = None):
        lo, hi = window or default_mcmc_window(params)
        self.vals = np.arange(lo, hi + 1)
        nv = len(self.vals)
        self.box, self.params = box, params
        h, w = box.height, box.width
        pin = _pin_values(params, disorder, box)
        self.padded = np.full((h + 2, w + 2), params.bc, dtype=np.int64)
        flat = np.arange((h + 2) * (w + 2)).reshape(h + 2, w + 2)
        core = flat[1:-1, 1:-1]
        yy, xx = np.indices((h, w))
        self.pos, self.nb4, self.pin_row = [], [], []
        for c in (0, 1):
            mask = (xx + yy) % 2 == c
            self.pos.append(core[mask])
            self.nb4.append(np.stack([flat[1:-1, :-2][mask], flat[1:-1, 2:][mask],
                                      flat[:-2, 1:-1][mask], flat[2:, 1:-1][mask]]))
            self.pin_row.append(pin[mask])
        lo_ext = min(lo, params.bc)
        self.off = lo_ext
        hi_ext = max(hi, params.bc)
        nbr_vals = np.arange(lo_ext, hi_ext + 1)
        self.l1 = -params.beta * np.abs(self.vals[:, None] - nbr_vals[None, :]).astype(float)
        try:
            self.zero_row = int(np.nonzero(self.vals == 0)[0][0])
        except IndexError:
            self.zero_row = None

    def load(self, a: np.ndarray) -> None:
        self.padded[1:-1, 1:-1] = a

    def core(self) -> np.ndarray:
        return self.padded[1:-1, 1:-1]

    def sweep(self, gen: np.random.Generator) -> None:
        flat = self.padded.ravel()
        for c in (0, 1):
            nbv = flat[self.nb4[c]] - self.off            # (4, n)
            logw = (self.l1[:, nbv[0]] + self.l1[:, nbv[1]]
                    + self.l1[:, nbv[2]] + self.l1[:, nbv[3]])
            if self.zero_row is not None:
                logw[self.zero_row] += self.pin_row[c]
            logw += gen.gumbel(size=logw.shape)
            flat[self.pos[c]] = self.vals[np.argmax(logw, axis=0)]


def run_chain(box: Box, params: ModelParams, disorder: DisorderField | None,
              sweeps: int, burn_in: int, seed: int,
              initial: ChainState | None = None,
              window: tuple[int, int] | None = None) -> tuple[ChainState, np.ndarray]:
    """Systematic-scan chain from a flat start at bc (or a given state).
    Returns the final state and the per-sweep contact-count trace collected
    after burn-in.  Deterministic for a given seed."""
    engine = _SweepEngine(box, params, disorder, window)
    if initial is not None:
        state = initial.clone()
        engine.load(state.field.heights)
        gen = state.rng
        done = state.sweep_count
    else:
        engine.load(np.full((box.height, box.width), params.bc, dtype=np.int64))
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        done = 0
    core = engine.core()
    trace = np.empty(max(0, sweeps - burn_in), dtype=np.int64)
    for s in range(sweeps):
        engine.sweep(gen)
        if s >= burn_in:
            trace[s - burn_in] = int(np.count_nonzero(core == 0))
    final = ChainState(HeightField(box, core.copy(), params.bc), gen, done + sweeps)
    return final, trace


def integrated_autocorrelation_time(trace: np.ndarray, batches: int = 32) -> float:
    """Batch-means IAT estimate: var(batch means) * batch / var(trace)."""
    n = len(trace) // batches
    if n < 1 or np.var(trace) == 0:
        return 1.0
    means = trace[: n * batches].reshape(batches, n).mean(axis=1)
    return float(max(1.0, n * means.var(ddof=1) / trace.var(ddof=1)))


@dataclass(frozen=True)
class FreeEnergyCurve:
    """Contact fractions on an h-grid and their thermodynamic integral."""

    h_grid: tuple[float, ...]
    contact_fraction: tuple[float, ...]
    contact_stderr: tuple[float, ...]
    integrated_excess: tuple[float, ...]
    integrated_stderr: tuple[float, ...]
    iat_estimate: float = 1.0


def thermo_integrate(box: Box, params: ModelParams, spec: DisorderSpec | None,
                     h_grid, replicas: int, seed: int,
                     sweeps: int = 4000, burn_in: int | None = None,
                     window: tuple[int, int] | None = None) -> FreeEnergyCurve:
    """Trapezoid integration of the disorder-and-thermally-averaged contact
    fraction over an ascending grid starting at 0.  Common disorder draws are
    reused across the grid so free-energy differences have reduced variance."""
    h_grid = [float(h) for h in h_grid]
    if h_grid[0] != 0.0 or any(b <= a for a, b in zip(h_grid, h_grid[1:])):
        raise InputError("h_grid must be ascending and start at 0")
    area = box.area
    use_disorder = spec is not None and params.alpha != 0.0
    n_rep = replicas if use_disorder else 1

    densities = np.empty((n_rep, len(h_grid)))
    thermal_var = np.zeros((n_rep, len(h_grid)))
    iat = 1.0
    for r in range(n_rep):
        field = sample(spec, box, derive_seed(seed, r, 0)) if use_disorder else None
        for j, h in enumerate(h_grid):
            p = ModelParams(beta=params.beta, alpha=params.alpha if use_disorder else 0.0,
                            h=h, bc=params.bc, height_window=params.height_window,
                            contour_length_cap=params.contour_length_cap)
            bi = burn_in
            if bi is None:
                _, probe = run_chain(box, p, field, min(sweeps, 512), 0,
                                     derive_seed(seed, r, j + 1, 999), window=window)
                iat = max(iat, integrated_autocorrelation_time(probe))
                bi = int(min(10 * iat, sweeps // 2))
            _, trace = run_chain(box, p, field, sweeps + bi, bi,
                                 derive_seed(seed, r, j + 1), window=window)
            densities[r, j] = trace.mean() / area
            nb = max(8, min(32, len(trace) // 16))
            blen = len(trace) // nb
            means = trace[: nb * blen].reshape(nb, blen).mean(axis=1) / area
            thermal_var[r, j] = means.var(ddof=1) / nb

    mean = densities.mean(axis=0)
    se_thermal = np.sqrt(thermal_var.mean(axis=0) / n_rep)
    if n_rep > 1:
        se_replica = densities.std(axis=0, ddof=1) / math.sqrt(n_rep)
    else:
        se_replica = np.zeros(len(h_grid))
    # replica spread already carries thermal noise, but collapses when the
    # observable is nearly deterministic; keep the larger of the two
    stderr = np.maximum(se_replica, se_thermal)

    integral = np.zeros(len(h_grid))
    var_acc = np.zeros(len(h_grid))
    for j in range(1, len(h_grid)):
        dh = h_grid[j] - h_grid[j - 1]
        integral[j] = integral[j - 1] + 0.5 * dh * (mean[j] + mean[j - 1])
        var_acc[j] = var_acc[j - 1] + (0.5 * dh) ** 2 * (stderr[j] ** 2 + stderr[j - 1] ** 2)
    return FreeEnergyCurve(tuple(h_grid), tuple(mean), tuple(stderr),
                           tuple(integral), tuple(np.sqrt(var_acc)), iat)


# ---------------------------------------------------------------------------
# checkpoints: 16-byte header (magic, width, height, bc), int32 heights,
# rng state in a JSON sidecar so a resumed run is bit-for-bit identical


def save_checkpoint(path: str | Path, state: ChainState) -> None:
    path = Path(path)
    box = state.field.box
    with open(path, "wb") as f:
        f.write(struct.pack("<4siii", _MAGIC, box.width, box.height, state.field.bc))
        f.write(state.field.heights.astype("<i4").tobytes())
    sidecar = {"sweep_count": state.sweep_count,
               "origin": list(box.origin),
               "rng_state": _jsonable(state.rng.bit_generator.state)}
    Path(str(path) + ".rng.json").write_text(json.dumps(sidecar))


def load_checkpoint(path: str | Path) -> ChainState:
    path = Path(path)
    raw = path.read_bytes()
    magic, w, h, bc = struct.unpack("<4siii", raw[:16])
    if magic != _MAGIC:
        raise InputError(f"checkpoint magic/version mismatch: {magic!r} != {_MAGIC!r}")
    heights = np.frombuffer(raw[16:16 + 4 * w * h], dtype="<i4").reshape(h, w).astype(np.int64)
    sidecar = json.loads(Path(str(path) + ".rng.json").read_text())
    gen = np.random.Generator(np.random.Philox())
    gen.bit_generator.state = _unjsonable(sidecar["rng_state"])
    box = Box(w, h, tuple(sidecar["origin"]))
    return ChainState(HeightField(box, heights, bc), gen, sidecar["sweep_count"])


def _jsonable(state):
    if isinstance(state, dict):
        return {k: _jsonable(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return {"__ndarray__": state.tolist(), "dtype": str(state.dtype)}
    if isinstance(state, (np.integer,)):
        return int(state)
    return state


def _unjsonable(state):
    if isinstance(state, dict):
        if "__ndarray__" in state:
            return np.array(state["__ndarray__"], dtype=state["dtype"])
        return {k: _unjsonable(v) for k, v in state.items()}
    return state
