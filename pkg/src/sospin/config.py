"""Experiment configuration: a flat `key = value` text format with JSON
literals on the right-hand side.  Configs round-trip exactly and every output
file embeds its resolved config in '#'-prefixed header lines, so any result
can be reproduced from the file alone."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .disorder import DisorderSpec
from .errors import InputError
from .lattice import ModelParams


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "layering"
    beta: float = 3.5
    alpha: float = 0.0
    h: float = 0.0
    bc: int = 0
    disorder_kind: str = "rademacher"
    disorder_values: tuple[float, ...] | None = None
    disorder_probs: tuple[float, ...] | None = None
    geometry: tuple[int, int] = (4, 64)       # (transverse width, length)
    box: tuple[int, int] = (6, 6)
    h_grid: tuple[float, ...] = ()
    n_grid: tuple[int, ...] = (1, 2, 3, 4)
    beta_grid: tuple[float, ...] = ()
    replicas: int = 8
    sweeps: int = 3000
    seed: int = 12345
    threads: int = 1
    out: str = "-"
    max_length: int = 12
    block_scale: int = 8
    cell_scale: int = 16
    theta1: float | None = None
    samples: int = 10000

    def model_params(self, h: float | None = None, bc: int | None = None) -> ModelParams:
        return ModelParams(beta=self.beta, alpha=self.alpha,
                           h=self.h if h is None else h,
                           bc=self.bc if bc is None else bc)

    def disorder_spec(self) -> DisorderSpec:
        if self.disorder_kind == "discrete":
            return DisorderSpec.discrete(self.disorder_values, self.disorder_probs)
        return DisorderSpec(self.disorder_kind)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            lines.append(f"{f.name} = {json.dumps(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(f"config line {ln}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in known:
                raise InputError(f"config line {ln}: unknown key {key!r}")
            try:
                parsed = json.loads(val.strip())
            except json.JSONDecodeError:
                parsed = val.strip()
            if isinstance(parsed, list):
                parsed = tuple(parsed)
            kw[key] = parsed
        return cls(**kw)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = asdict(self)
        for k, v in kw.items():
            if v is not None:
                d[k] = v
        d = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        return ExperimentConfig(**d)

    def header_lines(self) -> list[str]:
        return [f"# {line}" for line in self.to_text().strip().splitlines()]


def config_from_header(text: str) -> ExperimentConfig:
    """Recover the resolved config from an output file's '#' header."""
    lines = [ln[2:] for ln in text.splitlines() if ln.startswith("# ") and " = " in ln]
    return ExperimentConfig.from_text("\n".join(lines))
