"""
Experiment configuration documents (JSON) and their schema.

The top-level ``command`` key picks the parameter model; every other key is
validated against it, and validation errors are reported with dotted key paths.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigurationError
from .grid import DomainGrid, PairMask
from .weight import BoundarySingular, Constant, GaussianKernel, SeparableTheta, Tabulated, WeightSpec

COMMANDS = (
    "denoise",
    "deblur",
    "diagnose-weight",
    "witness-limit",
    "lp-scaling",
    "sandwich",
    "dual-check",
    "growth-scan",
    "testfn-criterion",
    "adjoint-audit",
)


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class GridConfig(_Model):
    lower: list[float] = [0.0]
    upper: list[float] = [1.0]
    dims: list[int]

    @model_validator(mode="after")
    def _same_rank(self):
        if not (len(self.lower) == len(self.upper) == len(self.dims)) or not self.dims:
            raise ValueError("lower, upper and dims must have the same nonzero length")
        return self

    def build(self) -> DomainGrid:
        return DomainGrid.on_box(self.lower, self.upper, self.dims)


class WeightConfig(_Model):
    kind: Literal["constant", "gaussian", "separable_theta", "boundary_singular", "tabulated"]
    c: float = 1.0
    amplitude: float = 1.0
    bandwidth: Optional[float] = None
    floor: float = 0.0
    alpha: Optional[float] = None
    file: Optional[str] = None

    @model_validator(mode="after")
    def _required(self):
        if self.kind == "gaussian" and self.bandwidth is None:
            raise ValueError("gaussian weight needs 'bandwidth'")
        if self.kind == "boundary_singular" and self.alpha is None:
            raise ValueError("boundary_singular weight needs 'alpha'")
        if self.kind == "tabulated" and self.file is None:
            raise ValueError("tabulated weight needs 'file' (i,j,value lines)")
        return self

    def build(self, grid: DomainGrid | None = None, base: Path | None = None) -> WeightSpec:
        if self.kind == "constant":
            return Constant(self.c)
        if self.kind == "gaussian":
            return GaussianKernel(self.amplitude, self.bandwidth, self.floor)
        if self.kind == "separable_theta":
            return SeparableTheta()
        if self.kind == "boundary_singular":
            return BoundarySingular(self.alpha)
        from .fieldio import read_pair_csv

        if grid is None:
            raise ConfigurationError("tabulated weight needs a grid")
        return Tabulated(read_pair_csv(_resolve(self.file, base), grid.n))


class MaskConfig(_Model):
    kind: Literal["full", "radius"] = "full"
    radius: Optional[float] = None

    def build(self) -> PairMask:
        if self.kind == "full":
            return PairMask.full()
        if self.radius is None:
            raise ConfigurationError("mask.radius is required for a radius mask")
        return PairMask.truncated(self.radius)


class DataConfig(_Model):
    """Synthetic data or a field file."""

    kind: Literal["file", "affine", "step", "random"]
    path: Optional[str] = None
    slope: list[float] = [1.0]
    offset: float = 0.0
    noise: float = 0.0
    scale: float = 1.0


class FidelityConfig(_Model):
    lam: float = Field(alias="lambda", gt=0)
    q: float = 2.0
    data: DataConfig
    kernel: Optional[list] = None


class SolverConfig(_Model):
    max_iters: int = Field(100_000, gt=0)
    tol: Optional[float] = Field(None, gt=0)
    safety: float = Field(0.95, gt=0, lt=1)


class DenoiseConfig(_Model):
    command: Literal["denoise", "deblur"]
    seed: int = 0
    grid: GridConfig
    weight: WeightConfig
    p: float = Field(1.0, ge=1)
    fidelity: FidelityConfig
    mask: MaskConfig = MaskConfig()
    solver: SolverConfig = SolverConfig()
    uniqueness_starts: int = Field(0, ge=0)
    expect_identity: bool = False
    out: Optional[str] = None

    @model_validator(mode="after")
    def _kernel(self):
        if self.command == "deblur" and self.fidelity.kernel is None:
            raise ValueError("deblur needs fidelity.kernel")
        return self


class DiagnoseConfig(_Model):
    command: Literal["diagnose-weight"]
    seed: int = 0
    grid: GridConfig
    weight: WeightConfig
    p: float = Field(1.0, ge=1)
    K: tuple[list[float], list[float]]
    expect: dict[str, bool] = {}
    out: Optional[str] = None


class WitnessConfig(_Model):
    command: Literal["witness-limit"]
    seed: int = 0
    weight: WeightConfig
    x0: list[float] = [0.5]
    p: list[float] = [1.0, 2.0]
    eps_schedule: list[float]
    cells_per_eps: int = Field(16, ge=3)
    lower: list[float] = [0.0]
    upper: list[float] = [1.0]
    target: Literal["quadrature", "two_measure"] = "quadrature"
    tolerance: float = Field(0.05, gt=0)
    out: Optional[str] = None


class LpScalingConfig(_Model):
    command: Literal["lp-scaling"]
    seed: int = 0
    x0: list[float] = [0.5]
    p: list[float] = [1.0, 2.0]
    eps_schedule: list[float]
    cells_per_eps: int = Field(32, ge=3)
    tolerance: float = Field(0.05, gt=0)
    out: Optional[str] = None


class SandwichConfig(_Model):
    command: Literal["sandwich"]
    seed: int = 0
    grid: Optional[GridConfig] = None
    p: list[float] = [1.0, 2.0]
    count: int = Field(200, ge=0)
    batch_dir: Optional[str] = None
    slack: float = Field(1e-9, ge=0)
    out: Optional[str] = None

    @model_validator(mode="after")
    def _source(self):
        if self.batch_dir is None and self.grid is None:
            raise ValueError("sandwich needs either 'grid' (random fields) or 'batch_dir'")
        return self


class DualCheckConfig(_Model):
    command: Literal["dual-check"]
    seed: int = 0
    grid: GridConfig
    weight: WeightConfig
    fields: int = Field(5, ge=1)
    trials: int = Field(1000, ge=0)
    out: Optional[str] = None


class GrowthConfig(_Model):
    command: Literal["growth-scan"]
    seed: int = 0
    weight: WeightConfig
    p: float = Field(1.0, ge=1)
    lengths: list[float] = [1.0, 2.0, 4.0, 8.0]
    h: float = Field(1.0 / 64, gt=0)
    center: float = 0.5
    radius: float = Field(0.1, gt=0)
    profile: Literal["bump", "affine"] = "bump"
    out: Optional[str] = None


class CriterionConfig(_Model):
    command: Literal["testfn-criterion"]
    seed: int = 0
    weight: WeightConfig
    p: float = Field(1.0, ge=1)
    K: tuple[list[float], list[float]]
    lengths: list[float] = [1.0, 2.0, 4.0, 8.0]
    h: float = Field(1.0 / 32, gt=0)
    expect_trivial: Optional[bool] = None
    out: Optional[str] = None


class AdjointConfig(_Model):
    command: Literal["adjoint-audit"]
    seed: int = 0
    grids: list[GridConfig]
    trials: int = Field(100, ge=1)
    tolerance: float = Field(1e-12, gt=0)
    out: Optional[str] = None


ExperimentConfig = Union[
    DenoiseConfig, DiagnoseConfig, WitnessConfig, LpScalingConfig, SandwichConfig,
    DualCheckConfig, GrowthConfig, CriterionConfig, AdjointConfig,
]

_MODELS = {
    "denoise": DenoiseConfig,
    "deblur": DenoiseConfig,
    "diagnose-weight": DiagnoseConfig,
    "witness-limit": WitnessConfig,
    "lp-scaling": LpScalingConfig,
    "sandwich": SandwichConfig,
    "dual-check": DualCheckConfig,
    "growth-scan": GrowthConfig,
    "testfn-criterion": CriterionConfig,
    "adjoint-audit": AdjointConfig,
}


def _resolve(path: str, base: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p


def _dotted(loc) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document; raises :class:`ConfigurationError` naming the offending key."""
    if not isinstance(doc, dict):
        raise ConfigurationError("<root>: config must be a JSON object")
    command = doc.get("command")
    if command not in _MODELS:
        raise ConfigurationError(f"command: unknown command {command!r} (expected one of {', '.join(COMMANDS)})")
    try:
        return _MODELS[command].model_validate(doc)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigurationError(f"{_dotted(err['loc'])}: {err['msg']}") from None


def build_data(cfg: DataConfig, grid: DomainGrid, rng: np.random.Generator, base: Path | None = None):
    from .fieldio import read_field
    from .grid import ScalarField

    if cfg.kind == "file":
        if cfg.path is None:
            raise ConfigurationError("fidelity.data.path: required for file data")
        u = read_field(_resolve(cfg.path, base), grid if grid.ndim == 1 else None)
        if u.grid.n != grid.n:
            raise ConfigurationError("fidelity.data.path: field size does not match the grid")
        return ScalarField(grid, u.flat)
    pts = grid.points()
    if cfg.kind == "affine":
        slope = np.resize(np.asarray(cfg.slope, dtype=float), grid.ndim)
        vals = pts @ slope + cfg.offset
    elif cfg.kind == "step":
        mid = (grid.lower + grid.upper) / 2
        vals = cfg.scale * (pts[:, 0] > mid[0]).astype(float) + cfg.offset
    else:
        vals = cfg.scale * rng.standard_normal(grid.n) + cfg.offset
    if cfg.noise > 0:
        vals = vals + cfg.noise * rng.standard_normal(grid.n)
    return ScalarField(grid, vals)
