"""Strict YAML run configuration and its translation into model objects.

Every block forbids unknown keys. The resolved configuration, with all
defaults filled in, is echoed into the suite summary.
"""
from __future__ import annotations

from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .model import (Affine, CoefficientSpec, Constant, ConvexDomain, Piecewise, SignedMeasure,
                    build_transform)
from .verify import harnack_threshold


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# --- model block -----------------------------------------------------------

class AffineDrift(_Strict):
    kind: Literal["affine"]
    A: List[List[float]]
    c: Optional[List[float]] = None


class ConstantDiffusion(_Strict):
    kind: Literal["constant"]
    sigma: List[List[float]]


class PiecewiseCoef(_Strict):
    """Scalar piecewise-affine: ``pieces`` is a list of [threshold, slope, intercept];
    the first threshold must be ``-inf`` (write ``-.inf`` in YAML)."""

    kind: Literal["piecewise"]
    pieces: List[Tuple[float, float, float]]


class Constants(_Strict):
    delta: Optional[float] = None
    sigma_sup: Optional[float] = None
    sigma_lip: Optional[float] = None
    ellipticity: Optional[float] = None
    k: Optional[float] = None


class DomainBlock(_Strict):
    kind: Literal["ball", "box", "interval", "halfspace", "whole_space"]
    center: Optional[List[float]] = None
    radius: Optional[float] = None
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    normal: Optional[List[float]] = None
    offset: float = 0.0


class MeasureBlock(_Strict):
    atoms: List[Tuple[float, float]] = Field(default_factory=list)
    cont_x: List[float] = Field(default_factory=list)
    cont_g: List[float] = Field(default_factory=list)


class ModelBlock(_Strict):
    drift: Union[AffineDrift, PiecewiseCoef] = Field(discriminator="kind")
    diffusion: Union[ConstantDiffusion, PiecewiseCoef] = Field(discriminator="kind")
    constants: Constants = Constants()
    domain: DomainBlock = DomainBlock(kind="whole_space")
    measure: Optional[MeasureBlock] = None
    label: str = ""


# --- run blocks ------------------------------------------------------------

class GridBlock(_Strict):
    T: float = 1.0
    n_steps: int = 1000

    @property
    def dt(self):
        return self.T / self.n_steps


class McBlock(_Strict):
    n_paths: int = 10_000
    master_seed: int = 0
    workers: int = 1
    chunk: int = 2048

    @field_validator("n_paths", "workers", "chunk")
    @classmethod
    def _positive(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v


class OutputBlock(_Strict):
    directory: str = "rsdecheck-out"
    formats: List[Literal["json", "jsonl", "csv", "summary"]] = ["json", "jsonl", "csv", "summary"]


Vec = Union[float, List[float]]


class FSpec(_Strict):
    kind: str
    value: float = 1.0
    index: int = 0
    weights: Tuple[float, ...] = ()
    center: Tuple[float, ...] = ()
    width: float = 1.0
    amplitude: float = 1.0


class _Params(_Strict):
    n_paths: Optional[int] = None
    dt: Optional[float] = None
    refine: bool = True


class ContractionParams(_Params):
    x: Vec
    y: Vec
    times: List[float]


class DecayParams(_Params):
    x: Vec
    times: List[float]
    n_invariant: int = 4000
    mode: Literal["trajectory", "replica"] = "trajectory"
    n_chains: int = 100


class T1Params(_Params):
    x: Vec
    functional: Literal["F_V", "F_inf"] = "F_inf"
    r_grid: List[float] = [0.5, 1.0, 1.5, 2.0]
    T: Optional[float] = None
    C: Optional[float] = None
    V: Optional[FSpec] = None


class WitnessParams(_Params):
    x0: Vec
    rho: Vec = 0.5
    T: Optional[float] = None


class LogHarnackParams(_Params):
    f: FSpec
    x: Vec
    y: Vec
    T: Optional[float] = None
    theta: float = 1.0


class HarnackParams(_Params):
    f: FSpec
    x: Vec
    y: Vec
    T: Optional[float] = None
    p: Optional[float] = None
    p_factor: Optional[float] = None


class PenalizationParams(_Params):
    """``dt`` may be a number, omitted (grid step) or ``auto`` (min(eps)/4)."""

    dt: Optional[Union[float, Literal["auto"]]] = None
    x0: Vec
    eps_ladder: List[float]
    T: Optional[float] = None
    threshold: float = 0.05


class MonotonicityParams(_Params):
    pairs: List[Tuple[Vec, Vec]]
    T: Optional[float] = None


class SdelParams(_Params):
    x: float
    y: float
    T: Optional[float] = None
    p: Optional[float] = None
    rho: float = 0.5
    decay_times: List[float] = [1.0, 2.0, 3.0]
    f: Optional[FSpec] = None
    harnack_dt: float = 1e-3
    n_invariant: int = 10_000
    n_chains: int = 100


class PoincareParams(_Params):
    g: FSpec
    x: Vec
    T: Optional[float] = None


PARAMS = {
    "check_contraction": ContractionParams,
    "check_w2_decay": DecayParams,
    "check_t1_concentration": T1Params,
    "check_t2_witness_d2": WitnessParams,
    "check_t2_witness_dinf": WitnessParams,
    "check_log_harnack": LogHarnackParams,
    "check_harnack": HarnackParams,
    "check_penalization": PenalizationParams,
    "check_reflection_monotonicity": MonotonicityParams,
    "check_sdel_suite": SdelParams,
    "check_poincare": PoincareParams,
}


class ExperimentBlock(_Strict):
    name: str
    check: str
    model: str = "default"
    params: dict = Field(default_factory=dict)

    @model_validator(mode="after")
    def _known(self):
        if self.check not in PARAMS:
            raise ValueError(f"unknown check {self.check!r}; see --list")
        return self

    def typed_params(self):
        return PARAMS[self.check](**self.params)


class RunConfig(_Strict):
    models: Dict[str, ModelBlock] = Field(default_factory=dict)
    grid: GridBlock = GridBlock()
    mc: McBlock = McBlock()
    experiments: List[ExperimentBlock] = Field(default_factory=list)
    output: OutputBlock = OutputBlock()

    @model_validator(mode="after")
    def _consistent(self):
        names = [e.name for e in self.experiments]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ValueError(f"duplicate experiment names: {sorted(dup)}")
        for e in self.experiments:
            if e.model not in self.models:
                raise ValueError(f"experiment {e.name!r} refers to unknown model {e.model!r}")
            try:
                e.typed_params()
            except ValidationError as err:
                raise ValueError(f"experiments[{e.name}].params: {err}") from None
        return self


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigurationError(f"cannot read config {path}: {err}") from None
    except yaml.YAMLError as err:
        raise ConfigurationError(f"config {path} is not valid YAML: {err}") from None
    return parse_config(raw or {})


def parse_config(raw) -> RunConfig:
    try:
        return RunConfig(**raw)
    except ValidationError as err:
        first = err.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigurationError(f"config key {where or '<root>'}: {first['msg']}") from None
    except TypeError as err:
        raise ConfigurationError(f"config must be a mapping: {err}") from None


# --- builders --------------------------------------------------------------

def _coef(block):
    if block.kind == "affine":
        A = np.asarray(block.A, float)
        c = np.zeros(A.shape[0]) if block.c is None else block.c
        return Affine(A, c)
    if block.kind == "constant":
        return Constant(block.sigma)
    return Piecewise.from_pieces(block.pieces)


def build_domain(block: DomainBlock, dim):
    k = block.kind
    if k == "ball":
        return ConvexDomain.ball(block.center or [0.0] * dim, block.radius)
    if k in ("box", "interval"):
        if block.lower is None or block.upper is None:
            raise ConfigurationError(f"domain {k} needs lower and upper")
        return ConvexDomain.box(block.lower, block.upper)
    if k == "halfspace":
        return ConvexDomain.halfspace(block.normal, block.offset)
    return ConvexDomain.whole_space(dim)


def build_model(block: ModelBlock, name=""):
    sde = CoefficientSpec(_coef(block.drift), _coef(block.diffusion),
                          **block.constants.model_dump(), label=block.label or name)
    domain = build_domain(block.domain, sde.dim)
    if domain.dim != sde.dim:
        raise ConfigurationError(f"model {name}: domain has dimension {domain.dim}, coefficients {sde.dim}")
    measure = None
    if block.measure is not None:
        loc = [a for a, _ in block.measure.atoms]
        w = [b for _, b in block.measure.atoms]
        measure = SignedMeasure(loc, w, block.measure.cont_x, block.measure.cont_g)
        build_transform(measure)
    return sde, domain, measure


def static_checks(cfg: RunConfig):
    """Constraints that can be decided without simulating (used by --dry-run too)."""
    for e in cfg.experiments:
        prm = e.typed_params()
        sde, _, measure = build_model(cfg.models[e.model], e.model)
        if e.check == "check_penalization":
            dt = prm.dt
            if dt is None:
                dt = cfg.grid.dt
            if dt != "auto" and dt > min(prm.eps_ladder) / 2:
                raise ConfigurationError(
                    f"experiment {e.name}: penalized scheme needs dt <= eps/2 "
                    f"(dt={dt:g}, eps={min(prm.eps_ladder):g})")
        if e.check == "check_harnack" and prm.p is not None:
            sde.require("k", "ellipticity")
            thr = harnack_threshold(sde.k, sde.ellipticity)
            if not prm.p > thr:
                raise ConfigurationError(
                    f"experiment {e.name}: p must exceed (1 + k/lambda)^2 = {thr:.6g}")
        if e.check == "check_sdel_suite" and measure is None:
            raise ConfigurationError(f"experiment {e.name}: model {e.model} has no measure block")
