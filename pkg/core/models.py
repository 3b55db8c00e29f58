import math
import re
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator, model_validator

from core.densities import DENSITY_REGISTRY


# Driving measures

class MeasureBase(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class BetaMeasure(MeasureBase):
    kind: Literal["beta"] = "beta"
    a: float = Field(gt=0)
    b: float = Field(gt=0)


class LebesgueMeasure(MeasureBase):
    kind: Literal["lebesgue"] = "lebesgue"
    c: float = Field(default=1.0, gt=0)


class AtomMeasure(MeasureBase):
    kind: Literal["atom"] = "atom"
    location: float = Field(gt=0, lt=1)
    mass: float = Field(gt=0)


class DensityMeasure(MeasureBase):
    """Named built-in density with endpoint behaviour metadata.

    Near 0 the density behaves like u^exponent_zero, near 1 like
    (1-u)^exponent_one · log(1/(1-u))^log_exponent_one · loglog(1/(1-u))^loglog_exponent_one.
    ``None`` for an exponent means the density vanishes identically near that endpoint.
    """
    kind: Literal["density"] = "density"
    name: str
    params: Dict[str, float] = Field(default_factory=dict)
    exponent_zero: Optional[float] = 0.0
    exponent_one: Optional[float] = 0.0
    log_exponent_one: Optional[float] = None
    loglog_exponent_one: Optional[float] = None

    @model_validator(mode="before")
    @classmethod
    def fill_declared_exponents(cls, data: Any) -> Any:
        if not isinstance(data, dict) or data.get("name") not in DENSITY_REGISTRY:
            return data
        builtin = DENSITY_REGISTRY[data["name"]]
        params = data.get("params", {})
        if not all(key in params for key in builtin.required):
            return data
        data = dict(data)
        data.setdefault("exponent_zero", builtin.exponent_zero(params))
        data.setdefault("exponent_one", builtin.exponent_one(params))
        data.setdefault("log_exponent_one", builtin.log_exponent_one)
        data.setdefault("loglog_exponent_one", builtin.loglog_exponent_one)
        return data

    @model_validator(mode="after")
    def check_density(self) -> "DensityMeasure":
        builtin = DENSITY_REGISTRY.get(self.name)
        if builtin is None:
            raise ValueError(f"unknown built-in density '{self.name}'")
        missing = [key for key in builtin.required if key not in self.params]
        if missing:
            raise ValueError(f"density '{self.name}' needs parameters {missing}")
        if self.name == "polynomial":
            if not all(re.fullmatch(r"c\d+", key) for key in self.params):
                raise ValueError("polynomial coefficients are named c0, c1, ...")
            grid = np.linspace(0.0, 1.0, 1001)
            if np.any(builtin.evaluate(grid, 1.0 - grid, self.params) < 0.0):
                raise ValueError("polynomial density must be nonnegative on [0,1]")
        elif self.params.get("c", 1.0) <= 0.0:
            raise ValueError("density scale c must be positive")
        if self.exponent_zero is not None and self.exponent_zero <= -1.0:
            raise ValueError("exponent_zero <= -1 gives infinite mass")
        if self.exponent_one is not None and not _finite_near_one(
                self.exponent_one, self.log_exponent_one, self.loglog_exponent_one):
            raise ValueError("declared behaviour near 1 gives infinite mass")
        return self


def _finite_near_one(q: float, r: Optional[float], s: Optional[float]) -> bool:
    if q > -1.0:
        return True
    if q < -1.0 or r is None:
        return False
    if r < -1.0:
        return True
    return r == -1.0 and s is not None and s < -1.0


class MixtureMeasure(MeasureBase):
    kind: Literal["mixture"] = "mixture"
    components: List["MeasureSpec"] = Field(min_length=1)


MeasureSpec = Annotated[
    Union[BetaMeasure, LebesgueMeasure, AtomMeasure, DensityMeasure, MixtureMeasure],
    Field(discriminator="kind"),
]
MixtureMeasure.model_rebuild()

MEASURE_ADAPTER = TypeAdapter(MeasureSpec)


class JordanPart(MeasureBase):
    """Positive (sign=+1) or negative (sign=-1) part of source - b·λ."""
    kind: Literal["jordan"] = "jordan"
    source: MeasureSpec
    b: float = Field(ge=0)
    sign: Literal[1, -1]
    breakpoints: Tuple[float, ...] = ()


class SignedDust(MeasureBase):
    plus: JordanPart
    minus: JordanPart
    b: float = Field(ge=0)


class LimitParams(MeasureBase):
    b: float = Field(ge=0)
    a: float
    measure: MeasureSpec
    dust_integral: float
    tolerance: float = Field(gt=0)


EvaluationMethod = Literal["quadrature", "beta1b-closed", "bs-closed"]


class CharExponent(MeasureBase):
    params: LimitParams
    method: EvaluationMethod = "quadrature"

    @model_validator(mode="after")
    def check_closed_form(self) -> "CharExponent":
        measure, b = self.params.measure, self.params.b
        if self.method == "bs-closed":
            scale = _lebesgue_scale(measure)
            if scale is None or not math.isclose(scale, b, rel_tol=1e-12):
                raise ValueError("bs-closed needs a scaled Lebesgue measure c·λ with b = c")
        if self.method == "beta1b-closed":
            if not (isinstance(measure, BetaMeasure) and measure.a == 1.0
                    and math.isclose(measure.b, b, rel_tol=1e-12)):
                raise ValueError("beta1b-closed needs Beta(1, b) with matching b")
        return self


def _lebesgue_scale(measure) -> Optional[float]:
    if isinstance(measure, LebesgueMeasure):
        return measure.c
    if isinstance(measure, BetaMeasure) and measure.a == 1.0 and measure.b == 1.0:
        return 1.0
    return None


class CDFInversion(BaseModel):
    x: List[float]
    cdf: List[float]
    error_estimate: float = Field(ge=0)
    truncation_point: float = Field(gt=0)
    tol: float = Field(gt=0)


class CFGrid(BaseModel):
    x_grid: List[float]
    re: List[float]
    im: List[float]
    t: float
    kind: Literal["X", "Y", "stationary"]

    @model_validator(mode="after")
    def check_values(self) -> "CFGrid":
        if not len(self.x_grid) == len(self.re) == len(self.im):
            raise ValueError("grid and values differ in length")
        for x, re_, im_ in zip(self.x_grid, self.re, self.im):
            if math.hypot(re_, im_) > 1.0 + 1e-9:
                raise ValueError(f"|cf({x})| exceeds 1")
            if x == 0.0 and (abs(re_ - 1.0) > 1e-12 or abs(im_) > 1e-12):
                raise ValueError("cf(0) must equal 1")
        return self


# Jump laws and paths

class HarmonicTail(BaseModel):
    """Closed-form remainder of a fixation law driven by c·λ.

    Targets j ≥ first_target carry probability·(first_target-k)/((j-k)(j-k+1)).
    """
    first_target: int = Field(ge=2)
    probability: float = Field(ge=0, le=1)


class JumpLaw(BaseModel):
    source_state: int = Field(ge=1)
    targets: List[Tuple[int, float]]
    total_rate: float = Field(gt=0)
    tail_mass_bound: float = Field(default=0.0, ge=0)
    tail: Optional[HarmonicTail] = None

    def probability(self, j: int) -> float:
        for target, p in self.targets:
            if target == j:
                return p
        if self.tail is not None and j >= self.tail.first_target:
            head = self.tail.first_target - self.source_state
            s = j - self.source_state
            return self.tail.probability * head / (s * (s + 1.0))
        return 0.0

    def covered_mass(self) -> float:
        """Probability carried by the listed targets and the closed-form tail."""
        listed = math.fsum(p for _, p in self.targets)
        return listed + (self.tail.probability if self.tail is not None else 0.0)


class PathRecord(BaseModel):
    kind: Literal["block", "fixation"]
    event_times: List[float]
    states: List[int]
    initial_state: int = Field(ge=1)
    horizon: float = Field(ge=0)
    capped: bool = False

    @model_validator(mode="after")
    def check_monotone(self) -> "PathRecord":
        if len(self.event_times) != len(self.states) or not self.states:
            raise ValueError("event_times and states must be nonempty and of equal length")
        if self.states[0] != self.initial_state:
            raise ValueError("first state must equal the initial state")
        times = np.asarray(self.event_times)
        states = np.asarray(self.states)
        if np.any(np.diff(times) <= 0):
            raise ValueError("event times must be strictly increasing")
        steps = np.diff(states)
        if self.kind == "block" and np.any(steps >= 0):
            raise ValueError("block-counting states must strictly decrease")
        if self.kind == "fixation" and np.any(steps <= 0):
            raise ValueError("fixation-line states must strictly increase")
        return self


class ScaledSample(BaseModel):
    t: float
    value: float
    n: int
    replicate_id: int
    raw_state: int
    capped: bool = False


class EmpiricalCFPoint(BaseModel):
    x: float
    re: float
    im: float
    se_re: float
    se_im: float


# Diagnostics records

class GapTable(BaseModel):
    side: Literal["block", "fixation"] = "block"
    k_list: List[int]
    x_grid: List[float]
    gaps: List[List[float]]
    sup_per_k: List[float]

    @field_validator("k_list")
    @classmethod
    def check_increasing(cls, value: List[int]) -> List[int]:
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("k_list must be strictly increasing")
        return value


MixingKind = Literal["dust-binomial", "bs-binomial", "fixation-negbinomial-lambda", "fixation-negbinomial-dust"]


class MixingLaw(BaseModel):
    kind: MixingKind
    k: int
    pmf: List[Tuple[int, float]]
    tail_mass: float = 0.0


VerdictHint = Literal["diverges-evidence", "converges-evidence", "inconclusive"]


class CDIReport(BaseModel):
    eta: List[float]
    partial_sums: List[float]
    verdict_hint: VerdictHint
    decade_ratio: Optional[float] = None
    authoritative: Optional[Literal["comes-down", "stays-infinite"]] = None
    authority: Optional[str] = None


class DualityGap(BaseModel):
    n: int
    m0: int
    t: float
    lhs_lower: float
    lhs_upper: float
    rhs: float
    gap: float
    truncation_bound: float
    overflow_probability: float


class DualityEstimate(BaseModel):
    n: int
    m0: int
    t: float
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float


class DiscreteGeneratorTerms(BaseModel):
    k: int
    x: float
    R: float
    S_bs: float
    S_dust: float
    A_discrete: float


class LimitGeneratorTerms(BaseModel):
    x: float
    drift: float
    I_bs: float
    I_dust: float
    A_limit: float


# Test functions for generators

class SmoothFunction(BaseModel):
    """Test function with analytic derivatives up to third order."""
    model_config = ConfigDict(frozen=True)

    def value(self, x):
        raise NotImplementedError

    def d1(self, x):
        raise NotImplementedError

    def d2(self, x):
        raise NotImplementedError

    def d3(self, x):
        raise NotImplementedError


class GaussianBump(SmoothFunction):
    kind: Literal["gaussian"] = "gaussian"
    center: float = 0.0
    width: float = Field(default=1.0, gt=0)

    def value(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.width
        return np.exp(-0.5 * z * z)

    def d1(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.width
        return -z / self.width * np.exp(-0.5 * z * z)

    def d2(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.width
        return (z * z - 1.0) / self.width ** 2 * np.exp(-0.5 * z * z)

    def d3(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.width
        return (3.0 * z - z ** 3) / self.width ** 3 * np.exp(-0.5 * z * z)


class ConstantFunction(SmoothFunction):
    kind: Literal["constant"] = "constant"
    level: float = 1.0

    def value(self, x):
        return np.full(np.shape(x), self.level, dtype=float)

    def d1(self, x):
        return np.zeros(np.shape(x), dtype=float)

    d2 = d1
    d3 = d1


# Run configuration

class Tolerances(BaseModel):
    model_config = ConfigDict(extra="forbid")

    quad: float = Field(default=1e-10, gt=0)
    cf: float = Field(default=1e-9, gt=0)
    tail: float = Field(default=1e-10, gt=0)
    inversion: float = Field(default=1e-8, gt=0)
    duality: Optional[float] = Field(default=None, gt=0)


class CommandOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RatesOptions(CommandOptions):
    command: Literal["rates"] = "rates"
    kind: Literal["block", "fixation"] = "block"
    k_max: int = Field(default=10, ge=2)
    j_max: Optional[int] = Field(default=None, ge=2)
    compare: bool = True


class SimulateOptions(CommandOptions):
    command: Literal["simulate"] = "simulate"
    kind: Literal["block", "fixation"] = "block"
    n: int = Field(ge=1)
    times: List[float] = Field(default_factory=lambda: [1.0])
    replicates: int = Field(default=1, ge=1)
    cap: int = Field(default=10 ** 9, ge=2)
    strategy: Literal["auto", "poisson", "table"] = "auto"
    batch_size: int = Field(default=500, ge=1)
    events: bool = False

    @field_validator("times")
    @classmethod
    def check_times(cls, value: List[float]) -> List[float]:
        if not value or any(t < 0 for t in value) or any(b < a for a, b in zip(value, value[1:])):
            raise ValueError("times must be nonempty, nonnegative and sorted")
        return value


class CFOptions(CommandOptions):
    command: Literal["cf"] = "cf"
    kind: Literal["X", "Y", "stationary"] = "X"
    t: float = Field(default=1.0, ge=0)
    x: Optional[float] = None
    x_min: float = -10.0
    x_max: float = 10.0
    x_step: float = Field(default=0.5, gt=0)
    method: Optional[EvaluationMethod] = None


class StationaryOptions(CommandOptions):
    command: Literal["stationary"] = "stationary"
    kind: Literal["X", "Y", "stationary"] = "stationary"
    t: float = Field(default=1.0, ge=0)
    samples: int = Field(default=1000, ge=1)


class ConvergeOptions(CommandOptions):
    command: Literal["converge"] = "converge"
    side: Literal["block", "fixation"] = "block"
    k_list: List[int] = Field(default_factory=lambda: [100, 1000, 10000])
    x_min: float = -6.0
    x_max: float = 6.0
    x_step: float = Field(default=0.5, gt=0)
    center: float = 0.0
    width: float = Field(default=1.0, gt=0)
    representation: Literal["direct", "expectation"] = "direct"


class DualityOptions(CommandOptions):
    command: Literal["duality"] = "duality"
    n: int = Field(ge=1)
    m0: int = Field(ge=1)
    t: float = Field(ge=0)
    cap: int = Field(default=2000, ge=2)

    @model_validator(mode="after")
    def check_cap(self) -> "DualityOptions":
        if self.cap <= max(self.n, self.m0):
            raise ValueError("cap must exceed max(n, m0)")
        return self


class CDIOptions(CommandOptions):
    command: Literal["cdi"] = "cdi"
    k_max: int = Field(default=10 ** 4, ge=2)


class SelftestOptions(CommandOptions):
    command: Literal["selftest"] = "selftest"
    level: Literal["quick", "full"] = "quick"


class SelftestCheck(BaseModel):
    name: str
    identity: str
    value: Optional[float] = None
    threshold: Optional[float] = None
    passed: bool
    detail: str = ""
    seconds: float = 0.0


AnyCommandOptions = Annotated[
    Union[RatesOptions, SimulateOptions, CFOptions, StationaryOptions, ConvergeOptions,
          DualityOptions, CDIOptions, SelftestOptions],
    Field(discriminator="command"),
]

Subcommand = Literal["rates", "simulate", "cf", "stationary", "converge", "duality", "cdi", "selftest"]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    subcommand: Subcommand
    measure: Optional[MeasureSpec] = None
    b: Optional[float] = Field(default=None, ge=0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    output: Optional[str] = None
    threads: int = Field(default=1, ge=1)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    options: AnyCommandOptions

    @model_validator(mode="after")
    def check_consistency(self) -> "RunConfig":
        if self.options.command != self.subcommand:
            raise ValueError(f"options are for '{self.options.command}', not '{self.subcommand}'")
        if self.measure is None and self.subcommand != "selftest":
            raise ValueError(f"'{self.subcommand}' needs a measure")
        return self
