from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator, model_validator


class Variant(str, Enum):
    RAW = 'raw'
    DC = 'dc'
    SMOOTH = 'smooth'
    CONVEXIFIED = 'convexified'
    STRONGLY_CONVEX = 'strongly_convex'

    @property
    def smoothed(self) -> bool:
        return self in (Variant.SMOOTH, Variant.CONVEXIFIED, Variant.STRONGLY_CONVEX)


SUBGRADIENT = 'subgradient'


class SmoothingFlavor(str, Enum):
    PIECEWISE = 'piecewise'
    SQRT = 'sqrt'


class TieRule(str, Enum):
    """Which element of a kink's subdifferential to return."""
    ZERO_SIDE = 'zero_side'
    LEFT = 'left'
    RIGHT = 'right'


class ComponentKind(str, Enum):
    REGULARIZER = 'regularizer'
    LABELED_HINGE = 'labeled_hinge'
    UNLABELED_HAT = 'unlabeled_hat'


class Convexity(str, Enum):
    STRONGLY_CONVEX = 'strongly_convex'
    CONVEX = 'convex'
    NONCONVEX = 'nonconvex'


_CONVEXITY = {
    ComponentKind.REGULARIZER: Convexity.STRONGLY_CONVEX,
    ComponentKind.LABELED_HINGE: Convexity.CONVEX,
    ComponentKind.UNLABELED_HAT: Convexity.NONCONVEX,
}


class ModelPoint(BaseModel):
    w: List[float]
    b: float

    @field_validator('w')
    @classmethod
    def _finite_w(cls, w: List[float]) -> List[float]:
        if not np.all(np.isfinite(w)):
            raise ValueError('w has non-finite entries')
        return w

    @field_validator('b')
    @classmethod
    def _finite_b(cls, b: float) -> float:
        if not np.isfinite(b):
            raise ValueError('b is not finite')
        return b

    def to_vector(self) -> np.ndarray:
        """Flattened omega = (w, b)."""
        return np.append(np.asarray(self.w, dtype=float), self.b)

    @classmethod
    def from_vector(cls, omega: np.ndarray) -> 'ModelPoint':
        return cls(w=[float(x) for x in omega[:-1]], b=float(omega[-1]))


class Dataset(BaseModel):
    """Labeled rows first (features[:p] with labels), then the q unlabeled rows."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray
    labels: np.ndarray

    @model_validator(mode='after')
    def _check(self) -> 'Dataset':
        if self.features.ndim != 2 or self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise ValueError('features must be a non-empty 2-D array')
        if self.labels.ndim != 1 or self.labels.shape[0] > self.features.shape[0]:
            raise ValueError('labels must be 1-D and no longer than the number of rows')
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise ValueError('labels must be -1 or +1')
        if not np.all(np.isfinite(self.features)):
            raise ValueError('features must be finite')
        return self

    @property
    def p(self) -> int:
        return int(self.labels.shape[0])

    @property
    def q(self) -> int:
        return int(self.features.shape[0]) - self.p

    @property
    def n(self) -> int:
        return int(self.features.shape[1])


class ObjectiveConfig(BaseModel):
    C1: PositiveFloat
    C2: PositiveFloat
    beta: PositiveFloat = 1.0
    smoothing_flavor: SmoothingFlavor = SmoothingFlavor.PIECEWISE


class ComponentView(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    kind: ComponentKind
    row: Optional[int] = None

    @property
    def convexity(self) -> Convexity:
        return _CONVEXITY[self.kind]


class StepKind(str, Enum):
    UNIT = 'unit'
    FIXED = 'fixed'
    BACKTRACKING = 'backtracking'


class StepPolicy(BaseModel):
    kind: StepKind = StepKind.UNIT
    alpha: PositiveFloat = 1.0
    tau: PositiveFloat = 1.0
    shrink: float = Field(default=0.5, gt=0.0, lt=1.0)
    max_tries: PositiveInt = 20

    @classmethod
    def parse(cls, text: str) -> 'StepPolicy':
        """Parses 'unit', 'fixed:<alpha>' or 'backtracking[:<tau>[:<shrink>[:<max_tries>]]]'."""
        kind, *args = text.strip().split(':')
        kind = StepKind(kind)
        if kind == StepKind.FIXED:
            if len(args) != 1:
                raise ValueError(f'fixed step policy needs exactly one value, got {text!r}')
            return cls(kind=kind, alpha=float(args[0]))
        if kind == StepKind.BACKTRACKING:
            names = ['tau', 'shrink', 'max_tries']
            values = {name: (int(arg) if name == 'max_tries' else float(arg)) for name, arg in zip(names, args)}
            return cls(kind=kind, **values)
        return cls(kind=kind)


class IndexRule(str, Enum):
    CYCLIC = 'cyclic'
    UNIFORM_RANDOM = 'uniform_random'


class SolverConfig(BaseModel):
    variant: Variant = Variant.RAW
    c: PositiveFloat = 1e-8
    kappa: PositiveFloat = 0.5
    sigma: float = Field(default=0.9, gt=0.0, lt=1.0)
    mu0: PositiveFloat = 0.1
    # Smoothing parameters never shrink below this; the convexifying rho grows like 1/mu.
    mu_floor: PositiveFloat = 1e-3
    max_iters: PositiveInt = 10_000
    step_policy: Optional[StepPolicy] = None
    index_rule: IndexRule = IndexRule.CYCLIC
    seed: int = 0
    init_box: PositiveFloat = 5.0
    tie_rule: TieRule = TieRule.ZERO_SIDE
    rho_factor: float = Field(default=2.0, ge=1.0)
    sc_rho_factor: float = Field(default=1.1, gt=1.0)
    eps_denominator: Optional[PositiveFloat] = None
    debug: bool = False
    audit_interval: PositiveInt = 100

    @model_validator(mode='after')
    def _floor_below_mu0(self) -> 'SolverConfig':
        if self.mu_floor > self.mu0:
            raise ValueError(f'mu_floor {self.mu_floor} exceeds mu0 {self.mu0}')
        return self

    def resolved_step_policy(self) -> StepPolicy:
        if self.step_policy is not None:
            return self.step_policy
        if self.variant in (Variant.RAW, Variant.DC):
            return StepPolicy(kind=StepKind.BACKTRACKING)
        return StepPolicy()


class BaselineStepKind(str, Enum):
    CONSTANT = 'constant'
    DIMINISHING = 'diminishing'


class BaselineStep(BaseModel):
    kind: BaselineStepKind = BaselineStepKind.DIMINISHING
    alpha: PositiveFloat = 0.01

    @classmethod
    def parse(cls, text: str) -> 'BaselineStep':
        """Parses 'constant:<alpha>' or 'diminishing:<alpha0>'."""
        kind, _, alpha = text.strip().partition(':')
        return cls(kind=BaselineStepKind(kind), alpha=float(alpha)) if alpha else cls(kind=BaselineStepKind(kind))

    def at(self, k: int) -> float:
        if self.kind == BaselineStepKind.CONSTANT:
            return self.alpha
        return self.alpha / np.sqrt(k + 1)


class BaselineConfig(BaseModel):
    step_rule: BaselineStep = Field(default_factory=BaselineStep)
    max_iters: PositiveInt = 10_000
    seed: int = 0
    init_box: PositiveFloat = 5.0
    tie_rule: TieRule = TieRule.ZERO_SIDE


class IterationRecord(BaseModel):
    iter: int
    governing_obj: float
    eq2_obj: float
    step: float
    skipped: bool
    index: int
    mu_min: float
    mu_max: float


class RunTrace(BaseModel):
    variant: str
    records: List[IterationRecord] = Field(default_factory=list)
    final: Optional[ModelPoint] = None
    wall_time: float = 0.0
    skipped_updates: int = 0
    gradient_evaluations: int = 0
    fallback_inversions: int = 0

    @property
    def final_objective(self) -> float:
        return self.records[-1].eq2_obj if self.records else float('nan')


class RawSample(BaseModel):
    label: Optional[int] = None
    features: dict[int, float] = Field(default_factory=dict)

    @field_validator('label')
    @classmethod
    def _binary_label(cls, label: Optional[int]) -> Optional[int]:
        if label is not None and label not in (-1, 1):
            raise ValueError('label must be -1 or +1')
        return label


class HoldoutKind(str, Enum):
    KFOLD = 'kfold'
    FIXED_SPLIT = 'fixed_split'


class SplitSpec(BaseModel):
    labeled_fraction: float = Field(default=0.1, gt=0.0, le=1.0)
    fold_count: PositiveInt = 10
    seed: int = 0
    holdout: HoldoutKind = HoldoutKind.KFOLD
    train_count: Optional[PositiveInt] = None

    @model_validator(mode='after')
    def _train_count_for_fixed(self) -> 'SplitSpec':
        if self.holdout == HoldoutKind.FIXED_SPLIT and self.train_count is None:
            raise ValueError('fixed_split holdout needs train_count')
        return self


class GaussianSpec(BaseModel):
    n: PositiveInt = 50
    count: int = Field(default=550, ge=2)
    separation: float = Field(default=2.5, ge=0.0)
    seed: int = 0


class DatasetSource(BaseModel):
    name: str
    path: Optional[str] = None
    generator: Optional[GaussianSpec] = None

    @model_validator(mode='after')
    def _exactly_one(self) -> 'DatasetSource':
        if (self.path is None) == (self.generator is None):
            raise ValueError('a dataset source needs exactly one of path or generator')
        return self


class C2Rule(str, Enum):
    SCALED = 'scaled'
    POWER = 'power'
    ABSOLUTE = 'absolute'


class ExperimentConfig(BaseModel):
    datasets: List[DatasetSource] = Field(default_factory=list)
    split: SplitSpec = Field(default_factory=SplitSpec)
    c1_exponents: List[int] = Field(default_factory=lambda: [-1, 0, 1, 2])
    c2_exponents: List[int] = Field(default_factory=lambda: [0, 1, 2])
    c2_rule: C2Rule = C2Rule.SCALED
    variants: List[str] = Field(default_factory=lambda: [v.value for v in Variant] + [SUBGRADIENT])
    solver: SolverConfig = Field(default_factory=SolverConfig)
    baseline: BaselineConfig = Field(default_factory=BaselineConfig)
    beta: PositiveFloat = 1.0
    smoothing_flavor: SmoothingFlavor = SmoothingFlavor.PIECEWISE
    scale_features: bool = False
    output_dir: str = 'output'
    workers: PositiveInt = 1

    @field_validator('variants')
    @classmethod
    def _known_variants(cls, variants: List[str]) -> List[str]:
        known = {v.value for v in Variant} | {SUBGRADIENT}
        for variant in variants:
            if variant not in known:
                raise ValueError(f'unknown variant {variant!r}; expected one of {sorted(known)}')
        return variants

    def c_pairs(self) -> list[tuple[float, float]]:
        pairs = []
        for i in self.c1_exponents:
            c1 = 10.0 ** i
            for j in self.c2_exponents:
                if self.c2_rule == C2Rule.SCALED:
                    c2 = c1 * 10.0 ** (-j)
                elif self.c2_rule == C2Rule.POWER:
                    c2 = c1 ** (-j)
                else:
                    c2 = 10.0 ** (-j)
                pairs.append((c1, c2))
        return pairs


class SummaryRow(BaseModel):
    dataset: str
    fold: int
    C1: float
    C2: float
    variant: str
    final_objective: float
    test_error: float
    iterations: int
    skipped: int
    gradient_evaluations: int


class ProfileTable(BaseModel):
    ratios: dict[str, dict[str, float]]
    taus: List[float]
    curves: dict[str, List[float]]
    degenerate_problems: List[str] = Field(default_factory=list)


class CellError(BaseModel):
    dataset: str
    fold: int
    C1: float
    C2: float
    variant: str
    message: str


class ExperimentReport(BaseModel):
    output_dir: str
    summary: List[SummaryRow] = Field(default_factory=list)
    errors: List[CellError] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors
