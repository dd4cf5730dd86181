"""Run configuration: JSON schema, loading and assembly of the problem objects."""
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.decomposition import Decomposition, ExplicitDecomposition, MartingaleDecomposition
from src.distributions import Distribution, build_distribution, parse_distribution
from src.errors import ConfigError, DimensionError
from src.expressions import Expression, parse

logger = logging.getLogger(__name__)


class VariableSpec(BaseModel):
    """Declaration of one input law."""

    kind: Literal["uniform", "normal", "curie_weiss", "tabulated"]
    a: float = 0.0
    b: float = 1.0
    s: int = Field(default=1, ge=1)
    sigma: float = Field(default=1.0, gt=0)
    grid: Optional[List[float]] = None
    pdf: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_tabulated(self):
        if self.kind == "tabulated" and (self.grid is None or self.pdf is None):
            raise ValueError("tabulated variables need both 'grid' and 'pdf'")
        return self

    def build(self) -> Distribution:
        if self.kind == "uniform":
            return build_distribution("uniform", a=self.a, b=self.b)
        if self.kind == "curie_weiss":
            return build_distribution("curie_weiss", s=self.s, sigma=self.sigma)
        if self.kind == "tabulated":
            return build_distribution("tabulated", grid=self.grid, pdf=self.pdf)
        return build_distribution("normal")


class ComponentSpec(BaseModel):
    expression: str
    coordinate: int = Field(ge=1)


class DecompositionSpec(BaseModel):
    kind: Literal["martingale", "explicit"] = "martingale"
    components: List[ComponentSpec] = Field(default_factory=list)
    quad_order: Optional[int] = Field(default=None, ge=2)

    @model_validator(mode="after")
    def check_components(self):
        if self.kind == "explicit" and not self.components:
            raise ValueError("an explicit decomposition needs at least one component")
        return self


class MonteCarloSpec(BaseModel):
    samples: int = Field(default=100_000, ge=1)
    seed: int = Field(default=0, ge=0)
    bins: Optional[int] = Field(default=None, ge=1)
    validation_samples: int = Field(default=10_000, ge=1)
    validation_tol: float = Field(default=1e-6, gt=0)


class GridSpec(BaseModel):
    points: int = Field(default=512, ge=3)
    quantile_trim: float = Field(default=0.005, gt=0, lt=0.5)


class OutputSpec(BaseModel):
    theta_csv: str = "theta.csv"
    density_csv: str = "density.csv"
    compare_csv: str = "compare.csv"
    report_json: str = "report.json"


class SyntheticSpec(BaseModel):
    """Reconstruct directly from a θ expression in x1 over a fixed range."""

    theta: str
    range: Tuple[float, float]
    center_shift: float = 0.0

    @field_validator("range")
    @classmethod
    def check_range(cls, value):
        if not value[0] < 0.0 < value[1]:
            raise ValueError("synthetic range must contain 0")
        return value


class ThetaBoundsSpec(BaseModel):
    """Optional θ envelopes (expressions in x1) for density.csv envelope columns."""

    lower: str
    upper: str


class RunConfig(BaseModel):
    dimension: int = Field(default=1, ge=1)
    statistic: Optional[str] = None
    variables: List[Union[str, VariableSpec]] = Field(default_factory=list)
    decomposition: DecompositionSpec = Field(default_factory=DecompositionSpec)
    mc: MonteCarloSpec = Field(default_factory=MonteCarloSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    outputs: OutputSpec = Field(default_factory=OutputSpec)
    synthetic: Optional[SyntheticSpec] = None
    theta_bounds: Optional[ThetaBoundsSpec] = None

    @model_validator(mode="after")
    def check_statistic(self):
        if self.synthetic is not None:
            return self
        if self.statistic is None:
            raise ValueError("'statistic' is required unless 'synthetic' is given")
        if len(self.variables) != self.dimension:
            raise ValueError(f"{len(self.variables)} variables declared for dimension {self.dimension}")
        return self

    @property
    def is_synthetic(self) -> bool:
        return self.synthetic is not None


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Load and validate a JSON run configuration.

    Raises:
        ConfigError: If the file is missing, not JSON or fails the schema
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e
    logger.info(f"Loaded config from {path} (dimension {config.dimension})")
    return config


def build_distributions(config: RunConfig) -> List[Distribution]:
    return [parse_distribution(v) if isinstance(v, str) else v.build() for v in config.variables]


def build_statistic(config: RunConfig) -> Expression:
    """Parse the statistic; its highest variable index must equal the dimension."""
    statistic = parse(config.statistic, config.dimension)
    if statistic.max_index() != config.dimension:
        raise DimensionError(
            f"Dimension is {config.dimension} but the statistic's highest variable index is {statistic.max_index()}"
        )
    return statistic


def build_decomposition(config: RunConfig) -> Decomposition:
    """Assemble the statistic, the input laws and the decomposition."""
    statistic = build_statistic(config)
    dists = build_distributions(config)
    spec = config.decomposition
    if spec.kind == "martingale":
        return MartingaleDecomposition(statistic, dists, quad_order=spec.quad_order, seed=config.mc.seed)
    components = [(parse(c.expression, config.dimension), c.coordinate) for c in spec.components]
    return ExplicitDecomposition(statistic, dists, components, quad_order=spec.quad_order)
