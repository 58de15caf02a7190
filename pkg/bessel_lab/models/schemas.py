from pydantic import BaseModel, Field, field_validator
from typing import Optional, Dict, Any, List
from enum import Enum
import math

from bessel_lab.config.constants import REPORT_SCHEMA_VERSION, ZERO_THRESHOLD_RULES
from bessel_lab.config.settings import settings


# Enums
class Construction(str, Enum):
    DIRECT = "direct"
    TIME_CHANGE = "time_change"


class TestKind(str, Enum):
    MOMENT = "moment"
    DISTRIBUTION = "distribution"
    IDENTITY = "identity"
    DOCUMENTATION = "documentation"


# Process parameters
class BesselParams(BaseModel):
    """Bessel process of dimension delta = 2(1 - mu), indexed by mu in (0, 1)"""
    mu: float = Field(..., gt=0, lt=1, description="Index parameter, strictly inside (0, 1)")

    class Config:
        frozen = True

    @property
    def delta(self) -> float:
        return 2.0 * (1.0 - self.mu)

    @property
    def nu(self) -> float:
        return -self.mu

    @property
    def c_mu(self) -> float:
        """Normalization 1 / (2^mu Gamma(1 + mu)) of the compensator and the Levy tail."""
        from bessel_lab.core.specfun import gamma_fn
        return 1.0 / (2.0 ** self.mu * gamma_fn(1.0 + self.mu))

    @property
    def lt_scale(self) -> float:
        """E[L_1] = 2^mu / Gamma(1 - mu)."""
        from bessel_lab.core.specfun import gamma_fn
        return 2.0 ** self.mu / gamma_fn(1.0 - self.mu)

    @property
    def beta_constant(self) -> float:
        """sin(pi mu) / pi, the arcsine-type normalization."""
        return math.sin(math.pi * self.mu) / math.pi


# Simulation configuration
class SimConfig(BaseModel):
    n_steps: int = Field(..., ge=2, description="Grid steps (u-steps for the time-change construction)")
    horizon: float = Field(..., gt=0, description="Time horizon, or u-budget for the time-change construction")
    seed: int = Field(default=0, ge=0)
    n_paths: int = Field(default=1, ge=1)
    zero_threshold: Optional[float] = Field(
        default=None, gt=0, description="None selects the construction default (bridge zeros, or the 3-sigma band)"
    )
    epsilon: float = Field(default=0.02, gt=0, description="Occupation window for local time")
    batch_size: int = Field(default=500, ge=1)
    bridge_zero_detection: bool = True

    class Config:
        frozen = True

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def n_batches(self) -> int:
        return -(-self.n_paths // self.batch_size)

    def batch_sizes(self) -> List[int]:
        """Fixed partition of the paths into batches, independent of worker count."""
        full, rest = divmod(self.n_paths, self.batch_size)
        return [self.batch_size] * full + ([rest] if rest else [])


class ExperimentConfig(BaseModel):
    experiment_id: str
    mu: float = Field(default=0.5, gt=0, lt=1)
    n_paths: int = Field(default=settings.default_paths, ge=1)
    n_steps: int = Field(default=settings.default_steps, ge=2)
    horizon: float = Field(default=settings.default_horizon, gt=0)
    seed: int = Field(default=settings.default_seed, ge=0)
    epsilon: float = Field(default=settings.default_epsilon, gt=0)
    zero_threshold_rule: str = Field(
        default="bridge", description="'bridge', 'sigma' or an explicit positive level"
    )
    workers: int = Field(default=1, ge=1)
    batch_size: int = Field(default=settings.batch_size, ge=1)
    out_dir: str = settings.output_dir
    as_printed: bool = False
    dump_paths: bool = False

    class Config:
        frozen = True

    @field_validator("zero_threshold_rule")
    @classmethod
    def check_zero_threshold_rule(cls, value: str) -> str:
        value = str(value).strip().lower()
        if value in ZERO_THRESHOLD_RULES:
            return value
        try:
            level = float(value)
        except ValueError:
            raise ValueError(f"zero_threshold_rule must be one of {ZERO_THRESHOLD_RULES} or a positive level")
        if not level > 0 or math.isinf(level):
            raise ValueError("An explicit zero threshold must be a positive finite level")
        return value

    @property
    def params(self) -> BesselParams:
        return BesselParams(mu=self.mu)

    @property
    def zero_threshold(self) -> Optional[float]:
        """Explicit level, or None for the construction default."""
        rule = self.zero_threshold_rule
        return None if rule in ZERO_THRESHOLD_RULES else float(rule)

    @property
    def bridge_zero_detection(self) -> bool:
        return self.zero_threshold_rule != "sigma"


# Reports
class StatReport(BaseModel):
    experiment_id: str
    mu: float
    n_paths: int
    estimate: float
    std_error: float = 0.0
    target: float
    ks_distance: Optional[float] = None
    ks_threshold: Optional[float] = None
    tolerance: Optional[float] = None
    kind: TestKind = TestKind.MOMENT
    label: str = ""
    seed: int = 0
    dropped: int = Field(default=0, ge=0, description="Paths left out of the estimate, e.g. censored before their stopping time")
    passed: bool = Field(default=False, alias="pass")

    class Config:
        populate_by_name = True

    def to_json_dict(self) -> Dict[str, Any]:
        """Flat JSON object with the schema version tag."""
        data = self.model_dump(by_alias=True, mode="json")
        # Non-finite floats have no JSON encoding
        for key, value in data.items():
            if isinstance(value, float) and not math.isfinite(value):
                data[key] = None
        data["schema"] = REPORT_SCHEMA_VERSION
        return data


class ExperimentSummary(BaseModel):
    experiment_id: str
    mu: float
    seed: int
    n_paths: int
    reports: List[StatReport] = []
    artifacts: List[str] = []

    @property
    def passed(self) -> bool:
        """Acceptance ignores documentation-only reports and needs at least one other report."""
        decisive = [r for r in self.reports if r.kind != TestKind.DOCUMENTATION]
        return bool(decisive) and all(r.passed for r in decisive)

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "schema": REPORT_SCHEMA_VERSION,
            "experiment_id": self.experiment_id,
            "mu": self.mu,
            "seed": self.seed,
            "n_paths": self.n_paths,
            "pass": self.passed,
            "reports": [r.to_json_dict() for r in self.reports],
            "artifacts": self.artifacts,
        }
