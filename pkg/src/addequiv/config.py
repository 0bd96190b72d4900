"""Scenario configuration: a JSON document validated into a ``Scenario``."""

import hashlib
import json
import re
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, field_validator, model_validator

from .design import DesignModel, HistogramDensity, validate_bounds
from .errors import AddEquivError, ConfigError
from .functions import PANEL_IDS, panel_function

SUITES = ("simulate", "risk", "equivalence", "operator", "regime")


class DesignSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: Literal["product", "pairwise"] = "product"
    marginals: Optional[List[List[float]]] = Field(
        default=None, description="histogram weights per coordinate; null means uniform"
    )
    theta: Union[float, List[List[float]]] = 0.0
    score_scale: float = 2.0
    rho: Optional[float] = Field(default=None, description="null derives rho from the density bounds")


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=20240601, ge=0, lt=2 ** 64)
    n: int = Field(default=2000, ge=4)
    d: int = Field(default=2, ge=1)
    K: int = Field(default=16, ge=2)
    J: Union[int, Literal["auto"]] = "auto"
    J_constant: float = Field(default=1.0, gt=0)
    T: int = Field(default=1024, ge=8)
    G: int = Field(default=64, ge=2)
    sigma: Optional[float] = Field(default=None, gt=0)
    beta: float = Field(default=1.0, gt=0, le=1)
    alpha: float = Field(default=0.0, ge=0)
    gamma: Optional[float] = Field(default=None, description="K_n = n^gamma schedule exponent")
    functions: List[str] = Field(default_factory=lambda: ["mixed"])
    design: DesignSpec = Field(default_factory=DesignSpec)
    suites: List[str] = Field(default_factory=lambda: ["simulate"])
    reps: int = Field(default=200, ge=1)
    risk_schedule: List[int] = Field(default_factory=lambda: [2 ** k for k in range(9, 15)])
    risk_K: int = Field(default=120, ge=2)
    equivalence_runs: int = Field(default=20, ge=1)
    equivalence_samples: int = Field(default=200, ge=100)
    permutations: int = Field(default=500, ge=1)
    gamma_L_windows: List[int] = Field(default_factory=lambda: [1, 8, 64])
    gamma_L_size: int = Field(default=10, ge=1)

    @field_validator("functions")
    @classmethod
    def _panel(cls, v):
        for f in v:
            if f not in PANEL_IDS:
                raise ValueError(f"unknown function panel id {f!r}; choose from {list(PANEL_IDS)}")
        return v

    @field_validator("suites")
    @classmethod
    def _suites(cls, v):
        for s in v:
            if s not in SUITES:
                raise ValueError(f"unknown suite {s!r}; choose from {list(SUITES)}")
        return v

    @model_validator(mode="after")
    def _cross(self):
        if isinstance(self.J, int) and (self.J < 2 or self.K % self.J):
            raise ValueError(f"J = {self.J} must be >= 2 and divide K = {self.K}")
        if self.sigma is None and any(s != "regime" for s in self.suites):
            raise ValueError("sigma: field required by the selected suites")
        return self

    def build_model(self):
        spec = self.design
        if spec.marginals is None:
            margs = [HistogramDensity.uniform(1) for _ in range(self.d)]
        else:
            if len(spec.marginals) != self.d:
                raise ConfigError(f"design.marginals: expected {self.d} coordinates, got {len(spec.marginals)}")
            margs = [HistogramDensity.from_weights(w) for w in spec.marginals]
        if spec.family == "product":
            if np.any(np.asarray(spec.theta) != 0):
                raise ConfigError("design.theta: the product family has no dependence coefficients")
            return DesignModel.product(margs, rho=spec.rho)
        theta = spec.theta
        if np.isscalar(theta) and self.d != 2:
            theta = np.full((self.d, self.d), float(theta))
        scores = [{"kind": "linear", "scale": spec.score_scale} for _ in margs]
        return DesignModel.pairwise(margs, theta, scores, rho=spec.rho)

    def build_functions(self):
        return {f: panel_function(f, self.d, self.beta) for f in self.functions}

    def digest(self):
        blob = json.dumps(self.model_dump(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _line_of(text, key):
    m = re.search(r'"%s"\s*:' % re.escape(str(key)), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _describe(err, text):
    parts = []
    for e in err.errors():
        loc = [str(p) for p in e["loc"]]
        msg = e["msg"].removeprefix("Value error, ")
        field = ".".join(loc)
        if not loc and msg.startswith("sigma: "):
            field, msg = "sigma", msg.removeprefix("sigma: ")
        key = loc[-1] if loc else field
        line = _line_of(text, key) if loc else None
        where = f" (line {line})" if line else ""
        if e["type"] == "missing":
            msg = "field required"
        parts.append(f"{field or '<root>'}{where}: {msg}")
    return "; ".join(parts)


def parse_scenario(text):
    """Parse JSON text into a validated ``Scenario``; errors name field and line."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    try:
        scenario = Scenario.model_validate(data)
    except PydanticError as exc:
        raise ConfigError(_describe(exc, text)) from None
    try:
        model = scenario.build_model()
        _, _, ok = validate_bounds(model)
    except AddEquivError as exc:
        raise ConfigError(f"design: {exc}") from None
    if not ok:
        raise ConfigError("design: density violates its declared bounds [rho, 1/rho]")
    return scenario


def load_scenario(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_scenario(text)


def defaults():
    """Every field with its default value (``sigma`` has none)."""
    return Scenario.model_construct().model_dump() | {"sigma": None, "design": DesignSpec().model_dump()}
