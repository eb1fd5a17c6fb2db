"""Scenario files: JSON documents describing a system, its initial conditions and outputs."""

import json
import logging
from pathlib import Path
from typing import Callable, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from hyperflow.errors import HyperflowError, ScenarioError
from hyperflow.expressions import ScalarExpression, lambdify_vector, parse_expression, split_tuple
from hyperflow.hamiltonian import FrequencyProfile, HamiltonianTriple
from hyperflow.structures import (
    ComplexStructureTriple,
    Orientation,
    assemble_block_structure,
)

logger = logging.getLogger(__name__)

ExpressionItem = Union[str, int, float]
ExpressionTripleSpec = Union[str, List[ExpressionItem]]
Output = Literal["trajectory", "invariants"]


def _triple_items(value: ExpressionTripleSpec) -> List[str]:
    items = split_tuple(value) if isinstance(value, str) else [str(v) for v in value]
    if len(items) != 3:
        raise ValueError(f"expected 3 expressions, got {len(items)}")
    return items


class TimeSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t_end: float = Field(gt=0, description="Final model time")
    dt: Optional[float] = Field(default=None, gt=0, description="RK4 step and sampling interval")
    sample_stride: int = Field(default=1, ge=1, description="Record every k-th step")


class ProfileSpec(BaseModel):
    """Oscillator coefficients as polynomials in r1..rn."""

    model_config = ConfigDict(extra="forbid")

    c: ExpressionTripleSpec = Field(description="c_alpha, e.g. '(r1, 0, 1 - r1)'")
    c_hat: Optional[ExpressionTripleSpec] = Field(
        default=None, description="Coefficients on the dual structure (Dirac systems)"
    )
    f0: Optional[str] = Field(default=None, description="Radial damping of asymptotic systems")

    @field_validator("c", "c_hat")
    @classmethod
    def _three_items(cls, value):
        if value is not None:
            _triple_items(value)
        return value


class Scenario(BaseModel):
    """A validated scenario; expressions are compiled on demand by the build_* methods."""

    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1, description="Number of quaternionic blocks (dimension 4n)")
    signature: Optional[List[Literal["+", "-"]]] = Field(
        default=None, description="Orientation of each block; all '+' when omitted"
    )
    structure: Optional[List[List[List[float]]]] = Field(
        default=None, description="Explicit matrices (L1, L2, L3) for verify/reduce"
    )
    profile: Optional[ProfileSpec] = None
    hamiltonians: Optional[ExpressionTripleSpec] = None
    field: Optional[List[str]] = Field(
        default=None, description="Components of a vector field, for detect"
    )
    initial_conditions: List[List[float]] = Field(default_factory=list)
    time: Optional[TimeSpec] = None
    rho: Optional[List[float]] = Field(
        default=None, description="Block radii at which symmetry evaluates c"
    )
    outputs: List[Output] = Field(
        default_factory=list,
        description="Artifacts written by flow, simulate and invariants; empty means the "
        "command's own",
    )

    @field_validator("hamiltonians")
    @classmethod
    def _three_hamiltonians(cls, value):
        if value is not None:
            _triple_items(value)
        return value

    @model_validator(mode="after")
    def _check_dimensions(self) -> "Scenario":
        dim = 4 * self.n
        if self.signature is not None and len(self.signature) != self.n:
            raise ScenarioError(
                f"signature has {len(self.signature)} entries for n = {self.n}", field="signature"
            )
        for i, x0 in enumerate(self.initial_conditions):
            if len(x0) != dim:
                raise ScenarioError(
                    f"initial condition {i} has {len(x0)} entries, expected {dim}",
                    field=f"initial_conditions.{i}",
                )
        if self.field is not None and len(self.field) != dim:
            raise ScenarioError(
                f"field has {len(self.field)} components, expected {dim}", field="field"
            )
        if self.rho is not None and len(self.rho) != self.n:
            raise ScenarioError(f"rho has {len(self.rho)} entries for n = {self.n}", field="rho")
        if self.structure is not None:
            shape = np.shape(self.structure)
            if shape != (3, dim, dim):
                raise ScenarioError(
                    f"structure has shape {shape}, expected (3, {dim}, {dim})", field="structure"
                )
        return self

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Scenario":
        """Read and validate a scenario file; failures name the offending field."""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ScenarioError(f"cannot read scenario {path}: {e.strerror}") from e
        return cls.from_json(text)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            return cls.model_validate_json(text)
        except ValidationError as e:
            first = e.errors()[0]
            original = first.get("ctx", {}).get("error")
            if isinstance(original, ScenarioError):
                raise ScenarioError(original.message, field=original.field) from e
            location = ".".join(str(part) for part in first["loc"]) or None
            raise ScenarioError(first["msg"], field=location) from e

    @classmethod
    def json_schema_text(cls) -> str:
        return json.dumps(cls.model_json_schema(), indent=2)

    @property
    def dim(self) -> int:
        return 4 * self.n

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise ScenarioError(f"this command needs '{name}' in the scenario", field=name)

    def orientation_signature(self) -> tuple:
        if self.signature is None:
            return (Orientation.POSITIVE,) * self.n
        return tuple(Orientation.parse(s) for s in self.signature)

    def build_structure(self) -> ComplexStructureTriple:
        if self.structure is not None:
            return ComplexStructureTriple(tuple(np.array(m) for m in self.structure))
        return assemble_block_structure(self.orientation_signature())

    def _compile(self, text: str, location: str) -> ScalarExpression:
        try:
            return parse_expression(text, self.dim)
        except HyperflowError as e:
            raise ScenarioError(e.message, field=location) from e

    def _compile_triple(self, spec: ExpressionTripleSpec, location: str) -> tuple:
        return tuple(
            self._compile(item, f"{location}.{i}") for i, item in enumerate(_triple_items(spec))
        )

    def build_profile(self) -> FrequencyProfile:
        self.require("profile")
        c = self._compile_triple(self.profile.c, "profile.c")
        c_hat = (
            self._compile_triple(self.profile.c_hat, "profile.c_hat")
            if self.profile.c_hat is not None
            else None
        )
        try:
            return FrequencyProfile(c, c_hat, self.orientation_signature())
        except HyperflowError as e:
            raise ScenarioError(e.message, field="profile") from e

    def build_f0(self) -> Optional[ScalarExpression]:
        if self.profile is None or self.profile.f0 is None:
            return None
        f0 = self._compile(self.profile.f0, "profile.f0")
        if not f0.is_radial:
            raise ScenarioError("f0 must depend on r1..rn only", field="profile.f0")
        return f0

    def build_hamiltonians(self) -> HamiltonianTriple:
        self.require("hamiltonians")
        return HamiltonianTriple(self._compile_triple(self.hamiltonians, "hamiltonians"))

    def build_field(self) -> Callable[[np.ndarray], np.ndarray]:
        self.require("field")
        return lambdify_vector(
            self._compile(text, f"field.{i}") for i, text in enumerate(self.field)
        )

    def initial_states(self) -> List[np.ndarray]:
        if not self.initial_conditions:
            raise ScenarioError("no initial conditions given", field="initial_conditions")
        return [np.array(x0, dtype=float) for x0 in self.initial_conditions]

    def radii(self) -> np.ndarray:
        """Radii for symmetry: `rho` when given, else those of the first initial condition."""
        if self.rho is not None:
            return np.array(self.rho, dtype=float)
        if self.initial_conditions:
            return np.sum(np.reshape(self.initial_conditions[0], (-1, 4)) ** 2, axis=1)
        return np.ones(self.n)
