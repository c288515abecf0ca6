"""
Problem-file loading.

Problem files are TOML with the key schema

    d, n, s, sigma, T, Nt, gamma, coupling_mode,
    c_field = {type, params}, kernel = {kappa, amplitude},
    m0 = {type, params}, uT = {type, params},
    [solver] (SolverConfig fields), [experiment] (seed, sigmas, horizons, inits)

Every rejection is a ConfigError naming the offending key and, when the key can
be found in the source text, its line number.
"""

import hashlib
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from fmfg.config import SolverConfig
from fmfg.model import Coupling, CouplingMode, FieldKind, Hamiltonian, MFGProblem
from fmfg.spectral_core import make_grid

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Problem file rejected; carries the line of the offending key when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class FieldSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: FieldKind
    params: Dict[str, Any] = Field(default_factory=dict)


class KernelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kappa: float = Field(default=2.0, gt=0.0)
    amplitude: float = 1.0


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    sigmas: List[float] = Field(default_factory=lambda: [1e-1, 3e-2, 1e-2, 3e-3, 0.0])
    horizons: List[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4])
    inits: int = Field(default=2, ge=2)


class ProblemFile(BaseModel):
    """Schema of a problem file, before the fields are built on a grid."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    d: int = 1
    n: int = 64
    s: float
    sigma: float = Field(default=0.0, ge=0.0)
    T: float = Field(gt=0.0)
    Nt: int = Field(default=200, ge=8)
    gamma: float = 1.5
    coupling_mode: CouplingMode = CouplingMode.MONOTONE
    c_field: FieldSpec = Field(default_factory=lambda: FieldSpec(type=FieldKind.CONSTANT, params={"value": 1.0}))
    kernel: KernelSpec = Field(default_factory=KernelSpec)
    m0: FieldSpec
    uT: FieldSpec = Field(default_factory=lambda: FieldSpec(type=FieldKind.CONSTANT, params={"value": 0.0}))
    solver: Dict[str, Any] = Field(default_factory=dict)
    experiment: ExperimentSpec = Field(default_factory=ExperimentSpec)

    @field_validator("s")
    @classmethod
    def _fractional_order(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {value}")
        return value

    @field_validator("gamma")
    @classmethod
    def _growth(cls, value: float) -> float:
        if not 1.0 < value <= 2.0:
            raise ValueError(f"gamma must lie in (1, 2], got {value}")
        return value


@dataclass
class LoadedConfig:
    """A validated problem with its solver settings and provenance."""

    problem: MFGProblem
    solver: SolverConfig
    experiment: ExperimentSpec
    config_hash: str
    path: Path


def locate_key(source: str, loc: Sequence[Union[str, int]]) -> Optional[int]:
    """1-based line of the innermost named key in loc, or of its table header."""
    names = [str(part) for part in loc if isinstance(part, str)]
    for name in reversed(names):
        pattern = re.compile(rf"^\s*(\[\s*{re.escape(name)}\s*\]|{re.escape(name)}\s*=|\[[^\]]*\.{re.escape(name)}\s*\])")
        for number, line in enumerate(source.splitlines(), start=1):
            if pattern.search(line):
                return number
    return None


_INVARIANT_KEYS = (("(I)", "m0"), ("s must", "s"), ("gamma", "gamma"), ("sigma", "sigma"), ("T must", "T"))


def _invariant_key(message: str) -> Optional[str]:
    for marker, key in _INVARIANT_KEYS:
        if message.startswith(marker):
            return key
    return None


def parse_problem(source: str) -> ProblemFile:
    """Parse and schema-check problem-file text."""
    try:
        raw = tomllib.loads(source)
    except tomllib.TOMLDecodeError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"invalid TOML: {exc}", int(match.group(1)) if match else None) from exc

    try:
        return ProblemFile.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(part) for part in first["loc"])
        message = first["msg"].removeprefix("Value error, ")
        raise ConfigError(f"{key}: {message}", locate_key(source, first["loc"])) from exc


def build_problem(problem_file: ProblemFile, source: str = "") -> MFGProblem:
    """Build fields on the grid and run the problem invariant checks."""
    try:
        grid = make_grid(problem_file.d, problem_file.n)
    except ValueError as exc:
        raise ConfigError(str(exc), locate_key(source, ["n"]) or locate_key(source, ["d"])) from exc

    fields = {}
    for key in ("c_field", "m0", "uT"):
        field_spec: FieldSpec = getattr(problem_file, key)
        try:
            fields[key] = field_spec.type.build(grid, field_spec.params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}", locate_key(source, [key])) from exc

    try:
        return MFGProblem(
            s_exp=problem_file.s,
            sigma=problem_file.sigma,
            T=problem_file.T,
            ham=Hamiltonian(problem_file.gamma, fields["c_field"]),
            coupling=Coupling.gaussian(grid, problem_file.kernel.kappa, problem_file.kernel.amplitude, problem_file.coupling_mode),
            m0=fields["m0"],
            uT=fields["uT"],
        )
    except ValueError as exc:
        key = _invariant_key(str(exc))
        raise ConfigError(str(exc), locate_key(source, [key]) if key else None) from exc


def build_solver_config(problem_file: ProblemFile, source: str = "") -> SolverConfig:
    if "nt" in problem_file.solver:
        raise ConfigError("solver.nt: set the step count with the top-level Nt key", locate_key(source, ["solver", "nt"]))
    try:
        return SolverConfig(nt=problem_file.Nt, seed=problem_file.experiment.seed, **problem_file.solver)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"solver.{key}: {first['msg']}", locate_key(source, ["solver", *first["loc"]])) from exc


def load_config(path: Union[str, Path]) -> LoadedConfig:
    """
    Load and fully validate a problem file.

    Args:
        path: TOML problem file

    Returns:
        LoadedConfig with the problem, solver settings, experiment settings and the
        sha256 of the file contents

    Raises:
        FileNotFoundError: path does not exist
        ConfigError: syntax, schema or invariant violation

    Examples:
        >>> loaded = load_config("configs/bench.toml")
        >>> loaded.problem.s_exp
        0.75
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    source = path.read_text(encoding="utf-8")
    problem_file = parse_problem(source)
    problem = build_problem(problem_file, source)
    solver = build_solver_config(problem_file, source)
    config_hash = hashlib.sha256(source.encode("utf-8")).hexdigest()
    logger.info("loaded %s (sha256 %s)", path, config_hash[:12])
    return LoadedConfig(problem, solver, problem_file.experiment, config_hash, path)
