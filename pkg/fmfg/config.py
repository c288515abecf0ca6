"""
Solver configuration.

One frozen pydantic model holds every knob of the time-marching solvers and the
outer fixed-point loop, so a run is fully described by (problem, SolverConfig).
"""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from .semigroup import Integrator


class TrajectoryMetric(str, Enum):
    """Distance between successive density iterates of the outer loop."""
    L2_TRAJ = "l2_traj"
    D1_SUP = "d1_sup"


class SolverConfig(BaseModel):
    """
    Knobs of the HJB/FP solvers and the damped fixed-point loop.

    Examples:
        >>> SolverConfig().damping
        0.5
        >>> SolverConfig(nt=400, integrator="etd1").integrator
        <Integrator.ETD1: 'etd1'>
    """

    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)

    nt: int = Field(default=200, ge=8, description="Time steps on [0, T]")
    damping: float = Field(default=0.5, gt=0.0, le=1.0, description="Initial damping delta")
    tol: float = Field(default=1e-6, gt=0.0, description="Fixed-point tolerance on the trajectory metric")
    max_iter: int = Field(default=60, ge=1, description="Outer-iteration cap")
    integrator: Integrator = Integrator.IMEX
    dealias: bool = True
    metric: TrajectoryMetric = TrajectoryMetric.L2_TRAJ
    norm_p: float = Field(default=2.0, gt=1.0, description="Exponent of the surrogate norms")

    residual_tol: float = Field(default=1e-3, gt=0.0)
    residual_ceiling: float = Field(default=1.0, gt=0.0)
    duality_tol: float = Field(default=1e-3, gt=0.0)
    energy_tol: float = Field(default=1e-3, gt=0.0)
    stability_tol: float = Field(default=1e-3, ge=0.0)
    negativity_floor: float = Field(default=1e-3, ge=0.0, description="Relative to sup |m|")
    sinkhorn_reg: float = Field(default=1e-3, gt=0.0)
    picard_iterations: int = Field(default=8, ge=3)
    seed: int = 0

    def with_updates(self, **changes) -> "SolverConfig":
        return self.model_validate({**self.model_dump(), **changes})
