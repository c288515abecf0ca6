"""Exceptions raised by the time-marching solvers."""

from typing import Optional


class SolverError(RuntimeError):
    """A solver produced unusable output (non-finite values, residual or density floor breached)."""

    def __init__(self, solver: str, message: str, step: Optional[int] = None):
        self.solver = solver
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"{solver}{where}: {message}")
