"""Exception types shared across the package."""


class QtsError(Exception):
    """Base class for package-specific failures."""


class FieldCorruptionError(QtsError):
    """A field contains NaN or Inf entries."""


class SolverDivergedError(QtsError):
    """An iterative linear solve failed to reach its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class CFLViolation(QtsError):
    """A step was rejected because the advective CFL bound was exceeded."""

    def __init__(self, dt: float, suggested_dt: float):
        super().__init__(
            f"time step {dt:.6e} violates the CFL bound; largest admissible step is {suggested_dt:.6e}"
        )
        self.dt = dt
        self.suggested_dt = suggested_dt


class NonFiniteStateError(QtsError):
    """The evolving state produced NaN/Inf; the run was aborted."""

    def __init__(self, t: float, step_index: int, snapshot_path=None):
        msg = f"non-finite state detected at t={t:.6e} (step {step_index})"
        if snapshot_path is not None:
            msg += f"; last good state dumped to {snapshot_path}"
        super().__init__(msg)
        self.t = t
        self.step_index = step_index
        self.snapshot_path = snapshot_path


class ConfigError(QtsError):
    """Configuration text failed to parse or validate; carries every violation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))
