"""
Exception hierarchy for srmaser.

The CLI maps these onto exit codes: ConfigError -> 2, SolverError -> 3,
SweepFailure -> 4.
"""

from typing import Any, Optional


class SrmaserError(Exception):
    """Base class for every error raised by srmaser."""


class ConfigError(SrmaserError, ValueError):
    """Unparsable config file, unknown key, missing units or bad sweep section."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ParameterError(SrmaserError, ValueError):
    """A physical parameter set or model violates its invariants."""


class UnknownPresetError(SrmaserError, KeyError):
    """Requested preset is not in the catalog."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown preset"


class SolverError(SrmaserError):
    """Numerical solve failed."""


class ConvergenceError(SolverError):
    """Root solve did not converge after every strategy was tried."""

    def __init__(self, message: str, residual: float = float("nan"),
                 iterations: int = 0, eta_reached: Optional[float] = None,
                 best: Any = None):
        super().__init__(f"{message} | residual={residual:.3e}")
        self.residual = residual
        self.iterations = iterations
        self.eta_reached = eta_reached
        self.best = best


class IntegrationError(SolverError):
    """Adaptive integration aborted (usually step-size underflow)."""

    def __init__(self, message: str, t_last: float = float("nan"), last_state: Any = None):
        super().__init__(f"{message} | t_last={t_last:.6g}")
        self.t_last = t_last
        self.last_state = last_state


class ResolutionError(SrmaserError):
    """Filter response denominator vanished at a sampled filter frequency."""

    def __init__(self, omega_f: float):
        super().__init__(f"filter response not resolvable at omega_f offset {omega_f:.17g} rad/s")
        self.omega_f = omega_f


class InvariantViolation(SrmaserError):
    """A computed quantity left its physically allowed range."""


class PositivityError(InvariantViolation):
    """Exact density matrix acquired a negative eigenvalue (Fock cutoff too small)."""

    def __init__(self, min_eigenvalue: float, t: float):
        super().__init__(
            f"density matrix eigenvalue {min_eigenvalue:.3e} at t={t:.6g}; increase fock_cutoff"
        )
        self.min_eigenvalue = min_eigenvalue
        self.t = t


class SweepFailure(SrmaserError):
    """Too many grid points failed in a sweep."""

    def __init__(self, failed: int, total: int):
        super().__init__(f"{failed} of {total} grid points failed")
        self.failed = failed
        self.total = total
