"""
Shared numerical engines: damped Newton iteration and stiff time integration.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from srmaser.errors import IntegrationError
from srmaser.logger_config import get_logger
from srmaser.monitoring import get_metrics, timed

logger = get_logger(__name__)

Residual = Callable[[np.ndarray], np.ndarray]

_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)


def residual_norm(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if r.size else 0.0


def finite_difference_jacobian(fun: Residual, x: np.ndarray, x_scale: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian with per-unknown step sizes."""
    n = x.size
    steps = _FD_STEP * np.maximum(np.abs(x), x_scale)
    columns = []
    for j in range(n):
        h = steps[j]
        forward = x.copy()
        backward = x.copy()
        forward[j] += h
        backward[j] -= h
        h = forward[j] - backward[j]
        columns.append((fun(forward) - fun(backward)) / h)
    return np.column_stack(columns) if columns else np.zeros((0, 0))


def _newton_step(jacobian: np.ndarray, r: np.ndarray) -> np.ndarray:
    try:
        step = np.linalg.solve(jacobian, -r)
        if np.all(np.isfinite(step)):
            return step
    except np.linalg.LinAlgError:
        pass
    step, *_ = np.linalg.lstsq(jacobian, -r, rcond=None)
    return step


def damped_newton(
    fun: Residual,
    x0: Sequence[float],
    *,
    norm: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
    x_scale: Optional[Sequence[float]] = None,
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    tol: float = 1e-10,
    max_iter: int = 60,
    min_damping: float = 1.0 / 1024.0,
    polish: int = 3,
) -> NewtonResult:
    """
    Newton iteration with backtracking line search.

    Steps solve the raw system ``fun(x) = 0``; acceptance and convergence use
    ``norm(x, fun(x))``, which callers set to a scale-free measure.

    Args:
        fun: Raw residual; zero at the solution
        x0: Starting point
        norm: Scalar merit function of (x, residual); max |residual| by default
        x_scale: Typical magnitude per unknown (finite-difference step floor)
        jac: Analytic Jacobian; central differences when omitted
        tol: Convergence threshold on the merit function
        max_iter: Iteration cap
        min_damping: Smallest step fraction before declaring a stall
        polish: Extra iterations after convergence while the merit keeps dropping

    Returns:
        NewtonResult with the best iterate found.
    """
    if norm is None:
        norm = lambda _x, r: residual_norm(r)  # noqa: E731
    x = np.array(x0, dtype=float)
    scale = np.ones_like(x) if x_scale is None else np.maximum(np.asarray(x_scale, dtype=float), 1e-300)
    r = fun(x)
    merit = norm(x, r)
    history = [merit]
    iterations = 0
    converged = merit <= tol
    extra = 0

    with timed() as clock:
        while iterations < max_iter and np.isfinite(merit):
            if converged:
                if extra >= polish or merit == 0.0:
                    break
                extra += 1
            jacobian = jac(x) if jac is not None else finite_difference_jacobian(fun, x, scale)
            step = _newton_step(jacobian, r)
            iterations += 1

            damping = 1.0
            accepted = False
            while damping >= min_damping:
                candidate = x + damping * step
                r_candidate = fun(candidate)
                merit_candidate = norm(candidate, r_candidate)
                if np.isfinite(merit_candidate) and merit_candidate < (1.0 - 1e-4 * damping) * merit:
                    accepted = True
                    break
                damping *= 0.5

            if not accepted:
                logger.debug(f"Newton stalled | iterations={iterations} | residual={merit:.3e}")
                break
            x, r, merit = candidate, r_candidate, merit_candidate
            history.append(merit)
            logger.debug(f"Newton step | k={iterations} | damping={damping:.3g} | residual={merit:.3e}")
            if merit <= tol:
                converged = True

    get_metrics().record_newton(iterations, clock.elapsed or 0.0, merit)
    return NewtonResult(x=x, residual=merit, iterations=iterations, converged=converged, history=history)


@dataclass
class IntegrationResult:
    t: np.ndarray
    y: np.ndarray
    nfev: int
    message: str
    rtol: float
    atol: float


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    t_span: Sequence[float],
    y0: np.ndarray,
    *,
    rtol: float = 1e-8,
    atol: float = 1e-14,
    method: str = "Radau",
    t_eval: Optional[np.ndarray] = None,
    jac: Optional[Callable] = None,
    max_step: float = np.inf,
) -> IntegrationResult:
    """
    Adaptive integration through solve_ivp; failure raises IntegrationError.

    The error carries the last accepted time and state.
    """
    options = {"rtol": rtol, "atol": atol, "max_step": max_step}
    if jac is not None and method in ("Radau", "BDF", "LSODA"):
        options["jac"] = jac
    with timed() as clock:
        sol = solve_ivp(rhs, (float(t_span[0]), float(t_span[1])), np.asarray(y0),
                        method=method, t_eval=t_eval, **options)
    get_metrics().record_integration(int(sol.nfev), clock.elapsed or 0.0)

    if sol.status < 0:
        get_metrics().record_failure("integration", sol.message)
        t_last = float(sol.t[-1]) if sol.t.size else float(t_span[0])
        y_last = sol.y[:, -1] if sol.y.size else np.asarray(y0)
        raise IntegrationError(f"integration failed: {sol.message}", t_last=t_last, last_state=y_last)

    return IntegrationResult(t=sol.t, y=sol.y, nfev=int(sol.nfev), message=str(sol.message),
                             rtol=rtol, atol=atol)


def relax(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    residual: Callable[[np.ndarray], float],
    *,
    t_first: float,
    t_max: float,
    target: float,
    rtol: float = 1e-10,
    atol: float = 1e-16,
    method: str = "Radau",
) -> tuple:
    """
    Integrate in doubling chunks until ``residual(y)`` drops below ``target``.

    Returns:
        (y, t, residual) at the last chunk end.
    """
    y = np.asarray(y0, dtype=float)
    t = 0.0
    chunk = t_first
    best = residual(y)
    while t < t_max:
        result = integrate(rhs, (t, t + chunk), y, rtol=rtol, atol=atol, method=method)
        y = result.y[:, -1]
        t += chunk
        best = residual(y)
        logger.debug(f"relax chunk | t={t:.4g} | residual={best:.3e}")
        if best <= target:
            break
        chunk *= 2.0
    return y, t, best
