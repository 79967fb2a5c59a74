"""
Identical-spin second-order cumulant model.

Tracked moments: photon number <a+a>, spin-photon correlation <s+_k a>,
inversion <s^z_k> and spin-spin correlation <s+_k s-_k'> (k != k'). The field
amplitude <a> is zero throughout, so the third-order closure reduces to
<a+a s^z> = <a+a><s^z>.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from srmaser.cache import cached
from srmaser.errors import ConvergenceError, IntegrationError, ParameterError
from srmaser.logger_config import get_logger
from srmaser.model import SystemParams, derive_rates
from srmaser.monitoring import get_metrics
from srmaser.solvers import damped_newton, integrate, relax

logger = get_logger(__name__)

_TINY = 1e-300


@dataclass(frozen=True)
class MeanFieldState:
    photon_number: float
    spin_photon: complex
    inversion: float
    spin_spin: complex

    @property
    def photon_spin(self) -> complex:
        """<a+ s-> = conj(<s+ a>)."""
        return self.spin_photon.conjugate()

    def to_vector(self) -> np.ndarray:
        return np.array([
            self.photon_number,
            self.spin_photon.real, self.spin_photon.imag,
            self.inversion,
            self.spin_spin.real, self.spin_spin.imag,
        ])

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "MeanFieldState":
        return cls(
            photon_number=float(y[0]),
            spin_photon=complex(y[1], y[2]),
            inversion=float(y[3]),
            spin_spin=complex(y[4], y[5]),
        )

    @classmethod
    def ground(cls) -> "MeanFieldState":
        return cls(0.0, 0j, -1.0, 0j)

    def violations(self, tol: float = 1e-9) -> List[str]:
        """Names of invariants this state breaks beyond ``tol``."""
        problems = []
        if self.photon_number < -tol * max(1.0, abs(self.photon_number)):
            problems.append("photon_number<0")
        if abs(self.inversion) > 1.0 + tol:
            problems.append("|inversion|>1")
        if abs(self.spin_spin) > 1.0 + tol:
            problems.append("|spin_spin|>1")
        return problems


@dataclass
class Trajectory:
    times: np.ndarray
    states: List[MeanFieldState]
    rtol: float
    nfev: int = 0
    message: str = ""

    @property
    def final(self) -> MeanFieldState:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class _Coefficients:
    """Flat numbers pulled from SystemParams for the hot loops."""

    n_spins: float
    g: float
    kappa: float
    n_c: float
    n_k: float
    gamma: float
    eta: float
    lam: float
    delta: float
    relaxation: float

    @classmethod
    def from_params(cls, params: SystemParams) -> "_Coefficients":
        rates = derive_rates(params)
        return cls(
            n_spins=params.n_spins, g=params.g, kappa=params.kappa_c,
            n_c=rates.n_c_th, n_k=rates.n_k_th, gamma=params.gamma, eta=params.eta,
            lam=rates.lambda_s, delta=params.detuning, relaxation=rates.total_relaxation,
        )

    @property
    def width(self) -> float:
        """lambda_s + kappa_c/2, the decay rate of <s+ a>."""
        return self.lam + 0.5 * self.kappa


def _derivatives(n: float, c: complex, sz: float, s: complex, k: _Coefficients) -> Tuple[float, complex, float, complex]:
    coherence = c - c.conjugate()
    dn = -k.kappa * n + k.kappa * k.n_c + (1j * k.n_spins * k.g * coherence).real
    dc = ((1j * k.delta - k.width) * c
          - 1j * k.g * n * sz
          - 0.5j * k.g * (sz + 1.0)
          - 1j * (k.n_spins - 1.0) * k.g * s)
    dsz = ((-2j * k.g * coherence).real
           - k.gamma * ((2.0 * k.n_k + 1.0) * sz + 1.0)
           - k.eta * (sz - 1.0))
    ds = -2.0 * k.lam * s + 1j * k.g * sz * coherence
    return dn, dc, dsz, ds


def rhs_identical(state: MeanFieldState, params: SystemParams) -> MeanFieldState:
    """
    Time derivative of every tracked moment.

    Args:
        state: Current moments
        params: System parameters

    Returns:
        MeanFieldState whose fields hold d/dt of the corresponding moments.
    """
    k = _Coefficients.from_params(params)
    dn, dc, dsz, ds = _derivatives(state.photon_number, state.spin_photon,
                                   state.inversion, state.spin_spin, k)
    return MeanFieldState(photon_number=dn, spin_photon=dc, inversion=dsz, spin_spin=ds)


def _rhs_vector(k: _Coefficients):
    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        dn, dc, dsz, ds = _derivatives(y[0], complex(y[1], y[2]), y[3], complex(y[4], y[5]), k)
        return np.array([dn, dc.real, dc.imag, dsz, ds.real, ds.imag])
    return rhs


def _scaled_residual(y: np.ndarray, k: _Coefficients) -> float:
    """Largest per-equation imbalance relative to the sum of its term magnitudes."""
    n, c, sz, s = y[0], complex(y[1], y[2]), y[3], complex(y[4], y[5])
    dn, dc, dsz, ds = _derivatives(n, c, sz, s, k)
    ci = abs(c.imag)
    weights = (
        k.kappa * (abs(n) + k.n_c) + 2.0 * k.n_spins * k.g * ci,
        abs(1j * k.delta - k.width) * abs(c) + k.g * abs(n * sz) + 0.5 * k.g * abs(sz + 1.0)
        + (k.n_spins - 1.0) * k.g * abs(s),
        4.0 * k.g * ci + k.gamma * ((2.0 * k.n_k + 1.0) * abs(sz) + 1.0) + k.eta * (abs(sz) + 1.0),
        2.0 * k.lam * abs(s) + 2.0 * k.g * abs(sz) * ci,
    )
    values = (abs(dn), abs(dc), abs(dsz), abs(ds))
    return max(v / (w + _TINY) if v > 0 else 0.0 for v, w in zip(values, weights))


def evolve(initial: MeanFieldState, params: SystemParams, t_end: float, tol: float = 1e-8,
           method: str = "Radau", n_samples: Optional[int] = None) -> Trajectory:
    """
    Integrate the moment equations from ``initial`` to ``t_end``.

    Args:
        initial: Starting moments
        params: System parameters
        t_end: Final time (s)
        tol: Relative tolerance in (0, 1e-2]
        method: solve_ivp method; the default is stiff-safe
        n_samples: Evenly spaced output samples (solver steps when None)

    Returns:
        Trajectory of sampled states.

    Raises:
        IntegrationError: step-size underflow, with the last good state
    """
    if not (0.0 < tol <= 1e-2):
        raise ParameterError(f"tol must lie in (0, 1e-2], got {tol}")
    if not t_end > 0:
        raise ParameterError(f"t_end must be > 0, got {t_end}")

    k = _Coefficients.from_params(params)
    t_eval = np.linspace(0.0, t_end, n_samples) if n_samples else None
    try:
        result = integrate(_rhs_vector(k), (0.0, t_end), initial.to_vector(),
                           rtol=tol, atol=tol * 1e-6, method=method, t_eval=t_eval)
    except IntegrationError as exc:
        if exc.last_state is not None:
            exc.last_state = MeanFieldState.from_vector(exc.last_state)
        logger.error(f"Mean-field integration failed | t_last={exc.t_last:.4g}")
        raise

    states = [MeanFieldState.from_vector(result.y[:, i]) for i in range(result.t.size)]
    return Trajectory(times=result.t, states=states, rtol=tol, nfev=result.nfev, message=result.message)


def thermal_fixed_point(params: SystemParams) -> MeanFieldState:
    """Steady state at g = 0: thermal resonator, pumped/thermal spins, no correlations."""
    k = _Coefficients.from_params(params)
    sz = (k.eta - k.gamma) / k.relaxation if k.relaxation > 0 else -1.0
    return MeanFieldState(photon_number=k.n_c, spin_photon=0j, inversion=sz, spin_spin=0j)


def _reduced_roots(k: _Coefficients) -> List[MeanFieldState]:
    """
    Exact steady states from the one-dimensional elimination.

    At steady state <s+ a> = g B / (delta + i width) with a real bracket
    B = n sz + (sz + 1)/2 + (N - 1) s, and n, sz, s are affine or quadratic in
    y = Im <s+ a>, so the steady condition is a quadratic in y.
    """
    if k.relaxation <= 0 or k.kappa <= 0 or k.lam <= 0:
        return []
    z = complex(k.delta, k.width)
    beta = k.g * k.width / abs(z) ** 2
    p = (k.eta - k.gamma) / k.relaxation
    q = 4.0 * k.g / k.relaxation
    a = 2.0 * k.n_spins * k.g / k.kappa
    collective = (k.n_spins - 1.0) * k.g / k.lam

    a2 = -beta * q * (a + collective)
    a1 = 1.0 + beta * (k.n_c * q - a * p + 0.5 * q - collective * p)
    a0 = beta * (k.n_c * p + 0.5 * (p + 1.0))

    if a2 == 0.0:
        ys = [-a0 / a1] if a1 != 0.0 else []
    else:
        disc = a1 * a1 - 4.0 * a2 * a0
        if disc < 0:
            return []
        root = math.sqrt(disc)
        # Stable pair: avoid cancellation between a1 and the root
        qq = -0.5 * (a1 + math.copysign(root, a1))
        ys = [qq / a2]
        if qq != 0.0:
            ys.append(a0 / qq)

    states = []
    for y in ys:
        n = k.n_c - a * y
        sz = p + q * y
        s = -k.g * sz * y / k.lam
        bracket = n * sz + 0.5 * (sz + 1.0) + (k.n_spins - 1.0) * s
        c = k.g * bracket / z
        states.append(MeanFieldState(photon_number=n, spin_photon=c, inversion=sz, spin_spin=complex(s, 0.0)))
    return states


def _pick_root(candidates: List[MeanFieldState], guess: Optional[MeanFieldState]) -> Optional[MeanFieldState]:
    physical = [s for s in candidates if not s.violations(1e-9)]
    if not physical:
        return None
    if guess is not None:
        return min(physical, key=lambda s: abs(s.photon_number - guess.photon_number)
                   / max(1.0, abs(guess.photon_number)) + abs(s.inversion - guess.inversion))
    return max(physical, key=lambda s: s.photon_number)


def _newton(k: _Coefficients, start: MeanFieldState, tol: float):
    # Unknowns: n, Re c, Im c, sz, Re s (Im s relaxes to zero independently)
    def pack(x: np.ndarray) -> np.ndarray:
        return np.array([x[0], x[1], x[2], x[3], x[4], 0.0])

    def fun(x: np.ndarray) -> np.ndarray:
        dn, dc, dsz, ds = _derivatives(x[0], complex(x[1], x[2]), x[3], complex(x[4], 0.0), k)
        return np.array([dn, dc.real, dc.imag, dsz, ds.real])

    def merit(x: np.ndarray, _r: np.ndarray) -> float:
        return _scaled_residual(pack(x), k)

    x0 = start.to_vector()[:5]
    x_scale = [k.n_c + 1.0, 1.0, 1.0, 1.0, 1.0]
    result = damped_newton(fun, x0, norm=merit, x_scale=x_scale, tol=tol)
    return MeanFieldState.from_vector(pack(result.x)), result


def steady_state(params: SystemParams, guess: Optional[MeanFieldState] = None, tol: float = 1e-10,
                 strategy: str = "auto", integrate_rtol: float = 1e-10) -> MeanFieldState:
    """
    Fixed point of the moment equations.

    Strategies:
        auto: Newton from the exact elimination root (or ``guess``), falling
            back to long-time integration followed by another Newton pass
        newton: Newton only
        integrate: chunked long-time integration only

    Args:
        params: System parameters
        guess: Optional warm start (continuation)
        tol: Scaled residual target
        strategy: "auto", "newton" or "integrate"
        integrate_rtol: Relative tolerance of the fallback integration

    Returns:
        Converged MeanFieldState.

    Raises:
        ConvergenceError: every strategy failed; ``best`` holds the best state
    """
    if strategy not in ("auto", "newton", "integrate"):
        raise ParameterError(f"unknown strategy '{strategy}'")
    k = _Coefficients.from_params(params)
    metrics = get_metrics()

    def residual_of(state: MeanFieldState) -> float:
        return _scaled_residual(state.to_vector(), k)

    if strategy == "integrate":
        return _relax(k, guess or thermal_fixed_point(params), tol, integrate_rtol, require=True)

    seed = _pick_root(_reduced_roots(k), guess)
    if seed is not None:
        start = seed
    elif guess is not None:
        start = guess
    else:
        start = thermal_fixed_point(params)

    state, result = _newton(k, start, tol)
    if seed is not None and residual_of(seed) < result.residual:
        state = seed
        result.residual = residual_of(seed)
        result.converged = result.residual <= tol
    if result.converged and not state.violations():
        logger.debug(f"Steady state via Newton | iterations={result.iterations} | residual={result.residual:.2e}")
        return state

    if strategy == "newton":
        metrics.record_failure("newton", f"residual={result.residual:.3e}")
        raise ConvergenceError("Newton did not converge", residual=result.residual,
                               iterations=result.iterations, best=state)

    logger.warning(f"Newton stalled, falling back to integration | residual={result.residual:.3e}")
    metrics.record_fallback("integration")
    relaxed = _relax(k, thermal_fixed_point(params) if guess is None else guess, tol, integrate_rtol, require=False)
    state, result = _newton(k, relaxed, tol)
    if result.converged and not state.violations():
        return state

    best = min((state, relaxed), key=residual_of)
    metrics.record_failure("steady_state", f"residual={residual_of(best):.3e}")
    raise ConvergenceError("steady state not found by Newton or integration",
                           residual=residual_of(best), iterations=result.iterations, best=best)


def _relax(k: _Coefficients, start: MeanFieldState, tol: float, rtol: float, require: bool) -> MeanFieldState:
    slowest = min(r for r in (k.relaxation, k.kappa, 2.0 * k.lam, 1.0) if r > 0)
    y, t, residual = relax(
        _rhs_vector(k), start.to_vector(), lambda y: _scaled_residual(y, k),
        t_first=10.0 / slowest, t_max=1e5 / slowest, target=tol, rtol=rtol,
        atol=rtol * 1e-6,
    )
    state = MeanFieldState.from_vector(y)
    logger.debug(f"Relaxed by integration | t={t:.4g} | residual={residual:.3e}")
    if require and residual > max(tol, 1e3 * rtol):
        raise ConvergenceError("integration did not reach a steady state", residual=residual, best=state)
    return state


cached_steady_state = cached(key_prefix="meanfield")(steady_state)


def state_row(key: float, state: MeanFieldState) -> List[float]:
    """CSV row: key column then n, Re c, Im c, sz, Re ss, Im ss."""
    return [key, *state.to_vector().tolist()]


STATE_COLUMNS = ["n", "re_c", "im_c", "sz", "re_ss", "im_ss"]
