"""
Frequency-class model of an inhomogeneously broadened spin ensemble.

Each class alpha holds N_alpha identical spins. Tracked moments are the photon
number, per-class <s+_a a> and <s^z_a>, and the Hermitian matrix of
<s+_a s-_a'> (diagonal entries are within-class correlations between
distinct spins).
"""

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from srmaser.analytics import DickeCoordinates, dicke_numbers, pole_matrix, spectral_poles
from srmaser.errors import ConvergenceError, IntegrationError, ParameterError
from srmaser.logger_config import get_logger
from srmaser.meanfield import steady_state as meanfield_steady_state
from srmaser.model import SystemParams, thermal_occupation
from srmaser.monitoring import get_metrics
from srmaser.solvers import damped_newton, integrate, relax

logger = get_logger(__name__)

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
MAX_CLASSES = 100
CONTINUATION_STEP = 10.0 ** 0.25
PHOTON_STEP = 10.0 ** 0.5
MAX_SOLVES = 400
STABILITY_TOL = 1e-10

_TINY = 1e-300
_N_FLOOR = 1e-12
_LOG_F_MAX = 700.0


@dataclass(frozen=True)
class FrequencyClass:
    """One spin class; ``detuning`` is omega_alpha - omega_c in rad/s."""

    count: float
    detuning: float
    g: float
    gamma: float
    chi: float = 0.0
    eta: float = 0.0


@dataclass(frozen=True)
class SubEnsembleModel:
    classes: Tuple[FrequencyClass, ...]
    omega_c: float
    kappa_c: float
    temperature: float = 0.0
    filter_G: float = 1.0
    filter_kappa: float = 100.0
    n_total: Optional[float] = None

    def __post_init__(self):
        if not self.classes:
            raise ParameterError("at least one class is required")
        if len(self.classes) > MAX_CLASSES:
            raise ParameterError(f"at most {MAX_CLASSES} classes are supported, got {len(self.classes)}")
        if self.omega_c <= 0 or self.kappa_c < 0 or self.temperature < 0:
            raise ParameterError("omega_c must be > 0; kappa_c and temperature must be >= 0")
        for index, cls in enumerate(self.classes):
            values = (cls.count, cls.detuning, cls.g, cls.gamma, cls.chi, cls.eta)
            if not all(math.isfinite(v) for v in values):
                raise ParameterError(f"class {index}: non-finite value")
            if cls.count <= 0:
                raise ParameterError(f"class {index}: count must be > 0")
            if min(cls.g, cls.gamma, cls.chi, cls.eta) < 0:
                raise ParameterError(f"class {index}: rates must be >= 0")
            if self.omega_c + cls.detuning < 0:
                raise ParameterError(f"class {index}: transition frequency must be >= 0")
        detunings = [c.detuning for c in self.classes]
        if any(b <= a for a, b in zip(detunings, detunings[1:])):
            raise ParameterError("class frequencies must be strictly increasing")
        total = sum(c.count for c in self.classes)
        if self.n_total is None:
            object.__setattr__(self, "n_total", total)
        elif abs(total - self.n_total) > 1e-12 * self.n_total:
            raise ParameterError(f"class counts sum to {total}, expected {self.n_total}")

    @classmethod
    def from_params(cls, params: SystemParams, classes: Sequence[FrequencyClass]) -> "SubEnsembleModel":
        """Resonator, bath and filter fields from ``params``; spins from ``classes``."""
        return cls(
            classes=tuple(classes),
            omega_c=params.omega_c,
            kappa_c=params.kappa_c,
            temperature=params.temperature,
            filter_G=params.filter_G,
            filter_kappa=params.filter_kappa,
        )

    @property
    def size(self) -> int:
        return len(self.classes)

    def column(self, name: str) -> np.ndarray:
        return np.array([float(getattr(c, name)) for c in self.classes])

    @property
    def omegas(self) -> np.ndarray:
        return self.omega_c + self.column("detuning")

    def with_eta_scale(self, factor: float) -> "SubEnsembleModel":
        """Copy with every pump rate multiplied by ``factor``."""
        return replace(self, classes=tuple(replace(c, eta=c.eta * factor) for c in self.classes))

    def with_eta(self, eta: float) -> "SubEnsembleModel":
        return replace(self, classes=tuple(replace(c, eta=eta) for c in self.classes))

    def mirrored(self) -> "SubEnsembleModel":
        """Classes reflected about omega_c."""
        flipped = tuple(replace(c, detuning=-c.detuning) for c in reversed(self.classes))
        return replace(self, classes=flipped)

    def homogeneous_params(self) -> SystemParams:
        """SystemParams equivalent of a single-class model."""
        if self.size != 1:
            raise ParameterError("only a single-class model has a homogeneous equivalent")
        only = self.classes[0]
        return SystemParams(
            omega_c=self.omega_c, kappa_c=self.kappa_c, n_spins=float(only.count),
            omega_s=self.omega_c + only.detuning, g=only.g, gamma=only.gamma, chi=only.chi,
            eta=only.eta, temperature=self.temperature, filter_G=self.filter_G,
            filter_kappa=self.filter_kappa,
        )


def homogeneous_model(params: SystemParams) -> SubEnsembleModel:
    """Single-class model reproducing the identical-spin system."""
    only = FrequencyClass(count=params.n_spins, detuning=params.detuning, g=params.g,
                          gamma=params.gamma, chi=params.chi, eta=params.eta)
    return SubEnsembleModel.from_params(params, [only])


def _largest_remainder(total: int, weights: Sequence[float]) -> List[int]:
    """
    Integer counts proportional to mirror-symmetric ``weights`` with exact sum.

    Every class gets at least one spin; leftovers go pairwise to mirrored
    classes so equal weights keep equal counts.
    """
    m = len(weights)
    spare = total - m
    exact = [Fraction(w) for w in weights]
    weight_sum = sum(exact)
    quotas = [spare * w / weight_sum for w in exact]
    counts = [1 + math.floor(q) for q in quotas]
    left = total - sum(counts)

    groups = []
    for i in range((m + 1) // 2):
        j = m - 1 - i
        members = (i,) if i == j else (i, j)
        groups.append((quotas[i] - math.floor(quotas[i]), members))
    groups.sort(key=lambda item: (-item[0], abs(item[1][0] - (m - 1) / 2)))

    for _fraction, members in groups:
        if left <= 0:
            break
        if len(members) <= left:
            for idx in members:
                counts[idx] += 1
            left -= len(members)
    if left:
        # Odd leftover with an even number of classes: symmetry is broken by one spin
        counts[m // 2] += left
    return counts


def discretize_gaussian(n_total: float, chi_inh: float, n_classes: int, center: float, *,
                        params: SystemParams, span_sigmas: float = 2.5) -> SubEnsembleModel:
    """
    Split a Gaussian line into equally spaced frequency classes.

    Args:
        n_total: Total spin number (integral)
        chi_inh: Full width at half maximum of the line (rad/s)
        n_classes: Number of classes
        center: Line center (rad/s)
        params: Supplies the resonator, bath, filter, coupling and pump rates
        span_sigmas: Grid half-width in standard deviations

    Returns:
        SubEnsembleModel whose counts sum exactly to ``n_total`` and whose
        classes each carry dephasing 2*chi_inh/n_classes.
    """
    if n_classes < 1:
        raise ParameterError(f"n_classes must be >= 1, got {n_classes}")
    if not chi_inh > 0:
        raise ParameterError(f"chi_inh must be > 0, got {chi_inh}")
    if n_total < n_classes:
        raise ParameterError(f"n_total={n_total} is smaller than n_classes={n_classes}")
    total = int(round(n_total))
    if total != n_total:
        raise ParameterError(f"n_total must be integral, got {n_total}")

    chi_class = 2.0 * chi_inh / n_classes
    shift = center - params.omega_c
    if n_classes == 1:
        offsets = [0.0]
        counts = [total]
    else:
        sigma = chi_inh * FWHM_TO_SIGMA
        half = span_sigmas * sigma
        steps = n_classes - 1
        offsets = [half * (2 * i - steps) / steps for i in range(n_classes)]
        weights = [math.exp(-0.5 * (x / sigma) ** 2) for x in offsets]
        counts = _largest_remainder(total, weights)

    classes = [
        FrequencyClass(count=count, detuning=shift + x, g=params.g, gamma=params.gamma,
                       chi=chi_class, eta=params.eta)
        for count, x in zip(counts, offsets)
    ]
    logger.debug(f"Discretized Gaussian | classes={n_classes} | chi_class={chi_class:.4g} | total={total}")
    return SubEnsembleModel.from_params(params, classes)


def split_class(model: SubEnsembleModel, index: int, n_sub: int, spread: float) -> SubEnsembleModel:
    """
    Replace class ``index`` by ``n_sub`` equal sub-classes spread evenly over ``spread`` rad/s.

    Shows whether the masing line depends on the discretization. Class
    frequencies must stay strictly increasing, so more than one sub-class
    needs ``spread > 0``; ``spread`` should also stay below the spacing to
    the neighbouring classes.

    Raises:
        ParameterError: ``n_sub < 1``, a negative spread, or a zero spread
            with ``n_sub > 1``
    """
    if n_sub < 1:
        raise ParameterError(f"n_sub must be >= 1, got {n_sub}")
    if spread < 0:
        raise ParameterError(f"spread must be >= 0, got {spread}")
    if n_sub == 1:
        return model
    if spread == 0:
        raise ParameterError(f"splitting into {n_sub} sub-classes needs spread > 0; "
                             "class frequencies must be strictly increasing")
    target = model.classes[index]
    if isinstance(target.count, int):
        base, extra = divmod(target.count, n_sub)
        counts = [base + (1 if i < extra else 0) for i in range(n_sub)]
    else:
        counts = [target.count / n_sub] * n_sub
    steps = n_sub - 1
    pieces = [
        replace(target, count=count, detuning=target.detuning + 0.5 * spread * (2 * i - steps) / steps)
        for i, count in enumerate(counts)
    ]
    classes = model.classes[:index] + tuple(pieces) + model.classes[index + 1:]
    return replace(model, classes=classes, n_total=None)


@dataclass(frozen=True)
class SubEnsembleState:
    photon_number: float
    spin_photon: np.ndarray
    inversion: np.ndarray
    spin_spin: np.ndarray

    @property
    def size(self) -> int:
        return int(self.spin_photon.size)

    def to_vector(self) -> np.ndarray:
        s = self.spin_spin.ravel()
        return np.concatenate([[self.photon_number], self.spin_photon.real, self.spin_photon.imag,
                               self.inversion, s.real, s.imag])

    @classmethod
    def from_vector(cls, y: np.ndarray, size: int) -> "SubEnsembleState":
        m = size
        c = y[1:1 + m] + 1j * y[1 + m:1 + 2 * m]
        sz = y[1 + 2 * m:1 + 3 * m]
        flat = y[1 + 3 * m:1 + 3 * m + m * m] + 1j * y[1 + 3 * m + m * m:1 + 3 * m + 2 * m * m]
        return cls(photon_number=float(y[0]), spin_photon=np.array(c), inversion=np.array(sz),
                   spin_spin=flat.reshape(m, m))

    @classmethod
    def thermal(cls, model: SubEnsembleModel) -> "SubEnsembleState":
        """Uncorrelated g = 0 fixed point."""
        rates = _ClassRates.from_model(model)
        m = model.size
        return cls(photon_number=rates.n_c, spin_photon=np.zeros(m, dtype=complex),
                   inversion=(rates.eta - rates.gamma) / rates.relaxation,
                   spin_spin=np.zeros((m, m), dtype=complex))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.spin_spin - self.spin_spin.conj().T))) if self.size else 0.0

    def violations(self, tol: float = 1e-9) -> List[str]:
        problems = []
        if self.photon_number < -tol * max(1.0, abs(self.photon_number)):
            problems.append("photon_number<0")
        if np.any(np.abs(self.inversion) > 1.0 + tol):
            problems.append("|inversion|>1")
        return problems


@dataclass(frozen=True)
class _ClassRates:
    counts: np.ndarray
    delta: np.ndarray
    g: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    n_k: np.ndarray
    relaxation: np.ndarray
    lam: np.ndarray
    kappa: float
    n_c: float
    chi: np.ndarray

    @classmethod
    def from_model(cls, model: SubEnsembleModel) -> "_ClassRates":
        omegas = model.omegas
        n_k = np.array([thermal_occupation(w, model.temperature) if w > 0 else 0.0 for w in omegas])
        gamma = model.column("gamma")
        eta = model.column("eta")
        chi = model.column("chi")
        relaxation = gamma * (2.0 * n_k + 1.0) + eta
        lam = 0.5 * relaxation + chi
        return cls(
            counts=model.column("count"), delta=model.column("detuning"), g=model.column("g"),
            gamma=gamma, eta=eta, n_k=n_k, relaxation=relaxation, lam=lam,
            kappa=model.kappa_c, n_c=thermal_occupation(model.omega_c, model.temperature), chi=chi,
        )

    def scaled(self, factor: float) -> "_ClassRates":
        """Rates with every pump multiplied by ``factor``."""
        eta = self.eta * factor
        relaxation = self.gamma * (2.0 * self.n_k + 1.0) + eta
        return replace(self, eta=eta, relaxation=relaxation, lam=0.5 * relaxation + self.chi)

    @property
    def width(self) -> np.ndarray:
        return self.lam + 0.5 * self.kappa

    @property
    def pair_frequency(self) -> np.ndarray:
        """W[a, a'] = (delta_a - delta_a') + i(lam_a + lam_a')."""
        return (self.delta[:, None] - self.delta[None, :]) + 1j * (self.lam[:, None] + self.lam[None, :])


def _spin_photon_rhs(c, n, sz, S, r: _ClassRates):
    """d<s+_a a>/dt with its term magnitudes."""
    coupling = r.counts * r.g
    collective = S @ coupling
    terms = (
        (1j * r.delta - r.width) * c,
        -1j * r.g * n * sz,
        -0.5j * r.g * (sz + 1.0),
        1j * r.g * np.diag(S),
        -1j * collective,
    )
    scale = (np.abs(terms[0]) + np.abs(terms[1]) + np.abs(terms[2]) + np.abs(terms[3])
             + np.abs(S) @ coupling)
    return sum(terms), scale


def _eliminate(c: np.ndarray, r: _ClassRates):
    """Photon number, inversions and correlations implied by steady <s+_a a>."""
    n = r.n_c - (2.0 / r.kappa) * float(np.sum(r.counts * r.g * c.imag))
    sz = (r.eta - r.gamma + 4.0 * r.g * c.imag) / r.relaxation
    gs = r.g * sz
    S = (gs[:, None] * np.conj(c)[None, :] - c[:, None] * gs[None, :]) / r.pair_frequency
    return n, sz, S


def _reconstruct(c: np.ndarray, r: _ClassRates) -> SubEnsembleState:
    n, sz, S = _eliminate(c, r)
    return SubEnsembleState(photon_number=n, spin_photon=c.copy(), inversion=sz, spin_spin=S)


def _newton(r: _ClassRates, c0: np.ndarray, tol: float):
    m = c0.size

    def unpack(x: np.ndarray) -> np.ndarray:
        return x[:m] + 1j * x[m:]

    def fun(x: np.ndarray) -> np.ndarray:
        c = unpack(x)
        n, sz, S = _eliminate(c, r)
        value, _scale = _spin_photon_rhs(c, n, sz, S, r)
        return np.concatenate([value.real, value.imag])

    def merit(x: np.ndarray, _r: np.ndarray) -> float:
        c = unpack(x)
        n, sz, S = _eliminate(c, r)
        value, scale = _spin_photon_rhs(c, n, sz, S, r)
        return float(np.max(np.abs(value) / (scale + _TINY)))

    x0 = np.concatenate([c0.real, c0.imag])
    result = damped_newton(fun, x0, norm=merit, x_scale=np.full(2 * m, 1e-6), tol=tol)
    return unpack(result.x), result


def _pinned_newton(base: _ClassRates, x0: np.ndarray, n_target: float, tol: float):
    """Solve for <s+_a a> and the log pump scale at a fixed photon number."""
    m = base.delta.size

    def parts(x: np.ndarray):
        c = x[:m] + 1j * x[m:2 * m]
        r = base.scaled(math.exp(min(x[-1], _LOG_F_MAX)))
        n, sz, S = _eliminate(c, r)
        value, scale = _spin_photon_rhs(c, n, sz, S, r)
        return value, scale, (n - n_target) / n_target

    def fun(x: np.ndarray) -> np.ndarray:
        value, _scale, pin = parts(x)
        return np.concatenate([value.real, value.imag, [pin]])

    def merit(x: np.ndarray, _r: np.ndarray) -> float:
        value, scale, pin = parts(x)
        return max(float(np.max(np.abs(value) / (scale + _TINY))), abs(pin))

    x_scale = np.concatenate([np.full(2 * m, 1e-6), [1.0]])
    return damped_newton(fun, x0, norm=merit, x_scale=x_scale, tol=tol)


def _pole_stable(state: SubEnsembleState, r: _ClassRates) -> bool:
    """No spectral pole in the amplifying half plane."""
    matrix = pole_matrix(r.delta, r.counts, r.g, r.lam, state.inversion, r.kappa)
    poles = spectral_poles(matrix)
    return float(np.min(poles.imag)) >= -STABILITY_TOL * float(np.max(np.abs(matrix)))


def _acceptable(converged: bool, state: SubEnsembleState, r: _ClassRates) -> bool:
    return bool(converged) and not state.violations() and _pole_stable(state, r)


def _check_solvable(r: _ClassRates) -> None:
    if r.kappa <= 0:
        raise ParameterError("steady state needs kappa_c > 0")
    if np.any(r.relaxation <= 0) or np.any(r.lam <= 0):
        raise ParameterError("steady state needs nonzero spin relaxation in every class")


def steady_state_subensembles(model: SubEnsembleModel, guess: Optional[SubEnsembleState] = None,
                              tol: float = 1e-9, eta_start: Optional[float] = None) -> SubEnsembleState:
    """
    Self-consistent steady state of the frequency-class model.

    Only the per-class spin-photon correlations are unknown; photon number,
    inversions and correlations are eliminated from their steady equations.
    A solution is accepted only if it is physical (n >= 0, |s^z| <= 1) and
    no spectral pole amplifies. Without a usable ``guess`` the pump is ramped
    up from ``eta_start`` (a fraction of the full pump); past the masing
    threshold the branch is followed in photon number instead. If that
    stalls, the full-pump equations are integrated from the last accepted
    state and the result polished with Newton.

    Raises:
        ConvergenceError: with the pump rate reached in ``eta_reached``
    """
    r = _ClassRates.from_model(model)
    _check_solvable(r)
    metrics = get_metrics()

    if model.size == 1:
        seed = meanfield_steady_state(model.homogeneous_params())
        c, result = _newton(r, np.array([seed.spin_photon]), tol)
        if not result.converged:
            c = np.array([seed.spin_photon])
        return _reconstruct(c, r)

    if guess is not None and guess.size == model.size:
        c, result = _newton(r, guess.spin_photon, tol)
        state = _reconstruct(c, r)
        if _acceptable(result.converged, state, r):
            return state
        logger.debug(f"Warm start rejected | residual={result.residual:.3e}")
        metrics.record_fallback("continuation")

    eta_max = float(np.max(r.eta))
    if eta_max == 0.0:
        fraction = 1.0
    elif eta_start is not None:
        fraction = min(1.0, eta_start)
    else:
        fraction = min(1.0, 1e-2 * float(np.min(r.gamma)) / eta_max) or 1e-12
    try:
        return _PumpContinuation(r, tol).run(fraction)
    except ConvergenceError as exc:
        logger.warning(f"Continuation stalled, relaxing by integration | residual={exc.residual:.3e}")
        metrics.record_fallback("integration")
        state = _relax(model, r, exc.best, tol)
        if state is None:
            raise
        return state


def _relax(model: SubEnsembleModel, r: _ClassRates, start: Optional[SubEnsembleState],
           tol: float) -> Optional[SubEnsembleState]:
    """Integrate the full-pump equations from ``start``, then polish with Newton."""
    m = model.size

    def residual(y: np.ndarray) -> float:
        c = y[1:1 + m] + 1j * y[1 + m:1 + 2 * m]
        n, sz, S = _eliminate(c, r)
        value, scale = _spin_photon_rhs(c, n, sz, S, r)
        return float(np.max(np.abs(value) / (scale + _TINY)))

    if start is None or start.size != m:
        start = SubEnsembleState.thermal(model)
    slowest = float(min(np.min(r.relaxation), r.kappa, 2.0 * np.min(r.lam)))
    try:
        y, t, left = relax(_rhs_vector(r, m), start.to_vector(), residual, t_first=10.0 / slowest,
                           t_max=1e4 / slowest, target=1e-6, rtol=1e-8, atol=1e-14)
    except IntegrationError as exc:
        logger.warning(f"Relaxation aborted | {exc}")
        return None
    logger.debug(f"Relaxed by integration | t={t:.4g} | residual={left:.3e}")
    c, result = _newton(r, y[1:1 + m] + 1j * y[1 + m:1 + 2 * m], tol)
    state = _reconstruct(c, r)
    return state if _acceptable(result.converged, state, r) else None


@dataclass(frozen=True)
class _BranchPoint:
    c: np.ndarray
    log_f: float
    state: SubEnsembleState

    @property
    def log_n(self) -> float:
        return math.log(max(self.state.photon_number, _N_FLOOR))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.c.real, self.c.imag, [self.log_f]])


class _PumpContinuation:
    """
    Follows the steady state from a weak pump up to the full pump.

    The pump scale f multiplies every class pump. It is first raised in
    geometric steps, warm starting each solve. Around the masing threshold
    the photon number jumps by many decades over a tiny change of f and the
    pump ramp lands on unphysical or unstable states. From there the branch
    is parametrized by ln n, with ln f as an extra unknown, until f passes
    one; the full-pump state is then bracketed and polished at f = 1. A
    fold in n hands control back to the pump ramp.
    """

    def __init__(self, base: _ClassRates, tol: float):
        self.base = base
        self.tol = tol
        self.m = base.delta.size
        self.points: List[_BranchPoint] = []
        self.solves = 0
        self.residual = math.inf
        self.rejected = False

    def run(self, fraction: float) -> SubEnsembleState:
        first = self._fixed(np.zeros(self.m, dtype=complex), math.log(fraction))
        if first is None:
            raise self._stalled()
        self._accept(first)
        if first.log_f == 0.0:
            return first.state
        while self.solves < MAX_SOLVES:
            before = len(self.points)
            state = self._ramp()
            if state is not None:
                return state
            state = self._climb()
            if state is not None:
                return state
            if len(self.points) == before:
                break
        raise self._stalled()

    def _fixed(self, c0: np.ndarray, log_f: float) -> Optional[_BranchPoint]:
        r = self.base.scaled(math.exp(log_f))
        c, result = _newton(r, c0, self.tol)
        self.solves += 1
        self.residual = result.residual
        self.rejected = False
        state = _reconstruct(c, r)
        if _acceptable(result.converged, state, r):
            return _BranchPoint(c=c, log_f=log_f, state=state)
        if result.converged:
            self.rejected = True
            logger.debug(f"Steady state rejected | eta_fraction={math.exp(log_f):.4g} | "
                         f"photon_number={state.photon_number:.4g}")
        return None

    def _pinned(self, x0: np.ndarray, log_n: float) -> Optional[_BranchPoint]:
        result = _pinned_newton(self.base, x0, math.exp(log_n), self.tol)
        self.solves += 1
        self.residual = result.residual
        log_f = float(result.x[-1])
        if not (math.isfinite(log_f) and log_f < _LOG_F_MAX):
            return None
        c = result.x[:self.m] + 1j * result.x[self.m:2 * self.m]
        r = self.base.scaled(math.exp(log_f))
        state = _reconstruct(c, r)
        if _acceptable(result.converged, state, r):
            return _BranchPoint(c=c, log_f=log_f, state=state)
        return None

    def _accept(self, point: _BranchPoint) -> None:
        self.points.append(point)
        logger.debug(f"Continuation step | eta_fraction={math.exp(point.log_f):.4g} | "
                     f"photon_number={point.state.photon_number:.4g} | residual={self.residual:.2e}")

    def _ramp(self) -> Optional[SubEnsembleState]:
        step = CONTINUATION_STEP
        while self.solves < MAX_SOLVES:
            last = self.points[-1]
            log_f = min(0.0, last.log_f + math.log(step))
            point = self._fixed(last.c, log_f)
            if point is not None:
                self._accept(point)
                if log_f == 0.0:
                    return point.state
                step = min(step * step, CONTINUATION_STEP)
                continue
            if self.rejected:
                return None
            step = math.sqrt(step)
            if step < 1.0 + 1e-3 or last.log_f >= 0.0:
                return None
        return None

    def _predict(self, log_n: float) -> np.ndarray:
        last = self.points[-1]
        if len(self.points) < 2:
            return last.vector
        prev = self.points[-2]
        span = last.log_n - prev.log_n
        if abs(span) < 1e-12:
            return last.vector
        return last.vector + (log_n - last.log_n) / span * (last.vector - prev.vector)

    def _climb(self) -> Optional[SubEnsembleState]:
        ratio = PHOTON_STEP
        logger.debug(f"Following the branch in photon number | "
                     f"eta_fraction={math.exp(self.points[-1].log_f):.4g}")
        while self.solves < MAX_SOLVES:
            last = self.points[-1]
            log_n = last.log_n + math.log(ratio)
            point = self._pinned(self._predict(log_n), log_n)
            if point is None:
                ratio = math.sqrt(ratio)
                if ratio < 1.0 + 1e-3:
                    return None
                continue
            self._accept(point)
            ratio = min(ratio * ratio, PHOTON_STEP)
            if point.log_f >= 0.0:
                if last.log_f >= 0.0:
                    return None
                return self._finish(last, point)
        return None

    def _finish(self, below: _BranchPoint, above: _BranchPoint) -> Optional[SubEnsembleState]:
        """Full-pump state between branch points whose pump scales straddle one."""
        while self.solves < MAX_SOLVES:
            weight = -below.log_f / (above.log_f - below.log_f)
            point = self._fixed(below.c + weight * (above.c - below.c), 0.0)
            if point is not None:
                self._accept(point)
                return point.state
            log_n = below.log_n + weight * (above.log_n - below.log_n)
            middle = self._pinned(below.vector + weight * (above.vector - below.vector), log_n)
            if middle is None or above.log_f - below.log_f < 1e-14:
                return None
            if middle.log_f < 0.0:
                below = middle
            else:
                above = middle
        return None

    def _stalled(self) -> ConvergenceError:
        get_metrics().record_failure("subensemble", f"solves={self.solves}")
        reached = min(max((p.log_f for p in self.points), default=-math.inf), 0.0)
        eta_reached = math.exp(reached) * float(np.max(self.base.eta)) if self.points else None
        best = self.points[-1].state if self.points else None
        return ConvergenceError("sub-ensemble continuation stalled", residual=self.residual,
                                iterations=self.solves, eta_reached=eta_reached, best=best)


def _rhs_vector(r: _ClassRates, m: int):
    coupling = r.counts * r.g
    W = r.pair_frequency

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        n = y[0]
        c = y[1:1 + m] + 1j * y[1 + m:1 + 2 * m]
        sz = y[1 + 2 * m:1 + 3 * m]
        S = (y[1 + 3 * m:1 + 3 * m + m * m] + 1j * y[1 + 3 * m + m * m:]).reshape(m, m)

        dn = -r.kappa * n + r.kappa * r.n_c - 2.0 * float(np.sum(coupling * c.imag))
        dc, _scale = _spin_photon_rhs(c, n, sz, S, r)
        dsz = 4.0 * r.g * c.imag - r.gamma * ((2.0 * r.n_k + 1.0) * sz + 1.0) - r.eta * (sz - 1.0)
        gs = r.g * sz
        dS = 1j * W * S + 1j * (c[:, None] * gs[None, :] - gs[:, None] * np.conj(c)[None, :])
        flat = dS.ravel()
        return np.concatenate([[dn], dc.real, dc.imag, dsz, flat.real, flat.imag])

    return rhs


@dataclass
class SubEnsembleTrajectory:
    times: np.ndarray
    states: List[SubEnsembleState]
    rtol: float
    nfev: int = 0

    @property
    def final(self) -> SubEnsembleState:
        return self.states[-1]


def evolve_subensembles(model: SubEnsembleModel, initial: Optional[SubEnsembleState], t_end: float,
                        tol: float = 1e-8, method: str = "Radau",
                        n_samples: Optional[int] = None) -> SubEnsembleTrajectory:
    """
    Integrate the class-resolved moment equations.

    ``initial=None`` starts from the uncorrelated thermal state.
    """
    if not (0.0 < tol <= 1e-2):
        raise ParameterError(f"tol must lie in (0, 1e-2], got {tol}")
    if not t_end > 0:
        raise ParameterError(f"t_end must be > 0, got {t_end}")
    start = initial if initial is not None else SubEnsembleState.thermal(model)
    if start.size != model.size:
        raise ParameterError(f"state has {start.size} classes, model has {model.size}")

    m = model.size
    r = _ClassRates.from_model(model)
    t_eval = np.linspace(0.0, t_end, n_samples) if n_samples else None
    try:
        result = integrate(_rhs_vector(r, m), (0.0, t_end), start.to_vector(), rtol=tol,
                           atol=tol * 1e-6, method=method, t_eval=t_eval)
    except IntegrationError as exc:
        if exc.last_state is not None:
            exc.last_state = SubEnsembleState.from_vector(exc.last_state, m)
        raise
    states = [SubEnsembleState.from_vector(result.y[:, i], m) for i in range(result.t.size)]
    return SubEnsembleTrajectory(times=result.t, states=states, rtol=tol, nfev=result.nfev)


def dicke_per_class(state: SubEnsembleState, model: SubEnsembleModel) -> List[DickeCoordinates]:
    """J and M of every class from its inversion and within-class correlation."""
    coordinates = []
    for index, cls in enumerate(model.classes):
        within = complex(state.spin_spin[index, index])
        if abs(within.imag) > 1e-6:
            logger.warning(f"Within-class correlation not real | class={index} | imag={within.imag:.3e}")
        coordinates.append(dicke_numbers(float(state.inversion[index]), within, float(cls.count)))
    return coordinates


MODEL_COLUMNS = ["index", "count", "detuning", "g", "gamma", "chi", "eta"]
STATE_COLUMNS = ["index", "re_c", "im_c", "sz", "re_ss_within", "im_ss_within"]


def model_rows(model: SubEnsembleModel) -> List[list]:
    return [[i, c.count, c.detuning, c.g, c.gamma, c.chi, c.eta] for i, c in enumerate(model.classes)]


def state_rows(state: SubEnsembleState) -> List[list]:
    diag = np.diag(state.spin_spin)
    return [
        [i, state.spin_photon[i].real, state.spin_photon[i].imag, state.inversion[i], diag[i].real, diag[i].imag]
        for i in range(state.size)
    ]


def state_document(state: SubEnsembleState, model: SubEnsembleModel) -> Dict:
    """JSON-ready description including the full correlation matrix."""
    return {
        "photon_number": state.photon_number,
        "omega_c": model.omega_c,
        "detunings": model.column("detuning").tolist(),
        "counts": [c.count for c in model.classes],
        "spin_photon": [[v.real, v.imag] for v in state.spin_photon],
        "inversion": state.inversion.tolist(),
        "spin_spin": [[[v.real, v.imag] for v in row] for row in state.spin_spin],
        "hermiticity_error": state.hermiticity_error(),
    }
