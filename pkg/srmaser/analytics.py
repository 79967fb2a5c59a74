"""
Closed-form diagnostics of the maser model.

Masing threshold, complex peak frequencies and the spectral pole matrix,
Dicke coordinates, dressed-state frequencies, regime labels and the
frequency-pulling factor.
"""

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from srmaser.errors import InvariantViolation, ParameterError
from srmaser.logger_config import get_logger
from srmaser.meanfield import MeanFieldState, cached_steady_state
from srmaser.model import SystemParams, derive_rates

logger = get_logger(__name__)

UNREACHABLE = math.inf


@dataclass(frozen=True)
class DickeCoordinates:
    j: float
    m: float
    n_spins: float
    clipped: bool = False

    @property
    def j_over_n(self) -> float:
        return self.j / self.n_spins

    @property
    def m_over_n(self) -> float:
        return self.m / self.n_spins

    def within_bounds(self) -> bool:
        """|M| <= J + 1/2 and J <= N/2 + 1."""
        return abs(self.m) <= self.j + 0.5 and self.j <= 0.5 * self.n_spins + 1.0


class RegimeLabel(str, Enum):
    THERMAL = "thermal"
    SUPERRADIANCE = "superradiance"
    SUPERRADIANT_MASER = "superradiant_maser"


@dataclass(frozen=True)
class ThresholdEstimate:
    """Quadratic A n^2 + B n + C = 0 for the photon number near threshold."""

    a: float
    b: float
    c: float

    @property
    def photon_number(self) -> float:
        """Large-photon approximation -B/A."""
        return -self.b / self.a if self.a else math.nan

    @property
    def quadratic_root(self) -> float:
        """Non-negative root of the full quadratic."""
        if self.a == 0:
            return -self.c / self.b if self.b else math.nan
        disc = math.sqrt(max(self.b * self.b - 4.0 * self.a * self.c, 0.0))
        if self.b >= 0:
            return -2.0 * self.c / (self.b + disc) if (self.b + disc) else 0.0
        return (-self.b + disc) / (2.0 * self.a)


def _threshold_value(params: SystemParams, form: str) -> float:
    rates = derive_rates(params)
    nc = params.n_spins * rates.cooperativity
    if nc <= 1.0:
        return UNREACHABLE
    if form == "full":
        return params.gamma * (2.0 * rates.n_k_th + 1.0 + nc) / (nc - 1.0)
    return params.gamma * (2.0 * rates.n_k_th / nc + 1.0)


def masing_threshold(params: SystemParams, form: str = "large_cooperativity", self_consistent: bool = False,
                     max_iter: int = 100) -> float:
    """
    Pump rate above which stimulated emission dominates.

    The cooperativity depends on eta through lambda_s. By default it is
    evaluated at eta = 0; ``self_consistent`` iterates eta -> threshold(eta)
    to its fixed point instead.

    Args:
        params: System parameters (their eta is ignored)
        form: "large_cooperativity" (gamma (2 n_k / (N C) + 1)) or "full"
            (gamma (2 n_k + 1 + N C) / (N C - 1))
        self_consistent: Iterate the eta dependence of the cooperativity
        max_iter: Iteration cap for the self-consistent form

    Returns:
        Threshold eta in rad/s, or UNREACHABLE (inf) when N C <= 1.
    """
    if form not in ("full", "large_cooperativity"):
        raise ParameterError(f"unknown threshold form '{form}'")
    eta = _threshold_value(params.with_updates(eta=0.0), form)
    if not self_consistent or math.isinf(eta):
        return eta
    for _ in range(max_iter):
        updated = _threshold_value(params.with_updates(eta=eta), form)
        if math.isinf(updated) or abs(updated - eta) <= 1e-12 * eta:
            return updated
        eta = updated
    logger.warning(f"Self-consistent threshold did not settle | eta={eta:.6g}")
    return eta


def threshold_photon_estimate(params: SystemParams) -> ThresholdEstimate:
    """
    Coefficients of the photon-number quadratic from adiabatic elimination.

    A = 2 k_EET, B = Gamma_t - [2 n_c + N (eta - gamma)/kappa_c] k_EET,
    C = -n_c Gamma_t; evaluated at the params' own eta.
    """
    rates = derive_rates(params)
    k = rates.k_eet
    a = 2.0 * k
    b = rates.total_relaxation - (2.0 * rates.n_c_th + params.n_spins * (params.eta - params.gamma) / params.kappa_c) * k
    c = -rates.n_c_th * rates.total_relaxation
    return ThresholdEstimate(a=a, b=b, c=c)


def peak_frequencies(params: SystemParams, inversion: float,
                     relative: bool = False) -> Tuple[complex, complex]:
    """
    Complex spectral peak frequencies of the coupled resonator-spin system.

    Real parts are peak centers and imaginary parts half widths. The square
    root takes the principal branch (non-negative real part; non-negative
    imaginary part when the real part vanishes), so the first root carries
    the + sign.

    Args:
        params: System parameters
        inversion: Steady <s^z>, |inversion| <= 1
        relative: Return offsets from omega_c

    Returns:
        (omega_plus, omega_minus)
    """
    if abs(inversion) > 1.0 + 1e-12:
        raise ParameterError(f"|inversion| must be <= 1, got {inversion}")
    rates = derive_rates(params)
    spin = complex(params.detuning, rates.lambda_s)
    cavity = complex(0.0, 0.5 * params.kappa_c)
    root = cmath.sqrt((spin - cavity) ** 2 - 4.0 * params.n_spins * params.g ** 2 * inversion)
    if root.real == 0.0 and root.imag < 0:
        root = -root
    plus = 0.5 * (spin + cavity + root)
    minus = 0.5 * (spin + cavity - root)
    if relative:
        return plus, minus
    return plus + params.omega_c, minus + params.omega_c


def resonant_R(params: SystemParams, inversion: Optional[float] = None,
               m: Optional[float] = None) -> float:
    """
    R = (lambda_s - kappa_c/2)^2 + 4 N g^2 <s^z>, or the same with 8 g^2 M.

    Exactly one of ``inversion`` and ``m`` must be given (2M = N <s^z>).
    """
    if (inversion is None) == (m is None):
        raise ParameterError("give exactly one of inversion or m")
    if params.detuning != 0.0:
        logger.warning(f"resonant_R on detuned parameters | detuning={params.detuning:.4g}")
    rates = derive_rates(params)
    base = (rates.lambda_s - 0.5 * params.kappa_c) ** 2
    if m is not None:
        return base + 8.0 * params.g ** 2 * m
    return base + 4.0 * params.n_spins * params.g ** 2 * inversion


def dicke_numbers(inversion: float, spin_spin: complex, n_spins: float) -> DickeCoordinates:
    """
    Cooperation number J and excitation M of a spin ensemble.

    M = N <s^z>/2 and J = sqrt(3N/4 + N(N-1)[Re<s+s'> + <s^z>^2/4]).

    Raises:
        InvariantViolation: radicand below -1e-9 N^2
    """
    spin_spin = complex(spin_spin)
    if abs(spin_spin.imag) > 1e-6:
        logger.warning(f"Spin-spin correlation has imaginary part {spin_spin.imag:.3e}")
    radicand = 0.75 * n_spins + n_spins * (n_spins - 1.0) * (spin_spin.real + 0.25 * inversion ** 2)
    clipped = False
    if radicand < 0:
        if radicand < -1e-9 * n_spins ** 2:
            raise InvariantViolation(f"negative Dicke radicand {radicand:.6g} for N={n_spins:.6g}")
        logger.warning(f"Clipped negative Dicke radicand | value={radicand:.3e}")
        radicand = 0.0
        clipped = True
    return DickeCoordinates(j=math.sqrt(radicand), m=0.5 * n_spins * inversion, n_spins=n_spins, clipped=clipped)


def dressed_frequencies(j: float, g_s: float, omega_c: float, omega_s: float) -> Tuple[float, float]:
    """Dressed transition frequencies (omega_+, omega_-) for cooperation number ``j``."""
    if j < 0:
        raise ParameterError(f"j must be >= 0, got {j}")
    detuning = omega_c - omega_s
    split = math.sqrt(8.0 * j * g_s ** 2 + detuning ** 2)
    mean = omega_c + omega_s
    return 0.5 * (mean + split), 0.5 * (mean - split)


def classify_regime(params: SystemParams, steady: MeanFieldState) -> RegimeLabel:
    """Label a steady state as thermal, superradiance or superradiant maser."""
    rates = derive_rates(params)
    threshold = masing_threshold(params)
    n = steady.photon_number
    if params.eta >= threshold and n > max(1.0, 2.0 * rates.n_c_th):
        return RegimeLabel.SUPERRADIANT_MASER
    if n > 1.0 and rates.n_c_th >= 1.0:
        return RegimeLabel.THERMAL
    return RegimeLabel.SUPERRADIANCE


def pole_matrix(detunings: Sequence[float], counts: Sequence[float], couplings: Sequence[float],
                lambdas: Sequence[float], inversions: Sequence[float], kappa_c: float,
                kappa_f: float = 0.0) -> np.ndarray:
    """
    Arrow matrix whose eigenvalues are the complex spectral poles.

    Entries are offsets from omega_c: a cavity row with diagonal
    i(kappa_c + kappa_f)/2 and one row per class with diagonal
    delta_a + i(lambda_a + kappa_f/2); the off-diagonals carry sqrt(N_a) g_a
    and -sqrt(N_a) g_a <s^z_a>.
    """
    deltas = np.asarray(detunings, dtype=float)
    size = deltas.size
    root_n_g = np.sqrt(np.asarray(counts, dtype=float)) * np.asarray(couplings, dtype=float)
    matrix = np.zeros((size + 1, size + 1), dtype=complex)
    matrix[0, 0] = 0.5j * (kappa_c + kappa_f)
    matrix[0, 1:] = root_n_g
    matrix[1:, 0] = -root_n_g * np.asarray(inversions, dtype=float)
    matrix[1:, 1:] = np.diag(deltas + 1j * (np.asarray(lambdas, dtype=float) + 0.5 * kappa_f))
    return matrix


def spectral_poles(matrix: np.ndarray) -> np.ndarray:
    """Eigenvalues sorted by real part."""
    poles = np.linalg.eigvals(matrix)
    return poles[np.argsort(poles.real)]


def identical_poles(params: SystemParams, inversion: float, kappa_f: float = 0.0) -> np.ndarray:
    rates = derive_rates(params)
    matrix = pole_matrix([params.detuning], [params.n_spins], [params.g], [rates.lambda_s],
                         [inversion], params.kappa_c, kappa_f)
    return spectral_poles(matrix)


def narrow_pole(poles: np.ndarray) -> complex:
    """The pole with the smallest half width."""
    return complex(poles[int(np.argmin(np.abs(poles.imag)))])


def pulling_factor(params: SystemParams, delta_grid: Sequence[float],
                   solver: Callable[[SystemParams], MeanFieldState] = cached_steady_state) -> float:
    """
    Slope of the masing-line shift against spin-resonator detuning.

    Each grid point is solved for its steady state; the masing line center is
    the real part of the narrowest spectral pole. Points that are not in the
    superradiant maser regime are dropped with a warning.

    Raises:
        ParameterError: fewer than two masing points remain
    """
    deltas, shifts = [], []
    for delta in delta_grid:
        point = params.with_updates(omega_s=params.omega_c + float(delta))
        steady = solver(point)
        if classify_regime(point, steady) is not RegimeLabel.SUPERRADIANT_MASER:
            logger.warning(f"Pulling factor point excluded (not masing) | detuning={delta:.6g}")
            continue
        center = narrow_pole(identical_poles(point, steady.inversion)).real
        deltas.append(float(delta))
        shifts.append(center)
    if len(deltas) < 2:
        raise ParameterError("pulling factor needs at least two masing grid points")
    slope, _intercept = np.polyfit(np.array(deltas), np.array(shifts), 1)
    logger.info(f"Pulling factor | slope={slope:.4f} | points={len(deltas)}")
    return float(slope)
