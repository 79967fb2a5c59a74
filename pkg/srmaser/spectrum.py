"""
Steady-state emission spectra through a weakly coupled filter resonator.

The filter photon number is algebraic in the filter frequency once the
steady moments are known, so spectra are sampled by direct evaluation.
Everything is computed on offsets u = omega_f - omega_c; at 10 GHz carriers
absolute frequencies cannot hold sub-millihertz detail.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.signal import find_peaks

from srmaser.analytics import pole_matrix, spectral_poles
from srmaser.errors import ParameterError, ResolutionError
from srmaser.logger_config import get_logger
from srmaser.meanfield import MeanFieldState
from srmaser.model import SystemParams, derive_rates
from srmaser.monitoring import get_metrics
from srmaser.subensemble import SubEnsembleModel, SubEnsembleState, _ClassRates

logger = get_logger(__name__)

NOISE_FLOOR = 1e-12
RELATIVE_PROMINENCE = 1e-3
RIPPLE_PROMINENCE = 0.02
RESOLVE_DEPTH = 0.5
MIN_SAMPLES = 20
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class FilterSystem:
    """Steady moments and rates entering the filter closed form, per class."""

    photon_number: float
    kappa_c: float
    counts: np.ndarray
    detunings: np.ndarray
    couplings: np.ndarray
    lambdas: np.ndarray
    inversions: np.ndarray
    spin_photon: np.ndarray
    filter_G: float
    filter_kappa: float

    @classmethod
    def identical(cls, steady: MeanFieldState, params: SystemParams) -> "FilterSystem":
        rates = derive_rates(params)
        return cls(
            photon_number=steady.photon_number, kappa_c=params.kappa_c,
            counts=np.array([params.n_spins]), detunings=np.array([params.detuning]),
            couplings=np.array([params.g]), lambdas=np.array([rates.lambda_s]),
            inversions=np.array([steady.inversion]), spin_photon=np.array([steady.spin_photon]),
            filter_G=params.filter_G, filter_kappa=params.filter_kappa,
        )

    @classmethod
    def subensemble(cls, steady: SubEnsembleState, model: SubEnsembleModel) -> "FilterSystem":
        rates = _ClassRates.from_model(model)
        return cls(
            photon_number=steady.photon_number, kappa_c=model.kappa_c,
            counts=rates.counts, detunings=rates.delta, couplings=rates.g, lambdas=rates.lam,
            inversions=np.asarray(steady.inversion, dtype=float),
            spin_photon=np.asarray(steady.spin_photon, dtype=complex),
            filter_G=model.filter_G, filter_kappa=model.filter_kappa,
        )

    def poles(self, kappa_f: float = 0.0) -> np.ndarray:
        """Complex spectral poles as offsets from omega_c."""
        matrix = pole_matrix(self.detunings, self.counts, self.couplings, self.lambdas,
                             self.inversions, self.kappa_c, kappa_f)
        return spectral_poles(matrix)

    def terms(self, u: np.ndarray, kappa_f: float):
        """Denominator D(u), its magnitude scale and the numerator N(u)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        cavity = -u + 0.5j * (self.kappa_c + kappa_f)
        spins = (self.detunings[None, :] - u[:, None]) + 1j * (self.lambdas[None, :] + 0.5 * kappa_f)
        weights = self.counts * self.couplings
        feed = weights * self.couplings * self.inversions
        collective = feed[None, :] / spins
        denominator = cavity + collective.sum(axis=1)
        scale = np.abs(cavity) + np.abs(collective).sum(axis=1)
        numerator = self.photon_number - ((weights * self.spin_photon)[None, :] / spins).sum(axis=1)
        return denominator, scale, numerator

    def photon_number_at(self, u: np.ndarray, kappa_f: float, G: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Filter photon number at offsets ``u``; second array flags vanishing denominators.
        """
        denominator, scale, numerator = self.terms(u, kappa_f)
        singular = np.abs(denominator) <= 1e3 * _EPS * scale
        safe = np.where(singular, 1.0, denominator)
        p = np.imag(numerator / safe)
        q = np.imag(1.0 / safe)
        value = 2.0 * G * G * p / (2.0 * G * G * q - kappa_f)
        return np.where(singular, np.nan, value), singular

    def response(self, b_dag_b: np.ndarray, kappa_f: float, G: float) -> np.ndarray:
        """Filter-independent response: b+b scaled to an empty-cavity photon number."""
        return b_dag_b * kappa_f * (self.kappa_c + kappa_f) / (4.0 * G * G)


def _single_point(system: FilterSystem, u: float) -> float:
    value, singular = system.photon_number_at(np.array([u]), system.filter_kappa, system.filter_G)
    if singular[0]:
        raise ResolutionError(u)
    return float(value[0])


def filter_photon_number_identical(omega_f: float, steady: MeanFieldState, params: SystemParams,
                                   offset: bool = False) -> float:
    """
    Steady filter photon number for the identical-spin model.

    Args:
        omega_f: Filter frequency (rad/s), or its offset from omega_c when ``offset``
        steady: Converged steady state
        params: System parameters; filter_G and filter_kappa are used as given

    Raises:
        ResolutionError: the closed-form denominator vanishes at omega_f
    """
    u = omega_f if offset else omega_f - params.omega_c
    return _single_point(FilterSystem.identical(steady, params), u)


def filter_photon_number_subensemble(omega_f: float, steady: SubEnsembleState, model: SubEnsembleModel,
                                     offset: bool = False) -> float:
    """Steady filter photon number with per-class sums."""
    u = omega_f if offset else omega_f - model.omega_c
    return _single_point(FilterSystem.subensemble(steady, model), u)


@dataclass(frozen=True)
class Peak:
    offset: float
    height: float
    fwhm: float
    resolved: bool
    samples_across: int
    omega_c: float = 0.0
    maxima: int = 1

    @property
    def center(self) -> float:
        return self.omega_c + self.offset


class Linewidth(NamedTuple):
    center: float
    fwhm: float
    resolved: bool


@dataclass
class SpectrumResult:
    omega_c: float
    offsets: np.ndarray
    b_dag_b: np.ndarray
    response: np.ndarray
    peaks: List[Peak]
    filter_G: float
    filter_kappa: float
    depth: int
    poles: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    unresolvable: List[float] = field(default_factory=list)

    @property
    def omega_f(self) -> np.ndarray:
        return self.omega_c + self.offsets

    @property
    def resolution_floor(self) -> float:
        return self.filter_kappa

    @property
    def normalized(self) -> np.ndarray:
        """b+b scaled to a unit maximum."""
        top = float(np.max(self.b_dag_b)) if self.b_dag_b.size else 0.0
        return self.b_dag_b / top if top > 0 else np.zeros_like(self.b_dag_b)

    def dominant_peak(self) -> Optional[Peak]:
        return max(self.peaks, key=lambda p: p.height) if self.peaks else None

    def narrowest_peak(self) -> Optional[Peak]:
        resolved = [p for p in self.peaks if p.resolved] or self.peaks
        return min(resolved, key=lambda p: p.fwhm) if resolved else None

    def metadata(self) -> Dict:
        return {
            "omega_c": self.omega_c,
            "filter_G": self.filter_G,
            "filter_kappa": self.filter_kappa,
            "refinement_depth": self.depth,
            "samples": int(self.offsets.size),
            "unresolvable": list(self.unresolvable),
        }


def _apex(u: np.ndarray, y: np.ndarray, i: int) -> Tuple[float, float]:
    """Parabolic refinement of a sampled maximum."""
    if i == 0 or i == len(u) - 1:
        return float(u[i]), float(y[i])
    x = u[i - 1:i + 2] - u[i]
    a, b, c = np.polyfit(x, y[i - 1:i + 2], 2)
    if a >= 0:
        return float(u[i]), float(y[i])
    shift = -b / (2.0 * a)
    if not (x[0] <= shift <= x[2]):
        return float(u[i]), float(y[i])
    return float(u[i] + shift), float(max(y[i], c - b * b / (4.0 * a)))


def _crossing(u: np.ndarray, y: np.ndarray, start: int, step: int, level: float) -> Optional[float]:
    """Half-level crossing walking from ``start`` in direction ``step``."""
    j = start
    while 0 <= j + step < len(u):
        if y[j + step] < level:
            lo, hi = sorted((j, j + step))
            lo_s, hi_s = max(lo - 2, 0), min(hi + 3, len(u))
            curve = PchipInterpolator(u[lo_s:hi_s], y[lo_s:hi_s])
            return float(brentq(lambda x: float(curve(x)) - level, u[lo], u[hi]))
        j += step
    return None


def _humps(y: np.ndarray, indices: np.ndarray) -> List[List[int]]:
    """Neighbouring maxima whose separating valley stays above half the lower one share a hump."""
    groups: List[List[int]] = []
    for i in (int(k) for k in indices):
        if groups:
            prev = groups[-1][-1]
            valley = float(np.min(y[prev:i + 1]))
            if valley >= RESOLVE_DEPTH * min(y[prev], y[i]):
                groups[-1].append(i)
                continue
        groups.append([i])
    return groups


def _measure_peaks(u: np.ndarray, y: np.ndarray, omega_c: float, min_samples: int = MIN_SAMPLES,
                   floor: Optional[np.ndarray] = None) -> List[Peak]:
    """
    One peak per hump of the sampled response.

    Maxima not separated by a valley below half the lower one's height are
    merged and measured at the highest. A merged hump counts as resolved
    only if its other maxima are ripples smaller than RIPPLE_PROMINENCE of
    its height; overlapping lines of comparable size stay unresolved.
    """
    if u.size < 3:
        return []
    top = float(np.max(y))
    check = y if floor is None else floor
    if not np.isfinite(top) or float(np.max(check)) < NOISE_FLOOR:
        return []
    indices, props = find_peaks(y, prominence=RELATIVE_PROMINENCE * top)
    prominences = props["prominences"]
    if indices.size == 0 and top > 0:
        best = int(np.argmax(y))
        if 0 < best < u.size - 1:
            indices, prominences = np.array([best]), np.array([top])
    prominence = dict(zip(indices.tolist(), prominences.tolist()))

    peaks = []
    for group in _humps(y, indices):
        i = max(group, key=lambda k: y[k])
        overlapping = [k for k in group if k != i and prominence[k] >= RIPPLE_PROMINENCE * y[i]]
        center, height = _apex(u, y, i)
        half = 0.5 * height
        left = _crossing(u, y, i, -1, half)
        right = _crossing(u, y, i, +1, half)
        if left is None or right is None:
            known = [x for x in (left, right) if x is not None]
            fwhm = 2.0 * abs(center - known[0]) if known else float(u[-1] - u[0])
            peaks.append(Peak(offset=center, height=height, fwhm=fwhm, resolved=False,
                              samples_across=0, omega_c=omega_c, maxima=len(group)))
            logger.warning(f"Unresolved peak | offset={center:.6g} | crossing outside the sampled range")
            continue
        if overlapping:
            logger.debug(f"Overlapping maxima merged | offset={center:.6g} | maxima={len(group)}")
        fwhm = right - left
        across = int(np.count_nonzero((u >= left) & (u <= right)))
        peaks.append(Peak(offset=center, height=height, fwhm=fwhm,
                          resolved=across >= min_samples and not overlapping,
                          samples_across=across, omega_c=omega_c, maxima=len(group)))
    return peaks


def _pole_window(poles: np.ndarray, kappa_c: float) -> Tuple[float, float]:
    widths = np.abs(poles.imag)
    spread = max(10.0 * float(np.max(widths)), kappa_c)
    return float(np.min(poles.real)) - spread, float(np.max(poles.real)) + spread


def _local_grid(center: float, half_width: float, lo: float, hi: float, points: int = 161) -> np.ndarray:
    """Dense block over +-8 half widths plus log-spaced tails out to the window edges."""
    half_width = max(half_width, 1e-300)
    dense = center + half_width * np.linspace(-8.0, 8.0, points)
    reach = max(center - lo, hi - center, 8.0 * half_width)
    tails = half_width * np.logspace(math.log10(8.0), math.log10(max(reach / half_width, 8.0 * 1.0001)), 40)
    grid = np.concatenate([dense, center - tails, center + tails])
    return grid[(grid >= lo) & (grid <= hi)]


def scan_spectrum(steady: Union[MeanFieldState, SubEnsembleState],
                  system: Union[SystemParams, SubEnsembleModel],
                  window: Optional[Tuple[float, float]] = None, *,
                  n_coarse: int = 801, min_samples: int = MIN_SAMPLES,
                  max_depth: int = 8) -> SpectrumResult:
    """
    Adaptively sampled filter spectrum.

    A coarse uniform pass over the window is merged with dense blocks around
    every spectral pole. Peaks found in the samples are refined by bisection
    until each full width at half maximum holds ``min_samples`` samples.
    The filter width is set to min(configured, narrowest width / 10) and the
    filter coupling to a hundredth of it; both are re-chosen when a pass
    measures a narrower peak than expected.

    Args:
        steady: Converged steady state of ``system``
        system: SystemParams (identical spins) or SubEnsembleModel
        window: (low, high) filter offsets from omega_c in rad/s; chosen from
            the spectral poles when omitted

    Returns:
        SpectrumResult with samples sorted by filter frequency.
    """
    if isinstance(system, SubEnsembleModel):
        if not isinstance(steady, SubEnsembleState):
            raise ParameterError("a SubEnsembleModel needs a SubEnsembleState")
        filt = FilterSystem.subensemble(steady, system)
        omega_c = system.omega_c
    else:
        if not isinstance(steady, MeanFieldState):
            raise ParameterError("SystemParams need a MeanFieldState")
        filt = FilterSystem.identical(steady, system)
        omega_c = system.omega_c

    poles = filt.poles()
    lo, hi = window if window is not None else _pole_window(poles, filt.kappa_c)
    if not hi > lo:
        raise ParameterError(f"empty window ({lo}, {hi})")

    in_window = [p for p in poles if lo <= p.real <= hi]
    narrowest = min((2.0 * abs(p.imag) for p in in_window), default=hi - lo)
    kappa_f = min(filt.filter_kappa, max(narrowest, 0.0) / 10.0) or filt.filter_kappa
    G = kappa_f / 100.0

    grids = [np.linspace(lo, hi, n_coarse)]
    for p in in_window:
        grids.append(_local_grid(p.real, abs(p.imag) + 0.5 * kappa_f, lo, hi))
    u = np.unique(np.concatenate(grids))

    depth = 0
    passes = 0
    while True:
        passes += 1
        values, singular = filt.photon_number_at(u, kappa_f, G)
        keep = ~singular
        u_ok, b_ok = u[keep], values[keep]
        response = filt.response(b_ok, kappa_f, G)
        peaks = _measure_peaks(u_ok, response, omega_c, min_samples)

        measured = min((p.fwhm for p in peaks if p.resolved), default=None)
        if measured is not None and kappa_f > measured / 10.0 * (1.0 + 1e-9):
            kappa_f = measured / 10.0
            G = kappa_f / 100.0
            logger.debug(f"Filter narrowed | kappa_f={kappa_f:.4g} | G={G:.4g}")
            if depth < max_depth:
                depth += 1
                continue

        pending = [p for p in peaks if not p.resolved]
        if not pending or depth >= max_depth:
            break
        extra = []
        for peak in pending:
            width = max(peak.fwhm, 10.0 * kappa_f, 1e-300)
            extra.append(peak.offset + width * np.linspace(-2.0, 2.0, 4 * min_samples + 1))
            extra.append(_local_grid(peak.offset, 0.5 * width, lo, hi))
        u = np.unique(np.concatenate([u] + extra))
        u = u[(u >= lo) & (u <= hi)]
        depth += 1

    unresolvable = [float(x) for x in u[singular]]
    if unresolvable:
        logger.warning(f"Filter denominator vanished at {len(unresolvable)} samples")
    get_metrics().record_scan(int(u_ok.size), passes)
    for peak in peaks:
        if not peak.resolved:
            logger.warning(f"Peak not resolved after refinement | offset={peak.offset:.6g} | fwhm={peak.fwhm:.3g}")
    logger.debug(f"Spectrum scanned | samples={u_ok.size} | peaks={len(peaks)} | kappa_f={kappa_f:.3g}")
    return SpectrumResult(
        omega_c=omega_c, offsets=u_ok, b_dag_b=b_ok, response=response, peaks=peaks,
        filter_G=G, filter_kappa=kappa_f, depth=depth, poles=poles, unresolvable=unresolvable,
    )


def extract_linewidth(result: SpectrumResult, min_samples: int = MIN_SAMPLES) -> List[Linewidth]:
    """
    Peak centers (absolute rad/s) and full widths at half maximum.

    Widths come from monotone interpolation of the half-maximum crossings;
    centers from a parabola through the apex samples. Peaks with fewer than
    ``min_samples`` samples across, or with a crossing outside the sampled
    range, are returned with ``resolved=False``.
    """
    peaks = _measure_peaks(result.offsets, result.response, result.omega_c, min_samples)
    return [Linewidth(center=p.center, fwhm=p.fwhm, resolved=p.resolved) for p in peaks]


def width_convention(measured_fwhm: float, pole_width: float) -> str:
    """
    Which reading of a pole imaginary part matches a measured width.

    Returns "hwhm" when the measured full width is closer to twice
    ``pole_width`` and "fwhm" when it is closer to ``pole_width`` itself.
    """
    pole_width = abs(pole_width)
    if pole_width == 0:
        raise ParameterError("pole width must be nonzero")
    as_half = abs(math.log(measured_fwhm / (2.0 * pole_width)))
    as_full = abs(math.log(measured_fwhm / pole_width))
    return "hwhm" if as_half <= as_full else "fwhm"


SPECTRUM_COLUMNS = ["offset", "b_dag_b", "normalized"]


def spectrum_rows(result: SpectrumResult) -> List[list]:
    norm = result.normalized
    return [[float(u), float(b), float(n)] for u, b, n in zip(result.offsets, result.b_dag_b, norm)]


def peak_table(result: SpectrumResult) -> List[Dict]:
    """JSON-ready peak list; centers are absolute, offsets relative to omega_c."""
    return [
        {
            "center": p.center,
            "offset": p.offset,
            "height": p.height,
            "fwhm": p.fwhm,
            "resolved": p.resolved,
            "samples_across": p.samples_across,
            "maxima": p.maxima,
        }
        for p in result.peaks
    ]
