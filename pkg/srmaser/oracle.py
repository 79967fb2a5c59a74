"""
Exact small-N Lindblad solver used to check the mean-field closure.

The full density matrix of resonator, n_spins two-level systems and an
optional filter mode is propagated in the frame rotating at omega_c.
Operators come from qutip and are used as dense numpy arrays; the ordering
is resonator (x) spin_1 (x) ... (x) spin_N (x) filter. Spin basis state 0
is the excited state, as in qutip.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
from qutip import basis, destroy, qdiags, qeye, sigmam, sigmaz, tensor, thermal_dm

from srmaser.errors import ParameterError, PositivityError
from srmaser.logger_config import get_logger
from srmaser.meanfield import MeanFieldState, evolve, rhs_identical
from srmaser.model import SystemParams, make_params, thermal_occupation
from srmaser.solvers import integrate

logger = get_logger(__name__)

MAX_SPINS = 4
MAX_FOCK = 30
MAX_FILTER_FOCK = 5
MAX_DIMENSION = 2 ** 14
POSITIVITY_TOL = 1e-6
MOMENTS = ("photon_number", "inversion", "spin_photon", "spin_spin")


@dataclass(frozen=True)
class ExactModel:
    """Small-N system with the same rates as SystemParams (angular units)."""

    n_spins: int
    fock_cutoff: int
    omega_c: float
    kappa_c: float
    detuning: float
    g: float
    gamma: float
    chi: float = 0.0
    eta: float = 0.0
    temperature: float = 0.0
    filter_cutoff: Optional[int] = None
    filter_G: float = 0.0
    filter_kappa: float = 0.0
    filter_detuning: float = 0.0

    def __post_init__(self):
        if not 1 <= self.n_spins <= MAX_SPINS:
            raise ParameterError(f"n_spins must lie in [1, {MAX_SPINS}], got {self.n_spins}")
        if not 1 <= self.fock_cutoff <= MAX_FOCK:
            raise ParameterError(f"fock_cutoff must lie in [1, {MAX_FOCK}], got {self.fock_cutoff}")
        if self.filter_cutoff is not None and not 1 <= self.filter_cutoff <= MAX_FILTER_FOCK:
            raise ParameterError(f"filter_cutoff must lie in [1, {MAX_FILTER_FOCK}]")
        for name in ("kappa_c", "g", "gamma", "chi", "eta", "temperature", "filter_G", "filter_kappa"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.dimension > MAX_DIMENSION:
            raise ParameterError(f"Hilbert dimension {self.dimension} exceeds {MAX_DIMENSION}")

    @classmethod
    def from_params(cls, params: SystemParams, n_spins: Optional[int] = None, fock_cutoff: int = 10,
                    filter_cutoff: Optional[int] = None, filter_detuning: float = 0.0) -> "ExactModel":
        """Exact model with the rates of ``params``; n_spins defaults to params.n_spins."""
        count = int(round(params.n_spins)) if n_spins is None else int(n_spins)
        return cls(
            n_spins=count, fock_cutoff=fock_cutoff, omega_c=params.omega_c, kappa_c=params.kappa_c,
            detuning=params.detuning, g=params.g, gamma=params.gamma, chi=params.chi, eta=params.eta,
            temperature=params.temperature, filter_cutoff=filter_cutoff,
            filter_G=params.filter_G if filter_cutoff else 0.0,
            filter_kappa=params.filter_kappa if filter_cutoff else 0.0,
            filter_detuning=filter_detuning,
        )

    def to_params(self) -> SystemParams:
        return make_params(
            omega_c=self.omega_c, kappa_c=self.kappa_c, n_spins=float(self.n_spins),
            omega_s=self.omega_c + self.detuning, g=self.g, gamma=self.gamma, chi=self.chi,
            eta=self.eta, temperature=self.temperature,
        )

    @property
    def has_filter(self) -> bool:
        return self.filter_cutoff is not None

    @property
    def dims(self) -> List[int]:
        dims = [self.fock_cutoff + 1] + [2] * self.n_spins
        if self.has_filter:
            dims.append(self.filter_cutoff + 1)
        return dims

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_c_th(self) -> float:
        return thermal_occupation(self.omega_c, self.temperature)

    @property
    def n_k_th(self) -> float:
        return thermal_occupation(self.omega_c + self.detuning, self.temperature)

    @cached_property
    def operators(self) -> "_Operators":
        return _Operators.build(self)


def _embed(model: ExactModel, slot: int, op):
    """Tensor ``op`` into position ``slot`` with identities elsewhere."""
    factors = [qeye(d) for d in model.dims]
    factors[slot] = op
    return tensor(factors)


@dataclass
class _Operators:
    a: np.ndarray
    sm: List[np.ndarray]
    sz: List[np.ndarray]
    b: Optional[np.ndarray]
    hamiltonian: np.ndarray
    effective: np.ndarray
    jumps: List[Tuple[float, np.ndarray]]

    @classmethod
    def build(cls, model: ExactModel) -> "_Operators":
        a_q = _embed(model, 0, destroy(model.fock_cutoff + 1))
        sm_q = [_embed(model, 1 + j, sigmam()) for j in range(model.n_spins)]
        sz_q = [_embed(model, 1 + j, sigmaz()) for j in range(model.n_spins)]

        exchange = [a_q.dag() * s + s.dag() * a_q for s in sm_q]
        h = 0.5 * model.detuning * sum(sz_q[1:], sz_q[0]) + model.g * sum(exchange[1:], exchange[0])
        jumps = [
            (model.kappa_c * (model.n_c_th + 1.0), a_q),
            (model.kappa_c * model.n_c_th, a_q.dag()),
        ]
        for s, z in zip(sm_q, sz_q):
            jumps.append((model.gamma * (model.n_k_th + 1.0), s))
            jumps.append((model.gamma * model.n_k_th + model.eta, s.dag()))
            jumps.append((0.5 * model.chi, z))

        b_q = None
        if model.has_filter:
            b_q = _embed(model, len(model.dims) - 1, destroy(model.filter_cutoff + 1))
            h = h + model.filter_detuning * b_q.dag() * b_q + model.filter_G * (a_q.dag() * b_q + b_q.dag() * a_q)
            jumps.append((model.filter_kappa, b_q))

        jumps = [(rate, op) for rate, op in jumps if rate > 0]
        hamiltonian = h.full()
        decay = sum((rate * (op.dag() * op).full() for rate, op in jumps), np.zeros_like(hamiltonian))
        return cls(
            a=a_q.full(), sm=[s.full() for s in sm_q], sz=[z.full() for z in sz_q],
            b=None if b_q is None else b_q.full(),
            hamiltonian=hamiltonian, effective=hamiltonian - 0.5j * decay,
            jumps=[(rate, op.full()) for rate, op in jumps],
        )


def lindblad_rhs(rho: np.ndarray, model: ExactModel) -> np.ndarray:
    """-i(H_eff rho - rho H_eff^+) + sum_r r L rho L^+ for a Hermitian-symmetrized rho."""
    ops = model.operators
    rho = 0.5 * (rho + rho.conj().T)
    heff = ops.effective
    out = -1j * (heff @ rho - rho @ heff.conj().T)
    for rate, op in ops.jumps:
        out += rate * (op @ rho @ op.conj().T)
    return out


def _check_positivity(rho: np.ndarray, t: float) -> float:
    lowest = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
    if lowest < -POSITIVITY_TOL:
        raise PositivityError(lowest, t)
    return lowest


@dataclass
class ExactTrajectory:
    times: np.ndarray
    states: List[np.ndarray]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def exact_trajectory(model: ExactModel, rho0: np.ndarray, t_end: float, tol: float = 1e-8,
                     n_samples: int = 101) -> ExactTrajectory:
    """
    Propagate ``rho0`` and sample it on an even grid.

    Raises:
        PositivityError: a sampled state has an eigenvalue below -1e-6
    """
    d = model.dimension
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise ParameterError(f"rho0 must be {d}x{d}, got {rho0.shape}")
    if abs(np.trace(rho0) - 1.0) > 1e-9 or not np.allclose(rho0, rho0.conj().T, atol=1e-12):
        raise ParameterError("rho0 must be Hermitian with unit trace")
    _check_positivity(rho0, 0.0)
    if not t_end > 0:
        raise ParameterError(f"t_end must be > 0, got {t_end}")

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        return lindblad_rhs(y.reshape(d, d), model).ravel()

    t_eval = np.linspace(0.0, t_end, max(n_samples, 2))
    result = integrate(rhs, (0.0, t_end), rho0.ravel(), rtol=tol, atol=tol * 1e-4,
                       method="DOP853", t_eval=t_eval)
    states = []
    for i, t in enumerate(result.t):
        rho = result.y[:, i].reshape(d, d)
        rho = 0.5 * (rho + rho.conj().T)
        _check_positivity(rho, float(t))
        states.append(rho)
    drift = abs(np.trace(states[-1]) - 1.0)
    if drift > 1e-10:
        logger.warning(f"Exact trace drift {drift:.3e} | t_end={t_end:.4g}")
    return ExactTrajectory(times=result.t, states=states)


def exact_evolve(model: ExactModel, rho0: np.ndarray, t_end: float, tol: float = 1e-8) -> np.ndarray:
    """Density matrix at ``t_end``."""
    return exact_trajectory(model, rho0, t_end, tol=tol, n_samples=11).final


@dataclass(frozen=True)
class ExactObservables:
    photon_number: float
    inversion: np.ndarray
    spin_photon: np.ndarray
    spin_spin: complex
    filter_photon: Optional[float] = None

    def mean_field(self) -> MeanFieldState:
        """Spin-averaged moments in the mean-field layout."""
        return MeanFieldState(
            photon_number=self.photon_number,
            spin_photon=complex(np.mean(self.spin_photon)),
            inversion=float(np.mean(self.inversion)),
            spin_spin=self.spin_spin,
        )


def _expect(op: np.ndarray, rho: np.ndarray) -> complex:
    return complex(np.trace(op @ rho))


def exact_observables(rho: np.ndarray, model: ExactModel) -> ExactObservables:
    """Moments tracked by the mean-field model, plus the filter photon number if present."""
    ops = model.operators
    n = _expect(ops.a.conj().T @ ops.a, rho).real
    inversion = np.array([_expect(z, rho).real for z in ops.sz])
    spin_photon = np.array([_expect(s.conj().T @ ops.a, rho) for s in ops.sm])
    pairs = [_expect(ops.sm[j].conj().T @ ops.sm[k], rho)
             for j in range(model.n_spins) for k in range(model.n_spins) if j != k]
    spin_spin = complex(np.mean(pairs)) if pairs else 0j
    filter_photon = _expect(ops.b.conj().T @ ops.b, rho).real if ops.b is not None else None
    return ExactObservables(photon_number=n, inversion=inversion, spin_photon=spin_photon,
                            spin_spin=spin_spin, filter_photon=filter_photon)


def product_state(model: ExactModel, photon_occupation: Optional[float] = None,
                  inversion: Optional[float] = None) -> np.ndarray:
    """
    Thermal resonator (x) identical diagonal spins (x) filter vacuum.

    Defaults are the bath occupation and the thermal spin inversion.
    """
    n = model.n_c_th if photon_occupation is None else photon_occupation
    if inversion is None:
        inversion = -1.0 / (2.0 * model.n_k_th + 1.0)
    if abs(inversion) > 1.0 or n < 0:
        raise ParameterError("need photon_occupation >= 0 and |inversion| <= 1")
    excited = 0.5 * (1.0 + inversion)
    factors = [thermal_dm(model.fock_cutoff + 1, n) if n > 0 else basis(model.fock_cutoff + 1, 0).proj()]
    factors += [qdiags([excited, 1.0 - excited], 0)] * model.n_spins
    if model.has_filter:
        factors.append(basis(model.filter_cutoff + 1, 0).proj())
    return tensor(factors).full()


def gibbs_state(model: ExactModel) -> np.ndarray:
    """Product Gibbs state at the bath temperature (filter at zero temperature)."""
    return product_state(model)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    delta = np.asarray(rho) - np.asarray(sigma)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (delta + delta.conj().T)))))


def _moment(state, name: str) -> complex:
    return complex(getattr(state, name))


@dataclass
class DiscrepancyReport:
    horizon: float
    n_spins: int
    fock_cutoff: int
    max_abs: Dict[str, float]
    final_abs: Dict[str, float]
    max_relative: Dict[str, float]
    derivative_mismatch: Dict[str, float]
    sign_convention_ok: bool
    flagged: List[str] = field(default_factory=list)
    times: Optional[np.ndarray] = None

    def to_dict(self) -> Dict:
        return {
            "horizon": self.horizon,
            "n_spins": self.n_spins,
            "fock_cutoff": self.fock_cutoff,
            "max_abs": dict(self.max_abs),
            "final_abs": dict(self.final_abs),
            "max_relative": dict(self.max_relative),
            "derivative_mismatch": dict(self.derivative_mismatch),
            "sign_convention_ok": self.sign_convention_ok,
            "flagged": list(self.flagged),
        }


def compare_meanfield(model: ExactModel, horizon: Optional[float] = None, tol_report: float = 1e-6,
                      rho0: Optional[np.ndarray] = None, tol: float = 1e-9,
                      n_samples: int = 201) -> DiscrepancyReport:
    """
    Run the exact and mean-field models side by side from the same state.

    Args:
        model: Exact model; the mean-field run uses N = model.n_spins
        horizon: Comparison time, 5/kappa_c by default
        tol_report: Relative discrepancy above which a moment is flagged
        rho0: Initial density matrix, product_state(model) by default

    Returns:
        DiscrepancyReport with per-moment maximum and final discrepancies.
        Initial time derivatives are compared separately: the closure is
        exact on product states, so a mismatch there points at a sign
        error in the moment equations rather than at the truncation.
    """
    if horizon is None:
        horizon = 5.0 / model.kappa_c if model.kappa_c > 0 else 5.0 / max(model.gamma, 1e-12)
    rho0 = product_state(model) if rho0 is None else np.asarray(rho0, dtype=complex)
    params = model.to_params()
    initial = exact_observables(rho0, model).mean_field()

    exact_start = exact_observables(lindblad_rhs(rho0, model), model).mean_field()
    mf_start = rhs_identical(initial, params)
    derivative_mismatch = {}
    for name in MOMENTS:
        e, m = _moment(exact_start, name), _moment(mf_start, name)
        derivative_mismatch[name] = abs(e - m) / max(abs(e), abs(m), 1e-12)
    sign_ok = all(v <= 1e-6 for v in derivative_mismatch.values())
    if not sign_ok:
        logger.warning(f"Initial derivative mismatch | {derivative_mismatch}")

    exact = exact_trajectory(model, rho0, horizon, tol=tol, n_samples=n_samples)
    meanfield = evolve(initial, params, horizon, tol=tol, n_samples=len(exact.times))
    exact_states = [exact_observables(rho, model).mean_field() for rho in exact.states]

    max_abs, final_abs, max_rel, flagged = {}, {}, {}, []
    for name in MOMENTS:
        e = np.array([_moment(s, name) for s in exact_states])
        m = np.array([_moment(s, name) for s in meanfield.states])
        diff = np.abs(e - m)
        scale = max(float(np.max(np.abs(e))), 1e-12)
        max_abs[name] = float(np.max(diff))
        final_abs[name] = float(diff[-1])
        max_rel[name] = max_abs[name] / scale
        if max_rel[name] > tol_report:
            flagged.append(name)

    logger.info(f"Oracle comparison | N={model.n_spins} | horizon={horizon:.4g} | "
                f"photon_rel={max_rel['photon_number']:.3e} | sign_ok={sign_ok}")
    return DiscrepancyReport(
        horizon=horizon, n_spins=model.n_spins, fock_cutoff=model.fock_cutoff,
        max_abs=max_abs, final_abs=final_abs, max_relative=max_rel,
        derivative_mismatch=derivative_mismatch, sign_convention_ok=sign_ok,
        flagged=flagged, times=exact.times,
    )
