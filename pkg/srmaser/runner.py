"""
Run bundles behind the CLI verbs: single point, sub-ensemble spectra study
and the exact-oracle fixture check.
"""

import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from srmaser.analytics import (
    classify_regime,
    dicke_numbers,
    identical_poles,
    masing_threshold,
    peak_frequencies,
    threshold_photon_estimate,
)
from srmaser.config import RunConfig, get_settings
from srmaser.errors import ConfigError, ParameterError, SolverError, SweepFailure
from srmaser.export import write_csv, write_json
from srmaser.logger_config import get_logger
from srmaser.meanfield import STATE_COLUMNS, MeanFieldState, state_row, steady_state
from srmaser.model import TWO_PI, SystemParams, coupling_regime, derive_rates, make_params
from srmaser.monitoring import get_metrics
from srmaser.oracle import ExactModel, compare_meanfield, product_state
from srmaser.spectrum import SPECTRUM_COLUMNS, SpectrumResult, peak_table, scan_spectrum, spectrum_rows
from srmaser.subensemble import (
    MODEL_COLUMNS,
    SubEnsembleModel,
    SubEnsembleState,
    discretize_gaussian,
    model_rows,
    split_class,
    state_document,
    steady_state_subensembles,
)

logger = get_logger(__name__)


def _complex_pair(value: complex) -> Dict[str, float]:
    return {"re": value.real, "im": value.imag}


@dataclass
class SingleResult:
    params: SystemParams
    steady: MeanFieldState
    spectrum: SpectrumResult
    summary: Dict


def run_single(config: RunConfig, out_dir: Optional[str] = None, tol: Optional[float] = None) -> SingleResult:
    """
    Steady state, spectrum and diagnostics for one parameter point.

    Writes steady_state.csv, spectrum.csv and summary.json when ``out_dir`` is given.
    """
    params = config.params
    tol = tol or get_settings().newton_tol
    rates = derive_rates(params)
    steady = steady_state(params, tol=tol)
    spectrum = scan_spectrum(steady, params)

    dicke = dicke_numbers(steady.inversion, steady.spin_spin, params.n_spins)
    plus, minus = peak_frequencies(params, max(-1.0, min(1.0, steady.inversion)), relative=True)
    estimate = threshold_photon_estimate(params)
    narrow = spectrum.narrowest_peak()

    summary = {
        "config_hash": config.config_hash,
        "units": config.units,
        "preset": config.preset,
        "params": params.model_dump(),
        "rates": {
            "n_c_th": rates.n_c_th,
            "n_k_th": rates.n_k_th,
            "lambda_s": rates.lambda_s,
            "gamma_purcell": rates.gamma_purcell,
            "k_eet": rates.k_eet,
            "cooperativity": rates.cooperativity,
            "collective_coupling": rates.collective_coupling,
        },
        "coupling_regime": coupling_regime(params).value,
        "threshold_eta": masing_threshold(params),
        "threshold_estimate": {"a": estimate.a, "b": estimate.b, "c": estimate.c,
                               "photon_number": estimate.photon_number},
        "regime": classify_regime(params, steady).value,
        "steady_state": {
            "photon_number": steady.photon_number,
            "spin_photon": _complex_pair(steady.spin_photon),
            "inversion": steady.inversion,
            "spin_spin": _complex_pair(steady.spin_spin),
        },
        "dicke": {"j": dicke.j, "m": dicke.m, "j_over_n": dicke.j_over_n, "m_over_n": dicke.m_over_n,
                  "clipped": dicke.clipped},
        "peak_frequencies": {"plus": _complex_pair(plus), "minus": _complex_pair(minus)},
        "poles": [_complex_pair(complex(p)) for p in identical_poles(params, steady.inversion)],
        "spectrum": {**spectrum.metadata(), "peaks": peak_table(spectrum)},
        "linewidth_fwhm": narrow.fwhm if narrow else None,
    }
    logger.info(f"Single run | regime={summary['regime']} | n={steady.photon_number:.6g} | "
                f"fwhm={summary['linewidth_fwhm']}")

    if out_dir is not None:
        write_csv(os.path.join(out_dir, "steady_state.csv"), ["eta"] + STATE_COLUMNS,
                  [state_row(params.eta, steady)], config_hash=config.config_hash, units=config.units)
        write_csv(os.path.join(out_dir, "spectrum.csv"), SPECTRUM_COLUMNS, spectrum_rows(spectrum),
                  config_hash=config.config_hash, units=config.units)
        write_json(os.path.join(out_dir, "summary.json"), {**summary, "metrics": get_metrics().get_stats()})
    return SingleResult(params=params, steady=steady, spectrum=spectrum, summary=summary)


@dataclass
class Fig2Entry:
    eta_over_gamma: float
    status: str
    steady: Optional[SubEnsembleState] = None
    spectrum: Optional[SpectrumResult] = None
    error: str = ""


@dataclass
class Fig2Result:
    model: SubEnsembleModel
    entries: List[Fig2Entry] = field(default_factory=list)

    @property
    def failed(self) -> int:
        return sum(1 for e in self.entries if e.status != "ok")


def fig2_model(config: RunConfig) -> SubEnsembleModel:
    """Gaussian class model from the fig2 options, with the optional central split."""
    params, opts = config.params, config.fig2
    center = opts.center if opts.center is not None else params.omega_s
    model = discretize_gaussian(params.n_spins, opts.chi_inh, opts.n_classes, center,
                                params=params, span_sigmas=opts.span_sigmas)
    if opts.split_factor > 1:
        central = int(np.argmin(np.abs(model.column("detuning"))))
        model = split_class(model, central, opts.split_factor, TWO_PI * opts.split_spread_hz)
    return model


def run_fig2(config: RunConfig, out_dir: Optional[str] = None, tol: float = 1e-9) -> Fig2Result:
    """
    Sub-ensemble spectra over the configured pump ratios.

    Pumps are visited in ascending order; each solution warm-starts the next.

    Raises:
        SweepFailure: more than 20% of the pump values failed (after writing outputs)
    """
    params = config.params
    model = fig2_model(config)
    result = Fig2Result(model=model)
    guess: Optional[SubEnsembleState] = None
    logger.info(f"Sub-ensemble study | classes={model.size} | pumps={len(config.fig2.eta_over_gamma)}")

    for ratio in sorted(config.fig2.eta_over_gamma):
        pumped = model.with_eta(ratio * params.gamma)
        try:
            steady = steady_state_subensembles(pumped, guess=guess, tol=tol)
            spectrum = scan_spectrum(steady, pumped)
            result.entries.append(Fig2Entry(eta_over_gamma=ratio, status="ok", steady=steady, spectrum=spectrum))
            guess = steady
            dominant = spectrum.dominant_peak()
            logger.info(f"Pump ratio {ratio:.3g} | peaks={len(spectrum.peaks)} | "
                        f"fwhm={dominant.fwhm if dominant else math.nan:.4g}")
        except SolverError as exc:
            logger.warning(f"Pump ratio {ratio:.3g} failed | {exc}")
            result.entries.append(Fig2Entry(eta_over_gamma=ratio, status="failed", error=str(exc)))
            guess = None

    if out_dir is not None:
        _write_fig2(config, result, out_dir)
    if result.entries and result.failed / len(result.entries) > 0.2:
        raise SweepFailure(result.failed, len(result.entries))
    return result


def _write_fig2(config: RunConfig, result: Fig2Result, out_dir: str) -> None:
    stamp = {"config_hash": config.config_hash, "units": config.units}
    write_csv(os.path.join(out_dir, "classes.csv"), MODEL_COLUMNS, model_rows(result.model), **stamp)
    document = {**stamp, "omega_c": result.model.omega_c, "spectra": []}
    for i, entry in enumerate(result.entries):
        item = {"eta_over_gamma": entry.eta_over_gamma, "status": entry.status, "error": entry.error}
        if entry.spectrum is not None:
            name = f"spectrum_{i:02d}.csv"
            write_csv(os.path.join(out_dir, name), SPECTRUM_COLUMNS, spectrum_rows(entry.spectrum), **stamp)
            item.update(file=name, peaks=peak_table(entry.spectrum), **entry.spectrum.metadata())
        if entry.steady is not None:
            item["state"] = state_document(entry.steady, result.model.with_eta(entry.eta_over_gamma * config.params.gamma))
        document["spectra"].append(item)
    write_json(os.path.join(out_dir, "fig2.json"), document)


class OracleFixture(BaseModel):
    """One exact-versus-mean-field comparison (angular units)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    params: Dict[str, float]
    n_spins: int = Field(ge=1, le=4)
    fock_cutoff: int = Field(default=6, ge=1, le=30)
    horizon: Optional[float] = Field(default=None, gt=0)
    photon_occupation: float = Field(default=0.0, ge=0)
    inversion: Optional[float] = Field(default=None, ge=-1, le=1)
    max_photon_relative: Optional[float] = Field(default=None, gt=0)


DEFAULT_FIXTURES = [
    OracleFixture(
        name="decoupled",
        params={"omega_c": 1.0, "kappa_c": 1.0, "g": 0.0, "gamma": 0.1, "chi": 0.5, "eta": 0.05},
        n_spins=2, fock_cutoff=4, photon_occupation=0.5, inversion=0.3, max_photon_relative=1e-5,
    ),
    OracleFixture(
        name="dephased_weak_pump",
        params={"omega_c": 1.0, "kappa_c": 1.0, "g": 0.3, "gamma": 0.05, "chi": 10.0, "eta": 0.01},
        n_spins=2, fock_cutoff=6, photon_occupation=0.0, inversion=1.0, max_photon_relative=0.1,
    ),
]


def load_fixtures(path: str) -> List[OracleFixture]:
    """Read a JSON list of fixtures."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read fixtures '{path}': {exc}") from exc
    if not isinstance(raw, list):
        raise ConfigError("fixture file must hold a JSON list")
    try:
        return [OracleFixture(**item) for item in raw]
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"invalid fixture: {exc}") from exc


def _fixture_model(fixture: OracleFixture) -> ExactModel:
    values = dict(fixture.params)
    values.setdefault("omega_s", values.get("omega_c", 0.0))
    values["n_spins"] = float(fixture.n_spins)
    try:
        params = make_params(**values)
    except ParameterError as exc:
        raise ConfigError(f"fixture '{fixture.name}': {exc}") from exc
    return ExactModel.from_params(params, n_spins=fixture.n_spins, fock_cutoff=fixture.fock_cutoff)


def run_oracle_check(fixtures: Optional[List[OracleFixture]] = None,
                     out_dir: Optional[str] = None) -> List[Dict]:
    """
    Compare exact and mean-field dynamics for each fixture.

    A fixture passes when the initial derivatives agree and, if a bound is
    set, the photon-number discrepancy stays within it.
    """
    results = []
    for fixture in fixtures or DEFAULT_FIXTURES:
        model = _fixture_model(fixture)
        rho0 = product_state(model, photon_occupation=fixture.photon_occupation, inversion=fixture.inversion)
        report = compare_meanfield(model, horizon=fixture.horizon, rho0=rho0, tol=get_settings().ode_rtol)
        photon = report.max_relative["photon_number"]
        passed = report.sign_convention_ok and (
            fixture.max_photon_relative is None or photon <= fixture.max_photon_relative)
        if not passed:
            logger.error(f"Oracle fixture failed | {fixture.name} | photon_rel={photon:.3e} | "
                         f"sign_ok={report.sign_convention_ok}")
        results.append({"name": fixture.name, "passed": passed, "report": report.to_dict()})
    if out_dir is not None:
        write_json(os.path.join(out_dir, "oracle_report.json"), results)
    return results
