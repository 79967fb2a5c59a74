"""
Parameter grid sweeps with continuation along the first axis.

Each value of axis2 is an independent line: axis1 is walked in order and
every steady state seeds the next solve. Lines go to a process pool; rows
are sorted on assembly so the output does not depend on scheduling.
"""

import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from srmaser.analytics import classify_regime, dicke_numbers, masing_threshold, peak_frequencies
from srmaser.config import RunConfig, SweepAxis, SweepSpec, get_settings
from srmaser.errors import InvariantViolation, ParameterError, SolverError, SweepFailure
from srmaser.export import write_csv, write_json
from srmaser.logger_config import get_logger
from srmaser.meanfield import MeanFieldState, cached_steady_state, steady_state
from srmaser.model import SystemParams
from srmaser.monitoring import get_metrics
from srmaser.spectrum import scan_spectrum

logger = get_logger(__name__)

MAX_FAILURE_FRACTION = 0.2
HYSTERESIS_TOL = 0.01

OUTPUT_COLUMNS = {
    "photon_number": ["photon_number"],
    "inversion": ["inversion"],
    "regime": ["regime"],
    "dicke": ["j_over_n", "m_over_n"],
    "linewidth": ["linewidth_fwhm", "line_offset"],
    "spectrum": ["peak_count", "dominant_offset"],
}
OVERLAY_COLUMNS = ["threshold_eta", "peak_plus_re", "peak_plus_im", "peak_minus_re", "peak_minus_im"]


def apply_axis(params: SystemParams, name: str, value: float) -> SystemParams:
    """Set one swept quantity; virtual axes are resolved against ``params``."""
    if name == "eta_over_gamma":
        return params.with_updates(eta=value * params.gamma)
    if name == "detuning":
        return params.with_updates(omega_s=params.omega_c + value)
    return params.with_updates(**{name: value})


def sweep_columns(spec: SweepSpec) -> List[str]:
    columns = [spec.axis1.name]
    if spec.axis2 is not None:
        columns.append(spec.axis2.name)
    columns.append("status")
    for output in spec.outputs:
        columns += OUTPUT_COLUMNS[output]
    columns += OVERLAY_COLUMNS
    if spec.bidirectional:
        columns += ["photon_number_reverse", "hysteresis"]
    return columns


def _point_outputs(params: SystemParams, steady: MeanFieldState, outputs: Sequence[str]) -> Dict:
    values: Dict = {}
    if "photon_number" in outputs:
        values["photon_number"] = steady.photon_number
    if "inversion" in outputs:
        values["inversion"] = steady.inversion
    if "regime" in outputs:
        values["regime"] = classify_regime(params, steady).value
    if "dicke" in outputs:
        dicke = dicke_numbers(steady.inversion, steady.spin_spin, params.n_spins)
        values["j_over_n"] = dicke.j_over_n
        values["m_over_n"] = dicke.m_over_n
    if "linewidth" in outputs or "spectrum" in outputs:
        result = scan_spectrum(steady, params)
        narrow = result.narrowest_peak()
        dominant = result.dominant_peak()
        values["linewidth_fwhm"] = narrow.fwhm if narrow else math.nan
        values["line_offset"] = narrow.offset if narrow else math.nan
        values["peak_count"] = len(result.peaks)
        values["dominant_offset"] = dominant.offset if dominant else math.nan

    plus, minus = peak_frequencies(params, max(-1.0, min(1.0, steady.inversion)), relative=True)
    values.update(peak_plus_re=plus.real, peak_plus_im=plus.imag,
                  peak_minus_re=minus.real, peak_minus_im=minus.imag)
    return values


@dataclass
class _LineTask:
    base: Dict
    spec: Dict
    axis2_value: Optional[float]
    axis1_values: List[float]
    reverse: bool
    tol: float
    isolated: bool


def _run_line(task: _LineTask) -> Tuple[List[Dict], Dict]:
    """Solve one axis1 line; returns point records and a metrics snapshot."""
    metrics = get_metrics()
    if task.isolated:
        metrics.reset()
    spec = SweepSpec(**task.spec)
    base = SystemParams(**task.base)
    if spec.axis2 is not None:
        base = apply_axis(base, spec.axis2.name, task.axis2_value)

    order = list(range(len(task.axis1_values)))
    if task.reverse:
        order.reverse()

    records = []
    guess: Optional[MeanFieldState] = None
    for i in order:
        value = task.axis1_values[i]
        record = {"index": i, "axis1": value, "axis2": task.axis2_value, "status": "ok"}
        try:
            params = apply_axis(base, spec.axis1.name, value)
        except ParameterError as exc:
            record["status"] = "failed"
            record["error"] = str(exc)
            records.append(record)
            continue
        record["threshold_eta"] = masing_threshold(params)
        try:
            if guess is None:
                steady = cached_steady_state(params, tol=task.tol)
            else:
                steady = steady_state(params, guess=guess, tol=task.tol)
            record.update(_point_outputs(params, steady, spec.outputs))
            guess = steady
        except (SolverError, InvariantViolation) as exc:
            logger.warning(f"Sweep point failed | {spec.axis1.name}={value:.6g} | {exc}")
            metrics.record_failure("sweep_point", str(exc))
            record["status"] = "failed"
            record["error"] = str(exc)
            guess = None
        records.append(record)
    return records, metrics.get_stats() if task.isolated else {}


@dataclass
class SweepResult:
    columns: List[str]
    rows: List[list]
    failed: int
    total: int
    hysteresis: List[Tuple[float, Optional[float]]] = field(default_factory=list)
    metrics: Dict = field(default_factory=dict)

    @property
    def failure_fraction(self) -> float:
        return self.failed / self.total if self.total else 0.0

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]


def _axis_values(axis: SweepAxis, params: SystemParams) -> List[float]:
    return [float(v) for v in axis.values(params)]


def _dispatch(tasks: List[_LineTask], workers: int) -> List[Tuple[List[Dict], Dict]]:
    if workers <= 1 or len(tasks) <= 1:
        return [_run_line(task) for task in tasks]
    for task in tasks:
        task.isolated = True
    results = []
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(_run_line, task) for task in tasks]
        for future in as_completed(futures):
            results.append(future.result())
    return results


def _records_by_key(results: List[Tuple[List[Dict], Dict]]) -> Dict[Tuple, Dict]:
    table = {}
    for records, stats in results:
        if stats:
            get_metrics().merge(stats)
        for record in records:
            table[(record["axis2"], record["index"])] = record
    return table


def run_sweep(config: RunConfig, workers: Optional[int] = None, out_dir: Optional[str] = None,
              tol: Optional[float] = None) -> SweepResult:
    """
    Solve every grid point of ``config.sweep``.

    Args:
        config: Resolved run config with a sweep section
        workers: Process count (settings default when None)
        out_dir: Write sweep.csv and metrics.json here when given
        tol: Newton tolerance (settings default when None)

    Returns:
        SweepResult with rows sorted by (axis2, axis1).

    Raises:
        SweepFailure: more than 20% of the points failed (after writing outputs)
    """
    spec = config.sweep
    if spec is None:
        raise ParameterError("config has no sweep section")
    settings = get_settings()
    workers = workers or settings.workers
    tol = tol or settings.newton_tol
    base = config.params

    axis1 = _axis_values(spec.axis1, base)
    axis2: List[Optional[float]] = _axis_values(spec.axis2, base) if spec.axis2 is not None else [None]
    spec_doc = spec.model_dump()
    base_doc = base.model_dump()

    def tasks(reverse: bool) -> List[_LineTask]:
        return [_LineTask(base=base_doc, spec=spec_doc, axis2_value=v, axis1_values=axis1,
                          reverse=reverse, tol=tol, isolated=False) for v in axis2]

    logger.info(f"Sweep started | points={len(axis1) * len(axis2)} | workers={workers} | "
                f"bidirectional={spec.bidirectional}")
    forward = _records_by_key(_dispatch(tasks(False), workers))
    backward = _records_by_key(_dispatch(tasks(True), workers)) if spec.bidirectional else {}

    columns = sweep_columns(spec)
    rows, failed, hysteresis = [], 0, []
    for j, v2 in enumerate(axis2):
        for i, v1 in enumerate(axis1):
            record = dict(forward[(v2, i)])
            if spec.bidirectional:
                other = backward[(v2, i)]
                a, b = record.get("photon_number"), other.get("photon_number")
                record["photon_number_reverse"] = b
                flag = False
                if a is not None and b is not None:
                    flag = abs(a - b) > HYSTERESIS_TOL * max(abs(a), abs(b), 1e-300)
                elif record["status"] != other["status"]:
                    flag = True
                record["hysteresis"] = flag
                if flag:
                    hysteresis.append((v1, v2))
            if record["status"] != "ok":
                failed += 1
            row = [v1] + ([v2] if spec.axis2 is not None else []) + [record["status"]]
            row += [record.get(name, math.nan) for name in columns[len(row):]]
            rows.append(row)

    result = SweepResult(columns=columns, rows=rows, failed=failed, total=len(rows),
                         hysteresis=hysteresis, metrics=get_metrics().get_stats())
    logger.info(f"Sweep finished | failed={failed}/{len(rows)} | hysteresis={len(hysteresis)}")
    if hysteresis:
        logger.warning(f"Hysteresis at {len(hysteresis)} points")

    if out_dir is not None:
        write_csv(f"{out_dir}/sweep.csv", columns, rows, config_hash=config.config_hash, units=config.units)
        write_json(f"{out_dir}/metrics.json", result.metrics)

    if result.failure_fraction > MAX_FAILURE_FRACTION:
        raise SweepFailure(failed, len(rows))
    return result
