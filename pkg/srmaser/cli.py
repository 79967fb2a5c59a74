"""
CLI interface for srmaser.
"""

import argparse
import json
import sys
from typing import List, Optional

from srmaser.cache import configure_cache
from srmaser.config import get_settings, load_config
from srmaser.errors import (
    ConfigError,
    InvariantViolation,
    ParameterError,
    SolverError,
    SweepFailure,
    UnknownPresetError,
)
from srmaser.logger_config import get_logger, setup_logging

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_SWEEP = 4


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        '--config',
        type=str,
        default=None,
        help='Run config file (key = value lines)'
    )
    parser.add_argument(
        '--preset',
        type=str,
        default=None,
        help='Experiment preset seeding the parameters (see: srmaser presets)'
    )
    parser.add_argument(
        '--override',
        action='append',
        default=[],
        metavar='KEY=VALUE',
        help='Config line applied after the file; repeatable'
    )
    parser.add_argument(
        '--out',
        type=str,
        default='out',
        help='Output directory (default: out)'
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='srmaser',
        description='Superradiant spin-ensemble maser simulator - steady states, spectra, sweeps',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  srmaser presets --json
  srmaser single --preset breeze2018 --override eta_over_gamma=1000
  srmaser sweep --config fig3.cfg --workers 4 --out out/fig3
  srmaser fig2 --preset breeze2018 --out out/fig2
  srmaser oracle-check --fixtures fixtures.json

Exit codes: 0 success, 2 config error, 3 solver failure, 4 too many failed sweep points
        """
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        '--log-level',
        type=str,
        default=None,
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
        help='Logging level (default: SRMASER_LOG_LEVEL or INFO)'
    )
    common.add_argument(
        '--workers',
        type=int,
        default=None,
        help='Worker processes for sweeps (default: SRMASER_WORKERS or 1)'
    )

    sub = parser.add_subparsers(dest='command', required=True)

    single = sub.add_parser('single', parents=[common], help='Steady state, spectrum and diagnostics for one point')
    _add_run_options(single)

    sweep = sub.add_parser('sweep', parents=[common], help='One- or two-axis parameter grid')
    _add_run_options(sweep)

    fig2 = sub.add_parser('fig2', parents=[common], help='Sub-ensemble spectra over a range of pump rates')
    _add_run_options(fig2)

    presets = sub.add_parser('presets', parents=[common], help='List the experiment presets')
    presets.add_argument(
        '--json',
        action='store_true',
        help='Output presets in JSON format'
    )

    oracle = sub.add_parser('oracle-check', parents=[common], help='Compare mean-field and exact small-N dynamics')
    oracle.add_argument(
        '--fixtures',
        type=str,
        default=None,
        help='JSON fixture list (default: built-in fixtures)'
    )
    oracle.add_argument(
        '--out',
        type=str,
        default=None,
        help='Write oracle_report.json here'
    )
    return parser


def _print_presets(as_json: bool) -> None:
    from srmaser.model import derive_rates, list_presets

    rows = []
    for preset in list_presets():
        rates = derive_rates(preset.params)
        rows.append({
            'name': preset.name,
            'reference': preset.reference,
            'coupling_regime': preset.coupling_regime.value,
            'params': preset.params.model_dump(),
            'collective_coupling': rates.collective_coupling,
            'gamma_purcell': rates.gamma_purcell,
            'assumed': list(preset.assumed),
            'table_inconsistent': list(preset.table_inconsistent),
        })
    if as_json:
        print(json.dumps(rows, indent=2))
        return
    for row in rows:
        p = row['params']
        print(f"{row['name']:<14} {row['coupling_regime']:<7} N={p['n_spins']:.3g}  "
              f"g={p['g']:.4g}  kappa_c={p['kappa_c']:.4g}  chi={p['chi']:.4g}  "
              f"sqrt(N)g={row['collective_coupling']:.4g} rad/s")


def _run(args: argparse.Namespace) -> int:
    from srmaser import runner, sweep

    if args.command == 'presets':
        _print_presets(args.json)
        return EXIT_OK

    if args.command == 'oracle-check':
        fixtures = runner.load_fixtures(args.fixtures) if args.fixtures else None
        results = runner.run_oracle_check(fixtures, out_dir=args.out)
        for item in results:
            status = 'PASS' if item['passed'] else 'FAIL'
            photon = item['report']['max_relative']['photon_number']
            print(f"{status}  {item['name']:<24} photon discrepancy {photon:.3e}")
        return EXIT_OK if all(item['passed'] for item in results) else EXIT_SOLVER

    config = load_config(args.config, args.override, preset=args.preset)
    if args.command == 'single':
        result = runner.run_single(config, out_dir=args.out)
        summary = result.summary
        print(f"regime: {summary['regime']}")
        print(f"photon number: {summary['steady_state']['photon_number']:.6g}")
        print(f"linewidth (FWHM, rad/s): {summary['linewidth_fwhm']}")
    elif args.command == 'sweep':
        if config.sweep is None:
            raise ConfigError("sweep needs sweep.axis1.* keys")
        result = sweep.run_sweep(config, workers=args.workers, out_dir=args.out)
        print(f"{result.total} points, {result.failed} failed, {len(result.hysteresis)} hysteresis flags")
    elif args.command == 'fig2':
        result = runner.run_fig2(config, out_dir=args.out)
        print(f"{len(result.entries)} spectra, {result.failed} failed")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> None:
    """Main CLI entry point; exits with the code of the outcome."""
    parser = build_parser()
    args = parser.parse_args(argv)

    settings = get_settings()
    setup_logging(log_level=args.log_level or settings.log_level, log_dir=settings.log_dir)
    configure_cache(settings.cache_size)
    logger = get_logger(__name__)

    try:
        code = _run(args)
    except (ConfigError, ParameterError, UnknownPresetError) as e:
        print(f"Config error: {e}", file=sys.stderr)
        code = EXIT_CONFIG
    except SweepFailure as e:
        print(f"Sweep failed: {e}", file=sys.stderr)
        code = EXIT_SWEEP
    except (SolverError, InvariantViolation) as e:
        logger.error(f"Solver failure: {e}", exc_info=True)
        print(f"Solver failure: {e}", file=sys.stderr)
        code = EXIT_SOLVER
    sys.exit(code)


if __name__ == '__main__':
    main()
