import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from algorithms import cfs, counterexample, covariance, deconv, gaussian
from algorithms.direct_simulation import direct_simulate, riemann_covariance
from models.config import RunConfig, load_config
from models.errors import MacfsError, NumericalError, ValidationError
from models.gaussian_vector import GaussianVector
from models.gram import GramMatrix
from models.kernel import Example31Spec, MovingAverageKernel
from utils import artifacts
from utils.monitoring import RunMonitor

logger = logging.getLogger('macfs')

SUBCOMMANDS = ('gram', 'simulate', 'check-cfs', 'counterexample', 'deconvolve', 'tube')
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

NAMED_PHI: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    't': lambda t: t,
    't2': lambda t: t ** 2,
    'tsin': lambda t: t * np.sin(np.pi * t),
}


def build_process(config: RunConfig):
    process = config.process
    if process.family == 'tabulated' and process.table is not None:
        return artifacts.load_tabulated_csv(process.table, scale=process.scale)
    return process.build()


def build_gram(process, config: RunConfig, monitor: RunMonitor) -> GramMatrix:
    grid = config.grid.build()
    numerics = config.numerics
    with monitor.stage('gram'):
        if isinstance(process, Example31Spec):
            gram = covariance.example31_gram(process, grid, quad_step=numerics.quad_step, n_threads=config.threads)
        else:
            gram = covariance.gram(process, grid, L=numerics.L, quad_step=numerics.quad_step, mode=numerics.mode,
                                   normalize=numerics.normalize, order=numerics.order,
                                   check_convergence=numerics.check_convergence, conv_rtol=numerics.conv_rtol,
                                   max_refinements=numerics.max_refinements,
                                   max_tail_error=numerics.max_tail_error, psd_tol=numerics.psd_tol,
                                   n_threads=config.threads)
    monitor.log_gram(gram.size)
    return gram


def _vector_source(name: str, size: int) -> np.ndarray:
    if name == 'zero':
        return np.zeros(size)
    return artifacts.read_vector_csv(name, field='tube.targets')


def cmd_gram(config: RunConfig, out: Path, monitor: RunMonitor) -> List[Path]:
    gram = build_gram(build_process(config), config, monitor)
    return list(artifacts.save_gram(gram, out))


def cmd_simulate(config: RunConfig, out: Path, monitor: RunMonitor) -> List[Path]:
    process = build_process(config)
    gram = build_gram(process, config, monitor)
    sim = config.simulate
    written, summary = [], {'n_paths': sim.n_paths, 'seed': config.seed, 'methods': {}}
    for method in sim.methods:
        with monitor.stage(f'simulate-{method}'):
            if method == 'cholesky':
                ensemble = gaussian.sample(GaussianVector.centered(gram), sim.n_paths, config.seed,
                                           n_threads=config.threads, tau_rank=config.numerics.tau_rank)
            else:
                ensemble = direct_simulate(process, gram.grid, sim.n_paths, config.seed, substeps=sim.substeps,
                                           L=gram.L if gram.mode == 'full' else config.numerics.L,
                                           n_threads=config.threads)
        monitor.log_paths(ensemble.n_paths)
        written.extend(artifacts.save_ensemble(ensemble, out, f'paths_{method}'))

        if method == 'direct' and gram.mode == 'fresh':
            # the direct scheme always carries the history part
            summary['methods'][method] = {'compared': False,
                                          'reason': 'direct paths sample the full process, the Gram is fresh-mode'}
            continue
        # direct paths are never normalized
        reference = gram.sigma * (gram.normalization if method == 'direct' else 1.0)
        empirical = gaussian.empirical_covariance(ensemble)
        errors = gaussian.covariance_standard_errors(reference, ensemble.n_paths)
        entry = {
            'max_abs_deviation': float(np.max(np.abs(empirical - reference))),
            'max_standard_error': float(np.max(errors)),
        }
        if method == 'direct' and gram.mode in ('full', 'example31'):
            scheme = riemann_covariance(process, gram.grid, sim.substeps, L=ensemble.L)
            entry['discretization_allowance'] = float(np.max(np.abs(scheme.sigma - reference)))
        summary['methods'][method] = entry
    written.append(artifacts.write_json(out / 'simulate.json', summary))
    return written


def cmd_check_cfs(config: RunConfig, out: Path, monitor: RunMonitor) -> List[Path]:
    gram = build_gram(build_process(config), config, monitor)
    weights = [artifacts.read_vector_csv(path, field='cfs.extra_weights')
               for path in config.cfs.extra_weights]
    targets: Sequence[Tuple[str, np.ndarray]] = ()
    if config.cfs.with_tubes:
        targets = [(name, _vector_source(name, gram.size)) for name in config.tube.targets]
    with monitor.stage('check-cfs'):
        report = cfs.check_cfs(gram, tau_cfs=config.numerics.tau_cfs, tau_degen=config.numerics.tau_degen,
                               extra_weights=weights, k_smallest=config.cfs.k_smallest, tube_targets=targets,
                               eps_list=config.tube.eps, n_paths=config.tube.n_paths, seed=config.seed,
                               n_threads=config.threads)
    payload = {'gram': gram.metadata(), 'report': report}
    return [artifacts.write_json(out / 'cfs_report.json', payload)]


def cmd_tube(config: RunConfig, out: Path, monitor: RunMonitor) -> List[Path]:
    process = build_process(config)
    gram = build_gram(process, config, monitor)
    gv = GaussianVector.centered(gram)
    estimates = []
    with monitor.stage('tube'):
        for name in config.tube.targets:
            estimates.extend(cfs.tube_probabilities(gv, _vector_source(name, gram.size), config.tube.eps,
                                                    config.tube.n_paths, config.seed, config.threads, label=name))
    monitor.log_paths(config.tube.n_paths * len(config.tube.targets))
    payload = {'gram': gram.metadata(), 'estimates': estimates}

    grid = gram.grid
    brownian = isinstance(process, MovingAverageKernel) and process.family == 'fbm' and process.hurst == 0.5
    if brownian and grid.times[0] == 0.0 and grid.is_uniform() and 'zero' in config.tube.targets:
        step = grid.min_spacing
        payload['brownian_series'] = [
            {'eps': eps,
             'continuous': cfs.brownian_sup_series(eps / process.scale, grid.T),
             'monitored': cfs.brownian_sup_series(eps / process.scale, grid.T, step=step)}
            for eps in config.tube.eps
        ]
    return [artifacts.write_json(out / 'tube.json', payload)]


def cmd_counterexample(config: RunConfig, out: Path, monitor: RunMonitor) -> List[Path]:
    process = build_process(config)
    if not isinstance(process, Example31Spec):
        raise ValidationError("counterexample needs process.family = 'example31'", field='process.family')
    block = config.counterexample
    with monitor.stage('counterexample'):
        summary = counterexample.run_counterexample(process, block.verdict_steps, block.trapezoid_steps,
                                                    block.compare_published, n_threads=config.threads)
    table = np.array([[row.steps, row.trapezoid_variance, row.var_x1, row.ratio] for row in summary.rows])
    csv_path = artifacts.write_matrix_csv(out / 'counterexample.csv', table,
                                          header='steps,trapezoid_variance,var_x1,ratio')
    return [artifacts.write_json(out / 'counterexample.json', summary), csv_path]


def _deconv_inputs(config: RunConfig):
    block = config.deconv
    named_h = {
        'one': np.ones_like,
        'gap': lambda x: np.where(x < -block.gap, 1.0, 0.0),
    }
    h_fn, phi_fn = named_h.get(block.h), NAMED_PHI.get(block.phi)
    times = block.step * np.arange(int(round(block.T / block.step)) + 1)
    h = h_fn(times - block.T) if h_fn else artifacts.read_vector_csv(block.h, field='deconv.h')
    phi = phi_fn(times) if phi_fn else artifacts.read_vector_csv(block.phi, field='deconv.phi')
    return h, phi, h_fn, phi_fn


def cmd_deconvolve(config: RunConfig, out: Path, monitor: RunMonitor) -> List[Path]:
    block = config.deconv
    h, phi, h_fn, phi_fn = _deconv_inputs(config)
    with monitor.stage('deconvolve'):
        result = deconv.solve_ladder(h, phi, block.step, block.lambdas, n_threads=config.threads)
    monitor.log_solves(len(block.lambdas))
    payload = {
        'lam': result.lam,
        'sup_error': result.sup_error,
        'l2_error': result.l2_error,
        'edge_h': result.edge_h,
        'step': result.step,
        'ladder': [{'lam': lam, 'sup_error': err} for lam, err in result.ladder],
    }
    if h_fn is not None and phi_fn is not None and block.refinement_ks:
        with monitor.stage('refinement-ladder'):
            payload['refinement'] = deconv.refinement_ladder(h_fn, phi_fn, block.refinement_ks, block.T)
        monitor.log_solves(len(block.refinement_ks))
    g_path = artifacts.write_matrix_csv(out / 'deconv_g.csv', result.g.reshape(-1, 1), header='g')
    return [artifacts.write_json(out / 'deconv.json', payload), g_path]


COMMANDS = {
    'gram': cmd_gram,
    'simulate': cmd_simulate,
    'check-cfs': cmd_check_cfs,
    'counterexample': cmd_counterexample,
    'deconvolve': cmd_deconvolve,
    'tube': cmd_tube,
}


def _report_error(exc: MacfsError, out: Optional[Path]) -> None:
    diagnostic = exc.to_dict()
    print(json.dumps(diagnostic, sort_keys=True), file=sys.stderr)
    if out is not None:
        try:
            artifacts.write_json(out / 'diagnostics.json', diagnostic)
        except OSError:
            logger.warning("could not write diagnostics to %s", out)


def run(subcommand: str, config: RunConfig, monitor: Optional[RunMonitor] = None) -> int:
    """Execute one subcommand; returns the exit status."""
    monitor = monitor or RunMonitor()
    out = Path(config.output_dir)
    try:
        if subcommand not in COMMANDS:
            raise ValidationError(f"unknown subcommand {subcommand!r}", field='subcommand')
        written = COMMANDS[subcommand](config, out, monitor)
    except ValidationError as exc:
        logger.error("validation error: %s", exc.message)
        _report_error(exc, out)
        return EXIT_VALIDATION
    except NumericalError as exc:
        logger.error("numerical failure: %s", exc.message)
        _report_error(exc, out)
        return EXIT_NUMERICAL
    for path in written:
        logger.info("wrote %s", path)
    logger.info("performance summary: %s", monitor.get_performance_summary())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Gaussian moving averages: Gram matrices, simulation, "
                                                 "conditional full support diagnostics and deconvolution.")
    parser.add_argument('subcommand', choices=SUBCOMMANDS)
    parser.add_argument('--config', help="JSON configuration file")
    parser.add_argument('--seed', type=int)
    parser.add_argument('--out-dir', dest='out_dir')
    parser.add_argument('--threads', type=int)
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help="override a configuration value, e.g. --set process.hurst=0.75")
    parser.add_argument('--verbose', action='store_true')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    try:
        config = load_config(args.config, args.overrides, seed=args.seed, output_dir=args.out_dir,
                             threads=args.threads)
    except ValidationError as exc:
        logger.error("invalid configuration: %s", exc.message)
        _report_error(exc, Path(args.out_dir) if args.out_dir else None)
        return EXIT_VALIDATION
    return run(args.subcommand, config)


if __name__ == "__main__":
    sys.exit(main())
