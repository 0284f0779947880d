import logging

import numpy as np
from scipy.stats import median_abs_deviation

from aireml.models import WALD_Z
from aireml.reml import ai_reml_fit
from longitudinal.models import THETA_NAMES
from metaanalysis.combine import combine_fits, partition_fits
from rehe.estimator import rehe_fit
from utils.exceptions import LghError
from utils.parallel import dispatch
from utils.random import derive_seed

from .models import SUMMARY_PARAMETERS, ExperimentSummary, ScenarioConfig, parse_method
from .simulate import simulate_dataset, simulation_grm

logger = logging.getLogger(__name__)

MAD_SCALE = 1.4826


# ============ ONE REPLICATE ============

def _fit_estimates(fit):
    values = dict(zip(THETA_NAMES, fit.theta_hat.to_array().tolist()))
    values['lambda1'] = fit.xi_hat.lambda1
    values['lambda2'] = fit.xi_hat.lambda2
    ses = dict(zip(THETA_NAMES, fit.se_theta))
    ses['lambda1'], ses['lambda2'] = fit.se_xi[0], fit.se_xi[1]
    return values, ses


def _combined_estimates(combined):
    values, ses = {}, {}
    for name in SUMMARY_PARAMETERS:
        result = combined.get(name)
        values[name] = None if result is None else result.combined.estimate
        ses[name] = None if result is None else result.combined.se
    return values, ses


def _interval(estimate, se):
    if estimate is None or se is None:
        return None
    return [min(max(estimate - WALD_Z * se, 0.0), 1.0), min(max(estimate + WALD_Z * se, 0.0), 1.0)]


def fit_method(method, data, grm, seed):
    """Bitta usul bilan baholash, natija JSON ga mos lug'at"""
    kind, groups = parse_method(method)
    if kind == 'rehe':
        fit = rehe_fit(data, grm, threads=1)
        values, _ = _fit_estimates(fit)
        ses = {name: None for name in SUMMARY_PARAMETERS}
        converged = True
    elif kind == 'aireml':
        fit = ai_reml_fit(data, grm)
        values, ses = _fit_estimates(fit)
        converged = fit.converged
    else:
        _, fits = partition_fits(data, grm, groups, seed=seed, threads=1)
        values, ses = _combined_estimates(combine_fits(fits))
        converged = all(f.converged for f in fits)

    intervals = {}
    if kind != 'rehe':
        intervals = {name: _interval(values[name], ses[name]) for name in ('lambda1', 'lambda2')}
    return {'estimates': values, 'ses': ses, 'intervals': intervals, 'converged': converged, 'error': None}


def replicate_estimates(config, index):
    """r-takror: yangi ma'lumotlar, GRM va barcha usullar

    Takror urug'i (seed, 'replicate', r) dan olinadi.
    """
    seed = derive_seed(config.seed, 'replicate', index)
    geno, data, _, mask = simulate_dataset(config, seed=seed)
    grm = simulation_grm(config, geno, mask)

    methods = {}
    for method in config.methods:
        try:
            methods[method] = fit_method(method, data, grm, seed)
        except LghError as e:
            logger.warning(f"Takror {index}, {method}: {e}")
            methods[method] = {'estimates': None, 'ses': None, 'intervals': {}, 'converged': False, 'error': str(e)}
    return {'replicate': int(index), 'seed': int(seed), 'methods': methods}


# ============ EXPERIMENT ============

def _summary_row(config, method, parameter, results):
    truth = config.truth[parameter]
    values, ses, covered = [], [], []
    failures = 0
    for result in results:
        estimate = result['methods'][method]
        if estimate['error'] is not None:
            failures += 1
            continue
        value = estimate['estimates'][parameter]
        if value is None:
            continue
        values.append(value)
        se = estimate['ses'][parameter]
        if se is not None:
            ses.append(se)
        interval = estimate['intervals'].get(parameter)
        if interval is not None and truth is not None:
            covered.append(interval[0] <= truth <= interval[1])

    values = np.asarray(values, dtype=np.float64)
    n = values.size
    return {
        'parameter': parameter,
        'scenario': config.name,
        'method': method,
        'true': truth,
        'mean': float(values.mean()) if n else None,
        'median': float(np.median(values)) if n else None,
        'se': float(np.mean(ses)) if ses else None,
        'emp_se': float(values.std(ddof=1)) if n > 1 else None,
        'mad': float(median_abs_deviation(values, scale=1 / MAD_SCALE)) if n > 1 else None,
        'coverage': float(np.mean(covered)) if covered else None,
        'n': int(n),
        'failures': int(failures),
    }


def summarize_experiment(config, results):
    rows = [
        _summary_row(config, method, parameter, results)
        for method in config.methods
        for parameter in SUMMARY_PARAMETERS
    ]
    return ExperimentSummary(config=config, rows=rows, replicates=list(results))


def run_experiment(config, threads=None):
    """Barcha takrorlar, natija takror tartibida yig'iladi"""
    from .tasks import run_replicate

    if not isinstance(config, ScenarioConfig):
        config = ScenarioConfig.from_dict(config)
    logger.info(
        f"Tajriba '{config.name}': {config.replicates} takror, N={config.n_subjects}, J={config.visits}, "
        f"usullar={list(config.methods)}"
    )
    payload = config.as_dict()
    results = dispatch(run_replicate, [(payload, r) for r in range(config.replicates)], threads)
    results = sorted(results, key=lambda result: result['replicate'])

    summary = summarize_experiment(config, results)
    for method in config.methods:
        row = summary.row(method, 'lambda2')
        logger.info(f"{method}: lambda2 o'rtacha={row['mean']}, mediana={row['median']}, xato={row['failures']}")
    return summary
