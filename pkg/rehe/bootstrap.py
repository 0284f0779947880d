import logging

import numpy as np
from django.conf import settings
from scipy import linalg
from scipy.stats import median_abs_deviation

from longitudinal.models import VarianceComponents
from longitudinal.structure import design_matrix
from utils.exceptions import InputError, LghError, NumericalError
from utils.parallel import ordered_map

from .estimator import rehe_fit
from .models import BOOTSTRAP_PARAMETERS, BootstrapSummary

logger = logging.getLogger(__name__)

MAD_SCALE = 1.4826
NORMAL_Z = 1.959963984540054


def grm_square_root(grm, floor=None):
    """G = L L^T, xos qiymatlar floor dan pastga tushmaydi"""
    floor = settings.GRM_EIGEN_FLOOR if floor is None else floor
    try:
        eigenvalues, vectors = linalg.eigh(grm.values)
    except linalg.LinAlgError as e:
        raise NumericalError(f"GRM ni faktorlashda xato: {e}")
    clipped = int(np.sum(eigenvalues < floor))
    if clipped:
        logger.debug(f"GRM: {clipped} ta xos qiymat {floor} ga ko'tarildi")
    root = vectors * np.sqrt(np.maximum(eigenvalues, floor))
    if not np.all(np.isfinite(root)):
        raise NumericalError("GRM ildizi chekli emas")
    return root


def sample_from_model(beta, theta, data, grm, seed, root=None):
    """y = A beta + g + g* t + b0 + b1 t + e

    Tasodifiy sonlar tartibi: g, g*, b0, b1, e.
    """
    theta = theta.to_array() if isinstance(theta, VarianceComponents) else np.asarray(theta, dtype=np.float64)
    if np.any(theta < 0):
        raise InputError("theta manfiy bo'lmasligi kerak")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if root is None:
        root = grm_square_root(grm)
    a, _ = design_matrix(data)
    n = data.n_subjects
    rs = data.record_subject
    t = data.times

    g = np.sqrt(theta[0]) * (root @ rng.standard_normal(n))
    g_star = np.sqrt(theta[1]) * (root @ rng.standard_normal(n))
    b0 = np.sqrt(theta[2]) * rng.standard_normal(n)
    b1 = np.sqrt(theta[3]) * rng.standard_normal(n)
    e = np.sqrt(theta[4]) * rng.standard_normal(data.n_records)
    return a @ np.asarray(beta, dtype=np.float64) + g[rs] + g_star[rs] * t + b0[rs] + b1[rs] * t + e


def _estimate_vector(fit):
    xi = fit.xi_hat
    return np.concatenate([
        fit.theta_hat.to_array(),
        [np.nan if xi.lambda1 is None else xi.lambda1, np.nan if xi.lambda2 is None else xi.lambda2],
    ])


def summarize_replicates(estimate, replicates, requested, failures=0):
    """EmpSE (ddof=1), MAD*1.4826, foizli va normal 95% oraliqlar"""
    replicates = np.asarray(replicates, dtype=np.float64).reshape(-1, len(estimate))
    width = len(estimate)
    emp_se = np.full(width, np.nan)
    mad = np.full(width, np.nan)
    percentile_ci = np.full((width, 2), np.nan)
    for i in range(width):
        column = replicates[:, i]
        column = column[np.isfinite(column)]
        if column.size < 2:
            continue
        emp_se[i] = np.std(column, ddof=1)
        mad[i] = median_abs_deviation(column, scale=1.0 / MAD_SCALE)
        percentile_ci[i] = np.percentile(column, [2.5, 97.5])
    normal_ci = np.column_stack([estimate - NORMAL_Z * emp_se, estimate + NORMAL_Z * emp_se])
    return BootstrapSummary(
        parameters=BOOTSTRAP_PARAMETERS,
        estimate=np.asarray(estimate, dtype=np.float64),
        replicates=replicates,
        requested=int(requested),
        emp_se=emp_se,
        mad=mad,
        percentile_ci=percentile_ci,
        normal_ci=normal_ci,
        failures=int(failures),
    )


def parametric_bootstrap(fit, data, grm, replicates=None, seed=0, threads=None):
    """(beta, theta) dan B ta sintetik to'plam, har biriga REHE

    r-takror urug'i seed + r; natija ishchilar soniga bog'liq emas.
    """
    replicates = settings.REHE_BOOTSTRAP_REPS if replicates is None else int(replicates)
    if replicates < 1:
        raise InputError("Bootstrap takrorlari soni kamida 1 bo'lishi kerak")
    root = grm_square_root(grm)

    def one_replicate(index):
        try:
            y = sample_from_model(fit.beta_hat, fit.theta_hat, data, grm, seed + index, root=root)
            return _estimate_vector(rehe_fit(data.with_phenotypes(y), grm, threads=1))
        except LghError as e:
            logger.warning(f"Bootstrap takrori {index} muvaffaqiyatsiz: {e}")
            return None

    results = ordered_map(one_replicate, range(replicates), threads)
    successful = [r for r in results if r is not None]
    failures = replicates - len(successful)
    if failures:
        logger.warning(f"Bootstrap: {failures}/{replicates} takror muvaffaqiyatsiz")

    summary = summarize_replicates(
        _estimate_vector(fit), np.array(successful).reshape(-1, 7), replicates, failures,
    )
    logger.info(f"Bootstrap tugadi: {summary.successful} ta takror")
    return summary
