import logging

import numpy as np
import pandas as pd
from django.conf import settings
from scipy.stats import norm

from aireml.reml import ai_reml_fit
from grm.compute import grm_subset, match_grm
from longitudinal.models import THETA_NAMES
from utils.documents import validate_document
from utils.exceptions import InputError, NumericalError
from utils.parallel import ordered_map
from utils.random import substream

from .models import (
    DOUBLE, LEFT, CombinedEstimate, ParameterCombination, PartitionEstimates, PartitionPlan,
)

logger = logging.getLogger(__name__)

LAMBDA_NAMES = ('lambda1', 'lambda2')
GRADIENT_TOL = 1e-10
MAX_NEWTON = 200
MAX_EXPANSIONS = 200

LEFT_TRUNC = 'left_trunc'
DOUBLE_TRUNC = 'double_trunc'
SIMPLE_AVG = 'simple_avg'
FIXED_EFFECT = 'fixed_effect'


# ============ PARTITIONING ============

def partition_subjects(subject_ids, groups, seed=0):
    """Sub'ektlarni tasodifiy, muvozanatlangan M ta guruhga bo'lish"""
    subject_ids = list(subject_ids)
    n = len(subject_ids)
    groups = int(groups)
    if groups < 1:
        raise InputError(f"Guruhlar soni kamida 1 bo'lishi kerak: {groups}")
    if groups > n:
        raise InputError(f"Guruhlar soni ({groups}) sub'ektlar sonidan ({n}) katta")

    order = substream(seed, 'partition').permutation(n)
    assignments = np.empty(n, dtype=np.intp)
    for m, chunk in enumerate(np.array_split(order, groups)):
        assignments[chunk] = m
    return PartitionPlan(subject_ids=subject_ids, assignments=assignments, groups_count=groups, seed=int(seed))


def partition_fits(data, grm, groups, seed=0, options=None, threads=None):
    """Har bir guruhda alohida AI-REML

    Returns:
        (PartitionPlan, FitResult ro'yxati guruhlar tartibida)
    """
    plan = partition_subjects(data.subject_ids, groups, seed)
    aligned = match_grm(grm, data.subject_ids)

    def fit_group(indices):
        return ai_reml_fit(data.subset(indices), grm_subset(aligned, indices), options)

    fits = ordered_map(fit_group, plan.groups(), threads)
    converged = sum(1 for fit in fits if fit.converged)
    logger.info(f"{plan.groups_count} ta bo'lak baholandi, {converged} tasi yaqinlashdi")
    return plan, fits


# ============ BASELINES ============

def simple_average(estimates):
    """Oddiy o'rtacha, SE = sd / sqrt(M)"""
    x = estimates.estimates
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else None
    return CombinedEstimate(method=SIMPLE_AVG, estimate=mean, se=se, unclamped=mean)


def fixed_effect_meta(estimates):
    """Teskari dispersiya bilan tortilgan o'rtacha"""
    weights = 1.0 / estimates.ses ** 2
    total = float(weights.sum())
    mu = float((weights / total) @ estimates.estimates)
    return CombinedEstimate(method=FIXED_EFFECT, estimate=mu, se=total ** -0.5, unclamped=mu)


# ============ CENSORED LIKELIHOOD ============

def _hazard(z):
    return np.exp(norm.logpdf(z) - norm.logsf(z))


def censored_loglik(mu, estimates):
    """Chegaradagi kuzatuvlar nuqtaviy massa, qolganlari Gauss zichligi"""
    x, s = estimates.estimates, estimates.ses
    lower, upper = estimates.at_lower, estimates.at_upper
    interior = ~(lower | upper)
    total = np.sum(norm.logpdf((x[interior] - mu) / s[interior]) - np.log(s[interior]))
    total += np.sum(norm.logsf(mu / s[lower]))
    total += np.sum(norm.logsf((1.0 - mu) / s[upper]))
    return float(total)


def censored_derivatives(mu, estimates):
    """(l'(mu), l''(mu)) analitik"""
    x, s = estimates.estimates, estimates.ses
    lower, upper = estimates.at_lower, estimates.at_upper
    interior = ~(lower | upper)

    precision = 1.0 / s[interior] ** 2
    first = float(np.sum((x[interior] - mu) * precision))
    second = -float(np.sum(precision))

    z = mu / s[lower]
    h = _hazard(z)
    first -= float(np.sum(h / s[lower]))
    second -= float(np.sum(h * (h - z) / s[lower] ** 2))

    w = (1.0 - mu) / s[upper]
    h = _hazard(w)
    first += float(np.sum(h / s[upper]))
    second -= float(np.sum(h * (h - w) / s[upper] ** 2))
    return first, second


def _bracket(start, estimates):
    """l'(lo) >= 0 >= l'(hi) bo'ladigan oraliq"""
    width = 10.0 * float(estimates.ses.max())
    lo = hi = start
    slope, _ = censored_derivatives(start, estimates)
    for _ in range(MAX_EXPANSIONS):
        if slope > 0:
            lo, hi = hi, hi + width
            slope, _ = censored_derivatives(hi, estimates)
            if slope <= 0:
                return lo, hi
        else:
            lo, hi = lo - width, lo
            slope, _ = censored_derivatives(lo, estimates)
            if slope >= 0:
                return lo, hi
        width *= 2.0
    raise NumericalError("Senzurali ehtimollik maksimumi uchun oraliq topilmadi")


def _maximize(estimates):
    """Himoyalangan Nyuton, oraliqdan chiqsa bisektsiya"""
    start = fixed_effect_meta(estimates).estimate
    lo, hi = _bracket(start, estimates)
    mu = start if lo <= start <= hi else 0.5 * (lo + hi)
    for _ in range(MAX_NEWTON):
        first, second = censored_derivatives(mu, estimates)
        if abs(first) <= GRADIENT_TOL:
            break
        if first > 0:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 1e-15 * max(1.0, abs(mu)):
            break
        candidate = mu - first / second if second < 0 else 0.5 * (lo + hi)
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        mu = candidate
    else:
        logger.warning(f"Nyuton {MAX_NEWTON} qadamda to'xtadi, l'={first:.3e}")
    return mu


def _truncated_mle(estimates, method, upper_bound):
    n_lower = int(estimates.at_lower.sum())
    n_upper = int(estimates.at_upper.sum())
    n_interior = estimates.estimates.size - n_lower - n_upper

    if n_lower + n_upper == 0:
        result = fixed_effect_meta(estimates)
        result.method = method
        return result

    if n_interior == 0 and (n_lower == 0 or n_upper == 0):
        # ehtimollik chegaradan tashqarida cheksiz o'sadi
        bound = 0.0 if n_upper == 0 else 1.0
        _, second = censored_derivatives(bound, estimates)
        logger.warning(f"{estimates.parameter}: barcha kuzatuvlar chegarada ({bound}), baho chegara qiymati")
        return CombinedEstimate(
            method=method, estimate=bound, se=(-second) ** -0.5, unclamped=None, unbounded=True,
        )

    mu = _maximize(estimates)
    _, second = censored_derivatives(mu, estimates)
    if not second < 0:
        raise NumericalError(f"{estimates.parameter}: l''(mu) manfiy emas ({second})")
    clamped = min(max(mu, 0.0), upper_bound)
    return CombinedEstimate(method=method, estimate=clamped, se=(-second) ** -0.5, unclamped=mu)


def left_truncated_mle(estimates):
    """Nolda senzuralangan Gauss bo'yicha MLE; baho max(mu, 0)"""
    return _truncated_mle(estimates, LEFT_TRUNC, np.inf)


def doubly_truncated_mle(estimates):
    """0 va 1 da senzuralangan Gauss bo'yicha MLE; baho [0, 1] ga qirqiladi"""
    return _truncated_mle(estimates, DOUBLE_TRUNC, 1.0)


# ============ COMBINING ============

def combine_estimates(estimates, excluded=None):
    if estimates.regime == LEFT:
        primary = left_truncated_mle(estimates)
    else:
        primary = doubly_truncated_mle(estimates)
    results = {primary.method: primary}
    for combiner in (simple_average, fixed_effect_meta):
        result = combiner(estimates)
        results[result.method] = result
    return ParameterCombination(
        inputs=estimates, results=results, primary=primary.method, excluded=list(excluded or []),
    )


def _usable(values, ses):
    keep = [i for i, (x, s) in enumerate(zip(values, ses)) if x is not None and s is not None and s > 0]
    dropped = [i for i in range(len(values)) if i not in keep]
    return keep, dropped


def combine_fits(fits, boundary_factor=None, lambda_tol=None):
    """Bo'lak natijalarini birlashtirish

    Dispersiyalar chapdan (theta <= factor * floor chegarada), lambda lar ikki
    tomondan senzuralangan MLE bilan. SE si yo'q bo'laklar chiqarib tashlanadi.

    Returns:
        {parametr: ParameterCombination yoki None}
    """
    fits = list(fits)
    if not fits:
        raise InputError("Birlashtirish uchun kamida bitta natija kerak")
    factor = settings.META_VARIANCE_BOUNDARY_FACTOR if boundary_factor is None else boundary_factor
    tol = settings.META_LAMBDA_BOUNDARY_TOL if lambda_tol is None else lambda_tol

    columns = []
    for s, name in enumerate(THETA_NAMES):
        values = [float(fit.theta_hat.to_array()[s]) for fit in fits]
        ses = [fit.se_theta[s] for fit in fits]
        thresholds = [factor * (fit.floor or 0.0) for fit in fits]
        columns.append((name, LEFT, values, ses, thresholds))
    for index, name in enumerate(LAMBDA_NAMES):
        values = [getattr(fit.xi_hat, name) for fit in fits]
        ses = [fit.se_xi[index] for fit in fits]
        columns.append((name, DOUBLE, values, ses, None))

    combined = {}
    for name, regime, values, ses, thresholds in columns:
        keep, dropped = _usable(values, ses)
        if dropped:
            logger.warning(f"{name}: {len(dropped)} ta bo'lak SE siz, chiqarib tashlandi")
        if not keep:
            combined[name] = None
            continue
        estimates = PartitionEstimates(
            parameter=name,
            estimates=[values[i] for i in keep],
            ses=[ses[i] for i in keep],
            regime=regime,
        )
        if regime == LEFT:
            estimates.detect_boundaries(threshold=np.array([thresholds[i] for i in keep]))
        else:
            estimates.detect_boundaries(tol=tol)
        combined[name] = combine_estimates(estimates, excluded=dropped)

    summary = ', '.join(
        f'{name}={c.combined.estimate:.4f}' for name, c in combined.items() if c is not None
    )
    logger.info(f"{len(fits)} ta bo'lak birlashtirildi: {summary}")
    return combined


def combine_table(frame, boundary_factor=None, lambda_tol=None):
    """parameter, estimate, se, regime (, floor) ustunli jadvalni birlashtirish"""
    from .serializers import EstimatesTableSerializer

    factor = settings.META_VARIANCE_BOUNDARY_FACTOR if boundary_factor is None else boundary_factor
    tol = settings.META_LAMBDA_BOUNDARY_TOL if lambda_tol is None else lambda_tol

    records = frame.astype(object).where(pd.notna(frame), None).to_dict(orient='records')
    rows = validate_document(EstimatesTableSerializer, {'rows': records}, 'baholar jadvali')['rows']

    order = list(dict.fromkeys(row['parameter'] for row in rows))
    combined = {}
    for name in order:
        group = [row for row in rows if row['parameter'] == name]
        regimes = {row['regime'] for row in group}
        if len(regimes) != 1:
            raise InputError(f"{name}: bir nechta rejim berilgan {sorted(regimes)}")
        regime = regimes.pop()
        estimates = PartitionEstimates(
            parameter=name,
            estimates=[row['estimate'] for row in group],
            ses=[row['se'] for row in group],
            regime=regime,
        )
        if regime == LEFT:
            thresholds = np.array([factor * (row.get('floor') or 0.0) for row in group])
            estimates.detect_boundaries(threshold=thresholds)
        else:
            estimates.detect_boundaries(tol=tol)
        combined[name] = combine_estimates(estimates)
    return combined


def partition_table(fits, combined):
    """parameter, part_1 ... part_M, combined, combined_se ustunli jadval"""
    rows = []
    for s, name in enumerate(THETA_NAMES + LAMBDA_NAMES):
        row = {'parameter': name}
        for m, fit in enumerate(fits, start=1):
            if s < len(THETA_NAMES):
                value = float(fit.theta_hat.to_array()[s])
            else:
                value = getattr(fit.xi_hat, name)
            row[f'part_{m}'] = np.nan if value is None else value
        result = combined.get(name)
        row['combined'] = np.nan if result is None else result.combined.estimate
        se = None if result is None else result.combined.se
        row['combined_se'] = np.nan if se is None else se
        rows.append(row)
    return pd.DataFrame(rows)
