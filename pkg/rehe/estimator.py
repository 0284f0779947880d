import itertools
import logging

import numpy as np
from django.conf import settings
from scipy import linalg

from aireml.models import FitResult
from longitudinal.models import HeritabilityPair, VarianceComponents
from longitudinal.structure import check_alignment, design_matrix
from utils.exceptions import DegenerateSystemError, RankDeficientError
from utils.parallel import ordered_map

from .models import NormalEquations

logger = logging.getLogger(__name__)

SUBSYSTEM_CONDITION_LIMIT = 1e12


# ============ FIXED EFFECTS ============

def ols_fixed_effects(y, a):
    """beta = (A^T A)^-1 A^T y, y* = y - A beta"""
    y = np.asarray(y, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    rank = np.linalg.matrix_rank(a)
    if rank < a.shape[1]:
        for column in range(a.shape[1]):
            if np.linalg.matrix_rank(a[:, :column + 1]) < column + 1:
                break
        raise RankDeficientError(f"Dizayn matritsasi to'liq rangli emas (ustun {column})", column=column)
    beta, *_ = linalg.lstsq(a, y)
    return beta, y - a @ beta


# ============ NORMAL EQUATIONS ============

def subject_aggregates(data, residuals):
    """Har bir sub'ekt uchun n, sum t, sum t^2, sum y, sum y t, sum y^2"""
    rs = data.record_subject
    size = data.n_subjects
    t = data.times

    def total(values):
        return np.bincount(rs, weights=values, minlength=size)

    return {
        'n': data.counts.astype(np.float64),
        't1': total(t),
        't2': total(t * t),
        'y1': total(residuals),
        'yt': total(residuals * t),
        'y2': total(residuals * residuals),
    }


def accumulate_normal_equations(data, grm, residuals=None, block_size=None, threads=None):
    """Juft ko'paytmalar yo'qotishining kvadratik shakli, O(N^2)

    F(theta) = sum_{j,k} (y_j y_k - V_jk(theta))^2 barcha tartiblangan
    juftliklar bo'yicha. H_s = F_s K_s F_s^T bo'lgani uchun
    <H_a, H_b> = m^T (K_a o K_b) m, bu yerda m in {n, T1, T2}.
    """
    check_alignment(data, grm)
    residuals = data.phenotypes if residuals is None else np.asarray(residuals, dtype=np.float64)
    block_size = max(1, int(block_size or settings.REHE_ACCUMULATE_BLOCK))
    agg = subject_aggregates(data, residuals)
    g = grm.values
    d = np.diag(g)
    weights = np.column_stack([agg['n'], agg['t1'], agg['t2']])
    sums = np.column_stack([agg['y1'], agg['yt']])

    def block_terms(start):
        rows = slice(start, start + block_size)
        g_rows = g[rows]
        squared = (g_rows * g_rows) @ weights
        linear = g_rows @ sums
        return weights[rows].T @ squared, sums[rows].T @ linear

    squared_forms = np.zeros((3, 3))
    linear_forms = np.zeros((2, 2))
    # bloklar qat'iy tartibda qo'shiladi
    for squared, linear in ordered_map(block_terms, range(0, data.n_subjects, block_size), threads):
        squared_forms += squared
        linear_forms += linear

    n, t1, t2 = agg['n'], agg['t1'], agg['t2']
    half = np.zeros((5, 5))
    half[0, 0] = squared_forms[0, 0]
    half[0, 1] = squared_forms[1, 1]
    half[1, 1] = squared_forms[2, 2]
    half[0, 2] = np.sum(d * n * n)
    half[0, 3] = half[1, 2] = np.sum(d * t1 * t1)
    half[1, 3] = np.sum(d * t2 * t2)
    half[2, 2] = np.sum(n * n)
    half[2, 3] = np.sum(t1 * t1)
    half[3, 3] = np.sum(t2 * t2)
    half[0, 4] = np.sum(d * n)
    half[1, 4] = np.sum(d * t2)
    half[2, 4] = np.sum(n)
    half[3, 4] = np.sum(t2)
    half[4, 4] = np.sum(n)
    upper = np.triu(half)
    d_matrix = 2.0 * (upper + np.triu(upper, 1).T)

    y2_total = float(np.sum(agg['y2']))
    c = 2.0 * np.array([
        linear_forms[0, 0],
        linear_forms[1, 1],
        np.sum(agg['y1'] ** 2),
        np.sum(agg['yt'] ** 2),
        y2_total,
    ])

    records = int(np.sum(n))
    within = int(np.sum(n * (n - 1)))
    counts = {
        'diagonal': records,
        'within_subject_pairs': within,
        'between_subject_pairs': records * records - int(np.sum(n * n)),
    }
    return NormalEquations(d=d_matrix, c=c, constant=y2_total ** 2, counts=counts)


# ============ NON-NEGATIVE QUADRATIC PROGRAM ============

def solve_nnls(equations):
    """min F(theta), theta >= 0: 32 ta faol to'plamni to'liq sanab chiqish

    Har bir to'plam uchun erkin komponentlar bo'yicha sistema yechiladi,
    mumkin (theta >= 0) va KKT (qisilganlar gradienti >= 0) shartlarini
    qanoatlantiruvchilar ichidan F minimal bo'lgani olinadi.
    """
    d, c = equations.d, equations.c
    scale = max(1.0, float(np.max(np.abs(d))), float(np.max(np.abs(c))))
    tol = 1e-10 * scale

    candidates = []
    for clamped_count in range(6):
        for clamped in itertools.combinations(range(5), clamped_count):
            free = [s for s in range(5) if s not in clamped]
            theta = np.zeros(5)
            if free:
                sub = d[np.ix_(free, free)]
                if np.linalg.cond(sub) > SUBSYSTEM_CONDITION_LIMIT:
                    continue
                try:
                    theta[free] = linalg.solve(sub, c[free], assume_a='sym')
                except linalg.LinAlgError:
                    continue
                if np.any(theta[free] < -tol):
                    continue
                theta[free] = np.maximum(theta[free], 0.0)
            grad = d @ theta - c
            if clamped and np.any(grad[list(clamped)] < -tol):
                continue
            candidates.append((equations.loss(theta), clamped_count, tuple(theta), theta))

    if not candidates:
        raise DegenerateSystemError("NNLS: birorta ham faol to'plam yechim bermadi")

    best_loss = min(item[0] for item in candidates)
    tie = 1e-12 * max(1.0, abs(best_loss))
    finalists = [item for item in candidates if item[0] <= best_loss + tie]
    finalists.sort(key=lambda item: (item[1], item[2]))
    return VarianceComponents.from_array(finalists[0][3])


# ============ PIPELINE ============

def rehe_fit(data, grm, threads=None):
    """OLS -> normal tenglamalar -> NNLS -> lambda"""
    check_alignment(data, grm)
    a, beta_names = design_matrix(data)
    beta, residuals = ols_fixed_effects(data.phenotypes, a)
    equations = accumulate_normal_equations(data, grm, residuals=residuals, threads=threads)
    theta = solve_nnls(equations)
    xi = HeritabilityPair.from_theta(theta)
    if xi.undefined:
        logger.warning("REHE: lambda aniqlanmagan (genetik va sub'ektga xos komponentlar nol)")

    theta_values = theta.to_array()
    return FitResult(
        theta_hat=theta,
        beta_hat=beta,
        beta_names=beta_names,
        xi_hat=xi,
        converged=True,
        boundary_flags=tuple(bool(v == 0.0) for v in theta_values),
        sigma2_ph=float(np.var(data.phenotypes, ddof=1)) if data.n_records > 1 else None,
        n_subjects=data.n_subjects,
        n_records=data.n_records,
        method='rehe',
        options={'loss': equations.loss(theta_values), 'pairs': equations.counts},
    )
