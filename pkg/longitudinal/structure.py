import logging

import numpy as np
from django.conf import settings

from utils.exceptions import AlignmentError, InputError, RankDeficientError

from .models import CovarianceStructure, VarianceComponents

logger = logging.getLogger(__name__)


def _theta_array(theta):
    if isinstance(theta, VarianceComponents):
        return theta.to_array()
    return np.asarray(theta, dtype=np.float64)


def check_alignment(data, grm):
    if list(data.subject_ids) != list(grm.subject_ids):
        raise AlignmentError(
            f"Fenotip va GRM sub'ektlari mos emas ({data.n_subjects} va {grm.size}); "
            "avval GRM ni sub'ektlar tartibiga moslang"
        )


# ============ COVARIANCE ============

def assemble_structure(data, grm, dense=None):
    """V(theta) = sum_s theta_s H_s"""
    check_alignment(data, grm)
    if dense is None:
        dense = data.n_records <= settings.DENSE_RECORD_CAP
    if not dense:
        logger.info(f"{data.n_records} ta yozuv: H matritsalari oshkor saqlanmaydi")
    return CovarianceStructure(data.record_subject, data.times, grm.values, dense=dense)


def assemble_V(structure, theta):
    theta = _theta_array(theta)
    if theta.shape != (5,):
        raise InputError("theta 5 ta komponentdan iborat bo'lishi kerak")
    return structure.assemble_V(theta)


def moment_expectations(data, grm, theta):
    """E(y_ij y_km | Z, theta) barcha yozuv juftliklari uchun

    Har bir holat alohida yoziladi: bir xil yozuv, bir sub'ekt ichidagi
    turli yozuvlar va turli sub'ektlar.
    """
    check_alignment(data, grm)
    s2g, s2gs, s2b0, s2b1, s2e = _theta_array(theta)
    rs = data.record_subject
    t = data.times
    n = data.n_records

    g_pair = grm.values[np.ix_(rs, rs)]
    t_pair = t[:, None] * t[None, :]
    same_subject = rs[:, None] == rs[None, :]
    same_record = np.eye(n, dtype=bool)

    between = s2g * g_pair + s2gs * g_pair * t_pair
    within = s2g * g_pair + s2gs * g_pair * t_pair + s2b0 + s2b1 * t_pair
    g_diag = np.diag(grm.values)[rs]
    own = s2g * g_diag + s2gs * g_diag * t ** 2 + s2b0 + s2b1 * t ** 2 + s2e

    expected = np.where(same_subject, within, between)
    expected[same_record] = own
    return expected


# ============ FIXED EFFECTS ============

def design_matrix(data):
    """A = [1, t, m^(2), ...]; to'liq ustun rangi talab qilinadi

    Returns:
        (A, ustun nomlari)
    """
    columns = [np.ones(data.n_records), data.times]
    names = ['intercept', 'time']
    for position, name in enumerate(data.covariate_names):
        columns.append(data.covariates[:, position])
        names.append(name)
    a = np.column_stack(columns)

    for column in range(a.shape[1]):
        if np.linalg.matrix_rank(a[:, :column + 1]) < column + 1:
            raise RankDeficientError(
                f"Dizayn matritsasi to'liq rangli emas: '{names[column]}' ustuni (indeks {column})",
                column=column,
            )
    return a, names


# ============ HERITABILITY ============

def time_specific_heritability(theta, t):
    """t vaqtdagi irsiylik; t = 0 da lambda1 ga teng"""
    s2g, s2gs, s2b0, s2b1, _ = _theta_array(theta)
    t = np.asarray(t, dtype=np.float64)
    genetic = s2g + s2gs * t ** 2
    total = genetic + s2b0 + s2b1 * t ** 2
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(total > 0.0, genetic / np.where(total > 0.0, total, 1.0), np.nan)


def cross_sectional_heritability(theta):
    """sigma2_g / (sigma2_g + sigma2_b0 + sigma2_e)"""
    s2g, _, s2b0, _, s2e = _theta_array(theta)
    total = s2g + s2b0 + s2e
    return float(s2g / total) if total > 0.0 else None
