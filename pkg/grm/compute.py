import logging

import numpy as np
from django.conf import settings

from utils.exceptions import AlignmentError, InputError
from utils.parallel import ordered_map, resolve_threads

from .models import GenotypeMatrix, Grm

logger = logging.getLogger(__name__)

DIAGONAL_SANITY_RANGE = (0.5, 2.0)


# ============ ALLELE FREQUENCIES ============

def estimate_allele_freqs(dosages):
    """AF_p = mean(x_p) / 2"""
    dosages = np.asarray(dosages, dtype=np.float64)
    return np.nanmean(dosages, axis=0) / 2.0


def filter_maf(geno, threshold=None):
    """min(AF, 1 - AF) < threshold bo'lgan variantlarni olib tashlash

    Returns:
        (GenotypeMatrix, olib tashlanganlar soni)
    """
    if threshold is None:
        threshold = settings.GRM_MAF_THRESHOLD
    if geno.allele_freqs is None:
        logger.warning("Allel chastotalari berilmagan, dozalardan baholanmoqda")
        geno = GenotypeMatrix(
            dosages=geno.dosages,
            subject_ids=geno.subject_ids,
            variant_ids=geno.variant_ids,
            allele_freqs=estimate_allele_freqs(geno.dosages),
        )

    af = geno.allele_freqs
    maf = np.minimum(af, 1.0 - af)
    keep = (maf >= threshold) & (maf > 0.0)
    dropped = int(geno.n_variants - keep.sum())
    if dropped:
        logger.info(f"MAF < {threshold}: {dropped} ta variant olib tashlandi, {int(keep.sum())} ta qoldi")
    return geno.select_variants(keep), dropped


# ============ STANDARDIZATION ============

def standardize_genotypes(geno):
    """z_ip = (x_ip - 2 AF_p) / sqrt(2 AF_p (1 - AF_p))"""
    if geno.allele_freqs is None:
        raise InputError("Standartlash uchun allel chastotalari kerak")

    af = geno.allele_freqs
    bad = np.flatnonzero(~((af > 0.0) & (af < 1.0)))
    if bad.size:
        raise InputError(f"AF (0, 1) oralig'ida emas: variant {int(bad[0])} (AF={af[bad[0]]})")

    missing = np.argwhere(np.isnan(geno.dosages))
    if missing.size:
        row, col = missing[0]
        raise InputError(f"Dozada NaN: sub'ekt {int(row)}, variant {int(col)}")

    return (geno.dosages - 2.0 * af) / np.sqrt(2.0 * af * (1.0 - af))


# ============ GRM ============

def _mirror_lower(values):
    lower = np.tril(values)
    return lower + np.tril(lower, -1).T


def check_grm_sanity(grm):
    """Diagonal musbat va o'rtachasi [0.5, 2] ichida bo'lishini tekshirish"""
    diag = grm.diagonal
    ok = True
    if diag.size and np.any(diag <= 0.0):
        logger.warning(f"GRM diagonalida {int((diag <= 0.0).sum())} ta musbat bo'lmagan qiymat")
        ok = False
    if diag.size:
        mean_diag = float(diag.mean())
        low, high = DIAGONAL_SANITY_RANGE
        if not low <= mean_diag <= high:
            logger.warning(f"GRM diagonal o'rtachasi {mean_diag:.4f} [{low}, {high}] dan tashqarida")
            ok = False
    return ok


def compute_grm(z, subject_ids=None, chunk_size=None, threads=None):
    """G = ZZ^T / P, variant bloklari bo'yicha yig'iladi

    Bloklar qat'iy tartibda qo'shiladi, shuning uchun natija
    ishchilar soniga bog'liq emas.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise InputError("Standartlangan matritsa ikki o'lchamli bo'lishi kerak")
    n, p = z.shape
    if p < 1:
        raise InputError("GRM uchun kamida bitta variant kerak")
    if subject_ids is None:
        subject_ids = [str(i) for i in range(n)]
    if len(subject_ids) != n:
        raise InputError(f"Sub'ekt ID lar soni {len(subject_ids)}, qatorlar soni {n}")

    chunk_size = max(1, int(chunk_size or settings.GRM_CHUNK_SIZE))
    threads = resolve_threads(threads)
    starts = list(range(0, p, chunk_size))

    def block_product(start):
        block = z[:, start:start + chunk_size]
        return block @ block.T

    values = np.zeros((n, n))
    # bir to'lqinda ko'pi bilan `threads` ta blok xotirada turadi
    for wave in range(0, len(starts), threads):
        for partial in ordered_map(block_product, starts[wave:wave + threads], threads):
            values += partial
    values /= p

    grm = Grm(values=_mirror_lower(values), subject_ids=list(subject_ids), variant_count=p)
    check_grm_sanity(grm)
    logger.info(f"GRM hisoblandi: N={n}, P={p}, blok={chunk_size}")
    return grm


def grm_subset(grm, indices):
    """Bosh osti-matritsa"""
    indices = [int(i) for i in indices]
    if len(set(indices)) != len(indices):
        raise InputError("Indekslar takrorlanmasligi kerak")
    for i in indices:
        if i < 0 or i >= grm.size:
            raise InputError(f"Indeks {i} chegaradan tashqarida (N={grm.size})")
    idx = np.asarray(indices, dtype=np.intp)
    return Grm(
        values=grm.values[np.ix_(idx, idx)],
        subject_ids=[grm.subject_ids[i] for i in indices],
        variant_count=grm.variant_count,
    )


def match_grm(grm, subject_ids):
    """GRM ni berilgan sub'ektlar tartibiga keltirish"""
    indices = []
    missing = []
    for sid in subject_ids:
        position = grm.index_of(sid)
        if position is None:
            missing.append(str(sid))
        else:
            indices.append(position)
    if missing:
        preview = ', '.join(missing[:5])
        raise AlignmentError(f"GRM da {len(missing)} ta sub'ekt topilmadi: {preview}")
    if indices == list(range(grm.size)):
        return grm
    return grm_subset(grm, indices)
