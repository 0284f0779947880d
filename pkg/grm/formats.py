import logging
from pathlib import Path

import numpy as np
import pandas as pd

from utils.exceptions import InputError

from .models import GenotypeMatrix, Grm

logger = logging.getLogger(__name__)

GENOTYPE_MAGIC = b'LGH1'
GRM_MAGIC = b'GRM1'
HEADER_DTYPE = np.dtype('<u8')
VALUE_DTYPE = np.dtype('<f8')


def _sidecar(path, suffix):
    return Path(f'{path}.{suffix}')


def _read_id_list(path):
    with open(path, encoding='utf-8') as handle:
        return [line.strip() for line in handle if line.strip()]


def _read_raw(path, label):
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"{label} faylini o'qib bo'lmadi: {path}: {e}")


def _write_id_list(path, ids):
    with open(path, 'w', encoding='utf-8') as handle:
        handle.writelines(f'{value}\n' for value in ids)


# ============ GENOTYPE TSV ============

def read_genotypes_tsv(path):
    """Sarlavha: variant ID lar; har qator: sub'ekt ID, dozalar"""
    try:
        frame = pd.read_csv(path, sep='\t', index_col=0, converters={0: str})
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise InputError(f"Genotip faylini o'qib bo'lmadi: {path}: {e}")
    try:
        dosages = frame.to_numpy(dtype=np.float64)
    except ValueError as e:
        raise InputError(f"Genotip faylida son bo'lmagan qiymat: {path}: {e}")
    return GenotypeMatrix(
        dosages=dosages,
        subject_ids=[str(s) for s in frame.index],
        variant_ids=[str(v) for v in frame.columns],
    )


def write_genotypes_tsv(geno, path):
    frame = pd.DataFrame(geno.dosages, index=geno.subject_ids, columns=geno.variant_ids)
    frame.index.name = 'subject_id'
    frame.to_csv(path, sep='\t')


# ============ GENOTYPE BINARY (LGH1) ============

def read_genotypes_binary(path):
    """LGH1: magic, u64 N, u64 P, keyin N*P f64 (qator bo'yicha)"""
    raw = _read_raw(path, 'Genotip')
    if raw[:4] != GENOTYPE_MAGIC:
        raise InputError(f"LGH1 sarlavhasi topilmadi: {path}")
    if len(raw) < 20:
        raise InputError(f"LGH1 fayli juda qisqa: {path}")
    n, p = (int(v) for v in np.frombuffer(raw, dtype=HEADER_DTYPE, count=2, offset=4))
    expected = 20 + n * p * VALUE_DTYPE.itemsize
    if len(raw) != expected:
        raise InputError(f"LGH1 hajmi {len(raw)} bayt, kutilgan {expected}")
    dosages = np.frombuffer(raw, dtype=VALUE_DTYPE, offset=20).reshape(n, p).astype(np.float64)

    subjects_path = _sidecar(path, 'subjects')
    variants_path = _sidecar(path, 'variants')
    subject_ids = _read_id_list(subjects_path) if subjects_path.exists() else [f'S{i}' for i in range(n)]
    variant_ids = _read_id_list(variants_path) if variants_path.exists() else [f'V{p_}' for p_ in range(p)]
    return GenotypeMatrix(dosages=dosages, subject_ids=subject_ids, variant_ids=variant_ids)


def write_genotypes_binary(geno, path):
    n, p = geno.dosages.shape
    with open(path, 'wb') as handle:
        handle.write(GENOTYPE_MAGIC)
        handle.write(np.array([n, p], dtype=HEADER_DTYPE).tobytes())
        handle.write(np.ascontiguousarray(geno.dosages, dtype=VALUE_DTYPE).tobytes())
    _write_id_list(_sidecar(path, 'subjects'), geno.subject_ids)
    _write_id_list(_sidecar(path, 'variants'), geno.variant_ids)


def read_genotypes(path):
    """Formatni magic baytlar bo'yicha aniqlash"""
    try:
        with open(path, 'rb') as handle:
            head = handle.read(4)
    except OSError as e:
        raise InputError(f"Genotip faylini o'qib bo'lmadi: {path}: {e}")
    if head == GENOTYPE_MAGIC:
        return read_genotypes_binary(path)
    return read_genotypes_tsv(path)


# ============ ALLELE FREQUENCIES ============

def read_allele_freqs(path, variant_ids):
    """TSV (variant_id, af) ni variantlar tartibiga moslash"""
    try:
        frame = pd.read_csv(path, sep='\t', dtype={'variant_id': str})
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise InputError(f"AF faylini o'qib bo'lmadi: {path}: {e}")
    if not {'variant_id', 'af'} <= set(frame.columns):
        raise InputError(f"AF faylida 'variant_id' va 'af' ustunlari bo'lishi kerak: {path}")
    if frame['variant_id'].duplicated().any():
        raise InputError(f"AF faylida takroriy variant: {frame['variant_id'][frame['variant_id'].duplicated()].iloc[0]}")

    lookup = frame.set_index('variant_id')['af']
    missing = [v for v in variant_ids if v not in lookup.index]
    if missing:
        raise InputError(f"AF faylida {len(missing)} ta variant yo'q, masalan {missing[0]}")
    return lookup.loc[list(variant_ids)].to_numpy(dtype=np.float64)


def write_allele_freqs(variant_ids, allele_freqs, path):
    frame = pd.DataFrame({'variant_id': list(variant_ids), 'af': np.asarray(allele_freqs)})
    frame.to_csv(path, sep='\t', index=False, float_format='%.17g')


# ============ GRM BINARY (GRM1) ============

def grm_id_path(path):
    return Path(path).with_suffix('.id')


def write_grm(grm, path):
    """GRM1: magic, u64 N, keyin pastki uchburchak N(N+1)/2 f64"""
    n = grm.size
    rows, cols = np.tril_indices(n)
    with open(path, 'wb') as handle:
        handle.write(GRM_MAGIC)
        handle.write(np.array([n], dtype=HEADER_DTYPE).tobytes())
        handle.write(np.ascontiguousarray(grm.values[rows, cols], dtype=VALUE_DTYPE).tobytes())
    _write_id_list(grm_id_path(path), grm.subject_ids)
    logger.info(f"GRM yozildi: {path} (N={n})")


def read_grm(path, variant_count=None):
    raw = _read_raw(path, 'GRM')
    if raw[:4] != GRM_MAGIC:
        raise InputError(f"GRM1 sarlavhasi topilmadi: {path}")
    if len(raw) < 12:
        raise InputError(f"GRM1 fayli juda qisqa: {path}")
    n = int(np.frombuffer(raw, dtype=HEADER_DTYPE, count=1, offset=4)[0])
    count = n * (n + 1) // 2
    expected = 12 + count * VALUE_DTYPE.itemsize
    if len(raw) != expected:
        raise InputError(f"GRM1 hajmi {len(raw)} bayt, kutilgan {expected}")

    lower = np.frombuffer(raw, dtype=VALUE_DTYPE, offset=12)
    values = np.zeros((n, n))
    rows, cols = np.tril_indices(n)
    values[rows, cols] = lower
    values[cols, rows] = lower

    id_path = grm_id_path(path)
    if not id_path.exists():
        raise InputError(f"GRM ID fayli topilmadi: {id_path}")
    return Grm(values=values, subject_ids=_read_id_list(id_path), variant_count=variant_count)
