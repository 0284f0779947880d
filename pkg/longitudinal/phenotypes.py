import logging

import numpy as np
import pandas as pd

from utils.exceptions import InputError

from .models import LongitudinalDataset

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ('subject_id', 'time', 'y')


def read_phenotype_frame(path):
    try:
        frame = pd.read_csv(path, sep='\t', dtype={'subject_id': str})
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise InputError(f"Fenotip faylini o'qib bo'lmadi: {path}: {e}")
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise InputError(f"Fenotip faylida ustunlar yo'q: {', '.join(missing)}")
    return frame


def read_phenotypes(path):
    """Fenotip TSV: subject_id, time, y, [kovariatalar...]

    Yetishmayotgan qiymatli yozuvlar tashlanadi.

    Returns:
        (LongitudinalDataset, hisobot)
    """
    frame = read_phenotype_frame(path)
    covariate_names = [c for c in frame.columns if c not in REQUIRED_COLUMNS]
    numeric = frame[['time', 'y', *covariate_names]].apply(pd.to_numeric, errors='coerce')
    usable = np.isfinite(numeric.to_numpy(dtype=np.float64)).all(axis=1) & frame['subject_id'].notna().to_numpy()

    dropped_rows = [int(i) + 2 for i in np.flatnonzero(~usable)]
    if dropped_rows:
        logger.warning(f"{len(dropped_rows)} ta yozuv yetishmayotgan qiymat sababli tashlandi")

    kept = numeric[usable]
    dataset = LongitudinalDataset.from_records(
        frame['subject_id'][usable].tolist(),
        kept['time'].to_numpy(),
        kept['y'].to_numpy(),
        covariates=kept[covariate_names].to_numpy() if covariate_names else None,
        covariate_names=covariate_names,
    )
    report = {
        'records_read': int(len(frame)),
        'records_dropped': len(dropped_rows),
        'dropped_rows': dropped_rows,
        'subjects': dataset.n_subjects,
        'records': dataset.n_records,
    }
    logger.info(f"Fenotiplar o'qildi: {dataset.n_subjects} sub'ekt, {dataset.n_records} yozuv")
    return dataset, report


def write_phenotypes(data, path):
    frame = pd.DataFrame({
        'subject_id': [data.subject_ids[i] for i in data.record_subject],
        'time': data.times,
        'y': data.phenotypes,
    })
    for position, name in enumerate(data.covariate_names):
        frame[name] = data.covariates[:, position]
    frame.to_csv(path, sep='\t', index=False, float_format='%.17g')
