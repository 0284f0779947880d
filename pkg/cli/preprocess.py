import logging

import numpy as np
import pandas as pd

from simulation.models import AGE_ORIGIN, AGE_SCALE
from utils.exceptions import InputError

logger = logging.getLogger(__name__)

DEFAULT_ZERO_REPLACE = 0.005
TIME_MODES = ('none', 'span', 'plco')


def rescale_times(times, mode='none', origin=None, span=None):
    """Vaqtni qayta masshtablash

    span: (t - origin) / span, standart origin=min(t), span=max(t)-min(t);
    plco: (t - 54) / 30.

    Returns:
        (vaqtlar, {'origin', 'span'})
    """
    times = np.asarray(times, dtype=np.float64)
    if mode == 'none':
        return times, {'origin': None, 'span': None}
    if mode == 'plco':
        return (times - AGE_ORIGIN) / AGE_SCALE, {'origin': AGE_ORIGIN, 'span': AGE_SCALE}
    if mode != 'span':
        raise InputError(f"Noma'lum vaqt rejimi: {mode}")

    finite = times[np.isfinite(times)]
    if origin is None:
        origin = float(finite.min()) if finite.size else 0.0
    if span is None:
        span = float(finite.max() - origin) if finite.size else 0.0
    if not span > 0:
        raise InputError(f"Vaqt oralig'i musbat bo'lishi kerak: {span}")
    return (times - origin) / span, {'origin': origin, 'span': span}


def preprocess_frame(frame, log_transform=False, zero_replace=None, time_mode='none', time_origin=None,
                     time_span=None):
    """Fenotip jadvalini tozalash: nolni almashtirish, log, vaqt masshtabi

    Returns:
        (yangi jadval, hisobot)
    """
    frame = frame.copy()
    y = pd.to_numeric(frame['y'], errors='coerce').to_numpy(dtype=np.float64)
    if zero_replace is None and log_transform:
        zero_replace = DEFAULT_ZERO_REPLACE

    zeros = np.flatnonzero(y == 0.0) if zero_replace is not None else np.array([], dtype=np.intp)
    if zeros.size:
        y[zeros] = zero_replace
        logger.info(f"{zeros.size} ta nol qiymat {zero_replace} ga almashtirildi")

    if log_transform:
        bad = np.flatnonzero(y <= 0.0)
        if bad.size:
            rows = ', '.join(str(int(i) + 2) for i in bad[:10])
            raise InputError(f"Log uchun musbat bo'lmagan qiymatlar ({bad.size} ta), qatorlar: {rows}")
        y = np.log(y)

    frame['y'] = y
    raw_times = pd.to_numeric(frame['time'], errors='coerce').to_numpy(dtype=np.float64)
    times, scale = rescale_times(raw_times, time_mode, time_origin, time_span)
    frame['time'] = times

    report = {
        'records': int(len(frame)),
        'zeros_replaced': int(zeros.size),
        'zero_replace': zero_replace,
        'replaced_rows': [int(i) + 2 for i in zeros],
        'log_transform': bool(log_transform),
        'time_mode': time_mode,
        'time_origin': scale['origin'],
        'time_span': scale['span'],
    }
    return frame, report
