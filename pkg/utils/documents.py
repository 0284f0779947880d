import math
from pathlib import Path

import numpy as np
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from .exceptions import InputError


def finite_or_none(value):
    """NaN/inf -> None, numpy skalyarlari -> Python float"""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def clean_array(values):
    """Ichma-ich ro'yxat, chekli bo'lmagan qiymatlar None"""
    if values is None:
        return None
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 0:
        return finite_or_none(array)
    return [clean_array(row) for row in array]


def write_json(path, data):
    """JSONRenderer orqali yozish (STRICT_JSON)"""
    content = JSONRenderer().render(data, renderer_context={'indent': 2})
    Path(path).write_bytes(content + b'\n')


def read_json(path):
    try:
        with open(path, 'rb') as handle:
            return JSONParser().parse(handle)
    except OSError as e:
        raise InputError(f"Faylni o'qib bo'lmadi: {path}: {e}")
    except Exception as e:
        raise InputError(f"JSON xato: {path}: {e}")


def flatten_errors(errors, prefix=''):
    """DRF xatolarini 'theta.sigma2_g: ...' ko'rinishidagi qatorlarga"""
    lines = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            path = f'{prefix}.{key}' if prefix else str(key)
            lines.extend(flatten_errors(value, path))
    elif isinstance(errors, list):
        if all(not isinstance(item, (dict, list)) for item in errors):
            lines.append(f"{prefix or 'non_field_errors'}: {' '.join(str(item) for item in errors)}")
        else:
            for index, item in enumerate(errors):
                if item:
                    lines.extend(flatten_errors(item, f'{prefix}[{index}]'))
    else:
        lines.append(f"{prefix or 'non_field_errors'}: {errors}")
    return lines


def validate_document(serializer_class, data, label='hujjat'):
    """Serializer bilan tekshirish; xatolar InputError sifatida"""
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise InputError(f"{label} noto'g'ri: " + '; '.join(flatten_errors(serializer.errors)))
    return serializer.validated_data
