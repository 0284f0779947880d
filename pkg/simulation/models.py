import re
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from longitudinal.models import THETA_NAMES, VarianceComponents
from utils.documents import finite_or_none
from utils.exceptions import InputError

DEFAULT_BETA = (-0.2118, 0.8415)
AGE_ORIGIN = 54.0
AGE_SCALE = 30.0
ENTRY_AGE_RANGE = (54.0, 74.0)

PRESETS = {
    'I': VarianceComponents(2.0, 2.0, 2.0, 2.0, 0.1),
    'II': VarianceComponents(2.0, 0.5, 0.5, 2.0, 0.1),
    'III': VarianceComponents(0.5, 2.0, 2.0, 0.5, 0.1),
}
# J, J-1, ... ta yozuvga ega bo'lish ehtimoli
PLCO_RECORD_PROBS = (0.619, 0.215, 0.099, 0.032, 0.021, 0.014)

GRM_MODES = ('causal', 'all')
SUMMARY_PARAMETERS = THETA_NAMES + ('lambda1', 'lambda2')
PARTITION_METHOD = re.compile(r'^aireml\+partition\((\d+)\)$')


def parse_method(method):
    """'aireml', 'rehe' yoki 'aireml+partition(M)' -> (nom, M)"""
    if method in ('aireml', 'rehe'):
        return method, 1
    match = PARTITION_METHOD.match(method)
    if match and int(match.group(1)) >= 1:
        return 'aireml+partition', int(match.group(1))
    raise InputError(f"Noma'lum usul: {method}")


# ============ SCENARIO ============

@dataclass(frozen=True)
class ScenarioConfig:
    """Bitta simulyatsiya sozlamasi"""
    theta: VarianceComponents
    name: str = 'custom'
    n_subjects: int = 300
    visits: int = 6
    n_variants: int = 2000
    n_causal: int = 2000
    beta: tuple = DEFAULT_BETA
    maf_range: tuple = (0.05, 0.5)
    record_count_probs: tuple | None = None
    grm_mode: str = 'causal'
    fresh_genotypes: bool = True
    methods: tuple = ('aireml', 'rehe')
    replicates: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 2:
            raise InputError("Kamida 2 ta sub'ekt kerak")
        if self.visits < 1:
            raise InputError("visits kamida 1 bo'lishi kerak")
        if not 1 <= self.n_causal <= self.n_variants:
            raise InputError(f"n_causal [1, n_variants] ichida bo'lishi kerak: {self.n_causal}")
        if len(self.beta) != 2:
            raise InputError("beta ikki elementli bo'lishi kerak")
        low, high = self.maf_range
        if not 0.0 < low <= high <= 0.5:
            raise InputError(f"maf_range (0, 0.5] ichida bo'lishi kerak: {self.maf_range}")
        if self.grm_mode not in GRM_MODES:
            raise InputError(f"grm_mode {GRM_MODES} dan biri bo'lishi kerak")
        if self.replicates < 1:
            raise InputError("replicates kamida 1 bo'lishi kerak")
        if not self.methods:
            raise InputError("Kamida bitta usul kerak")
        for method in self.methods:
            parse_method(method)
        if self.record_count_probs is not None:
            probs = np.asarray(self.record_count_probs, dtype=np.float64)
            if probs.size > self.visits or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-6:
                raise InputError("record_count_probs ehtimolliklar bo'lishi va visits dan oshmasligi kerak")
        object.__setattr__(self, 'beta', tuple(float(b) for b in self.beta))
        object.__setattr__(self, 'maf_range', (float(low), float(high)))
        object.__setattr__(self, 'methods', tuple(self.methods))
        if self.record_count_probs is not None:
            object.__setattr__(self, 'record_count_probs', tuple(float(p) for p in self.record_count_probs))

    @classmethod
    def preset(cls, name, **overrides):
        if name not in PRESETS:
            raise InputError(f"Noma'lum ssenariy: {name}")
        return cls(theta=PRESETS[name], name=name, **overrides)

    @classmethod
    def from_dict(cls, data):
        """Tekshirilgan manifest yoki as_dict() natijasidan"""
        data = dict(data)
        preset = data.pop('preset', None)
        theta = data.pop('theta', None)
        if data.get('record_count_probs') == 'plco':
            data['record_count_probs'] = PLCO_RECORD_PROBS
        for key in ('beta', 'maf_range', 'methods', 'record_count_probs'):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        if theta is not None:
            theta = VarianceComponents(**theta) if isinstance(theta, dict) else VarianceComponents.from_array(theta)
        elif preset is not None:
            if preset not in PRESETS:
                raise InputError(f"Noma'lum ssenariy: {preset}")
            theta = PRESETS[preset]
            data.setdefault('name', preset)
        else:
            raise InputError("theta yoki preset berilishi kerak")
        return cls(theta=theta, **data)

    def with_overrides(self, **changes):
        return replace(self, **changes)

    @property
    def lambdas(self):
        t = self.theta
        return (
            t.sigma2_g / (t.sigma2_g + t.sigma2_b0) if t.sigma2_g + t.sigma2_b0 > 0 else None,
            t.sigma2_gstar / (t.sigma2_gstar + t.sigma2_b1) if t.sigma2_gstar + t.sigma2_b1 > 0 else None,
        )

    @property
    def truth(self):
        """Parametr -> haqiqiy qiymat"""
        values = dict(self.theta.as_dict())
        values['lambda1'], values['lambda2'] = self.lambdas
        return values

    def as_dict(self):
        return {
            'name': self.name,
            'theta': self.theta.as_dict(),
            'n_subjects': self.n_subjects,
            'visits': self.visits,
            'n_variants': self.n_variants,
            'n_causal': self.n_causal,
            'beta': list(self.beta),
            'maf_range': list(self.maf_range),
            'record_count_probs': None if self.record_count_probs is None else list(self.record_count_probs),
            'grm_mode': self.grm_mode,
            'fresh_genotypes': self.fresh_genotypes,
            'methods': list(self.methods),
            'replicates': self.replicates,
            'seed': self.seed,
        }


@dataclass(eq=False)
class SimulationTruth:
    """Simulyatsiyadagi yashirin effektlar (oracle tekshiruvlari uchun)"""
    causal: np.ndarray
    alpha: np.ndarray
    eta: np.ndarray
    g: np.ndarray
    gstar: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    entry_age: np.ndarray

    def to_frame(self, subject_ids):
        return pd.DataFrame({
            'subject_id': list(subject_ids),
            'entry_age': self.entry_age,
            'g': self.g,
            'gstar': self.gstar,
            'b0': self.b0,
            'b1': self.b1,
        })


# ============ SUMMARY ============

@dataclass(eq=False)
class ExperimentSummary:
    """Takrorlar bo'yicha usul va parametr kesimidagi statistikalar"""
    config: ScenarioConfig
    rows: list
    replicates: list = field(default_factory=list)

    def to_frame(self):
        columns = ['parameter', 'scenario', 'method', 'true', 'mean', 'median', 'se', 'emp_se', 'mad',
                   'coverage', 'n', 'failures']
        return pd.DataFrame(self.rows, columns=columns)

    def replicate_frame(self):
        """Har bir takror va usul uchun xom baholar"""
        records = []
        for result in self.replicates:
            for method, estimate in result['methods'].items():
                record = {'replicate': result['replicate'], 'method': method, 'error': estimate.get('error')}
                values = estimate.get('estimates') or {}
                for name in SUMMARY_PARAMETERS:
                    record[name] = values.get(name)
                records.append(record)
        return pd.DataFrame(records)

    def row(self, method, parameter):
        for row in self.rows:
            if row['method'] == method and row['parameter'] == parameter:
                return row
        raise KeyError((method, parameter))

    def as_dict(self):
        return {
            'config': self.config.as_dict(),
            'rows': [{key: finite_or_none(v) if isinstance(v, float) else v for key, v in row.items()}
                     for row in self.rows],
        }
