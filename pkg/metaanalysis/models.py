from dataclasses import dataclass, field

import numpy as np

from utils.documents import finite_or_none
from utils.exceptions import InputError

LEFT = 'left'
DOUBLE = 'double'
REGIMES = (LEFT, DOUBLE)
BOUND_SLACK = 1e-12


@dataclass(eq=False)
class PartitionPlan:
    """Sub'ektlarning M ta kesishmaydigan guruhga taqsimoti"""
    subject_ids: list
    assignments: np.ndarray
    groups_count: int
    seed: int

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=np.intp)
        if self.assignments.shape != (len(self.subject_ids),):
            raise InputError("Taqsimot uzunligi sub'ektlar soniga teng bo'lishi kerak")
        sizes = np.bincount(self.assignments, minlength=self.groups_count)
        if sizes.shape[0] != self.groups_count or sizes.max() - sizes.min() > 1:
            raise InputError("Guruhlar muvozanatlangan bo'lishi kerak")

    def groups(self):
        """Har bir guruh uchun sub'ekt indekslari (asl tartibda)"""
        return [np.flatnonzero(self.assignments == m) for m in range(self.groups_count)]

    @property
    def sizes(self):
        return np.bincount(self.assignments, minlength=self.groups_count).tolist()

    def as_dict(self):
        return {
            'groups': self.groups_count,
            'seed': self.seed,
            'sizes': self.sizes,
            'assignments': {sid: int(m) for sid, m in zip(self.subject_ids, self.assignments)},
        }


@dataclass(eq=False)
class PartitionEstimates:
    """Bitta parametrning bo'laklar bo'yicha bahosi va SE lari"""
    parameter: str
    estimates: np.ndarray
    ses: np.ndarray
    regime: str = LEFT
    at_lower: np.ndarray | None = None
    at_upper: np.ndarray | None = None

    def __post_init__(self):
        self.estimates = np.asarray(self.estimates, dtype=np.float64)
        self.ses = np.asarray(self.ses, dtype=np.float64)
        if self.regime not in REGIMES:
            raise InputError(f"Noma'lum rejim: {self.regime}")
        if self.estimates.ndim != 1 or self.estimates.shape != self.ses.shape or not self.estimates.size:
            raise InputError(f"{self.parameter}: baholar va SE lar soni mos emas yoki bo'sh")
        if not np.all(np.isfinite(self.estimates)) or not np.all(self.ses > 0):
            raise InputError(f"{self.parameter}: SE musbat va baholar chekli bo'lishi kerak")
        if np.any(self.estimates < -BOUND_SLACK):
            raise InputError(f"{self.parameter}: baho 0 dan kichik")
        if self.regime == DOUBLE and np.any(self.estimates > 1.0 + BOUND_SLACK):
            raise InputError(f"{self.parameter}: baho 1 dan katta")
        if self.at_lower is None:
            self.at_lower = self.estimates <= 0.0
        if self.at_upper is None:
            self.at_upper = np.zeros(self.estimates.shape, dtype=bool)
        self.at_lower = np.asarray(self.at_lower, dtype=bool)
        self.at_upper = np.asarray(self.at_upper, dtype=bool)

    def detect_boundaries(self, threshold=0.0, tol=None):
        """Chegaradagi kuzatuvlarni belgilash

        left: x <= threshold; double: x <= tol yoki x >= 1 - tol.
        """
        if self.regime == LEFT:
            self.at_lower = self.estimates <= threshold + BOUND_SLACK
            self.at_upper = np.zeros(self.estimates.shape, dtype=bool)
        else:
            tol = 0.0 if tol is None else tol
            self.at_lower = self.estimates <= tol + BOUND_SLACK
            self.at_upper = (self.estimates >= 1.0 - tol - BOUND_SLACK) & ~self.at_lower
        return self

    @property
    def boundary_count(self):
        return int(self.at_lower.sum() + self.at_upper.sum())


@dataclass
class CombinedEstimate:
    """Birlashtirilgan baho; estimate maydoni chegaraga qirqilgan"""
    method: str
    estimate: float
    se: float | None
    unclamped: float | None = None
    unbounded: bool = False
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {
            'method': self.method,
            'combined': finite_or_none(self.estimate),
            'se': finite_or_none(self.se),
            'unclamped': finite_or_none(self.unclamped),
            'unbounded': bool(self.unbounded),
        }


@dataclass(eq=False)
class ParameterCombination:
    """Bitta parametr: bo'lak kirishlari va barcha birlashtiruvchilar natijasi"""
    inputs: PartitionEstimates
    results: dict
    primary: str
    excluded: list = field(default_factory=list)

    @property
    def parameter(self):
        return self.inputs.parameter

    @property
    def combined(self):
        return self.results[self.primary]

    def as_dict(self):
        return {
            'parameter': self.parameter,
            'regime': self.inputs.regime,
            'primary': self.primary,
            'combined': finite_or_none(self.combined.estimate),
            'se': finite_or_none(self.combined.se),
            'methods': {name: result.as_dict() for name, result in self.results.items()},
            'partitions': [
                {
                    'estimate': finite_or_none(x),
                    'se': finite_or_none(s),
                    'at_lower': bool(lower),
                    'at_upper': bool(upper),
                }
                for x, s, lower, upper in zip(
                    self.inputs.estimates, self.inputs.ses, self.inputs.at_lower, self.inputs.at_upper,
                )
            ],
            'excluded': [int(i) for i in self.excluded],
        }
