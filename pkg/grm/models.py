from dataclasses import dataclass, field

import numpy as np

from utils.exceptions import InputError

DOSAGE_TOLERANCE = 1e-9


def _check_unique(ids, label):
    seen = set()
    for position, value in enumerate(ids):
        if value in seen:
            raise InputError(f"Takroriy {label} ID: {value} (pozitsiya {position})")
        seen.add(value)


# ============ GENOTYPES ============

@dataclass(eq=False)
class GenotypeMatrix:
    """Sub'ektlar x variantlar dozalari va allel chastotalari"""
    dosages: np.ndarray
    subject_ids: list
    variant_ids: list
    allele_freqs: np.ndarray | None = None

    def __post_init__(self):
        self.dosages = np.asarray(self.dosages, dtype=np.float64)
        if self.dosages.ndim != 2:
            raise InputError("Dozalar matritsasi ikki o'lchamli bo'lishi kerak")

        n, p = self.dosages.shape
        self.subject_ids = [str(s) for s in self.subject_ids]
        self.variant_ids = [str(v) for v in self.variant_ids]
        if len(self.subject_ids) != n:
            raise InputError(f"Sub'ekt ID lar soni {len(self.subject_ids)}, qatorlar soni {n}")
        if len(self.variant_ids) != p:
            raise InputError(f"Variant ID lar soni {len(self.variant_ids)}, ustunlar soni {p}")
        _check_unique(self.subject_ids, 'sub\'ekt')
        _check_unique(self.variant_ids, 'variant')

        if self.dosages.size:
            low, high = np.nanmin(self.dosages), np.nanmax(self.dosages)
            if low < -DOSAGE_TOLERANCE or high > 2.0 + DOSAGE_TOLERANCE:
                raise InputError(f"Dozalar [0, 2] oralig'idan tashqarida: min={low}, max={high}")

        if self.allele_freqs is not None:
            self.allele_freqs = np.asarray(self.allele_freqs, dtype=np.float64)
            if self.allele_freqs.shape != (p,):
                raise InputError(f"Allel chastotalari uzunligi {p} bo'lishi kerak")

    @property
    def n_subjects(self):
        return self.dosages.shape[0]

    @property
    def n_variants(self):
        return self.dosages.shape[1]

    def select_variants(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return GenotypeMatrix(
            dosages=self.dosages[:, mask],
            subject_ids=list(self.subject_ids),
            variant_ids=[v for v, keep in zip(self.variant_ids, mask) if keep],
            allele_freqs=None if self.allele_freqs is None else self.allele_freqs[mask],
        )


# ============ GRM ============

@dataclass(eq=False)
class Grm:
    """N x N simmetrik GRM, G = ZZ^T / P"""
    values: np.ndarray
    subject_ids: list
    variant_count: int | None = None
    _index: dict = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise InputError("GRM kvadrat matritsa bo'lishi kerak")
        self.subject_ids = [str(s) for s in self.subject_ids]
        if len(self.subject_ids) != self.values.shape[0]:
            raise InputError(
                f"GRM ID lar soni {len(self.subject_ids)}, o'lcham {self.values.shape[0]}"
            )
        _check_unique(self.subject_ids, 'sub\'ekt')
        if not np.array_equal(self.values, self.values.T):
            raise InputError("GRM simmetrik emas")

    @property
    def size(self):
        return self.values.shape[0]

    @property
    def diagonal(self):
        return np.diag(self.values)

    def index_of(self, subject_id):
        if self._index is None:
            self._index = {sid: i for i, sid in enumerate(self.subject_ids)}
        return self._index.get(str(subject_id))
