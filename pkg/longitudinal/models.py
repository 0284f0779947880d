from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from utils.exceptions import InputError

THETA_NAMES = ('sigma2_g', 'sigma2_gstar', 'sigma2_b0', 'sigma2_b1', 'sigma2_e')
XI_NAMES = ('lambda1', 'lambda2', 'xi3', 'xi4', 'xi5')


# ============ DATASET ============

@dataclass(eq=False)
class LongitudinalDataset:
    """Sub'ektlar va ularning takroriy yozuvlari

    Yozuvlar sub'ektlar bo'yicha ketma-ket guruhlangan:
    record_subject[j] yozuv egasining subject_ids dagi indeksi.
    """
    subject_ids: list
    record_subject: np.ndarray
    times: np.ndarray
    phenotypes: np.ndarray
    covariates: np.ndarray | None = None
    covariate_names: list = field(default_factory=list)

    def __post_init__(self):
        self.subject_ids = [str(s) for s in self.subject_ids]
        self.record_subject = np.asarray(self.record_subject, dtype=np.intp)
        self.times = np.asarray(self.times, dtype=np.float64)
        self.phenotypes = np.asarray(self.phenotypes, dtype=np.float64)
        n_records = self.record_subject.shape[0]
        if self.covariates is None:
            self.covariates = np.zeros((n_records, 0))
        self.covariates = np.asarray(self.covariates, dtype=np.float64).reshape(n_records, -1)
        self.covariate_names = [str(c) for c in self.covariate_names]

        if self.times.shape != (n_records,) or self.phenotypes.shape != (n_records,):
            raise InputError("Vaqt va fenotip uzunliklari yozuvlar soniga teng bo'lishi kerak")
        if len(self.covariate_names) != self.covariates.shape[1]:
            raise InputError("Kovariata nomlari soni ustunlar soniga mos emas")
        if len(set(self.subject_ids)) != len(self.subject_ids):
            raise InputError("Takroriy sub'ekt ID lari")
        if not np.all(np.isfinite(self.times)) or not np.all(np.isfinite(self.phenotypes)):
            raise InputError("Vaqt va fenotip qiymatlari chekli bo'lishi kerak")
        if n_records and np.any(np.diff(self.record_subject) < 0):
            raise InputError("Yozuvlar sub'ektlar bo'yicha guruhlanmagan")

        counts = np.bincount(self.record_subject, minlength=len(self.subject_ids))
        if counts.shape[0] != len(self.subject_ids):
            raise InputError("Yozuvda noma'lum sub'ekt indeksi")
        if np.any(counts < 1):
            raise InputError(f"Yozuvsiz sub'ekt: {self.subject_ids[int(np.argmin(counts))]}")
        self._counts = counts

    @classmethod
    def from_records(cls, record_ids, times, phenotypes, covariates=None, covariate_names=None):
        """Yozuvlarni birinchi uchrash tartibida sub'ektlarga guruhlash"""
        record_ids = [str(r) for r in record_ids]
        order = {}
        for sid in record_ids:
            order.setdefault(sid, len(order))
        owner = np.array([order[sid] for sid in record_ids], dtype=np.intp)
        perm = np.argsort(owner, kind='stable')

        covariates = None if covariates is None else np.asarray(covariates, dtype=np.float64)
        return cls(
            subject_ids=list(order),
            record_subject=owner[perm],
            times=np.asarray(times, dtype=np.float64)[perm],
            phenotypes=np.asarray(phenotypes, dtype=np.float64)[perm],
            covariates=None if covariates is None else covariates.reshape(len(record_ids), -1)[perm],
            covariate_names=list(covariate_names or []),
        )

    @property
    def n_subjects(self):
        return len(self.subject_ids)

    @property
    def n_records(self):
        return self.record_subject.shape[0]

    @property
    def counts(self):
        return self._counts

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self._counts)])

    def records_of(self, index):
        offsets = self.offsets
        return slice(int(offsets[index]), int(offsets[index + 1]))

    def subset(self, indices):
        """Tanlangan sub'ektlar, berilgan tartibda"""
        indices = [int(i) for i in indices]
        rows = np.concatenate([np.arange(self.records_of(i).start, self.records_of(i).stop) for i in indices])
        owner = np.repeat(np.arange(len(indices)), self._counts[indices])
        return LongitudinalDataset(
            subject_ids=[self.subject_ids[i] for i in indices],
            record_subject=owner,
            times=self.times[rows],
            phenotypes=self.phenotypes[rows],
            covariates=self.covariates[rows],
            covariate_names=list(self.covariate_names),
        )

    def with_phenotypes(self, phenotypes):
        return LongitudinalDataset(
            subject_ids=list(self.subject_ids),
            record_subject=self.record_subject,
            times=self.times,
            phenotypes=phenotypes,
            covariates=self.covariates,
            covariate_names=list(self.covariate_names),
        )


# ============ PARAMETERS ============

@dataclass(frozen=True)
class VarianceComponents:
    """theta = (sigma2_g, sigma2_gstar, sigma2_b0, sigma2_b1, sigma2_e)"""
    sigma2_g: float
    sigma2_gstar: float
    sigma2_b0: float
    sigma2_b1: float
    sigma2_e: float

    def __post_init__(self):
        for name in THETA_NAMES:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise InputError(f"{name} manfiy bo'lmasligi kerak: {value}")

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (5,):
            raise InputError("theta 5 ta komponentdan iborat bo'lishi kerak")
        return cls(*(float(v) for v in values))

    def to_array(self):
        return np.array([getattr(self, name) for name in THETA_NAMES])

    def as_dict(self):
        return {name: getattr(self, name) for name in THETA_NAMES}


@dataclass(frozen=True)
class HeritabilityPair:
    """xi = (lambda1, lambda2, sigma2_g + sigma2_b0, sigma2_gstar + sigma2_b1, sigma2_e)

    Maxraj nol bo'lsa lambda aniqlanmagan (None).
    """
    lambda1: float | None
    lambda2: float | None
    xi3: float
    xi4: float
    xi5: float

    @classmethod
    def from_theta(cls, theta):
        values = theta.to_array() if isinstance(theta, VarianceComponents) else np.asarray(theta, dtype=np.float64)
        xi3 = float(values[0] + values[2])
        xi4 = float(values[1] + values[3])
        return cls(
            lambda1=float(values[0] / xi3) if xi3 > 0.0 else None,
            lambda2=float(values[1] / xi4) if xi4 > 0.0 else None,
            xi3=xi3,
            xi4=xi4,
            xi5=float(values[4]),
        )

    @property
    def undefined(self):
        return self.lambda1 is None or self.lambda2 is None

    def to_array(self):
        """Aniqlanmagan lambda NaN sifatida"""
        return np.array([
            np.nan if self.lambda1 is None else self.lambda1,
            np.nan if self.lambda2 is None else self.lambda2,
            self.xi3, self.xi4, self.xi5,
        ])

    def to_theta(self):
        lambda1 = 0.0 if self.lambda1 is None else self.lambda1
        lambda2 = 0.0 if self.lambda2 is None else self.lambda2
        return VarianceComponents(
            sigma2_g=lambda1 * self.xi3,
            sigma2_gstar=lambda2 * self.xi4,
            sigma2_b0=(1.0 - lambda1) * self.xi3,
            sigma2_b1=(1.0 - lambda2) * self.xi4,
            sigma2_e=self.xi5,
        )

    def as_dict(self):
        return {name: value for name, value in zip(XI_NAMES, (self.lambda1, self.lambda2, self.xi3, self.xi4, self.xi5))}


# ============ COVARIANCE STRUCTURE ============

class CovarianceStructure:
    """H_1..H_5, har biri H_s = F_s K_s F_s^T ko'rinishida

    F: sub'ekt indikatori S yoki vaqt bilan tortilgan S_t (siyrak),
    K: G yoki birlik matritsa. H_5 = I.
    Zich rejimda beshta matritsa xotirada saqlanadi, aks holda
    H_s u ko'paytmalari shu ko'paytuvchilardan hisoblanadi.
    """

    def __init__(self, record_subject, times, grm_values, dense=True):
        self.record_subject = np.asarray(record_subject, dtype=np.intp)
        self.times = np.asarray(times, dtype=np.float64)
        self.grm_values = np.asarray(grm_values, dtype=np.float64)
        self.n_records = self.record_subject.shape[0]
        n_subjects = self.grm_values.shape[0]

        rows = np.arange(self.n_records)
        self.indicator = sparse.csr_matrix(
            (np.ones(self.n_records), (rows, self.record_subject)), shape=(self.n_records, n_subjects)
        )
        self.timed_indicator = sparse.csr_matrix(
            (self.times, (rows, self.record_subject)), shape=(self.n_records, n_subjects)
        )
        self.dense = bool(dense)
        self._matrices = [self._materialize(s) for s in range(5)] if self.dense else None

    def _factors(self, s):
        if s == 0:
            return self.indicator, self.grm_values
        if s == 1:
            return self.timed_indicator, self.grm_values
        if s == 2:
            return self.indicator, None
        if s == 3:
            return self.timed_indicator, None
        raise IndexError(s)

    def _materialize(self, s):
        if s == 4:
            return np.eye(self.n_records)
        rs = self.record_subject
        same = (rs[:, None] == rs[None, :]).astype(np.float64)
        base = self.grm_values[np.ix_(rs, rs)] if s in (0, 1) else same
        if s in (1, 3):
            base = base * np.outer(self.times, self.times)
        return base

    def matrix(self, s):
        """Zich H_s (saqlangan bo'lmasa yangidan quriladi)"""
        if self._matrices is not None:
            return self._matrices[s]
        return self._materialize(s)

    def apply(self, s, u):
        """H_s u, u vektor yoki ustunlar matritsasi"""
        u = np.asarray(u, dtype=np.float64)
        if self._matrices is not None:
            return self._matrices[s] @ u
        if s == 4:
            return u.copy()
        factor, kernel = self._factors(s)
        reduced = factor.T @ u
        if kernel is not None:
            reduced = kernel @ reduced
        return np.asarray(factor @ reduced)

    def trace_with(self, s, m):
        """tr(H_s M)"""
        m = np.asarray(m, dtype=np.float64)
        if self._matrices is not None:
            return float(np.sum(self._matrices[s] * m.T))
        if s == 4:
            return float(np.trace(m))
        factor, kernel = self._factors(s)
        left = np.asarray(factor.T @ m)
        sandwich_t = np.asarray(factor.T @ left.T)
        if kernel is None:
            return float(np.trace(sandwich_t))
        return float(np.sum(kernel * sandwich_t))

    def assemble_V(self, theta):
        theta = theta.to_array() if isinstance(theta, VarianceComponents) else np.asarray(theta, dtype=np.float64)
        if self._matrices is not None:
            v = theta[0] * self._matrices[0]
            for s in range(1, 5):
                v = v + theta[s] * self._matrices[s]
            return v

        rs = self.record_subject
        tt = np.outer(self.times, self.times)
        same = rs[:, None] == rs[None, :]
        v = self.grm_values[np.ix_(rs, rs)] * (theta[0] + theta[1] * tt)
        v += np.where(same, theta[2] + theta[3] * tt, 0.0)
        v[np.diag_indices_from(v)] += theta[4]
        return v
