from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from longitudinal.models import THETA_NAMES, XI_NAMES, HeritabilityPair, VarianceComponents
from utils.documents import clean_array, finite_or_none
from utils.exceptions import InputError

WALD_Z = 1.959963984540054


@dataclass(frozen=True)
class RemlOptions:
    """AI-REML sozlamalari; standart qiymatlar Django settings dan"""
    max_iter: int = None
    tol: float = None
    floor_scale: float = None
    init: tuple | None = None
    dense: bool | None = None

    def __post_init__(self):
        defaults = {
            'max_iter': settings.REML_MAX_ITER,
            'tol': settings.REML_TOL,
            'floor_scale': settings.REML_FLOOR_SCALE,
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.tol <= 0:
            raise InputError(f"tol musbat bo'lishi kerak: {self.tol}")
        if self.max_iter < 1:
            raise InputError(f"max_iter kamida 1 bo'lishi kerak: {self.max_iter}")
        if self.floor_scale <= 0:
            raise InputError(f"floor_scale musbat bo'lishi kerak: {self.floor_scale}")
        if self.init is not None:
            init = tuple(float(v) for v in self.init)
            if len(init) != 5 or any(v < 0 for v in init):
                raise InputError("init 5 ta manfiy bo'lmagan qiymat bo'lishi kerak")
            object.__setattr__(self, 'init', init)

    def as_dict(self):
        return {
            'max_iter': self.max_iter,
            'tol': self.tol,
            'floor_scale': self.floor_scale,
            'init': None if self.init is None else list(self.init),
        }


@dataclass(eq=False)
class FitResult:
    """Bitta AI-REML (yoki REHE) baholash natijasi"""
    theta_hat: VarianceComponents
    beta_hat: np.ndarray
    xi_hat: HeritabilityPair
    beta_names: list = field(default_factory=lambda: ['intercept', 'time'])
    ai_theta: np.ndarray | None = None
    cov_theta: np.ndarray | None = None
    cov_xi: np.ndarray | None = None
    loglik_trace: list = field(default_factory=list)
    converged: bool = True
    iterations: int = 0
    boundary_flags: tuple = (False,) * 5
    reset_iterations: list = field(default_factory=list)
    damped_iterations: list = field(default_factory=list)
    frozen: tuple = (False,) * 5
    sigma2_ph: float | None = None
    floor: float | None = None
    n_subjects: int = 0
    n_records: int = 0
    method: str = 'aireml'
    options: dict = field(default_factory=dict)

    @staticmethod
    def _se(cov):
        if cov is None:
            return [None] * 5
        diag = np.diag(cov)
        return [float(np.sqrt(d)) if np.isfinite(d) and d >= 0 else None for d in diag]

    @property
    def se_theta(self):
        return self._se(self.cov_theta)

    @property
    def se_xi(self):
        return self._se(self.cov_xi)

    @property
    def lambda_boundary(self):
        """lambda aniq 0 yoki 1 da (yoki aniqlanmagan)"""
        flags = []
        for genetic, other in ((0, 2), (1, 3)):
            flags.append(bool(self.boundary_flags[genetic] or self.boundary_flags[other]))
        return tuple(flags)

    def lambda_intervals(self, z=WALD_Z):
        """lambda1, lambda2 uchun Wald 95% oraliqlari, [0, 1] ga qirqilgan"""
        intervals = []
        se = self.se_xi
        for index, estimate in enumerate((self.xi_hat.lambda1, self.xi_hat.lambda2)):
            if estimate is None or se[index] is None:
                intervals.append(None)
                continue
            low = min(max(estimate - z * se[index], 0.0), 1.0)
            high = min(max(estimate + z * se[index], 0.0), 1.0)
            intervals.append((low, high))
        return intervals

    def as_dict(self):
        """JSON hujjati uchun lug'at (NaN -> None)"""
        intervals = self.lambda_intervals()
        return {
            'method': self.method,
            'theta': {name: finite_or_none(v) for name, v in zip(THETA_NAMES, self.theta_hat.to_array())},
            'xi': {name: finite_or_none(v) for name, v in self.xi_hat.as_dict().items()},
            'beta': {name: finite_or_none(v) for name, v in zip(self.beta_names, self.beta_hat)},
            'se_theta': dict(zip(THETA_NAMES, self.se_theta)),
            'se_xi': dict(zip(XI_NAMES, self.se_xi)),
            'lambda_ci': {
                'lambda1': None if intervals[0] is None else list(intervals[0]),
                'lambda2': None if intervals[1] is None else list(intervals[1]),
            },
            'ai_theta': clean_array(self.ai_theta),
            'cov_theta': clean_array(self.cov_theta),
            'cov_xi': clean_array(self.cov_xi),
            'loglik_trace': [finite_or_none(v) for v in self.loglik_trace],
            'converged': bool(self.converged),
            'iterations': int(self.iterations),
            'boundary_flags': dict(zip(THETA_NAMES, (bool(f) for f in self.boundary_flags))),
            'frozen': dict(zip(THETA_NAMES, (bool(f) for f in self.frozen))),
            'reset_iterations': [int(i) for i in self.reset_iterations],
            'damped_iterations': [int(i) for i in self.damped_iterations],
            'sigma2_ph': finite_or_none(self.sigma2_ph),
            'floor': finite_or_none(self.floor),
            'n_subjects': int(self.n_subjects),
            'n_records': int(self.n_records),
            'options': dict(self.options),
        }
