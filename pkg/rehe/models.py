from dataclasses import dataclass, field

import numpy as np

from longitudinal.models import THETA_NAMES
from utils.documents import finite_or_none

BOOTSTRAP_PARAMETERS = THETA_NAMES + ('lambda1', 'lambda2')


@dataclass(eq=False)
class NormalEquations:
    """F(theta) = 1/2 theta^T D theta - c^T theta + constant"""
    d: np.ndarray
    c: np.ndarray
    constant: float
    counts: dict = field(default_factory=dict)

    def loss(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        return float(0.5 * theta @ self.d @ theta - self.c @ theta + self.constant)

    def gradient(self, theta):
        return self.d @ np.asarray(theta, dtype=np.float64) - self.c


@dataclass(eq=False)
class BootstrapSummary:
    """Parametrik bootstrap xulosasi (theta va lambda bo'yicha)"""
    parameters: tuple
    estimate: np.ndarray
    replicates: np.ndarray
    requested: int
    emp_se: np.ndarray
    mad: np.ndarray
    percentile_ci: np.ndarray
    normal_ci: np.ndarray
    failures: int = 0

    @property
    def successful(self):
        return int(self.replicates.shape[0])

    @property
    def failure_fraction(self):
        return self.failures / self.requested if self.requested else 0.0

    def rows(self):
        """parameter, estimate, emp_se, mad, ci_lo, ci_hi qatorlari"""
        return [
            {
                'parameter': name,
                'estimate': finite_or_none(self.estimate[i]),
                'emp_se': finite_or_none(self.emp_se[i]),
                'mad': finite_or_none(self.mad[i]),
                'ci_lo': finite_or_none(self.percentile_ci[i, 0]),
                'ci_hi': finite_or_none(self.percentile_ci[i, 1]),
            }
            for i, name in enumerate(self.parameters)
        ]

    def as_dict(self):
        return {
            'requested': self.requested,
            'successful': self.successful,
            'failures': self.failures,
            'failure_fraction': self.failure_fraction,
            'rows': self.rows(),
            'normal_ci': {
                name: [finite_or_none(self.normal_ci[i, 0]), finite_or_none(self.normal_ci[i, 1])]
                for i, name in enumerate(self.parameters)
            },
        }
