import logging

import numpy as np
from django.conf import settings
from scipy import linalg
from scipy.linalg import lapack

from longitudinal.models import HeritabilityPair, VarianceComponents
from longitudinal.structure import assemble_structure, design_matrix
from utils.exceptions import InputError, NotPositiveDefiniteError

from .models import FitResult, RemlOptions

logger = logging.getLogger(__name__)

MIN_RECORDS = 6
MAX_HALVINGS = 10
DAMPING_START = 1e-4
DAMPING_GROWTH = 10.0
DAMPING_STEPS = 8
CONDITION_LIMIT = 1e12
FREEZE_AFTER_RESETS = 3


def _theta_array(theta):
    if isinstance(theta, VarianceComponents):
        return theta.to_array()
    return np.asarray(theta, dtype=np.float64)


def cholesky_lower(matrix, label='V'):
    """Pastki Cholesky omili; muvaffaqiyatsizlikda pivot indeksi bilan xato"""
    factor, info = lapack.dpotrf(matrix, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(
            f"{label} musbat aniqlangan emas (pivot {info - 1})", pivot=int(info - 1),
        )
    if info < 0:
        raise NotPositiveDefiniteError(f"{label}: dpotrf argument xatosi {info}")
    return factor


# ============ REML STATE ============

class RemlEvaluation:
    """Berilgan theta da V, R va Py bilan bog'liq barcha kattaliklar

    R = V^-1 - V^-1 A (A^T V^-1 A)^-1 A^T V^-1
    """

    def __init__(self, theta, y, a, structure):
        self.theta = _theta_array(theta)
        self.y = np.asarray(y, dtype=np.float64)
        self.a = np.asarray(a, dtype=np.float64)
        self.structure = structure

        v = structure.assemble_V(self.theta)
        self.v_factor = cholesky_lower(v, 'V')
        self.vi_a = linalg.cho_solve((self.v_factor, True), self.a)
        self.vi_y = linalg.cho_solve((self.v_factor, True), self.y)
        self.ata_factor = cholesky_lower(self.a.T @ self.vi_a, 'A^T V^-1 A')

        self.beta = linalg.cho_solve((self.ata_factor, True), self.vi_a.T @ self.y)
        self.py = self.vi_y - self.vi_a @ self.beta

        logdet_v = 2.0 * np.sum(np.log(np.diag(self.v_factor)))
        logdet_ata = 2.0 * np.sum(np.log(np.diag(self.ata_factor)))
        self.loglik = -0.5 * (float(self.y @ self.py) + logdet_v + logdet_ata)

        self._r_matrix = None
        self._w = None

    def apply_r(self, x):
        """R x"""
        vi_x = linalg.cho_solve((self.v_factor, True), x)
        correction = linalg.cho_solve((self.ata_factor, True), self.vi_a.T @ x)
        return vi_x - self.vi_a @ correction

    @property
    def r_matrix(self):
        if self._r_matrix is None:
            r = self.apply_r(np.eye(self.y.shape[0]))
            self._r_matrix = np.tril(r) + np.tril(r, -1).T
        return self._r_matrix

    @property
    def w(self):
        """W = [H_1 Py, ..., H_5 Py]"""
        if self._w is None:
            self._w = np.column_stack([self.structure.apply(s, self.py) for s in range(5)])
        return self._w

    def gradient(self):
        traces = np.array([self.structure.trace_with(s, self.r_matrix) for s in range(5)])
        quadratic = self.w.T @ self.py
        return -0.5 * (traces - quadratic)

    def average_information(self):
        ai = -0.5 * (self.w.T @ self.apply_r(self.w))
        return 0.5 * (ai + ai.T)


# ============ PUBLIC OPERATIONS ============

def reml_loglik(theta, y, a, structure):
    """-1/2 (y^T R y + log det V + log det A^T V^-1 A), konstanta tashlangan"""
    return RemlEvaluation(theta, y, a, structure).loglik


def reml_gradient(theta, y, a, structure):
    """dl/dtheta_s = -1/2 (tr(R H_s) - y^T R H_s R y)"""
    return RemlEvaluation(theta, y, a, structure).gradient()


def average_information(theta, y, a, structure):
    """AI_sk = -1/2 y^T R H_s R H_k R y"""
    return RemlEvaluation(theta, y, a, structure).average_information()


def jacobian_theta_xi(xi):
    """K_sk = d theta_s / d xi_k"""
    l1, l2, xi3, xi4, _ = xi
    return np.array([
        [xi3, 0.0, l1, 0.0, 0.0],
        [0.0, xi4, 0.0, l2, 0.0],
        [-xi3, 0.0, 1.0 - l1, 0.0, 0.0],
        [0.0, -xi4, 0.0, 1.0 - l2, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ])


def delta_transform(theta_hat, ai_theta):
    """xi = (lambda1, lambda2, xi3, xi4, xi5) va cov_xi = (-K^T AI K)^-1

    Returns:
        (HeritabilityPair, cov_xi yoki None)
    """
    xi = HeritabilityPair.from_theta(theta_hat)
    if xi.undefined:
        logger.warning("xi3 yoki xi4 nol: lambda aniqlanmagan, SE hisoblanmaydi")
        return xi, None
    if ai_theta is None:
        return xi, None

    k = jacobian_theta_xi(xi.to_array())
    information = -(k.T @ np.asarray(ai_theta) @ k)
    information = 0.5 * (information + information.T)
    try:
        cov_xi = linalg.inv(information)
    except linalg.LinAlgError:
        logger.warning("xi axborot matritsasi singulyar, SE hisoblanmaydi")
        return xi, None
    return xi, 0.5 * (cov_xi + cov_xi.T)


# ============ FITTING ============

def initial_theta(data, sigma2_ph, options):
    """0.25 sigma2_ph har bir komponentga; qiyalik komponentlari var(t) ga bo'linadi"""
    if options.init is not None:
        return np.array(options.init, dtype=np.float64)
    var_t = float(np.var(data.times, ddof=1)) if data.n_records > 1 else 0.0
    if not np.isfinite(var_t) or var_t <= 0.0:
        var_t = 1.0
    return 0.25 * sigma2_ph * np.array([1.0, 1.0 / var_t, 1.0, 1.0 / var_t, 1.0])


def _solve_step(ai, grad, free):
    """AI^-1 DL erkin komponentlar bo'yicha; kerak bo'lsa Levenberg so'ndirish"""
    step = np.zeros(5)
    if not free.any():
        return step, False
    sub_ai = ai[np.ix_(free, free)]
    sub_grad = grad[free]

    damped = False
    mu = DAMPING_START
    matrix = sub_ai
    for _ in range(DAMPING_STEPS + 1):
        condition = np.linalg.cond(matrix)
        if np.isfinite(condition) and condition <= CONDITION_LIMIT:
            try:
                step[free] = linalg.solve(matrix, sub_grad, assume_a='sym')
                return step, damped
            except linalg.LinAlgError:
                pass
        damped = True
        matrix = sub_ai + mu * np.diag(np.diag(sub_ai))
        mu *= DAMPING_GROWTH

    # so'nggi chora: gradient yo'nalishi
    step[free] = -sub_grad / np.maximum(np.abs(np.diag(sub_ai)), 1e-12)
    return step, True


def ai_reml_fit(data, grm, options=None):
    """AI-REML: theta <- theta - AI^-1 DL

    Manfiy bo'lib qolgan komponentlar sigma2_ph * floor_scale ga qaytariladi,
    ketma-ket 3 marta qaytarilgan komponent muzlatiladi.
    """
    options = options or RemlOptions()
    n_records = data.n_records
    if n_records < MIN_RECORDS:
        raise InputError(f"AI-REML uchun kamida {MIN_RECORDS} ta yozuv kerak, {n_records} berilgan")
    if n_records > settings.REML_RECORD_LIMIT:
        raise InputError(
            f"{n_records} ta yozuv REML chegarasidan ({settings.REML_RECORD_LIMIT}) katta; "
            "--partitions bilan bo'laklarga ajrating"
        )

    y = data.phenotypes
    a, beta_names = design_matrix(data)
    sigma2_ph = float(np.var(y, ddof=1))
    if not sigma2_ph > 0.0:
        raise InputError("Fenotip dispersiyasi nol")
    floor = sigma2_ph * options.floor_scale
    structure = assemble_structure(data, grm, dense=options.dense)

    theta = np.maximum(initial_theta(data, sigma2_ph, options), floor)
    state = RemlEvaluation(theta, y, a, structure)
    trace = [state.loglik]
    reset_counts = np.zeros(5, dtype=int)
    frozen = np.zeros(5, dtype=bool)
    reset_iterations, damped_iterations = [], []
    converged = False
    iteration = 0

    for iteration in range(1, options.max_iter + 1):
        grad = state.gradient()
        ai = state.average_information()
        step, damped = _solve_step(ai, grad, ~frozen)
        if damped:
            damped_iterations.append(iteration)
            logger.warning(f"AI matritsasi yomon shartlangan, so'ndirilgan qadam (iteratsiya {iteration})")

        accepted = None
        for halving in range(MAX_HALVINGS + 1):
            candidate = theta - step / (2.0 ** halving)
            negative = (candidate <= 0.0) & ~frozen
            candidate = np.where(negative | frozen, floor, candidate)
            try:
                trial = RemlEvaluation(candidate, y, a, structure)
            except NotPositiveDefiniteError:
                continue
            if trial.loglik >= state.loglik or negative.any():
                accepted = (candidate, trial, negative)
                break

        if accepted is None:
            # qadam yaxshilanish bermadi: kutilgan o'sish tol dan kichik bo'lsa maksimumdamiz
            predicted = -0.5 * float(grad @ step)
            converged = predicted < options.tol
            if not converged:
                logger.warning(f"Qadamni kamaytirish natija bermadi (iteratsiya {iteration})")
            break

        candidate, trial, negative = accepted
        if negative.any():
            reset_iterations.append(iteration)
            reset_counts = np.where(negative, reset_counts + 1, 0)
            newly_frozen = (reset_counts >= FREEZE_AFTER_RESETS) & ~frozen
            if newly_frozen.any():
                frozen |= newly_frozen
                logger.warning(f"Komponentlar chegarada muzlatildi: {np.flatnonzero(newly_frozen).tolist()}")
        else:
            reset_counts[:] = 0

        change = trial.loglik - state.loglik
        theta, state = candidate, trial
        trace.append(state.loglik)
        logger.debug(f"iteratsiya {iteration}: l={state.loglik:.6f}, theta={theta.tolist()}")
        if abs(change) < options.tol and not negative.any():
            converged = True
            break

    ai = state.average_information()
    theta_hat = VarianceComponents.from_array(theta)
    try:
        cov_theta = linalg.inv(-ai)
        cov_theta = 0.5 * (cov_theta + cov_theta.T)
    except linalg.LinAlgError:
        cov_theta = None
    xi, cov_xi = delta_transform(theta_hat, ai)

    fit = FitResult(
        theta_hat=theta_hat,
        beta_hat=state.beta,
        beta_names=beta_names,
        xi_hat=xi,
        ai_theta=ai,
        cov_theta=cov_theta,
        cov_xi=cov_xi,
        loglik_trace=trace,
        converged=converged,
        iterations=iteration,
        boundary_flags=tuple(bool(v) for v in theta <= floor * (1.0 + 1e-9)),
        reset_iterations=reset_iterations,
        damped_iterations=damped_iterations,
        frozen=tuple(bool(f) for f in frozen),
        sigma2_ph=sigma2_ph,
        floor=floor,
        n_subjects=data.n_subjects,
        n_records=n_records,
        method='aireml',
        options=options.as_dict(),
    )
    if converged:
        logger.info(
            f"AI-REML yaqinlashdi: {iteration} iteratsiya, lambda1={xi.lambda1}, lambda2={xi.lambda2}"
        )
    else:
        logger.warning(f"AI-REML {iteration} iteratsiyada yaqinlashmadi")
    return fit
