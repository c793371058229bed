"""Inference with the selected partition held fixed.

Standard deviations come from the Schur complements of U'U, U = (Z, X_tilde),
where X_tilde spreads each x_i into the column block of its group.  The
heterogeneity test is an F statistic on contrasts of the group effects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import ndtri

from .errors import (
    InvalidDof,
    InvalidLevel,
    NonPositiveDof,
    SingularContrastCovariance,
    SingularSchur,
)
from .model import Dataset
from .subgroup import Partition, SubgroupResult


class GroupDesign:
    """Indicator matrix W_tilde (n, K), expanded design X_tilde (n, K p) and U = (Z, X_tilde)."""

    def __init__(self, d: Dataset, part: Partition):
        n, p, K = d.n, d.p, part.K_hat
        self.n, self.p, self.q, self.K = n, p, d.q, K
        self.Z = d.Z
        self.W_tilde = np.zeros((n, K))
        self.W_tilde[np.arange(n), part.labels] = 1.0
        self.X_tilde = np.zeros((n, K * p))
        for c in range(p):
            self.X_tilde[np.arange(n), part.labels * p + c] = d.X[:, c]
        self.U = np.hstack([d.Z, self.X_tilde])

    def schur(self, target: str) -> np.ndarray:
        Z, Xt = self.Z, self.X_tilde
        ZZ, XX, ZX = Z.T @ Z, Xt.T @ Xt, Z.T @ Xt
        try:
            if target == "eta":
                return ZZ - ZX @ linalg.solve(XX, ZX.T, assume_a="pos")
            if target == "alpha":
                return XX - ZX.T @ linalg.solve(ZZ, ZX, assume_a="pos")
        except linalg.LinAlgError as exc:
            raise SingularSchur(str(exc)) from None
        raise ValueError(f"target must be 'eta' or 'alpha', got {target!r}")

    def schur_inverse(self, target: str) -> np.ndarray:
        S = self.schur(target)
        try:
            c = linalg.cho_factor(S, lower=True)
        except linalg.LinAlgError:
            raise SingularSchur(f"Schur complement for {target} is not positive definite") from None
        return linalg.cho_solve(c, np.eye(S.shape[0]))


def sigma2_hat(d: Dataset, eta_hat, beta_hat, K_hat: int) -> float:
    dof = d.n - d.q - K_hat * d.p
    if dof <= 0:
        raise NonPositiveDof(f"n - q - K p = {dof}")
    r = d.residuals(eta_hat, beta_hat)
    return float(r @ r) / dof


def asymptotic_sd(gd: GroupDesign, sigma2: float, a, target: str) -> float:
    """sigma * sqrt(a' S^{-1} a) for the Schur complement S of the requested block."""
    a = np.asarray(a, dtype=float)
    if not math.isclose(float(np.linalg.norm(a)), 1.0, rel_tol=1e-9):
        raise ValueError("direction a must have unit norm")
    S = gd.schur(target)
    try:
        v = linalg.solve(S, a, assume_a="pos")
    except linalg.LinAlgError as exc:
        raise SingularSchur(str(exc)) from None
    return math.sqrt(sigma2) * math.sqrt(float(a @ v))


def coordinate_sds(gd: GroupDesign, sigma2: float, target: str) -> np.ndarray:
    """Asymptotic SDs along every coordinate direction of the block."""
    return math.sqrt(sigma2) * np.sqrt(np.diag(gd.schur_inverse(target)))


def normal_quantile(prob: float) -> float:
    return float(ndtri(prob))


def confidence_intervals(point_estimates, asds, level: float = 0.95) -> np.ndarray:
    """Rows (lower, upper) of estimate +/- z_{(1-level)/2} * ASD."""
    if not 0.0 < level < 1.0:
        raise InvalidLevel(f"level must lie in (0, 1), got {level}")
    est = np.atleast_1d(np.asarray(point_estimates, dtype=float))
    sd = np.atleast_1d(np.asarray(asds, dtype=float))
    half = normal_quantile(0.5 + level / 2.0) * sd
    return np.column_stack([est - half, est + half])


# --- F distribution -------------------------------------------------------

def _betacf(a: float, b: float, x: float, max_iter: int = 100000, eps: float = 1e-16) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise InvalidDof(f"beta parameters must be positive, got a={a}, b={b}")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: float, d2: float) -> float:
    """P(F_{d1, d2} <= x)."""
    if not (d1 > 0 and d2 > 0):
        raise InvalidDof(f"degrees of freedom must be positive, got ({d1}, {d2})")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    # I_{d1 x/(d1 x + d2)}(d1/2, d2/2), with the complement formed directly when x is large
    u = d1 * x
    if u <= d2:
        return betainc_reg(d1 / 2.0, d2 / 2.0, u / (u + d2))
    return 1.0 - betainc_reg(d2 / 2.0, d1 / 2.0, d2 / (u + d2))


def f_sf(x: float, d1: float, d2: float) -> float:
    """Upper tail P(F_{d1, d2} > x) without cancellation."""
    if not (d1 > 0 and d2 > 0):
        raise InvalidDof(f"degrees of freedom must be positive, got ({d1}, {d2})")
    if x <= 0:
        return 1.0
    u = d1 * x
    return betainc_reg(d2 / 2.0, d1 / 2.0, d2 / (u + d2))


def default_contrast(K: int, p: int, first: int = 0, second: int = 1) -> np.ndarray:
    """L = [.., I_p, .., -I_p, ..] comparing group ``first`` with group ``second``."""
    if K < 2:
        raise ValueError("a between-group contrast needs at least two groups")
    L = np.zeros((p, K * p))
    L[:, first * p:(first + 1) * p] = np.eye(p)
    L[:, second * p:(second + 1) * p] = -np.eye(p)
    return L


def f_test(gd: GroupDesign, alpha_hat, sigma2: float, L=None):
    """Heterogeneity F statistic, its degrees of freedom and p-value.

    F = (L a)' (sigma2 L S^{-1} L')^{-1} (L a) / p, with S the alpha-block Schur
    complement, referred to F(p, n - p K - q - 1).
    """
    p, K = gd.p, gd.K
    alpha_vec = np.asarray(alpha_hat, dtype=float).reshape(-1)
    if L is None:
        L = default_contrast(K, p)
    L = np.atleast_2d(np.asarray(L, dtype=float))
    dof2 = gd.n - p * K - gd.q - 1
    if dof2 <= 0:
        raise NonPositiveDof(f"n - pK - q - 1 = {dof2}")
    la = L @ alpha_vec
    V = sigma2 * L @ gd.schur_inverse("alpha") @ L.T
    if not np.all(np.isfinite(V)) or np.linalg.matrix_rank(V) < V.shape[0]:
        raise SingularContrastCovariance("L S^{-1} L' is singular")
    try:
        stat = float(la @ linalg.solve(V, la, assume_a="pos")) / p
    except linalg.LinAlgError as exc:
        raise SingularContrastCovariance(str(exc)) from None
    stat = max(stat, 0.0)
    return stat, (p, dof2), min(1.0, max(0.0, f_sf(stat, p, dof2)))


@dataclass
class InferenceReport:
    sigma2_hat: float
    asd_eta: np.ndarray
    asd_alpha: np.ndarray
    ci_eta: np.ndarray
    ci_alpha: np.ndarray
    level: float
    f_stat: float | None = None
    dof: tuple | None = None
    p_value: float | None = None

    def to_dict(self) -> dict:
        def rows(a):
            return [[float(v) for v in r] for r in a]

        return {
            "sigma2_hat": float(self.sigma2_hat),
            "level": float(self.level),
            "asd_eta": [float(v) for v in self.asd_eta],
            "asd_alpha": [float(v) for v in self.asd_alpha],
            "ci_eta": rows(self.ci_eta),
            "ci_alpha": rows(self.ci_alpha),
            "f_stat": None if self.f_stat is None else float(self.f_stat),
            "dof": None if self.dof is None else [int(v) for v in self.dof],
            "p_value": None if self.p_value is None else float(self.p_value),
        }


def infer(d: Dataset, result: SubgroupResult, level: float = 0.95, L=None) -> InferenceReport:
    """Variance estimate, ASDs, intervals and (when K_hat >= 2) the F-test for a selected model."""
    part = result.partition
    beta = result.beta_hat if result.beta_hat is not None else result.alpha_hat[part.labels]
    s2 = sigma2_hat(d, result.eta_hat, beta, part.K_hat)
    gd = GroupDesign(d, part)
    asd_eta = coordinate_sds(gd, s2, "eta")
    asd_alpha = coordinate_sds(gd, s2, "alpha")
    alpha_vec = np.asarray(result.alpha_hat, dtype=float).reshape(-1)
    report = InferenceReport(
        sigma2_hat=s2,
        asd_eta=asd_eta,
        asd_alpha=asd_alpha,
        ci_eta=confidence_intervals(result.eta_hat, asd_eta, level),
        ci_alpha=confidence_intervals(alpha_vec, asd_alpha, level),
        level=level,
    )
    if part.K_hat >= 2 or L is not None:
        report.f_stat, report.dof, report.p_value = f_test(gd, result.alpha_hat, s2, L)
    return report
