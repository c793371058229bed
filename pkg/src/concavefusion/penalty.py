"""Fusion penalties and their groupwise thresholding operators.

All penalties act on the Euclidean norm of a pairwise difference
``beta_i - beta_j``.  The prox operators solve

    argmin_d  (vartheta / 2) * ||zeta - d||^2 + p(||d||, lam)

in closed form, row by row, for a stack of ``zeta`` vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleGamma, NegativeArgument, ShapeMismatch

KINDS = ("lasso", "mcp", "scad")
DEFAULT_GAMMA = 3.0


@dataclass(frozen=True)
class PenaltySpec:
    kind: str = "mcp"
    lam: float = 0.0
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}; expected one of {KINDS}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(self.kind, float(lam), self.gamma)

    def check_vartheta(self, vartheta: float) -> None:
        """Raise IncompatibleGamma unless the prox is well posed for this ``vartheta``."""
        if vartheta <= 0:
            raise ValueError(f"vartheta must be positive, got {vartheta}")
        if self.kind == "mcp" and not self.gamma > 1.0 / vartheta:
            raise IncompatibleGamma(
                f"MCP needs gamma > 1/vartheta = {1.0 / vartheta:g}, got gamma={self.gamma:g}"
            )
        if self.kind == "scad" and not self.gamma > 1.0 / vartheta + 1.0:
            raise IncompatibleGamma(
                f"SCAD needs gamma > 1/vartheta + 1 = {1.0 / vartheta + 1.0:g}, "
                f"got gamma={self.gamma:g}"
            )


def penalty_value(spec: PenaltySpec, t):
    """Evaluate p_gamma(t, lambda) for scalar or array ``t >= 0``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise NegativeArgument("penalty argument must be nonnegative")
    lam, gam = spec.lam, spec.gamma
    if spec.kind == "lasso":
        out = lam * t_arr
    elif spec.kind == "mcp":
        out = np.where(t_arr <= gam * lam, lam * t_arr - t_arr**2 / (2.0 * gam), 0.5 * gam * lam**2)
    else:
        mid = (2.0 * gam * lam * t_arr - t_arr**2 - lam**2) / (2.0 * (gam - 1.0))
        out = np.where(
            t_arr <= lam,
            lam * t_arr,
            np.where(t_arr <= gam * lam, mid, 0.5 * (gam + 1.0) * lam**2),
        )
    return float(out) if np.ndim(out) == 0 else out


def _shrink_factor(norms, t):
    # (1 - t/||z||)_+ with the z = 0 case mapped to 0
    with np.errstate(divide="ignore", invalid="ignore"):
        f = 1.0 - t / norms
    f[~(norms > 0)] = 0.0
    return np.maximum(f, 0.0)


def group_soft_threshold(z, t: float):
    """Groupwise soft thresholding (1 - t/||z||)_+ z of a single vector."""
    if t < 0:
        raise NegativeArgument("threshold must be nonnegative")
    z = np.asarray(z, dtype=float)
    norms = np.atleast_1d(np.linalg.norm(z))
    return _shrink_factor(norms, t)[0] * z


def prox_scale(norms, spec: PenaltySpec, vartheta: float):
    """Multiplier c(||zeta||) such that prox(zeta) = c * zeta, vectorised over norms."""
    norms = np.asarray(norms, dtype=float)
    lam, gam = spec.lam, spec.gamma
    soft = _shrink_factor(norms, lam / vartheta)
    if spec.kind == "lasso":
        return soft
    if spec.kind == "mcp":
        return np.where(norms <= gam * lam, soft / (1.0 - 1.0 / (gam * vartheta)), 1.0)
    # scad
    mid = _shrink_factor(norms, gam * lam / ((gam - 1.0) * vartheta)) / (
        1.0 - 1.0 / ((gam - 1.0) * vartheta)
    )
    return np.where(norms <= lam + lam / vartheta, soft, np.where(norms <= gam * lam, mid, 1.0))


def prox_rows(zeta, spec: PenaltySpec, vartheta: float):
    """Apply the groupwise prox to every row of a (m, p) array."""
    spec.check_vartheta(vartheta)
    zeta = np.asarray(zeta, dtype=float)
    norms = np.sqrt(np.einsum("ij,ij->i", zeta, zeta))
    return prox_scale(norms, spec, vartheta)[:, None] * zeta


def prox(zeta, spec: PenaltySpec, vartheta: float):
    """Exact minimiser of (vartheta/2)||zeta - d||^2 + p(||d||, lambda) over d."""
    zeta = np.asarray(zeta, dtype=float)
    return prox_rows(zeta.reshape(1, -1), spec, vartheta).reshape(zeta.shape)


def pairwise_norms(beta):
    """Norms ||beta_i - beta_j|| for i < j, in row-major pair order."""
    beta = np.asarray(beta, dtype=float)
    iu, ju = np.triu_indices(beta.shape[0], k=1)
    diff = beta[iu] - beta[ju]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def objective(data, eta, beta, spec: PenaltySpec) -> float:
    """Q_n(eta, beta): half the residual sum of squares plus the fusion penalty."""
    eta = np.asarray(eta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if beta.ndim == 1:
        beta = beta[:, None]
    if eta.shape != (data.q,) or beta.shape != (data.n, data.p):
        raise ShapeMismatch(
            f"expected eta ({data.q},) and beta ({data.n}, {data.p}), "
            f"got {eta.shape} and {beta.shape}"
        )
    resid = data.y - data.Z @ eta - np.einsum("ij,ij->i", data.X, beta)
    loss = 0.5 * float(resid @ resid)
    if spec.lam == 0:
        return loss
    return loss + float(np.sum(penalty_value(spec, pairwise_norms(beta))))
