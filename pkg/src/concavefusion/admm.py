"""ADMM for concave pairwise fusion.

The pairwise difference operator A = D kron I_p is never formed.  Products
with A and A' are computed through the pair index arrays, and the beta system

    (X' Q_Z X + vartheta A'A) beta = X' Q_Z y + vartheta A'(delta - upsilon / vartheta)

is factorized once per (dataset, vartheta) using A'A = n I - (1 kron I_p)(1 kron I_p)'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .errors import NotConverged, ShapeMismatch, SingularSystem
from .model import Dataset
from ._kernels import pair_sweep
from .penalty import PenaltySpec, prox_rows

DEFAULT_VARTHETA = 1.0
DEFAULT_MAX_ITER = 5000
_KIND_CODE = {"lasso": 0, "mcp": 1, "scad": 2}


class PairIndex:
    """Bijection between pairs (i, j), i < j, and row-major dense indices."""

    def __init__(self, n: int):
        self.n = n
        self.rows, self.cols = np.triu_indices(n, k=1)

    def __len__(self):
        return self.n * (self.n - 1) // 2

    def index(self, i: int, j: int) -> int:
        if not 0 <= i < j < self.n:
            raise IndexError(f"need 0 <= i < j < {self.n}, got ({i}, {j})")
        return i * self.n - i * (i + 1) // 2 + (j - i - 1)

    def pair(self, k: int) -> tuple[int, int]:
        return int(self.rows[k]), int(self.cols[k])

    def apply_A(self, beta):
        """A beta: stacked differences beta_i - beta_j, shape (n(n-1)/2, p)."""
        return beta[self.rows] - beta[self.cols]

    def apply_At(self, w):
        """A' w: for each pair add w_ij to row i and subtract it from row j."""
        w = np.asarray(w, dtype=float)
        out = np.empty((self.n, w.shape[1]))
        for c in range(w.shape[1]):
            out[:, c] = np.bincount(self.rows, w[:, c], self.n) - np.bincount(self.cols, w[:, c], self.n)
        return out

    def apply_AtA(self, beta):
        """A'A beta = n beta - 1 1' beta, via the rank-p correction identity."""
        return self.n * beta - beta.sum(axis=0, keepdims=True)


def dense_difference_matrix(n: int) -> np.ndarray:
    """D with rows e_i - e_j for i < j.  Test oracle only: O(n^3) memory."""
    pi = PairIndex(n)
    D = np.zeros((len(pi), n))
    D[np.arange(len(pi)), pi.rows] = 1.0
    D[np.arange(len(pi)), pi.cols] = -1.0
    return D


@dataclass
class AdmmState:
    eta: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    upsilon: np.ndarray
    iter: int = 0
    primal_norm: float = math.inf
    dual_norm: float = math.inf
    converged: bool = False

    def copy(self) -> "AdmmState":
        return replace(
            self,
            eta=self.eta.copy(),
            beta=self.beta.copy(),
            delta=self.delta.copy(),
            upsilon=self.upsilon.copy(),
        )


class AdmmWorkspace:
    """Everything about the beta/eta step that does not depend on lambda."""

    def __init__(self, d: Dataset, vartheta: float = DEFAULT_VARTHETA, project_z: bool = True):
        if not vartheta > 0:
            raise ValueError(f"vartheta must be positive, got {vartheta}")
        self.vartheta = float(vartheta)
        self.n, self.p, self.q = d.n, d.p, d.q
        self.pairs = PairIndex(d.n)
        self.project_z = project_z
        X = d.X
        if project_z:
            qz, rz = np.linalg.qr(d.Z)
            if np.min(np.abs(np.diag(rz))) <= 1e-10 * np.max(np.abs(np.diag(rz))):
                raise SingularSystem("Z'Z is singular")
            self._qz, self._rz = qz, rz
            Qz = np.eye(d.n) - qz @ qz.T
        else:
            Qz = np.eye(d.n)
        n, p = d.n, d.p
        # X'Q_Z X has (i, j) block x_i (Q_Z)_ij x_j'
        XQX = (Qz[:, None, :, None] * X[:, :, None, None] * X[None, None, :, :]).reshape(n * p, n * p)
        AtA = n * np.eye(n * p) - np.kron(np.ones((n, n)), np.eye(p))
        self.M = XQX + self.vartheta * AtA
        try:
            self._chol = linalg.cho_factor(self.M, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise SingularSystem(f"beta system is not positive definite: {exc}") from None
        self.XtQy = X * self.QZ_apply(d.y)[:, None]

    def QZ_apply(self, v):
        if not self.project_z:
            return np.array(v, dtype=float)
        return v - self._qz @ (self._qz.T @ v)

    def M_solve(self, rhs):
        """Solve M w = rhs with rhs shaped (n, p) or flat (np,)."""
        shape = np.shape(rhs)
        w = linalg.cho_solve(self._chol, np.reshape(rhs, -1), check_finite=False)
        return w.reshape(shape)

    def eta_from(self, d: Dataset, beta):
        """Least-squares coefficient of (y - X beta) on Z."""
        r = d.y - np.einsum("ij,ij->i", d.X, beta)
        if not self.project_z:
            return np.zeros(self.q)
        return linalg.solve_triangular(self._rz, self._qz.T @ r, check_finite=False)


def build_workspace(d: Dataset, vartheta: float = DEFAULT_VARTHETA) -> AdmmWorkspace:
    return AdmmWorkspace(d, vartheta)


def default_tol(n: int, p: int) -> float:
    return 1e-5 * math.sqrt(n * (n - 1) / 2 * p)


def update_beta(ws: AdmmWorkspace, d: Dataset, state: AdmmState):
    w = state.delta - state.upsilon / ws.vartheta
    rhs = ws.XtQy + ws.vartheta * ws.pairs.apply_At(w)
    return ws.M_solve(rhs)


def update_eta(ws: AdmmWorkspace, d: Dataset, beta_new):
    return ws.eta_from(d, beta_new)


def update_delta(state: AdmmState, spec: PenaltySpec, vartheta: float, pairs: PairIndex):
    zeta = pairs.apply_A(state.beta) + state.upsilon / vartheta
    return prox_rows(zeta, spec, vartheta)


def update_upsilon(state: AdmmState, delta_new, vartheta: float, pairs: PairIndex):
    return state.upsilon + vartheta * (pairs.apply_A(state.beta) - delta_new)


def residuals(prev_delta, state: AdmmState, ws: AdmmWorkspace) -> tuple[float, float]:
    r = ws.pairs.apply_A(state.beta) - state.delta
    s = ws.vartheta * ws.pairs.apply_At(state.delta - prev_delta)
    return float(np.sqrt(np.sum(r * r))), float(np.sqrt(np.sum(s * s)))


def initial_state(d: Dataset, beta, eta=None, ws: AdmmWorkspace | None = None) -> AdmmState:
    """State with delta = A beta and zero multipliers."""
    beta = np.asarray(beta, dtype=float).reshape(d.n, d.p)
    pairs = ws.pairs if ws is not None else PairIndex(d.n)
    if eta is None:
        eta = ws.eta_from(d, beta) if ws is not None else np.zeros(d.q)
    delta = pairs.apply_A(beta)
    return AdmmState(np.asarray(eta, dtype=float), beta.copy(), delta, np.zeros_like(delta))


def solve(
    ws: AdmmWorkspace,
    d: Dataset,
    spec: PenaltySpec,
    init: AdmmState,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    raise_on_fail: bool = True,
    rel_tol: float = 0.0,
) -> AdmmState:
    """Run Algorithm-1 iterations beta -> eta -> delta -> upsilon until both residuals are small.

    Stops when ||r|| < tol + rel_tol * max(||A beta||, ||delta||) and
    ||s|| < tol + rel_tol * ||A' upsilon||; ``rel_tol=0`` is a pure absolute test.

    On hitting ``max_iter`` raises NotConverged carrying the final state, unless
    ``raise_on_fail`` is False, in which case the state is returned with
    ``converged=False``.
    """
    spec.check_vartheta(ws.vartheta)
    if tol is None:
        tol = default_tol(d.n, d.p)
    if not tol > 0:
        raise ValueError("tol must be positive")
    m = len(ws.pairs)
    if init.beta.shape != (d.n, d.p) or init.delta.shape != (m, d.p) or init.upsilon.shape != (m, d.p):
        raise ShapeMismatch("initial state does not match the dataset")

    theta = ws.vartheta
    pairs = ws.pairs
    kind = _KIND_CODE[spec.kind]
    delta = np.ascontiguousarray(init.delta, dtype=float).copy()
    upsilon = np.ascontiguousarray(init.upsilon, dtype=float).copy()
    grad = pairs.apply_At(theta * delta - upsilon)
    beta = init.beta.copy()
    primal = dual = math.inf
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        beta = ws.M_solve(ws.XtQy + grad)
        grad, primal_sq, dual_vec, ab_sq, d_sq, atu_sq = pair_sweep(
            beta, delta, upsilon, pairs.rows, pairs.cols, spec.lam, spec.gamma, theta, kind
        )
        primal = math.sqrt(primal_sq)
        dual = theta * float(np.sqrt(np.sum(dual_vec * dual_vec)))
        if primal < tol + rel_tol * math.sqrt(max(ab_sq, d_sq)) and dual < tol + rel_tol * math.sqrt(atu_sq):
            converged = True
            break
    state = AdmmState(ws.eta_from(d, beta), beta, delta, upsilon, it, primal, dual, converged)
    if not converged and raise_on_fail:
        raise NotConverged(state)
    return state
