"""Ridge-fusion start, lambda grids and the warm-started fusiongram."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import admm
from .errors import EmptyPath, InvalidRange
from .model import Dataset
from .penalty import DEFAULT_GAMMA, PenaltySpec, objective
from .subgroup import Partition, extract_groups, extract_groups_by_beta, modified_bic

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_STAR = 0.001
LAMBDA_MAX_CAP = 2.0**10
# relative part of the stopping rule used along paths; see admm.solve
DEFAULT_REL_TOL = 1e-3


@dataclass(frozen=True)
class PathConfig:
    """Grid and solver settings.

    ``lambda_max`` of None triggers the doubling search; ``lambda_min`` of None
    means ``min_ratio * lambda_max``.  The ratio is 0.4 rather than a tiny
    number because the modified BIC readily picks over-split solutions whose
    extra groups soak up noise; those only exist well below the full-fusion end
    of the fusiongram.  ``refine``
    turns on the single-subject reassignment pass of ``refine_assignment``.
    """

    lambda_min: float | None = None
    lambda_max: float | None = None
    grid_size: int = 100
    grid_spacing: str = "log"
    penalty: str = "mcp"
    gamma: float = DEFAULT_GAMMA
    vartheta: float = admm.DEFAULT_VARTHETA
    tol: float | None = None
    rel_tol: float = DEFAULT_REL_TOL
    max_iter: int = admm.DEFAULT_MAX_ITER
    lambda_star: float = DEFAULT_LAMBDA_STAR
    eps_fuse: float | None = None
    group_rule: str = "delta"
    c_n: float | str | None = None
    min_ratio: float = 0.4
    refine: bool = True

    def __post_init__(self):
        if self.grid_size < 2:
            raise InvalidRange(f"grid_size must be >= 2, got {self.grid_size}")
        if self.grid_spacing not in ("log", "linear"):
            raise InvalidRange(f"grid_spacing must be 'log' or 'linear', got {self.grid_spacing!r}")
        if self.group_rule not in ("delta", "beta"):
            raise ValueError(f"group_rule must be 'delta' or 'beta', got {self.group_rule!r}")
        lo, hi = self.lambda_min, self.lambda_max
        if self.rel_tol < 0:
            raise InvalidRange(f"rel_tol must be >= 0, got {self.rel_tol}")
        if lo is not None and not lo > 0:
            raise InvalidRange(f"lambda_min must be positive, got {lo}")
        if lo is not None and hi is not None and not lo < hi:
            raise InvalidRange(f"need lambda_min < lambda_max, got [{lo}, {hi}]")
        PenaltySpec(self.penalty, 0.0, self.gamma).check_vartheta(self.vartheta)

    def spec(self, lam: float) -> PenaltySpec:
        return PenaltySpec(self.penalty, float(lam), self.gamma)


@dataclass(eq=False)
class PathPoint:
    lam: float
    eta_hat: np.ndarray
    beta_hat: np.ndarray
    partition: Partition
    bic: float
    iterations: int
    converged: bool
    primal_norm: float
    dual_norm: float

    @property
    def K_hat(self) -> int:
        return self.partition.K_hat


@dataclass(eq=False)
class FusionPath:
    points: list = field(default_factory=list)
    config: PathConfig | None = None

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([pt.lam for pt in self.points])

    @property
    def k_hats(self) -> np.ndarray:
        return np.array([pt.K_hat for pt in self.points])

    def summary(self) -> dict:
        return {
            "points": [
                {
                    "lambda": float(pt.lam),
                    "k_hat": int(pt.K_hat),
                    "bic": float(pt.bic),
                    "converged": bool(pt.converged),
                    "iterations": int(pt.iterations),
                }
                for pt in self.points
            ]
        }


def _group_least_squares(d: Dataset, labels, K: int):
    """Least squares with beta constant within the blocks given by ``labels``."""
    Xg = np.zeros((d.n, K * d.p))
    for c in range(d.p):
        Xg[np.arange(d.n), labels * d.p + c] = d.X[:, c]
    U = np.hstack([d.Z, Xg])
    coef, *_ = np.linalg.lstsq(U, d.y, rcond=None)
    eta = coef[: d.q]
    alpha = coef[d.q:].reshape(K, d.p)
    return eta, alpha


def ridge_initialize(d: Dataset, lambda_star: float = DEFAULT_LAMBDA_STAR, vartheta: float | None = None,
                     ws: admm.AdmmWorkspace | None = None) -> admm.AdmmState:
    """Ridge-fusion pilot fit, binned into floor(sqrt(n)) groups and refit by least squares."""
    if not lambda_star > 0:
        raise ValueError("lambda_star must be positive")
    ridge = admm.AdmmWorkspace(d, lambda_star)
    beta_r = ridge.M_solve(ridge.XtQy)
    k_star = max(1, math.isqrt(d.n))
    order = np.argsort(np.median(beta_r, axis=1), kind="stable")
    labels = np.empty(d.n, dtype=np.int64)
    for k, chunk in enumerate(np.array_split(order, k_star)):
        labels[chunk] = k
    eta0, alpha0 = _group_least_squares(d, labels, k_star)
    beta0 = alpha0[labels]
    return admm.initial_state(d, beta0, eta0, ws)


def ridge_fit(d: Dataset, lambda_star: float = DEFAULT_LAMBDA_STAR):
    """Closed-form ridge-fusion estimates (beta_R, eta_R)."""
    ridge = admm.AdmmWorkspace(d, lambda_star)
    beta_r = ridge.M_solve(ridge.XtQy)
    return beta_r, ridge.eta_from(d, beta_r)


def make_lambda_grid(cfg: PathConfig) -> np.ndarray:
    lo, hi = cfg.lambda_min, cfg.lambda_max
    if lo is None or hi is None:
        raise InvalidRange("lambda_min and lambda_max must both be set to build a grid")
    if cfg.grid_spacing == "log":
        grid = np.geomspace(lo, hi, cfg.grid_size)
    else:
        grid = np.linspace(lo, hi, cfg.grid_size)
    grid[0], grid[-1] = lo, hi
    if np.any(np.diff(grid) <= 0):
        raise InvalidRange("grid is not strictly increasing")
    return grid


def _partition(cfg: PathConfig, state: admm.AdmmState) -> Partition:
    if cfg.group_rule == "beta":
        return extract_groups_by_beta(state.beta, cfg.eps_fuse)
    return extract_groups(state.beta, state.delta, cfg.eps_fuse)


def find_lambda_max(d: Dataset, cfg: PathConfig, ws=None, init=None) -> float:
    """Double lambda from 1 until the solution is fully fused (capped at 2**10)."""
    ws = ws or admm.AdmmWorkspace(d, cfg.vartheta)
    state = init or ridge_initialize(d, cfg.lambda_star, ws=ws)
    lam = 1.0
    while True:
        state = admm.solve(ws, d, cfg.spec(lam), state, cfg.tol, cfg.max_iter, raise_on_fail=False,
                           rel_tol=cfg.rel_tol)
        if _partition(cfg, state).K_hat == 1 or lam >= LAMBDA_MAX_CAP:
            return lam
        lam *= 2.0


def resolve_grid(d: Dataset, cfg: PathConfig, ws=None) -> np.ndarray:
    lo, hi = cfg.lambda_min, cfg.lambda_max
    if hi is None:
        hi = find_lambda_max(d, cfg, ws)
    if lo is None:
        lo = hi * cfg.min_ratio
    if not 0 < lo < hi:
        raise InvalidRange(f"need 0 < lambda_min < lambda_max, got [{lo}, {hi}]")
    return make_lambda_grid(replace(cfg, lambda_min=lo, lambda_max=hi))


def compute_path(d: Dataset, cfg: PathConfig, ws: admm.AdmmWorkspace | None = None,
                 grid=None) -> FusionPath:
    """Solve on the grid from smallest to largest lambda, warm-starting each point."""
    ws = ws or admm.AdmmWorkspace(d, cfg.vartheta)
    lambdas = np.asarray(grid, dtype=float) if grid is not None else resolve_grid(d, cfg, ws)
    if lambdas.size < 1 or np.any(np.diff(lambdas) <= 0):
        raise InvalidRange("lambda grid must be nonempty and strictly increasing")
    state = ridge_initialize(d, cfg.lambda_star, ws=ws)
    path = FusionPath(config=cfg)
    for lam in lambdas:
        state = _append_point(path, d, cfg, ws, state, lam)
    # the doubling search starts cold, so the warm-started path may still be split at
    # its top; keep doubling until it fuses when the upper end was chosen automatically
    lam = float(lambdas[-1])
    while grid is None and cfg.lambda_max is None and path.points[-1].K_hat > 1 and lam < LAMBDA_MAX_CAP:
        lam *= 2.0
        state = _append_point(path, d, cfg, ws, state, lam)
    return path


def _append_point(path: FusionPath, d: Dataset, cfg: PathConfig, ws, state, lam):
    state = admm.solve(ws, d, cfg.spec(lam), state, cfg.tol, cfg.max_iter, raise_on_fail=False,
                       rel_tol=cfg.rel_tol)
    if not state.converged:
        log.warning("lambda=%.6g did not converge in %d iterations", lam, state.iter)
    part = _partition(cfg, state)
    if cfg.refine and part.K_hat > 1:
        state, part = refine_assignment(d, cfg, ws, state, part, lam)
    bic = modified_bic(d, state.eta, state.beta, part.K_hat, cfg.c_n)
    path.points.append(
        PathPoint(float(lam), state.eta.copy(), state.beta.copy(), part, bic, state.iter,
                  state.converged, state.primal_norm, state.dual_norm)
    )
    return state


def _fused_state(d: Dataset, ws: admm.AdmmWorkspace, labels, eta, alpha) -> admm.AdmmState:
    """ADMM state for a fused fit: delta = A beta and multipliers that balance the loss gradient.

    Within a block the multipliers solve A'upsilon = x_i e_i with the minimum-norm choice
    (g_i - g_j) / |G|; across blocks they are zero, which is exact in the flat part of
    the penalty.
    """
    beta = alpha[labels]
    e = d.y - d.Z @ eta - np.einsum("ij,ij->i", d.X, beta)
    g = d.X * e[:, None]
    rows, cols = ws.pairs.rows, ws.pairs.cols
    sizes = np.bincount(labels)
    same = labels[rows] == labels[cols]
    ups = np.where(same[:, None], (g[rows] - g[cols]) / sizes[labels[rows]][:, None], 0.0)
    return admm.AdmmState(eta, beta, ws.pairs.apply_A(beta), ups)


def refine_assignment(d: Dataset, cfg: PathConfig, ws: admm.AdmmWorkspace, state: admm.AdmmState,
                      part: Partition, lam: float, max_moves: int | None = None):
    """Greedy single-subject moves between fused blocks that strictly lower Q_n.

    Subjects whose x_i is close to zero carry little information about beta_i and can
    be left in the wrong block by the ADMM iterations, a local minimizer that a
    neighbouring partition beats.  Each trial moves one subject to the block whose
    fitted value is closest to its partial residual, refits by group least squares
    and is kept only if Q_n drops.  An accepted partition is handed back to ADMM so
    the returned state is again a fixed point; if that run fails or ends with a
    higher Q_n the original state is kept.
    """
    spec = cfg.spec(lam)
    q_start = objective(d, state.eta, state.beta, spec)
    labels = part.labels.copy()
    K = part.K_hat
    eta, alpha = _group_least_squares(d, labels, K)
    q_best = objective(d, eta, alpha[labels], spec)
    if not q_best < q_start:
        q_best = q_start
    moved = False
    max_moves = d.n if max_moves is None else max_moves
    for _ in range(max_moves):
        r = d.y - d.Z @ eta
        cost = (r[:, None] - d.X @ alpha.T) ** 2
        gain = cost[np.arange(d.n), labels] - cost.min(axis=1)
        accepted = False
        for i in np.argsort(-gain, kind="stable"):
            if gain[i] <= 0:
                break
            trial = labels.copy()
            trial[i] = int(np.argmin(cost[i]))
            trial = np.unique(trial, return_inverse=True)[1]
            k_trial = int(trial.max()) + 1
            eta_t, alpha_t = _group_least_squares(d, trial, k_trial)
            q_t = objective(d, eta_t, alpha_t[trial], spec)
            if q_t < q_best - 1e-12 * abs(q_best):
                labels, K, eta, alpha, q_best = trial, k_trial, eta_t, alpha_t, q_t
                accepted = moved = True
                break
        if not accepted:
            break
    if not moved:
        return state, part
    polished = admm.solve(ws, d, spec, _fused_state(d, ws, labels, eta, alpha), cfg.tol, cfg.max_iter,
                          raise_on_fail=False, rel_tol=cfg.rel_tol)
    if not polished.converged or objective(d, polished.eta, polished.beta, spec) >= q_start:
        return state, part
    return polished, _partition(cfg, polished)


def _fmt(v: float) -> str:
    return repr(float(v))


def fusiongram_csv(path: FusionPath) -> str:
    """Long-format table lambda, subject, coordinate, beta_value."""
    if not path.points:
        raise EmptyPath("path has no points")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "subject", "coordinate", "beta_value"])
    for pt in path.points:
        lam = _fmt(pt.lam)
        for i, row in enumerate(pt.beta_hat):
            for c, v in enumerate(row):
                w.writerow([lam, i, c, _fmt(v)])
    return buf.getvalue()


def export_fusiongram(path: FusionPath, csv_path, json_path=None) -> None:
    """Write the fusiongram CSV and, optionally, the per-point JSON summary."""
    text = fusiongram_csv(path)
    Path(csv_path).write_text(text, encoding="utf-8")
    if json_path is not None:
        Path(json_path).write_text(json.dumps(path.summary(), indent=2) + "\n", encoding="utf-8")
