"""From a fused solution to subgroups: partition extraction, group means, BIC selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import NoConvergedPoint
from .model import Dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Partition:
    """Blocks are sorted index arrays, ordered by their smallest member."""

    blocks: tuple
    labels: np.ndarray

    @property
    def K_hat(self) -> int:
        return len(self.blocks)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        labels = np.asarray(labels)
        # relabel so block k is the one whose first member comes k-th
        _, first = np.unique(labels, return_index=True)
        order = np.argsort(first, kind="stable")
        remap = np.empty(order.size, dtype=np.int64)
        remap[order] = np.arange(order.size)
        _, inv = np.unique(labels, return_inverse=True)
        canon = remap[inv]
        blocks = tuple(np.flatnonzero(canon == k) for k in range(order.size))
        return cls(blocks, canon)

    @classmethod
    def from_blocks(cls, blocks, n: int | None = None) -> "Partition":
        blocks = [np.asarray(b, dtype=np.int64) for b in blocks]
        if n is None:
            n = int(sum(b.size for b in blocks))
        labels = np.full(n, -1, dtype=np.int64)
        for k, b in enumerate(blocks):
            if b.size == 0:
                raise ValueError("empty block")
            if np.any(labels[b] >= 0):
                raise ValueError("blocks overlap")
            labels[b] = k
        if np.any(labels < 0):
            raise ValueError("blocks do not cover 0..n-1")
        return cls.from_labels(labels)

    def as_lists(self) -> list[list[int]]:
        return [[int(i) for i in b] for b in self.blocks]


@dataclass(frozen=True, eq=False)
class SubgroupResult:
    partition: Partition
    alpha_hat: np.ndarray
    eta_hat: np.ndarray
    lambda_selected: float
    bic: float
    beta_hat: np.ndarray | None = None

    @property
    def K_hat(self) -> int:
        return self.partition.K_hat

    def to_dict(self) -> dict:
        return {
            "lambda": float(self.lambda_selected),
            "k_hat": int(self.K_hat),
            "groups": self.partition.as_lists(),
            "alpha_hat": [[float(v) for v in row] for row in self.alpha_hat],
            "eta_hat": [float(v) for v in self.eta_hat],
            "bic": float(self.bic),
        }


def default_eps_fuse(beta_hat) -> float:
    norms = np.linalg.norm(np.asarray(beta_hat, dtype=float).reshape(len(beta_hat), -1), axis=1)
    return 1e-3 * max(1.0, float(np.median(norms)))


def _components(n: int, ii, jj) -> Partition:
    graph = coo_matrix((np.ones(ii.size, dtype=np.int8), (ii, jj)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return Partition.from_labels(labels)


def extract_groups(beta_hat, delta_hat, eps_fuse: float | None = None) -> Partition:
    """Connected components of the graph with an edge wherever ||delta_ij|| <= eps_fuse."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    n = beta_hat.shape[0]
    delta_hat = np.asarray(delta_hat, dtype=float).reshape(n * (n - 1) // 2, -1)
    if eps_fuse is None:
        eps_fuse = default_eps_fuse(beta_hat)
    rows, cols = np.triu_indices(n, k=1)
    close = np.linalg.norm(delta_hat, axis=1) <= eps_fuse
    return _components(n, rows[close], cols[close])


def extract_groups_by_beta(beta_hat, eps_fuse: float | None = None) -> Partition:
    """Group subjects whose fitted coefficient vectors agree to within ``eps_fuse``."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.ndim == 1:
        beta_hat = beta_hat[:, None]
    n = beta_hat.shape[0]
    if eps_fuse is None:
        eps_fuse = default_eps_fuse(beta_hat)
    rows, cols = np.triu_indices(n, k=1)
    close = np.linalg.norm(beta_hat[rows] - beta_hat[cols], axis=1) <= eps_fuse
    return _components(n, rows[close], cols[close])


def group_estimates(beta_hat, part: Partition) -> np.ndarray:
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.ndim == 1:
        beta_hat = beta_hat[:, None]
    return np.vstack([beta_hat[b].mean(axis=0) for b in part.blocks])


def modified_bic(d: Dataset, eta_hat, beta_hat, K_hat: int, c_n: float | str | None = None) -> float:
    """log(SSE/n) + C_n (log n / n) (K_hat p + q), with C_n = log(np + q) by default.

    ``c_n="classic"`` gives the ordinary BIC (C_n = 1).  A perfect fit returns -inf.
    """
    n, p, q = d.n, d.p, d.q
    if c_n is None:
        c_n = math.log(n * p + q)
    elif c_n == "classic":
        c_n = 1.0
    r = d.residuals(eta_hat, beta_hat)
    sse = float(r @ r)
    if sse <= 0.0:
        log.warning("perfect fit: SSE = 0, BIC is -inf")
        return -math.inf
    return math.log(sse / n) + float(c_n) * math.log(n) / n * (K_hat * p + q)


def select_model(path) -> SubgroupResult:
    """The converged path point with the smallest BIC; ties go to the larger lambda."""
    best = None
    for pt in path.points:
        if not pt.converged:
            continue
        if best is None or pt.bic <= best.bic:
            best = pt
    if best is None:
        raise NoConvergedPoint("no converged point on the path")
    return SubgroupResult(
        partition=best.partition,
        alpha_hat=group_estimates(best.beta_hat, best.partition),
        eta_hat=best.eta_hat,
        lambda_selected=best.lam,
        bic=best.bic,
        beta_hat=best.beta_hat,
    )
