"""Dataset container, validation and the standardization round trip."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFiniteError, RankDeficientZ, ShapeMismatch, ZeroVarianceColumn


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response ``y`` (n,), nuisance design ``Z`` (n, q) with intercept first, treatment design ``X`` (n, p)."""

    y: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    z_names: tuple = ()
    x_names: tuple = ()

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    def fitted(self, eta, beta):
        beta = np.asarray(beta, dtype=float).reshape(self.n, self.p)
        return self.Z @ np.asarray(eta, dtype=float) + np.einsum("ij,ij->i", self.X, beta)

    def residuals(self, eta, beta):
        return self.y - self.fitted(eta, beta)


@dataclass(frozen=True)
class StandardizationInfo:
    """Column means and scales of Z[:, 1:] followed by X; treatment means are always 0."""

    column_means: np.ndarray
    column_scales: np.ndarray
    q: int
    p: int


@dataclass(frozen=True, eq=False)
class TrueModel:
    """Simulation truth: ``partition`` is a list of index arrays, ``alpha`` is (K, p)."""

    partition: list
    alpha: np.ndarray
    eta: np.ndarray
    sigma: float
    labels: np.ndarray = field(default=None)

    @property
    def K(self) -> int:
        return len(self.partition)

    def beta(self) -> np.ndarray:
        return self.alpha[self.labels]


def make_dataset(y, X, Z=None, x_names=None, z_names=None) -> Dataset:
    """Assemble and validate a Dataset, putting an intercept in the first Z column.

    An existing all-ones column of ``Z`` is moved to the front; otherwise one is
    prepended.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = y.shape[0]
    if Z is None:
        Z = np.empty((n, 0))
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    z_names = list(z_names) if z_names is not None else [f"z{j + 1}" for j in range(Z.shape[1])]
    x_names = list(x_names) if x_names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    if Z.shape[0] != n:
        raise ShapeMismatch(f"Z has {Z.shape[0]} rows but y has length {n}")
    ones = [j for j in range(Z.shape[1]) if np.all(Z[:, j] == 1.0)]
    if ones:
        j = ones[0]
        order = [j] + [k for k in range(Z.shape[1]) if k != j]
        Z = Z[:, order]
        z_names = [z_names[k] for k in order]
    else:
        Z = np.column_stack([np.ones(n), Z])
        z_names = ["intercept"] + z_names
    return validate_dataset(Dataset(y, Z, X, tuple(z_names), tuple(x_names)))


def validate_dataset(raw: Dataset) -> Dataset:
    y, Z, X = raw.y, raw.Z, raw.X
    if y.ndim != 1 or Z.ndim != 2 or X.ndim != 2:
        raise ShapeMismatch("y must be 1-d and Z, X 2-d")
    n = y.shape[0]
    if Z.shape[0] != n or X.shape[0] != n:
        raise ShapeMismatch(f"row counts differ: y={n}, Z={Z.shape[0]}, X={X.shape[0]}")
    if n < 2 or Z.shape[1] < 1 or X.shape[1] < 1:
        raise ShapeMismatch(f"need n >= 2, q >= 1, p >= 1; got n={n}, q={Z.shape[1]}, p={X.shape[1]}")
    for name, arr in (("y", y[:, None]), ("Z", Z), ("X", X)):
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            r, c = bad[0]
            raise NonFiniteError(name, int(r), int(c))
    if not np.all(Z[:, 0] == 1.0):
        raise ShapeMismatch("first column of Z must be the intercept (all ones)")
    s = np.linalg.svd(Z, compute_uv=False)
    tol = s[0] * max(Z.shape) * np.finfo(float).eps
    if np.sum(s > tol) < Z.shape[1]:
        raise RankDeficientZ(f"Z has rank {int(np.sum(s > tol))} < q = {Z.shape[1]}")
    return raw


def standardize(d: Dataset) -> tuple[Dataset, StandardizationInfo]:
    """Center and scale Z[:, 1:] and scale X so every such column has squared norm n.

    Treatment columns are scaled but not centered: centering them would add a
    subgroup-specific intercept that a single ``eta`` cannot map back.
    """
    n = d.n
    Zs = d.Z[:, 1:]
    zmean = Zs.mean(axis=0)
    Zc = Zs - zmean
    zscale = np.sqrt(np.sum(Zc**2, axis=0) / n)
    xscale = np.sqrt(np.sum(d.X**2, axis=0) / n)
    xspread = d.X.max(axis=0) - d.X.min(axis=0)
    for j, s in enumerate(zscale):
        if s <= 1e-12 * max(1.0, abs(zmean[j])):
            raise ZeroVarianceColumn(d.z_names[j + 1] if d.z_names else j + 1)
    for j in range(d.p):
        if xspread[j] <= 1e-12 * max(1.0, xscale[j]):
            raise ZeroVarianceColumn(d.x_names[j] if d.x_names else d.q - 1 + j)
    # keep already-standardized columns bit-identical
    zmean = np.where(np.abs(zmean) <= 1e-13 * np.maximum(zscale, 1.0), 0.0, zmean)
    zscale = np.where(np.abs(zscale - 1.0) <= 1e-13, 1.0, zscale)
    xscale = np.where(np.abs(xscale - 1.0) <= 1e-13, 1.0, xscale)
    Z = np.column_stack([d.Z[:, 0], (Zs - zmean) / zscale])
    X = d.X / xscale
    info = StandardizationInfo(
        column_means=np.concatenate([zmean, np.zeros(d.p)]),
        column_scales=np.concatenate([zscale, xscale]),
        q=d.q,
        p=d.p,
    )
    return validate_dataset(Dataset(d.y, Z, X, d.z_names, d.x_names)), info


def unstandardize(eta_hat, alpha_hat, info: StandardizationInfo):
    """Map (eta, alpha) fitted on standardized data back to the raw covariate scale."""
    eta_hat = np.asarray(eta_hat, dtype=float)
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    k = info.q - 1
    zmean, zscale = info.column_means[:k], info.column_scales[:k]
    xscale = info.column_scales[k:]
    eta = eta_hat.copy()
    eta[1:] = eta_hat[1:] / zscale
    eta[0] = eta_hat[0] - float(zmean @ eta[1:])
    alpha = alpha_hat / xscale
    return eta, alpha


def load_csv(path, response: str, treat: list[str], covar: list[str] | None = None) -> Dataset:
    """Read a headed, comma-separated numeric file into a validated Dataset."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ShapeMismatch(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    col = {name: j for j, name in enumerate(header)}
    covar = list(covar or [])
    for name in [response, *treat, *covar]:
        if name not in col:
            raise ShapeMismatch(f"{path}: column {name!r} not in header {header}")
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise ShapeMismatch(f"{path}: row {r + 1} has {len(row)} fields, header has {len(header)}")
    try:
        data = np.array([[float(c) for c in row] for row in rows], dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise ShapeMismatch(f"{path}: non-numeric entry ({exc})") from None
    return make_dataset(
        data[:, col[response]],
        data[:, [col[t] for t in treat]],
        data[:, [col[c] for c in covar]] if covar else None,
        x_names=treat,
        z_names=covar,
    )
