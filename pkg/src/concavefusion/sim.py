"""Seeded data-generating processes and the replication-study harness.

Example one: q = 5 nuisance columns (intercept plus four exchangeable normals
with correlation rho), one standard-normal treatment and two equally likely
groups with effects +/- alpha.  Example two has p = 3 treatments (one normal,
two centered and standardized Bernoulli(0.7)) and groups at +/-(a, a, a).
Example three is homogeneous with beta = alpha for everyone.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import admm
from .errors import FusionError
from .inference import GroupDesign, coordinate_sds, infer, sigma2_hat
from .model import Dataset, TrueModel, make_dataset
from .path import FusionPath, PathConfig, _group_least_squares, compute_path, ridge_initialize, _partition
from .subgroup import Partition, select_model

log = logging.getLogger(__name__)

_EXAMPLES = {"1": "one", "one": "one", "2": "two", "two": "two", "3": "three", "three": "three"}


@dataclass(frozen=True)
class DgpSpec:
    """``alpha_scale`` is the effect magnitude: +/-alpha in examples one and two, beta in three.

    ``q``, ``sigma`` and ``rho`` default to the published settings and exist so
    that smaller or cleaner variants (e.g. q = 2, sigma = 0.1) share the same code.
    """

    example: str = "one"
    n: int = 200
    alpha_scale: float = 2.0
    seed: int = 0
    sigma: float = 0.5
    rho: float = 0.3
    q: int = 5
    bernoulli_prob: float = 0.7

    def __post_init__(self):
        key = str(self.example).lower()
        if key not in _EXAMPLES:
            raise ValueError(f"example must be one of 1, 2, 3; got {self.example!r}")
        object.__setattr__(self, "example", _EXAMPLES[key])
        if self.n < 10:
            raise ValueError(f"n must be >= 10, got {self.n}")
        if not self.alpha_scale > 0:
            raise ValueError(f"alpha_scale must be positive, got {self.alpha_scale}")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if not self.sigma > 0 or not 0 <= self.rho < 1:
            raise ValueError("need sigma > 0 and 0 <= rho < 1")

    @property
    def p(self) -> int:
        return 3 if self.example == "two" else 1


def replication_seed(seed: int, rep: int) -> int:
    """64-bit seed for replication ``rep``, a pure function of (seed, rep)."""
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(int(rep),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    # PCG64 streams are identical on every platform for a given seed
    return np.random.Generator(np.random.PCG64(int(seed) % 2**64))


def _standardized_bernoulli(rng, n: int, prob: float) -> np.ndarray:
    while True:
        b = (rng.random(n) < prob).astype(float)
        c = b - b.mean()
        ss = float(c @ c)
        if ss > 0:
            return c * math.sqrt(n / ss)


def generate(spec: DgpSpec) -> tuple[Dataset, TrueModel]:
    """Draw one dataset; fully determined by ``spec``."""
    rng = _rng(spec.seed)
    n, q, p = spec.n, spec.q, spec.p
    shared = rng.standard_normal(n)
    idio = rng.standard_normal((n, q - 1))
    Zr = math.sqrt(spec.rho) * shared[:, None] + math.sqrt(1.0 - spec.rho) * idio
    if spec.example == "two":
        X = np.column_stack([
            rng.standard_normal(n),
            _standardized_bernoulli(rng, n, spec.bernoulli_prob),
            _standardized_bernoulli(rng, n, spec.bernoulli_prob),
        ])
    else:
        X = rng.standard_normal((n, 1))
    a = spec.alpha_scale
    if spec.example == "three":
        labels = np.zeros(n, dtype=np.int64)
        alpha = np.full((1, p), a)
    else:
        labels = (rng.random(n) >= 0.5).astype(np.int64)
        alpha = np.vstack([np.full(p, a), np.full(p, -a)])
    eta = rng.uniform(1.0, 2.0, q)
    eps = spec.sigma * rng.standard_normal(n)
    # drop an empty group (only possible for tiny n) so the truth stays a valid partition
    present = np.unique(labels)
    alpha = alpha[present]
    labels = np.searchsorted(present, labels)
    y = eta[0] + Zr @ eta[1:] + np.einsum("ij,ij->i", X, alpha[labels]) + eps
    d = make_dataset(y, X, Zr if q > 1 else None)
    blocks = [np.flatnonzero(labels == k) for k in range(alpha.shape[0])]
    return d, TrueModel(partition=blocks, alpha=alpha, eta=eta, sigma=spec.sigma, labels=labels)


def oracle_fit(d: Dataset, truth: TrueModel):
    """Least squares on the true partition, with its ASDs: (eta, alpha, asd_alpha)."""
    labels = np.asarray(truth.labels)
    K = int(labels.max()) + 1
    eta, alpha = _group_least_squares(d, labels, K)
    part = Partition.from_labels(labels)
    # from_labels may relabel; map ASDs back to truth order
    gd = GroupDesign(d, part)
    s2 = sigma2_hat(d, eta, alpha[labels], K)
    sds = coordinate_sds(gd, s2, "alpha").reshape(K, d.p)
    order = [int(part.labels[truth.partition[k][0]]) for k in range(K)]
    return eta, alpha, sds[order]


def match_groups(part: Partition, truth: TrueModel) -> np.ndarray:
    """For each true group, the estimated block sharing the most members (ties: lower index)."""
    out = np.empty(len(truth.partition), dtype=np.int64)
    for g, members in enumerate(truth.partition):
        counts = np.bincount(part.labels[members], minlength=part.K_hat)
        out[g] = int(np.argmax(counts))
    return out


def full_fusion_lambda(d: Dataset, cfg: PathConfig, grid) -> float:
    """Smallest grid value at which the warm-started path is fully fused (inf if never)."""
    ws = admm.AdmmWorkspace(d, cfg.vartheta)
    state = ridge_initialize(d, cfg.lambda_star, ws=ws)
    for lam in np.asarray(grid, dtype=float):
        state = admm.solve(ws, d, cfg.spec(lam), state, cfg.tol, cfg.max_iter,
                           raise_on_fail=False, rel_tol=cfg.rel_tol)
        if _partition(cfg, state).K_hat == 1:
            return float(lam)
    return math.inf


@dataclass
class ReplicationRecord:
    rep: int
    seed: int
    penalty: str
    k_hat: int | None = None
    lambda_selected: float | None = None
    alpha_matched: np.ndarray | None = None
    asd_matched: np.ndarray | None = None
    eta_mse: float | None = None
    p_value: float | None = None
    oracle_alpha: np.ndarray | None = None
    oracle_asd: np.ndarray | None = None
    error: str | None = None


def run_replication(spec: DgpSpec, rep: int, penalty: str, cfg: PathConfig, level: float = 0.95,
                    return_path: bool = False):
    """generate -> compute_path -> select_model -> infer for one replication.

    Failures are caught and recorded in ``error``; they never propagate.
    """
    seed = replication_seed(spec.seed, rep)
    rec = ReplicationRecord(rep=rep, seed=seed, penalty=penalty)
    path = None
    try:
        d, truth = generate(replace(spec, seed=seed))
        _, rec.oracle_alpha, rec.oracle_asd = oracle_fit(d, truth)
        pcfg = replace(cfg, penalty=penalty)
        path = compute_path(d, pcfg)
        res = select_model(path)
        rec.k_hat = res.K_hat
        rec.lambda_selected = res.lambda_selected
        rec.eta_mse = float(np.linalg.norm(res.eta_hat - truth.eta) / math.sqrt(d.q))
        report = infer(d, res, level)
        idx = match_groups(res.partition, truth)
        rec.alpha_matched = np.asarray(res.alpha_hat)[idx]
        rec.asd_matched = np.asarray(report.asd_alpha).reshape(res.K_hat, d.p)[idx]
        rec.p_value = report.p_value
    except (FusionError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        log.warning("replication %d (%s) failed: %s", rep, penalty, rec.error)
    if return_path:
        return rec, path
    return rec


@dataclass
class GroupStats:
    mean: np.ndarray
    median: np.ndarray
    asd: np.ndarray
    esd: np.ndarray

    def to_dict(self) -> dict:
        return {k: [float(v) for v in getattr(self, k)] for k in ("mean", "median", "asd", "esd")}


def _group_stats(est: list, asd: list) -> list[GroupStats]:
    if not est:
        return []
    E, S = np.stack(est), np.stack(asd)
    esd = E.std(axis=0, ddof=1) if E.shape[0] > 1 else np.full(E.shape[1:], math.nan)
    return [GroupStats(E[:, g].mean(axis=0), np.median(E[:, g], axis=0), S[:, g].mean(axis=0), esd[g])
            for g in range(E.shape[1])]


@dataclass
class ReplicationSummary:
    """Aggregates over successful replications; ``failures`` counts the rest.

    ``alpha_stats[g]`` describes the estimated effect matched to true group g:
    mean, median, mean ASD and the empirical SD (ESD) across replications.
    p-value statistics use replications with K_hat >= 2 only.
    """

    reps: int
    penalty: str
    failures: int
    k_hats: list
    k_hat_mean: float
    k_hat_median: float
    k_hat_sd: float
    pct_correct_k: float
    alpha_stats: list
    oracle_stats: list
    eta_mse_distribution: list
    p_value_mean: float | None
    p_value_median: float | None
    records: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        def opt(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)

        return {
            "reps": self.reps,
            "penalty": self.penalty,
            "failures": self.failures,
            "k_hat_mean": opt(self.k_hat_mean),
            "k_hat_median": opt(self.k_hat_median),
            "k_hat_sd": opt(self.k_hat_sd),
            "pct_correct_k": opt(self.pct_correct_k),
            "k_hats": [int(k) for k in self.k_hats],
            "alpha_stats": [g.to_dict() for g in self.alpha_stats],
            "oracle_stats": [g.to_dict() for g in self.oracle_stats],
            "eta_mse_distribution": [float(v) for v in self.eta_mse_distribution],
            "p_value_mean": opt(self.p_value_mean),
            "p_value_median": opt(self.p_value_median),
        }


def summarize(records: list, true_K: int, penalty: str) -> ReplicationSummary:
    records = sorted(records, key=lambda r: r.rep)
    ok = [r for r in records if r.error is None]
    k = np.array([r.k_hat for r in ok], dtype=float)
    pv = np.array([r.p_value for r in ok if r.p_value is not None], dtype=float)
    nan = math.nan
    return ReplicationSummary(
        reps=len(records),
        penalty=penalty,
        failures=len(records) - len(ok),
        k_hats=[int(v) for v in k],
        k_hat_mean=float(k.mean()) if k.size else nan,
        k_hat_median=float(np.median(k)) if k.size else nan,
        k_hat_sd=float(k.std(ddof=1)) if k.size > 1 else nan,
        pct_correct_k=float(np.mean(k == true_K)) if k.size else 0.0,
        alpha_stats=_group_stats([r.alpha_matched for r in ok], [r.asd_matched for r in ok]),
        oracle_stats=_group_stats([r.oracle_alpha for r in ok], [r.oracle_asd for r in ok]),
        eta_mse_distribution=[r.eta_mse for r in ok],
        p_value_mean=float(pv.mean()) if pv.size else None,
        p_value_median=float(np.median(pv)) if pv.size else None,
        records=records,
    )


def _job(args):
    return run_replication(*args)


def run_study(spec: DgpSpec, reps: int, penalty: str = "mcp", cfg: PathConfig | None = None,
              threads: int = 1, level: float = 0.95) -> ReplicationSummary:
    """Replicate generate/path/select/infer ``reps`` times.

    Replication r uses ``replication_seed(spec.seed, r)``, so the summary does
    not depend on ``threads`` or completion order.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    cfg = cfg or PathConfig()
    jobs = [(spec, r, penalty, cfg, level) for r in range(reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_job, jobs))
    else:
        records = [_job(j) for j in jobs]
    true_K = 1 if spec.example == "three" else 2
    return summarize(records, true_K, penalty)


def records_csv(records: list) -> str:
    """Per-replication ledger: one row per replication, matched effects flattened."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rep", "seed", "penalty", "k_hat", "lambda", "eta_mse", "p_value", "alpha_matched", "error"])
    for r in sorted(records, key=lambda r: r.rep):
        alpha = "" if r.alpha_matched is None else ";".join(repr(float(v)) for v in np.ravel(r.alpha_matched))
        w.writerow([r.rep, r.seed, r.penalty, "" if r.k_hat is None else r.k_hat,
                    "" if r.lambda_selected is None else repr(float(r.lambda_selected)),
                    "" if r.eta_mse is None else repr(float(r.eta_mse)),
                    "" if r.p_value is None else repr(float(r.p_value)),
                    alpha, r.error or ""])
    return buf.getvalue()


def ols_comparison_csv(d: Dataset, truth: TrueModel, beta_hat) -> str:
    """Rows x_i, x_i beta_i, x_i beta_hat_i, x_i beta_ols for a p = 1 dataset.

    beta_ols is the common slope from least squares of y on (Z, x), i.e. the fit
    that ignores heterogeneity.
    """
    if d.p != 1:
        raise ValueError("the OLS comparison is defined for one treatment variable")
    U = np.hstack([d.Z, d.X])
    coef, *_ = np.linalg.lstsq(U, d.y, rcond=None)
    b_ols = float(coef[-1])
    x = d.X[:, 0]
    bt = truth.beta()[:, 0]
    bh = np.asarray(beta_hat, dtype=float).reshape(d.n)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "x_beta_true", "x_beta_hat", "x_beta_ols"])
    for i in np.argsort(x, kind="stable"):
        w.writerow([repr(float(x[i])), repr(float(x[i] * bt[i])), repr(float(x[i] * bh[i])),
                    repr(float(x[i] * b_ols))])
    return buf.getvalue()
