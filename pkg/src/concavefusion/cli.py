"""Command-line entry point: fit, path, select, infer, simulate.

Data go to files (``--out``) or standard output, diagnostics to standard
error.  Exit status is 0 on success, 1 on a runtime failure and 2 on a usage
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import admm
from .errors import FusionError, IncompatibleGamma
from .inference import infer
from .model import load_csv, standardize, unstandardize
from .path import (
    PathConfig,
    _partition,
    compute_path,
    export_fusiongram,
    fusiongram_csv,
    refine_assignment,
    ridge_initialize,
)
from .penalty import PenaltySpec
from .sim import DgpSpec, records_csv, run_study
from .subgroup import SubgroupResult, group_estimates, modified_bic, select_model

log = logging.getLogger("concavefusion")

COMMANDS = ("fit", "path", "select", "infer", "simulate")


class UsageError(Exception):
    """Bad flags or values; mapped to exit status 2."""


@dataclass
class CliConfig:
    command: str
    data: Path | None = None
    response: str | None = None
    treat: list = field(default_factory=list)
    covar: list = field(default_factory=list)
    standardize: bool = False
    penalty: str = "mcp"
    gamma: float = 3.0
    vartheta: float = 1.0
    lam: float | None = None
    lambda_min: float | None = None
    lambda_max: float | None = None
    grid_size: int = 100
    grid_spacing: str = "log"
    tol: float | None = None
    rel_tol: float = PathConfig.rel_tol
    max_iter: int = admm.DEFAULT_MAX_ITER
    eps_fuse: float | None = None
    group_rule: str = "delta"
    refine: bool = True
    level: float = 0.95
    example: str = "one"
    n: int = 200
    alpha_scale: float = 2.0
    seed: int = 0
    reps: int = 100
    threads: int = 1
    out: Path | None = None
    fusiongram: Path | None = None
    ledger: Path | None = None
    pretty: bool = False

    def path_config(self) -> PathConfig:
        return PathConfig(
            lambda_min=self.lambda_min, lambda_max=self.lambda_max, grid_size=self.grid_size,
            grid_spacing=self.grid_spacing, penalty=self.penalty, gamma=self.gamma,
            vartheta=self.vartheta, tol=self.tol, rel_tol=self.rel_tol, max_iter=self.max_iter,
            eps_fuse=self.eps_fuse, group_rule=self.group_rule, refine=self.refine,
        )


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _count(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser(strict: bool = True) -> argparse.ArgumentParser:
    """``strict=False`` drops required-flag checks; used to report unknown flags first."""
    parser = _Parser(prog="concavefusion", description="Subgroup analysis by concave pairwise fusion.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--out", type=Path, help="output file (default: standard output)")
        p.add_argument("--pretty", action="store_true", help="human-readable rendering of the JSON")
        p.add_argument("--penalty", choices=("mcp", "scad", "lasso"), default="mcp")
        p.add_argument("--gamma", type=_positive, default=3.0)
        p.add_argument("--vartheta", type=_positive, default=1.0)
        p.add_argument("--lambda-min", dest="lambda_min", type=_positive)
        p.add_argument("--lambda-max", dest="lambda_max", type=_positive)
        p.add_argument("--grid-size", dest="grid_size", type=int, default=100)
        p.add_argument("--grid-spacing", dest="grid_spacing", choices=("log", "linear"), default="log")
        p.add_argument("--tol", type=_positive)
        p.add_argument("--rel-tol", dest="rel_tol", type=float, default=PathConfig.rel_tol)
        p.add_argument("--max-iter", dest="max_iter", type=_count, default=admm.DEFAULT_MAX_ITER)
        p.add_argument("--eps-fuse", dest="eps_fuse", type=_positive)
        p.add_argument("--group-rule", dest="group_rule", choices=("delta", "beta"), default="delta")
        p.add_argument("--no-refine", dest="refine", action="store_false",
                       help="skip the single-subject reassignment pass after each solve")
        p.add_argument("--level", type=float, default=0.95)
        p.add_argument("--seed", type=int, default=0)

    def data(p):
        p.add_argument("--data", type=Path, required=strict, help="CSV file with a header row")
        p.add_argument("--response", required=strict)
        p.add_argument("--treat", type=_names, required=strict, help="comma-separated treatment columns")
        p.add_argument("--covar", type=_names, default=[], help="comma-separated nuisance columns")
        p.add_argument("--standardize", action="store_true",
                       help="fit on standardized columns and report estimates on the raw scale")

    fit = sub.add_parser("fit", help="solve at a single lambda")
    data(fit)
    common(fit)
    fit.add_argument("--lambda", dest="lam", type=_positive, required=strict)

    for name, hlp in (("path", "solution path summary"), ("select", "BIC-selected subgroups"),
                      ("infer", "selected subgroups with inference")):
        p = sub.add_parser(name, help=hlp)
        data(p)
        common(p)
        p.add_argument("--fusiongram", type=Path, help="fusiongram CSV destination")

    sim = sub.add_parser("simulate", help="replication study on a built-in design")
    common(sim)
    sim.add_argument("--example", choices=("1", "2", "3", "one", "two", "three"), default="1")
    sim.add_argument("--n", type=int, default=200)
    sim.add_argument("--alpha-scale", dest="alpha_scale", type=_positive, default=2.0)
    sim.add_argument("--reps", type=_count, default=100)
    sim.add_argument("--threads", type=_count, default=1)
    sim.add_argument("--ledger", type=Path, help="per-replication CSV destination")
    return parser


def parse_config(argv: list[str]) -> CliConfig:
    """Parse and validate flags; raises UsageError naming the offending flag."""
    _, unknown = build_parser(strict=False).parse_known_args(argv)
    if unknown:
        raise UsageError(f"concavefusion: unrecognized arguments: {' '.join(unknown)}")
    ns = build_parser().parse_args(argv)
    cfg = CliConfig(**{k: v for k, v in vars(ns).items() if v is not None or k in ("lambda_min", "lambda_max")})
    try:
        PenaltySpec(cfg.penalty, 0.0, cfg.gamma).check_vartheta(cfg.vartheta)
    except IncompatibleGamma as exc:
        raise UsageError(f"invalid value for --gamma/--vartheta: {exc}") from None
    if not 0.0 < cfg.level < 1.0:
        raise UsageError(f"invalid value for --level: {cfg.level} (must lie in (0, 1))")
    if cfg.grid_size < 2:
        raise UsageError(f"invalid value for --grid-size: {cfg.grid_size} (must be >= 2)")
    if cfg.rel_tol < 0:
        raise UsageError(f"invalid value for --rel-tol: {cfg.rel_tol}")
    if cfg.lambda_min is not None and cfg.lambda_max is not None and not cfg.lambda_min < cfg.lambda_max:
        raise UsageError("invalid value for --lambda-min: must be smaller than --lambda-max")
    if cfg.command == "simulate" and cfg.n < 10:
        raise UsageError(f"invalid value for --n: {cfg.n} (must be >= 10)")
    return cfg


# --- rendering ------------------------------------------------------------

def _render_pretty(obj, indent: int = 0) -> str:
    pad = "  " * indent
    lines = []
    if isinstance(obj, dict):
        for k, v in obj.items():
            if isinstance(v, (dict, list)) and v and not _flat(v):
                lines.append(f"{pad}{k}:")
                lines.append(_render_pretty(v, indent + 1))
            else:
                lines.append(f"{pad}{k}: {_scalar(v)}")
    elif isinstance(obj, list):
        if obj and all(isinstance(v, dict) for v in obj):
            keys = list(obj[0].keys())
            rows = [[_scalar(v.get(k)) for k in keys] for v in obj]
            widths = [max(len(k), *(len(r[i]) for r in rows)) for i, k in enumerate(keys)]
            lines.append(pad + "  ".join(k.rjust(w) for k, w in zip(keys, widths)))
            lines.extend(pad + "  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)
        else:
            lines.extend(f"{pad}- {_scalar(v)}" for v in obj)
    else:
        lines.append(pad + _scalar(obj))
    return "\n".join(lines)


def _flat(v) -> bool:
    return isinstance(v, list) and all(not isinstance(e, (dict, list)) for e in v)


def _scalar(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_scalar(e) for e in v) + "]"
    return str(v)


def _emit(obj: dict, cfg: CliConfig) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if cfg.out is not None:
        cfg.out.write_text(text, encoding="utf-8")
        if cfg.pretty:
            sys.stdout.write(_render_pretty(obj) + "\n")
    else:
        sys.stdout.write(_render_pretty(obj) + "\n" if cfg.pretty else text)


# --- commands -------------------------------------------------------------

def _load(cfg: CliConfig):
    if not cfg.data.is_file():
        raise FileNotFoundError(f"input file not found: {cfg.data}")
    d = load_csv(cfg.data, cfg.response, cfg.treat, cfg.covar)
    info = None
    if cfg.standardize:
        d, info = standardize(d)
    return d, info


def _result_dict(res: SubgroupResult, info) -> dict:
    out = res.to_dict()
    if info is not None:
        eta, alpha = unstandardize(res.eta_hat, res.alpha_hat, info)
        out["eta_hat"] = [float(v) for v in eta]
        out["alpha_hat"] = [[float(v) for v in row] for row in alpha]
    return out


def _sidecar(cfg: CliConfig) -> Path | None:
    if cfg.fusiongram is not None:
        return cfg.fusiongram
    if cfg.out is not None:
        return cfg.out.with_name(cfg.out.stem + ".fusiongram.csv")
    return None


def _cmd_fit(cfg: CliConfig) -> dict:
    d, info = _load(cfg)
    pcfg = cfg.path_config()
    ws = admm.AdmmWorkspace(d, cfg.vartheta)
    state = ridge_initialize(d, pcfg.lambda_star, ws=ws)
    state = admm.solve(ws, d, pcfg.spec(cfg.lam), state, cfg.tol, cfg.max_iter, raise_on_fail=False,
                       rel_tol=cfg.rel_tol)
    part = _partition(pcfg, state)
    if pcfg.refine and part.K_hat > 1:
        state, part = refine_assignment(d, pcfg, ws, state, part, cfg.lam)
    bic = modified_bic(d, state.eta, state.beta, part.K_hat)
    res = SubgroupResult(part, group_estimates(state.beta, part), state.eta, cfg.lam, bic, state.beta)
    out = _result_dict(res, info)
    out.update(converged=bool(state.converged), iterations=int(state.iter))
    return out


def _cmd_path(cfg: CliConfig):
    d, info = _load(cfg)
    path = compute_path(d, cfg.path_config())
    if cfg.fusiongram is not None:
        export_fusiongram(path, cfg.fusiongram)
    return path.summary()


def _select(cfg: CliConfig):
    d, info = _load(cfg)
    path = compute_path(d, cfg.path_config())
    sidecar = _sidecar(cfg)
    if sidecar is not None:
        sidecar.write_text(fusiongram_csv(path), encoding="utf-8")
    return d, info, select_model(path)


def _cmd_select(cfg: CliConfig) -> dict:
    _, info, res = _select(cfg)
    return _result_dict(res, info)


def _cmd_infer(cfg: CliConfig) -> dict:
    d, info, res = _select(cfg)
    report = infer(d, res, cfg.level)
    out = report.to_dict()
    out["result"] = _result_dict(res, info)
    if info is not None:
        out["scale"] = "asd and ci refer to the standardized design"
    return out


def _cmd_simulate(cfg: CliConfig) -> dict:
    spec = DgpSpec(example=cfg.example, n=cfg.n, alpha_scale=cfg.alpha_scale, seed=cfg.seed)
    summary = run_study(spec, cfg.reps, cfg.penalty, cfg.path_config(), threads=cfg.threads, level=cfg.level)
    if cfg.ledger is not None:
        cfg.ledger.write_text(records_csv(summary.records), encoding="utf-8")
    return summary.to_dict()


_DISPATCH = {"fit": _cmd_fit, "path": _cmd_path, "select": _cmd_select, "infer": _cmd_infer,
             "simulate": _cmd_simulate}


def dispatch(cfg: CliConfig) -> int:
    try:
        _emit(_DISPATCH[cfg.command](cfg), cfg)
    except (FusionError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 2
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
