"""Fitted treatment effects x_i beta_i against the truth and a single OLS slope.

Fits one Example-1 dataset, selects lambda by the modified BIC and writes the
CSV (x, x_beta_true, x_beta_hat, x_beta_ols) that a scatter plot is drawn from.

    python3 scripts/ols_comparison.py --n 200 --seed 3 --out results/ols.csv
"""

import argparse
import logging
from pathlib import Path

from concavefusion.path import PathConfig, compute_path
from concavefusion.sim import DgpSpec, generate, ols_comparison_csv
from concavefusion.subgroup import select_model


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--penalty", default="mcp", choices=["mcp", "scad", "lasso"])
    ap.add_argument("--out", type=Path, default=Path("results/ols_comparison.csv"))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.ERROR)

    d, truth = generate(DgpSpec("one", args.n, seed=args.seed))
    res = select_model(compute_path(d, PathConfig(penalty=args.penalty)))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(ols_comparison_csv(d, truth, res.beta_hat))
    print(f"K_hat {res.K_hat}, lambda {res.lambda_selected:.4f}, wrote {args.out}")


if __name__ == "__main__":
    main()
