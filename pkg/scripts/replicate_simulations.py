"""Simulation grid: median MSE against T for each family, plus log-log slopes.

    python3 scripts/replicate_simulations.py --out out/sim --trials 20
    python3 scripts/replicate_simulations.py --lambda-scale 0.1   # lighter penalty
"""
import argparse
from pathlib import Path

from spamnet import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--families", nargs="+", default=["gaussian", "poisson"])
    ap.add_argument("--d", nargs="+", type=int, default=[8])
    ap.add_argument("--T", nargs="+", type=int, default=[80, 160, 240])
    ap.add_argument("--r", nargs="+", type=int, default=[1])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lambda-scale", type=float, default=1.0)
    ap.add_argument("--out", default="out/sim")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = simulate.run_grid(args.families, args.d, args.T, args.r, args.trials,
                             seed0=args.seed, lambda_scale=args.lambda_scale)
    simulate.write_grid_csv(rows, out / "grid.csv")
    simulate.write_grid_jsonl(rows, out / "grid.jsonl")

    print(f"{'family':<10}{'d':>4}{'r':>3}{'T':>6}{'median_mse':>14}{'recall':>8}{'errors':>8}")
    for fam in args.families:
        for d in args.d:
            for r in args.r:
                for T in args.T:
                    cell = [x for x in rows if (x["family"], x["d"], x["r"], x["T"]) == (fam, d, r, T)]
                    med = simulate.median_mse(rows, family=fam, d=d, r=r, T=T)
                    ok = [x["recall"] for x in cell if not x["error"]]
                    recall = sum(ok) / len(ok) if ok else float("nan")
                    n_err = sum(bool(x["error"]) for x in cell)
                    print(f"{fam:<10}{d:>4}{r:>3}{T:>6}{med:>14.6g}{recall:>8.2f}{n_err:>8}")
    for s in simulate.trend_slopes(rows):
        print(f"slope {s['family']} d={s['d']} r={s['r']}: {s['slope']:.3f}")


if __name__ == "__main__":
    main()
