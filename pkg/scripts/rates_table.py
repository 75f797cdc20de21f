"""Print eps_m, the modified rate, block counts and theory penalties over a T grid."""
import argparse

from spamnet.kernels import eigen_decay, finite_rank
from spamnet.rates import MixingSpec, tuning


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kernel", choices=["finite_rank", "eigen_decay"], default="finite_rank")
    ap.add_argument("--rank", type=int, default=5)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--mixing", choices=["beta", "phi"], default="phi")
    ap.add_argument("--r", type=float, default=2.0)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--T", nargs="+", type=int, default=[100, 1000, 10_000, 100_000])
    args = ap.parse_args()

    kernel = finite_rank(args.rank) if args.kernel == "finite_rank" else eigen_decay(args.alpha)
    mix = MixingSpec(args.mixing, args.r, 1.0 if args.mixing == "beta" else None)
    print(f"{'T':>8}{'m':>8}{'eps_m':>14}{'eps_tilde':>14}{'M0':>6}{'lambda_T':>14}{'lambda_H':>14}")
    for T in args.T:
        rep = tuning(kernel, mix, T, args.d)
        print(f"{T:>8}{rep.m:>8}{rep.epsilon_m:>14.6g}{rep.epsilon_tilde_m:>14.6g}{rep.M0:>6}"
              f"{rep.lambda_T:>14.6g}{rep.lambda_H:>14.6g}")


if __name__ == "__main__":
    main()
