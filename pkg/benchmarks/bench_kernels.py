"""Time the numba kernels against their numpy counterparts.

Usage::

    python3 benchmarks/bench_kernels.py [--n 20000] [--p 8] [--repeat 5]

Each kernel is warmed up once (which triggers JIT compilation), checked for
agreement between the two backends, then timed with ``timeit``.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from yfwl import _kernels as K


def _cases(n: int, p: int, rng: np.random.Generator):
    X = rng.standard_normal((n, p))
    A = rng.standard_normal((p, p))
    M = A @ A.T
    X1, X2 = X[:, : p // 2], X[:, p // 2:]
    p1 = X1.shape[1]
    W11, W12, W22 = M[:p1, :p1], M[:p1, p1:], M[p1:, p1:]
    G = rng.standard_normal((n, p))
    lags = max(1, int(4 * (n / 100) ** (2 / 9)))
    weights = np.r_[1.0, 1.0 - np.arange(1, lags + 1) / (lags + 1)]
    n_groups = max(2, n // 50)
    codes = rng.integers(0, n_groups, size=n)
    return {
        "rowwise_quadform": (X, M),
        "leverage_blocks": (X1, X2, W11, W12, W22),
        "hac_cross": (G, G, weights),
        "cluster_cross": (G, G, codes, n_groups),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--p", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    cases = _cases(args.n, args.p, np.random.default_rng(args.seed))
    print(f"n={args.n} p={args.p} repeat={args.repeat} (best of repeats, ms)")
    print(f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>8} {'max rel diff':>13}")
    for name, call_args in cases.items():
        f_np = getattr(K, f"{name}_numpy")
        f_nb = getattr(K, f"{name}_numba")
        nb_args = tuple(np.ascontiguousarray(a) if isinstance(a, np.ndarray) else a for a in call_args)
        a, b = f_np(*call_args), f_nb(*nb_args)
        diff = float(np.abs(a - b).max() / max(np.abs(a).max(), 1e-300))
        t_np = min(timeit.repeat(lambda: f_np(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*nb_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<18} {t_np:>10.3f} {t_nb:>10.3f} {t_np / t_nb:>7.2f}x {diff:>13.2e}")


if __name__ == "__main__":
    main()
