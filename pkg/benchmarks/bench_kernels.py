"""Compare the compiled kernels with the numpy fallback.

Run ``python benchmarks/bench_kernels.py`` from the repository root.  Each
kernel is timed on identical inputs for every available implementation and
the outputs are checked to agree before timings are reported.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from loopfloer.kernels import implementations


def _inputs(n_t, dim, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n_t) / n_t
    x = 0.1 * rng.standard_normal((n_t, dim))
    amp = np.array([0.01, 0.004])
    kvec = np.ones((2, dim))
    kvec[1] *= 2.0
    mfreq = np.array([0.0, 1.0])
    phase = np.array([0.0, 0.3])
    h = 0.5 / n_t ** 2
    lower = np.full(n_t, -h * n_t * n_t)
    diag = np.full(n_t, 1.0 + 2.0 * h * n_t * n_t)
    rhs = rng.standard_normal((dim * 8, n_t))
    return {
        "cyclic_tridiag_solve": (lower, diag, lower, rhs),
        "fourier_terms": (t, x, amp, kvec, mfreq, phase),
        "heat_steps": (x, np.zeros(dim), t, h, 200, amp, kvec, mfreq, phase, 1e-12),
    }


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def bench(n_t=128, dim=2, repeat=5):
    impls = implementations()
    rows = []
    for name, args in _inputs(n_t, dim).items():
        results, times = {}, {}
        for label, mod in impls.items():
            fn = getattr(mod, name)
            results[label] = _first(fn(*args))
            number = 3 if name == "heat_steps" else 50
            times[label] = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number
        ref = results["python"]
        err = max(float(np.abs(np.asarray(r) - ref).max()) for r in results.values())
        rows.append((name, times, err))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-t", type=int, default=128)
    parser.add_argument("--dim", type=int, default=2)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    rows = bench(args.n_t, args.dim, args.repeat)
    labels = list(rows[0][1])
    print(f"{'kernel':24s}" + "".join(f"{lab:>14s}" for lab in labels) + f"{'speedup':>10s}{'max diff':>12s}")
    for name, times, err in rows:
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{name:24s}" + "".join(f"{times[lab] * 1e3:>12.3f}ms" for lab in labels) + f"{speed:>10.1f}{err:>12.2e}")


if __name__ == "__main__":
    main()
