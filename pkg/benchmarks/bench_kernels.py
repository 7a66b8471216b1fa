"""Time the compiled and numpy kernels on the same inputs.

    python benchmarks/bench_kernels.py [--T 20000] [--repeat 5]
"""

import argparse
import itertools
import timeit

import numpy as np

from coupledhmm.kernels import backend_module


def make_inputs(K, T, rng):
    gamma = rng.dirichlet(np.ones(K), size=K)
    gamma = 0.8 * np.eye(K) + 0.2 * gamma
    delta = np.full(K, 1.0 / K)
    logp = rng.normal(-2.0, 1.0, (T, K))
    return logp, gamma, delta


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--states", type=int, nargs="+", default=[4, 9, 27])
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    try:
        mods = {"cython": backend_module("cython"), "python": backend_module("python")}
    except ImportError:
        print("compiled extension not built; only the numpy backend is available")
        return 1

    print(f"{'kernel':<18}{'K':>4}{'cython ms':>12}{'python ms':>12}{'speedup':>10}{'max diff':>12}")
    for K, name in itertools.product(args.states, ("forward_loglik", "forward_backward", "viterbi")):
        logp, gamma, delta = make_inputs(K, args.T, rng)
        if name == "viterbi":
            call_args = (logp, np.log(gamma), np.log(delta))
        else:
            call_args = (logp, gamma, delta)
        times, outs = {}, {}
        for label, mod in mods.items():
            fn = getattr(mod, name)
            outs[label] = fn(*call_args)
            times[label] = min(timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        a, b = outs["cython"], outs["python"]
        if name == "forward_loglik":
            diff = abs(a - b)
        elif name == "viterbi":
            diff = float(np.sum(np.asarray(a[0]) != np.asarray(b[0])))
        else:
            diff = max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(a, b) if np.ndim(x))
        print(
            f"{name:<18}{K:>4}{times['cython']:>12.2f}{times['python']:>12.2f}"
            f"{times['python'] / times['cython']:>9.1f}x{diff:>12.1e}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
