"""Compare the compiled and pure-Python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--N 50000] [--J 64] [--repeat 5]

Times each kernel on representative shapes, then one full linear solve,
under every available backend, and checks that the outputs are identical.
"""

import argparse
import timeit

import numpy as np

from bsdelab import (
    FiltrationModel, LinearBSDEProblem, RegressionSpec, build_tensor_basis, build_uniform_grid,
    kernels, simulate_ensemble, solve_linear, uniform_cells,
)


def cases(N, J, rng):
    a = rng.standard_normal((N, J))
    X = rng.standard_normal((N * 4, 6))
    Y = rng.standard_normal((N * 4, 1))
    eta = rng.standard_normal((N, 1))
    u = rng.standard_normal((N, J, 1))
    v = rng.standard_normal((N, J, 1))
    dt = np.full(J, 1.0 / J)
    dw = rng.standard_normal((N, J)) * np.sqrt(1.0 / J)
    return {
        "pairwise_colsum": lambda: kernels.pairwise_colsum(a),
        "normal_equations": lambda: kernels.normal_equations(X, Y),
        "forward_cumsum": lambda: kernels.forward_cumsum(a),
        "backward_cumsum": lambda: kernels.backward_cumsum(a),
        "affine_forward": lambda: kernels.affine_forward(eta, u, v, dt, dw, 0),
    }


def full_solve(N, J):
    ens = simulate_ensemble(build_uniform_grid(1.0, J), FiltrationModel.natural(), N, 1)
    basis = build_tensor_basis(ens, uniform_cells(J, 4), 1)
    prob = LinearBSDEProblem.homogeneous(ens, ens.w[:, -1] ** 2)
    return lambda: solve_linear(prob, ens, basis, RegressionSpec(2))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=50000)
    p.add_argument("--J", type=int, default=64)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    backends = kernels.available_backends()
    work = cases(args.N, args.J, np.random.default_rng(0))
    work["solve_linear"] = full_solve(args.N, args.J)
    print(f"N={args.N} J={args.J} backends={backends}")
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + "   speedup  identical")
    previous = kernels.backend()
    try:
        for name, fn in work.items():
            times, outs = {}, {}
            reps = 1 if name == "solve_linear" else args.repeat
            for b in backends:
                kernels.use_backend(b)
                outs[b] = fn()
                times[b] = min(timeit.repeat(fn, number=1, repeat=reps))
            if name == "solve_linear":
                same = all(np.array_equal(outs[b].Y.values, outs[backends[0]].Y.values) for b in backends)
            else:
                first = outs[backends[0]]
                first = first if isinstance(first, tuple) else (first,)
                same = all(all(np.array_equal(x, y) for x, y in
                               zip(first, o if isinstance(o, tuple) else (o,))) for o in outs.values())
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{name:<18}" + "".join(f"{times[b] * 1e3:>10.1f}ms" for b in backends)
                  + f"   {speed:>6.2f}x  {same}")
    finally:
        kernels.use_backend(previous)


if __name__ == "__main__":
    main()
