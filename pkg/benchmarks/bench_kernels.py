"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import random
import timeit

from grasshj import _pykernels
from grasshj import expr as ex
from grasshj._backend import compiled_kernels


def _progs():
    V = ex.parse("0.5*q^2 - 0.3")
    P = ex.mul(V, ex.diff(V))
    out = []
    for e in (P, ex.diff(P), ex.diff(V), ex.diff(ex.diff(V))):
        p = ex.compiled(e)
        out += [p.code, p.args]
    return V, tuple(out)


def cases():
    V, progs = _progs()
    v = ex.compiled(V)
    w = ex.compiled(ex.parse("exp(tanh(q))/sqrt(q + 2)"))
    rng = random.Random(0)
    ga = [complex(rng.random(), rng.random()) for _ in range(1 << 6)]
    gb = [complex(rng.random(), rng.random()) for _ in range(1 << 6)]
    return {
        "eval_program x1000": lambda k: [k.eval_program(w.code, w.args, 0.001 * i)
                                         for i in range(1000)],
        "gk_integrate p=-3/2": lambda k: k.gk_integrate(w.code, w.args, v.code, v.args, 0.8, -3,
                                                        -0.5, 0.95, 1e-12, 8e-9, 2000),
        "dopri5 T=20": lambda k: k.dopri5(progs, [0.1, 0.8, 0.2, -0.4, 0.0], 20.0, 0.01,
                                          1e-10, 1e-10, 10 ** 6),
        "ga_mul n=6": lambda k: k.ga_mul(ga, gb, 6),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    compiled = compiled_kernels()
    backends = [("python", _pykernels)]
    if compiled is None:
        print("compiled kernels not built; timing the Python fallback only")
    else:
        backends.append(("cython", compiled))
    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name, _ in backends) + "   speedup")
    for label, fn in cases().items():
        times = []
        for _, mod in backends:
            number = 1
            times.append(min(timeit.repeat(lambda: fn(mod), number=number,
                                           repeat=args.repeat)) / number)
        row = f"{label:<22}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
        if len(times) == 2:
            row += f"   {times[0] / times[1]:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
