"""Compare the compiled and numpy propagation kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from randbench import _kernels_py
from randbench.noise import NoiseModel, compile_one_qubit_table

try:
    from randbench import _kernels
except ImportError:
    _kernels = None


def workload(n_seq: int, length: int, seed: int = 0):
    table = compile_one_qubit_table(NoiseModel(depol_per_gate=0.01, dephasing_rate=0.002))
    rng = np.random.default_rng(seed)
    codes = rng.integers(0, table.shape[0], size=(n_seq, length), dtype=np.int32)
    lengths = np.full(n_seq, length, dtype=np.int64)
    vec = np.array([1.0, 0.0, 0.0, 1.0])
    return table, codes, lengths, vec


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = {"python": _kernels_py}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'workload':>22} " + " ".join(f"{b:>12}" for b in backends) + "   speedup")
    for n_seq, length in ((1, 200), (544, 200), (2000, 400)):
        table, codes, lengths, vec = workload(n_seq, length)
        ref = _kernels_py.propagate_many(table, codes, lengths, vec)
        times = {}
        for name, mod in backends.items():
            np.testing.assert_allclose(mod.propagate_many(table, codes, lengths, vec), ref, atol=1e-12)
            t = timeit.repeat(lambda: mod.propagate_many(table, codes, lengths, vec), number=1, repeat=args.repeat)
            times[name] = min(t)
        speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else ""
        label = f"{n_seq} x {length} pulses"
        print(f"{label:>22} " + " ".join(f"{times[b] * 1e3:10.3f}ms" for b in backends) + f"  {speed}")


if __name__ == "__main__":
    main()
