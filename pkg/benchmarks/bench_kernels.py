"""Compare the compiled and numpy kernels on state ranking, ladder
construction and a full sector Hamiltonian build.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import importlib
import os
import subprocess
import sys
import timeit

import numpy as np

from fockrage import _pykernels
from fockrage.fock import _count_table, sector_basis

CASES = [(24, 3, "boson"), (30, 3, "fermion"), (12, 5, "boson")]


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_rows(repeat):
    try:
        ck = importlib.import_module("fockrage._ckernels")
    except ImportError:
        ck = None
    rows = []
    for d, n, stat in CASES:
        basis = sector_basis(d, n, stat)
        fermion = stat == "fermion"
        table = _count_table(d, n, fermion)
        occ = basis.states
        # one creation-annihilation string per hopping pair
        modes = np.array([[i, j] for i in range(d) for j in range(d)], dtype=np.int64)
        dag = np.array([1, 0], dtype=np.uint8)
        coefs = np.ones(len(modes), dtype=complex)
        impls = {"python": _pykernels, "cython": ck}
        for name in ("rank_states", "ladder_coo"):
            line = {"case": f"d={d} n={n} {stat} (D={basis.dim})", "kernel": name}
            for label, mod in impls.items():
                if mod is None:
                    line[label] = None
                    continue
                if name == "rank_states":
                    fn = lambda m=mod: m.rank_states(occ, table, fermion)  # noqa: E731
                else:
                    fn = lambda m=mod: m.ladder_coo(occ, modes, dag, coefs, table,  # noqa: E731
                                                    fermion)
                line[label] = _best(fn, repeat)
            rows.append(line)
    return rows


SECTOR_SNIPPET = """
import time
from fockrage import BACKEND
from fockrage.fock import sector_hamiltonian
from fockrage.onebody import LatticeSpec, build_lattice_one_body, build_pair_interaction
spec = LatticeSpec(40)
h = build_lattice_one_body(spec)
w = build_pair_interaction(spec, {"kind": "exponential", "g": 1.0, "a": 2.0})
best = float("inf")
for _ in range(%d):
    t0 = time.perf_counter()
    sector_hamiltonian(h, w, 2, "boson")
    best = min(best, time.perf_counter() - t0)
print(BACKEND, best)
"""


def sector_rows(repeat):
    out = {}
    for pure in (False, True):
        env = dict(os.environ)
        env.pop("FOCKRAGE_PURE_PYTHON", None)
        if pure:
            env["FOCKRAGE_PURE_PYTHON"] = "1"
        res = subprocess.run([sys.executable, "-c", SECTOR_SNIPPET % repeat], env=env,
                             capture_output=True, text=True, check=True)
        backend, t = res.stdout.split()
        out[backend] = float(t)
    return out


def fmt(t):
    return "n/a" if t is None else f"{t * 1e3:9.2f} ms"


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'case':34s} {'kernel':12s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for r in kernel_rows(args.repeat):
        sp = f"{r['python'] / r['cython']:7.1f}x" if r["cython"] else "    n/a"
        print(f"{r['case']:34s} {r['kernel']:12s} {fmt(r['python']):>12s} "
              f"{fmt(r['cython']):>12s} {sp:>8s}")
    sec = sector_rows(args.repeat)
    py, cy = sec.get("python"), sec.get("cython")
    sp = f"{py / cy:7.1f}x" if cy else "    n/a"
    print(f"{'H_2 boson, L=40 exponential':34s} {'sector':12s} {fmt(py):>12s} {fmt(cy):>12s} "
          f"{sp:>8s}")


if __name__ == "__main__":
    main()
