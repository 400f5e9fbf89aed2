"""Command-line batch front-end.

    fockrage SUBCOMMAND --config PATH [--config PATH ...] [--out DIR]
             [--workers INT] [--seed INT]

Subcommands: spectrum, evolve, ergodic, bbgky, rage-classic, rage-escape.
Every output file starts with a header carrying the config hash and
package versions; nothing time- or host-dependent is written, so a rerun
with the same config and seed reproduces the files byte for byte.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .bbgky import exact_trajectory, hierarchy_residual, hierarchy_solve, max_trace_distance
from .config import COMMANDS, ExperimentConfig
from .dynamics import (WindowFunction, classic_rage_quadrature, classic_rage_statistic,
                       eigendecompose, evolve, minimal_gap)
from .errors import CapacityError, FockRageError, InputError
from .fock import (MAX_SECTOR_DIM, FockOperator, sector_basis, sector_dimension,
                   second_quantize)
from .onebody import LatticeSpec, build_lattice_one_body
from .rage import (Component, Packet, default_escape_config, ergodic_sweep, extract_limit,
                   run_escape)
from .reduced import (DensityMatrix, FockDensity, energy_seminorm, fock_reduce, min_eigenvalue,
                      random_fock_density, random_sector_state, reduced_set, window_dictionary)

ENV_OUT = "FOCKRAGE_OUT"


# ------------------------------------------------------------------ helpers

class Job:
    def __init__(self, command, cfg: ExperimentConfig, out: Path):
        self.command, self.cfg, self.out = command, cfg, Path(out)
        self.meta = {"command": command, "config_sha256": io.config_hash(cfg.to_dict()),
                     **{f"version_{k}": v for k, v in io.versions().items()}}
        self.written = []

    def wants(self, fmt):
        return fmt in self.cfg.output["formats"]

    def csv(self, name, columns, rows):
        if self.wants("csv"):
            path = self.out / name
            io.write_csv(path, columns, rows, self.meta)
            self.written.append(path)

    def json(self, name, payload):
        if self.wants("json"):
            path = self.out / name
            io.write_json(path, payload, self.meta)
            self.written.append(path)


def _max_dim(cfg):
    return int(cfg.run.get("max_dim", MAX_SECTOR_DIM))


def _hamiltonian(cfg) -> FockOperator:
    h, w = cfg.operators()
    return second_quantize(h, w, cfg.N, cfg.statistics, _max_dim(cfg))


def _vector(data, dim):
    a = np.asarray(data, dtype=float)
    if a.ndim == 2 and a.shape[1] == 2:
        v = a[:, 0] + 1j * a[:, 1]
    elif a.ndim == 1:
        v = a.astype(complex)
    else:
        raise InputError("state vector must be a list of numbers or [re, im] pairs")
    if v.size != dim:
        raise InputError(f"state vector has length {v.size}, sector dimension is {dim}")
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise InputError("state vector is zero")
    return v / nrm


def build_state(cfg: ExperimentConfig, H: FockOperator) -> FockDensity:
    """Initial state from ``run.state``; defaults to a random full-rank Fock state."""
    spec = cfg.run.get("state", {"kind": "random"})
    kind = spec.get("kind")
    d, N, stat = H.modes, cfg.N, cfg.statistics
    n = int(spec.get("sector", N))
    if not 0 <= n <= N:
        raise InputError(f"state sector {n} outside 0..{N}")
    rng = cfg.rng()
    if kind == "random":
        if "sector" in spec:
            rho = random_sector_state(d, n, stat, rng, spec.get("rank"))
            return _pad(FockDensity.single_sector(rho), N)
        return random_fock_density(d, N, stat, rng, spec.get("rank"))
    if kind == "vacuum":
        return FockDensity.vacuum(d, N, stat)
    basis = sector_basis(d, n, stat)
    if kind == "eigenstate":
        S = eigendecompose(H[n].matrix)
        j = int(spec.get("index", 0))
        if not 0 <= j < S.dim:
            raise InputError(f"eigenstate index {j} outside 0..{S.dim - 1}")
        v = S.eigenvectors[:, j]
    elif kind == "vector":
        v = _vector(spec.get("vector", []), basis.dim)
    else:
        raise InputError(f"unknown state kind {kind!r}")
    rho = DensityMatrix(basis, np.outer(v, v.conj()))
    return _pad(FockDensity.single_sector(rho), N)


def _pad(state: FockDensity, N):
    d, stat = state.modes, state.statistics
    mats = [b.matrix for b in state.blocks]
    for n in range(state.N + 1, N + 1):
        D = sector_basis(d, n, stat).dim
        mats.append(np.zeros((D, D)))
    return FockDensity.from_matrices(d, stat, mats, check_psd=False)


def _window(cfg):
    w = cfg.run.get("window", {"kind": "box"})
    return WindowFunction(w.get("kind", "box"), {k: v for k, v in w.items() if k != "kind"})


def pairing_labels(D):
    """Labels in the order produced by ``ObservableDictionary.pairings``."""
    out = []
    for blk in D.blocks:
        s = [int(x) for x in blk.states]
        pairs = [(s[i], s[j]) for i in range(len(s)) for j in range(i + 1, len(s))]
        n = blk.particles
        out += [f"n{n}:diag:{p}" for p in s]
        out += [f"n{n}:re:{p}:{q}" for p, q in pairs]
        out += [f"n{n}:im:{p}:{q}" for p, q in pairs]
    return out


def _report_payload(rep, max_candidate=64):
    blocks = rep.candidate.blocks
    payload = {
        "sites": list(rep.sites),
        "block_traces": list(rep.block_traces),
        "total_trace": rep.total_trace,
        "commutator_residuals": list(rep.commutator_residuals),
        "offdiagonal_residuals": list(rep.offdiagonal_residuals),
        "min_eigenvalues": list(rep.min_eigenvalues),
        "negative_blocks": list(rep.negative_blocks),
        "coefficients_top": [sorted((float(a) for a in c), reverse=True)[:8]
                             for c in rep.coefficients],
        "gap_history": list(rep.gap_history),
        "gap_nonincreasing": rep.gap_nonincreasing,
    }
    if all(b.matrix.shape[0] <= max_candidate for b in blocks):
        payload["candidate_blocks"] = [b.matrix for b in blocks]
    return payload


# ------------------------------------------------------------------ subcommands

def run_spectrum(job: Job):
    cfg = job.cfg
    H = _hamiltonian(cfg)
    sectors = cfg.run.get("sectors", list(range(cfg.N + 1)))
    rows, report = [], {"cluster_tol_rel": 1e-9, "sectors": []}
    for n in sectors:
        if not 0 <= n <= cfg.N:
            raise InputError(f"sector {n} outside 0..{cfg.N}")
        S = eigendecompose(H[n].matrix)
        rows += [(n, i, float(e)) for i, e in enumerate(S.eigenvalues)]
        multi = [[int(i) for i in c] for c in S.clusters if len(c) > 1]
        report["sectors"].append({
            "n": n, "dimension": S.dim, "clusters": len(S.clusters),
            "cluster_tol": S.cluster_tol, "degenerate_clusters": multi,
            "minimal_gap": minimal_gap(S) if len(S.clusters) > 1 else None,
        })
    job.csv("spectrum.csv", ["n", "index", "eigenvalue"], rows)
    job.json("clusters.json", report)


def _times(cfg):
    run = cfg.run
    if "times" in run:
        ts = [float(t) for t in run["times"]]
    else:
        T, points = float(run.get("T", 1.0)), int(run.get("points", 11))
        ts = list(np.linspace(0.0, T, points))
    if not ts:
        raise InputError("empty time list")
    return ts


def _observables(state: FockDensity, H0):
    rows = [("trace", complex(sum(state.traces())))]
    rows += [(f"trace:n{n}", complex(t)) for n, t in enumerate(state.traces())]
    rows.append(("energy", complex(energy_seminorm(state, H0))))
    if state.N >= 1:
        g1 = fock_reduce(state, 1).matrix
        rows += [(f"density:{x}", complex(g1[x, x])) for x in range(state.modes)]
    return rows


def run_evolve(job: Job):
    cfg = job.cfg
    H = _hamiltonian(cfg)
    state = build_state(cfg, H)
    rows, mins = [], []
    base = None
    drift = {"trace": 0.0, "energy": 0.0}
    for t in _times(cfg):
        st = evolve(state, H, t)
        obs = _observables(st, H)
        base = base or dict(obs)
        for label, val in obs:
            rows.append((t, label, val.real, val.imag))
        vals = dict(obs)
        for k in drift:
            drift[k] = max(drift[k], abs(vals[k] - base[k]))
        mins.append(min(min_eigenvalue(b.matrix) for b in st.blocks[1:]) if st.N else 0.0)
    job.csv("evolution.csv", ["T", "quantity_label", "value_re", "value_im"], rows)
    job.json("evolution.json", {"max_trace_drift": drift["trace"],
                                "max_energy_drift": drift["energy"],
                                "min_eigenvalue": float(min(mins))})


def run_ergodic(job: Job):
    cfg = job.cfg
    H = _hamiltonian(cfg)
    d = H.modes
    state = build_state(cfg, H)
    run = cfg.run
    T_list = [float(T) for T in run.get("T_list", [1.0, 2.0, 4.0])]
    center = int(run.get("window_center", 0))
    radius = int(run.get("window_radius", d))
    D = window_dictionary(d, cfg.N, cfg.statistics, center, radius)
    spectra = [eigendecompose(b.matrix) for b in H.blocks]
    win = _window(cfg)
    sweep = ergodic_sweep(state, H, T_list, D, spectra, win)
    labels = pairing_labels(D)
    rows = [(T, lab, float(v), 0.0)
            for T, vals in zip(sweep.times, sweep.pairings) for lab, v in zip(labels, vals)]
    rows += [(T, "weak_star_gap", float(g), 0.0)
             for T, g in zip(sweep.times[1:], sweep.gaps[1:])]
    rep = extract_limit(state, H, T_list[-1], D, spectra, mode=run.get("mode", "mean"),
                        window=win, gap_history=sweep.gaps[1:])
    job.csv("pairings.csv", ["T", "quantity_label", "value_re", "value_im"], rows)
    job.json("limit_report.json", {"T_star": T_list[-1], **_report_payload(rep)})


def run_bbgky(job: Job):
    cfg = job.cfg
    H = _hamiltonian(cfg)
    state = build_state(cfg, H)
    run = cfg.run
    T, step = float(run.get("T", 1.0)), float(run.get("step", 1e-3))
    every = int(run.get("record_every", max(1, int(round(0.1 / step)))))
    traj = hierarchy_solve(reduced_set(state), H, T=T, step=step,
                           method=run.get("method", "rk4"), tol=float(run.get("tol", 1e-8)),
                           record_every=every)
    cap = int(run.get("max_entries", 20_000))
    rows = []
    for i, t in enumerate(traj.times):
        for n, lv in enumerate(traj.levels):
            g = lv[i]
            for p in range(g.shape[0]):
                for q in range(g.shape[1]):
                    if len(rows) >= cap:
                        break
                    rows.append((float(t), n, p, q, g[p, q].real, g[p, q].imag))
    exact = exact_trajectory(state, H, traj.times)
    summary = {"method": traj.method, "step": traj.step, "T": T,
               "error_estimate": traj.error_estimate,
               "max_trace_distance_to_exact": max_trace_distance(traj, exact),
               "entries_written": len(rows), "entries_truncated": len(rows) >= cap}
    # residual of exact trajectories under grid halving
    table = []
    for k in range(int(run.get("residual_halvings", 3))):
        points = 2 ** (4 + k) + 1
        ex = exact_trajectory(state, H, np.linspace(0.0, T, points))
        res = hierarchy_residual(ex, H)
        table.append({"grid_step": T / (points - 1), "max_residual": float(res.max())})
    for a, b in zip(table, table[1:]):
        b["ratio"] = a["max_residual"] / b["max_residual"] if b["max_residual"] > 0 else None
    summary["residual_halving"] = table
    conv = []
    for s in run.get("convergence_steps", []):
        tr = hierarchy_solve(reduced_set(state), H, T=T, step=float(s),
                             method=run.get("method", "rk4"), tol=float("inf"))
        ex = exact_trajectory(state, H, tr.times)
        conv.append({"step": tr.step, "max_trace_distance": max_trace_distance(tr, ex)})
    for a, b in zip(conv, conv[1:]):
        b["ratio"] = (a["max_trace_distance"] / b["max_trace_distance"]
                      if b["max_trace_distance"] > 0 else None)
    summary["step_convergence"] = conv
    job.csv("trajectory.csv", ["t", "n", "p", "q", "re", "im"], rows)
    job.json("bbgky_summary.json", summary)


def run_rage_classic(job: Job):
    cfg = job.cfg
    run = cfg.run
    hop = float(cfg.model["lattice"].get("hopping", 1.0))
    T = float(run.get("T", 1000.0))
    steps = int(run.get("quadrature_steps", 0))
    rows, vals = [], []
    for L in run.get("L_values", [16, 32, 64]):
        S = eigendecompose(build_lattice_one_body(LatticeSpec(int(L), hop)).matrix)
        c = int(L) // 2
        x = np.zeros(int(L))
        x[c] = 1.0
        K = np.zeros((int(L), int(L)))
        K[c, c] = 1.0
        val = classic_rage_statistic(x, K, S, "all", T).value
        quad = classic_rage_quadrature(x, K, S, "all", T, steps).value if steps else None
        vals.append(val)
        rows.append((int(L), T, val, "" if quad is None else quad))
    job.csv("rage_classic.csv", ["L", "T", "statistic", "quadrature"], rows)
    job.json("rage_classic.json", {
        "rows": [{"L": r[0], "T": r[1], "statistic": r[2]} for r in rows],
        "decreasing": bool(all(b < a for a, b in zip(vals, vals[1:])))})


def _escape_config(cfg: ExperimentConfig):
    run, model = cfg.run, cfg.model
    L = int(model["lattice"]["length"])
    over = {"margin": float(model["margin"]), "N": cfg.N,
            "max_dim": _max_dim(cfg), "seed": cfg.seed}
    lat = model["lattice"]
    if "wells" in lat or "potential" in lat:
        over["lattice"] = cfg.lattice_spec()
        if "wells" in lat:
            over["window_center"] = int(lat["wells"][0][0])
    if "window_center" in run:
        over["window_center"] = int(run["window_center"])
    if "window_radius" in run:
        over["window_radius"] = int(run["window_radius"])
    if "components" in run:
        over["components"] = tuple(
            Component(float(c["weight"]), int(c["bound_particles"]), int(c.get("bound_index", 0)),
                      tuple(Packet(float(p["center"]), float(p["width"]),
                                   float(p.get("momentum", 0.0))) for p in c.get("packets", [])))
            for c in run["components"])
    inter = model["interaction"]
    return default_escape_config(L, cfg.statistics, inter if inter["kind"] != "none" else
                                 {"kind": "contact", "g": 0.0},
                                 float(run.get("depth", 4.0)),
                                 tuple(run.get("schedule", (0.25, 0.5, 1.0))), **over)


def run_rage_escape(job: Job):
    ecfg = _escape_config(job.cfg)
    res = run_escape(ecfg)
    D = window_dictionary(ecfg.lattice.length, ecfg.N, ecfg.statistics, ecfg.window_center,
                          ecfg.window_radius)
    labels = pairing_labels(D)
    rows = [(float(T), lab, float(v), 0.0)
            for T, vals in zip(res.sweep.times, res.sweep.pairings)
            for lab, v in zip(labels, vals)]
    rows += [(float(T), "weak_star_gap", float(g), 0.0)
             for T, g in zip(res.sweep.times[1:], res.sweep.gaps[1:])]
    job.csv("escape_sweep.csv", ["T", "quantity_label", "value_re", "value_im"], rows)
    job.json("escape_report.json", {
        "T_schedule": list(ecfg.T_schedule), "T_max": ecfg.T_max,
        "bound_overlap_fraction": res.bound_overlap, "top_block_trace": res.top_block_trace,
        "lost": res.lost, **_report_payload(res.report)})


PIPELINES = {"spectrum": run_spectrum, "evolve": run_evolve, "ergodic": run_ergodic,
             "bbgky": run_bbgky, "rage-classic": run_rage_classic,
             "rage-escape": run_rage_escape}


# ------------------------------------------------------------------ driver

def _sector_table(cfg):
    try:
        d = int(cfg.model["lattice"]["length"])
        return ", ".join(f"n={n}: {sector_dimension(d, n, cfg.statistics)}"
                         for n in range(cfg.N + 1))
    except FockRageError:
        return "unavailable"


def execute(command, path, out, seed):
    """Run one config; returns ``(exit_code, message)``."""
    cfg = None
    try:
        cfg = ExperimentConfig.load(path)
        if cfg.command is not None and cfg.command != command:
            raise InputError(f"config is for {cfg.command!r}, not {command!r}")
        if seed is not None:
            cfg = cfg.replace(seed=seed)
        target = Path(out) if out is not None else Path(cfg.output["directory"])
        job = Job(command, cfg, target)
        PIPELINES[command](job)
        return 0, "\n".join(f"wrote {p}" for p in job.written)
    except CapacityError as exc:
        dims = _sector_table(cfg) if cfg is not None else "unavailable"
        return exc.exit_code, f"{path}: capacity error: {exc}\n  sector dimensions: {dims}"
    except FockRageError as exc:
        return exc.exit_code, f"{path}: {type(exc).__name__}: {exc}"


def build_parser():
    p = argparse.ArgumentParser(prog="fockrage", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", action="append", required=True, metavar="PATH",
                   help="experiment JSON; repeat for several jobs")
    p.add_argument("--out", metavar="DIR", help="output directory (env FOCKRAGE_OUT wins)")
    p.add_argument("--workers", type=int, default=1, metavar="INT")
    p.add_argument("--seed", type=int, metavar="INT", help="override the config seed")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("--workers must be positive", file=sys.stderr)
        return 2
    if args.seed is not None and args.seed < 0:
        print("--seed must be non-negative", file=sys.stderr)
        return 2
    out = os.environ.get(ENV_OUT) or args.out
    configs = args.config
    outs = [out] * len(configs)
    if out is not None and len(configs) > 1:
        outs = [str(Path(out) / Path(c).stem) for c in configs]
    jobs = [(args.command, c, o, args.seed) for c, o in zip(configs, outs)]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(args.workers, len(jobs))) as pool:
            results = list(pool.map(execute, *zip(*jobs)))
    else:
        results = [execute(*j) for j in jobs]
    code = 0
    for rc, msg in results:
        print(msg, file=sys.stderr if rc else sys.stdout)
        code = code or rc
    return code


if __name__ == "__main__":
    sys.exit(main())
