"""Many-body RAGE experiments on a 1D lattice.

An escape run starts from bound eigenstates dressed with outgoing wave
packets, averages the dynamics over ``[0, T]`` and localizes the result
to a window of sites around the binding well. The localized state is a
genuine Fock-space state on the window modes; its blocks ``G_n`` are
compared with eigenprojections of the full ``H_n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .dynamics import (BOX, SpectralData, WindowFunction, eigendecompose,
                       ergodic_mean_compressed, dephase_matrix)
from .errors import InputError, UnsupportedError
from .fock import (MAX_SECTOR_DIM, FockOperator, creation_op, sector_basis, sector_hamiltonian)
from .onebody import (LatticeSpec, build_lattice_one_body,
                      build_pair_interaction, shift_spectrum)
from .reduced import (FockDensity, ObservableDictionary, min_eigenvalue,
                      reconstruct_matrices, reduction_map, window_dictionary,
                      window_index_map)

LOSS_THRESHOLD = 0.05
NEGATIVE_TOL = 1e-8


# ------------------------------------------------------------------ configuration

@dataclass(frozen=True)
class Packet:
    center: float
    width: float
    momentum: float

    def __post_init__(self):
        vals = (self.center, self.width, self.momentum)
        if not all(np.isfinite(v) for v in vals) or self.width <= 0:
            raise InputError("packet needs finite parameters and positive width")


@dataclass(frozen=True)
class Component:
    """``weight`` times the normalized ``a*(psi_1)...a*(psi_k) phi``.

    ``phi`` is eigenvector ``bound_index`` of ``H_{bound_particles}``
    (the vacuum when ``bound_particles == 0``).
    """

    weight: float
    bound_particles: int
    bound_index: int
    packets: tuple = ()

    @property
    def particles(self):
        return self.bound_particles + len(self.packets)


@dataclass(frozen=True)
class EscapeConfig:
    lattice: LatticeSpec
    interaction: dict
    statistics: str = "boson"
    N: int = 2
    components: tuple = ()
    T_schedule: tuple = ()
    window_center: int = 0
    window_radius: int = 8
    margin: float = 0.1
    initial_kind: str = "ansatz"
    max_dim: int = MAX_SECTOR_DIM
    seed: int = 0

    def __post_init__(self):
        if self.statistics not in ("boson", "fermion"):
            raise InputError("statistics must be boson or fermion")
        if self.N < 0:
            raise InputError("N must be non-negative")
        for c in self.components:
            if c.particles > self.N:
                raise InputError("a component has more particles than N")
            if c.weight < 0:
                raise InputError("component weights must be non-negative")
        if self.initial_kind == "ansatz" and self.components:
            if abs(sum(c.weight for c in self.components) - 1.0) > 1e-12:
                raise InputError("component weights must sum to one")
        guard = self.T_max
        for T in self.T_schedule:
            if not 0 < T <= guard * (1 + 1e-12):
                raise InputError(f"T = {T} outside (0, T_max = {guard}]")
        if list(self.T_schedule) != sorted(self.T_schedule):
            raise InputError("T schedule must be increasing")

    @property
    def v_max(self):
        return 2.0 * abs(self.lattice.hopping)

    @property
    def T_max(self):
        """Reflection guard ``L / (2 v_max)``."""
        return self.lattice.length / (2.0 * self.v_max)

    @property
    def window_sites(self):
        L = self.lattice.length
        return tuple(range(max(0, self.window_center - self.window_radius),
                           min(L, self.window_center + self.window_radius + 1)))


def default_escape_config(L=64, statistics="boson", interaction=None, depth=4.0,
                          schedule=(0.25, 0.5, 1.0), **overrides) -> EscapeConfig:
    """One bound particle at a well plus one packet moving away from it.

    Geometry scales with ``L``: well at ``5L/32``, window radius ``L/8``,
    packet centred at ``14L/32`` with width ``3L/64`` and momentum
    ``pi/4``; the T schedule is given as fractions of ``T_max``.
    """
    xb = (5 * L) // 32
    spec = LatticeSpec.with_wells(L, 1.0, [(xb, -depth)])
    interaction = interaction or {"kind": "exponential", "g": 1.0, "a": 2.0}
    packet = Packet(14 * L / 32, 3 * L / 64, np.pi / 4)
    comps = (Component(1.0, 1, 0, (packet,)),)
    T_max = L / 4.0
    cfg = dict(lattice=spec, interaction=interaction, statistics=statistics, N=2,
               components=comps, T_schedule=tuple(f * T_max for f in schedule),
               window_center=xb, window_radius=L // 8)
    cfg.update(overrides)
    return EscapeConfig(**cfg)


# ------------------------------------------------------------------ construction

def wave_packet(L, packet: Packet):
    x = np.arange(L)
    psi = np.exp(-0.5 * ((x - packet.center) / packet.width) ** 2 + 1j * packet.momentum * x)
    return psi / np.linalg.norm(psi)


def escape_operators(cfg: EscapeConfig):
    h = shift_spectrum(build_lattice_one_body(cfg.lattice), cfg.margin)
    w = build_pair_interaction(cfg.lattice, cfg.interaction)
    return h, w


def _model_key(cfg: EscapeConfig):
    return (cfg.lattice, tuple(sorted(cfg.interaction.items())), cfg.statistics, cfg.margin,
            cfg.max_dim)


@lru_cache(maxsize=16)
def _cached_spectrum(key, n):
    lattice, interaction, statistics, margin, max_dim = key
    h = shift_spectrum(build_lattice_one_body(lattice), margin)
    w = build_pair_interaction(lattice, dict(interaction))
    H = sector_hamiltonian(h, w, n, statistics, max_dim)
    return H, eigendecompose(H)


def _sector_spectrum(cfg: EscapeConfig, n):
    return _cached_spectrum(_model_key(cfg), n)


def escape_hamiltonian(cfg: EscapeConfig) -> FockOperator:
    return FockOperator(tuple(_sector_spectrum(cfg, n)[0] for n in range(cfg.N + 1)))


def escape_spectra(cfg: EscapeConfig):
    return [_sector_spectrum(cfg, n)[1] for n in range(cfg.N + 1)]


def component_vector(cfg: EscapeConfig, comp: Component):
    L = cfg.lattice.length
    if comp.bound_particles == 0:
        vec = np.ones(1, dtype=complex)
    else:
        S = _sector_spectrum(cfg, comp.bound_particles)[1]
        if not 0 <= comp.bound_index < S.dim:
            raise InputError("bound index out of range")
        vec = S.eigenvectors[:, comp.bound_index].astype(complex)
    n = comp.bound_particles
    for p in reversed(comp.packets):
        vec = creation_op(wave_packet(L, p), sector_basis(L, n, cfg.statistics)) @ vec
        n += 1
    nrm = np.linalg.norm(vec)
    # inputs are unit vectors, so a norm at roundoff level means exact cancellation
    if nrm < 1e-10:
        raise InputError("component vanishes (Pauli exclusion)")
    return vec / nrm


def escape_state(cfg: EscapeConfig):
    """Initial state as per-sector lists of ``(weight, vector)`` pure terms."""
    if cfg.initial_kind != "ansatz":
        raise UnsupportedError(f"initial state kind {cfg.initial_kind!r} is not an ansatz")
    terms = [[] for _ in range(cfg.N + 1)]
    for comp in cfg.components:
        terms[comp.particles].append((comp.weight, component_vector(cfg, comp)))
    return terms


def terms_to_density(cfg: EscapeConfig, terms) -> FockDensity:
    L = cfg.lattice.length
    mats = []
    for n in range(cfg.N + 1):
        D = sector_basis(L, n, cfg.statistics).dim
        m = np.zeros((D, D), dtype=complex)
        for wgt, v in terms[n]:
            m += wgt * np.outer(v, v.conj())
        mats.append(m)
    return FockDensity.from_matrices(L, cfg.statistics, mats, check_psd=False)


def scattering_reference(cfg: EscapeConfig) -> FockDensity:
    """Predicted limit: each component contributes ``weight |phi><phi|`` to its bound block."""
    if cfg.initial_kind != "ansatz":
        raise UnsupportedError("prediction needs an initial state of bound-times-packet form")
    L = cfg.lattice.length
    mats = [np.zeros((sector_basis(L, n, cfg.statistics).dim,) * 2, dtype=complex)
            for n in range(cfg.N + 1)]
    for comp in cfg.components:
        n = comp.bound_particles
        if n == 0:
            mats[0][0, 0] += comp.weight
        else:
            phi = _sector_spectrum(cfg, n)[1].eigenvectors[:, comp.bound_index]
            mats[n] += comp.weight * np.outer(phi, phi.conj())
    return FockDensity.from_matrices(L, cfg.statistics, mats, check_psd=False)


# ------------------------------------------------------------------ localization

def support_states(d, n, statistics, sites):
    """States of the ``n`` sector with at least one particle on ``sites``."""
    mask = np.zeros(d, dtype=bool)
    mask[list(sites)] = True
    st = sector_basis(d, n, statistics).states
    return np.nonzero(st[:, mask].sum(axis=1) > 0)[0]


@lru_cache(maxsize=64)
def _local_map(d, m, n, statistics, sites):
    """Sparse map from ``vec(X_S)`` (support block of an ``m`` matrix) to the
    window-mode ``n`` reduced matrix, ``1 <= n < m``."""
    R = reduction_map(d, m, n, statistics)
    Dn = sector_basis(d, n, statistics).dim
    Dm = sector_basis(d, m, statistics).dim
    widx = window_index_map(d, n, statistics, sites)
    rows = (widx[:, None] * Dn + widx[None, :]).ravel()
    Rw = R[rows].tocoo()
    S = support_states(d, m, statistics, sites)
    pos = np.full(Dm, -1, dtype=np.int64)
    pos[S] = np.arange(S.size)
    j, l = np.divmod(Rw.col, Dm)
    if np.any(pos[j] < 0) or np.any(pos[l] < 0):
        raise AssertionError("window reduction touches states outside the support")
    cols = pos[j] * S.size + pos[l]
    return sp.csr_matrix((Rw.data, (Rw.row, cols)), shape=(widx.size ** 2, S.size ** 2))


def localized_gammas(support_blocks, traces, d, statistics, sites):
    """Window-mode reduced matrices from support blocks of each sector.

    ``support_blocks[m]`` is the matrix of block ``m`` restricted to
    ``support_states(d, m, ...)``; ``traces[m]`` is its full trace.
    """
    sites = tuple(sorted(sites))
    N = len(support_blocks) - 1
    dw = len(sites)
    gam = [np.array([[sum(traces)]], dtype=complex)]
    for n in range(1, N + 1):
        Dw = sector_basis(dw, n, statistics).dim
        acc = np.zeros((Dw, Dw), dtype=complex)
        S_n = support_states(d, n, statistics, sites)
        widx = window_index_map(d, n, statistics, sites)
        pos = np.searchsorted(S_n, widx)
        acc += support_blocks[n][np.ix_(pos, pos)]
        for m in range(n + 1, N + 1):
            acc += (_local_map(d, m, n, statistics, sites) @ support_blocks[m].ravel()).reshape(Dw, Dw)
        gam.append(acc)
    return gam


# ------------------------------------------------------------------ means and sweeps

def _block_terms(state):
    """Per-sector pure-term lists, or matrices, from a state description."""
    if isinstance(state, FockDensity):
        return [("matrix", b.matrix) for b in state.blocks]
    return [("terms", t) for t in state]


def mean_support_blocks(state, spectra, T, sites, window: WindowFunction = BOX, d=None,
                        statistics=None, mode="mean"):
    """Support blocks of ``M(T)`` (or of the dephased state) for every sector."""
    blocks, traces = [], []
    for n, (kind, data) in enumerate(_block_terms(state)):
        S = spectra[n]
        supp = support_states(d, n, statistics, sites) if n else np.zeros(0, dtype=np.int64)
        acc = np.zeros((supp.size, supp.size), dtype=complex)
        tr = 0.0
        items = data if kind == "terms" else [(1.0, data)]
        for wgt, G in items:
            G = np.asarray(G)
            if G.ndim == 2 and not np.any(G):
                continue
            tr += wgt * (float(np.vdot(G, G).real) if G.ndim == 1 else float(np.trace(G).real))
            if n == 0 or supp.size == 0:
                continue
            if mode == "dephase":
                full = np.outer(G, G.conj()) if G.ndim == 1 else G
                acc += wgt * dephase_matrix(full, S)[np.ix_(supp, supp)]
            else:
                acc += wgt * ergodic_mean_compressed(G, S, T, supp, window)
        blocks.append(acc)
        traces.append(tr)
    return blocks, traces


@dataclass(frozen=True, eq=False)
class SweepTable:
    times: np.ndarray
    pairings: np.ndarray  # (len(times), len(dictionary))
    gaps: np.ndarray  # weak-* gap between consecutive times; gaps[0] = nan
    labels: tuple
    local_gammas: list = field(default_factory=list)


def _dictionary_sites(D: ObservableDictionary):
    blk = D.blocks[0]
    return tuple(range(max(0, blk.center - blk.radius), min(D.modes, blk.center + blk.radius + 1)))


def local_pairings(D: ObservableDictionary, local):
    """Dictionary values from window-mode reduced matrices."""
    out = []
    for blk in D.blocks:
        g = np.asarray(local[blk.particles])
        if g.shape[0] != len(blk.states):
            raise InputError("dictionary window does not match the localization window")
        iu = np.triu_indices(g.shape[0], 1)
        out += [np.real(np.diag(g)), np.real(g[iu] + g.T[iu]), np.real(1j * (g.T[iu] - g[iu]))]
    return np.concatenate(out) if out else np.zeros(0)


def ergodic_sweep(state, H, T_list, D: ObservableDictionary, spectra=None,
                  window: WindowFunction = BOX) -> SweepTable:
    """Dictionary pairings of ``M(T)`` for each ``T`` plus consecutive gaps.

    ``state`` is a ``FockDensity`` or per-sector lists of pure terms.
    """
    T_list = [float(T) for T in T_list]
    if any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise InputError("T list must be increasing")
    spectra = spectra or [eigendecompose(b) for b in H.blocks]
    sites = _dictionary_sites(D)
    rows, locs = [], []
    for T in T_list:
        blocks, traces = mean_support_blocks(state, spectra, T, sites, window, D.modes,
                                              D.statistics)
        loc = localized_gammas(blocks, traces, D.modes, D.statistics, sites)
        locs.append(loc)
        rows.append(local_pairings(D, loc))
    P = np.array(rows)
    gaps = np.full(len(T_list), np.nan)
    for i in range(1, len(T_list)):
        gaps[i] = float(np.max(np.abs(P[i] - P[i - 1]))) if P.shape[1] else 0.0
    labels = tuple(f"n{b.particles}" for b in D.blocks)
    return SweepTable(np.array(T_list), P, gaps, labels, locs)


# ------------------------------------------------------------------ limit extraction

@dataclass(frozen=True, eq=False)
class LimitReport:
    candidate: FockDensity  # on the window modes (all modes when unwindowed)
    sites: tuple
    block_traces: tuple
    commutator_residuals: tuple  # Frobenius norm of [H_n, G_n] per block
    offdiagonal_residuals: tuple  # Frobenius norm of G_n - sum_c P_c G_n P_c
    coefficients: tuple  # alpha_{n,j} = <phi_{n,j}, G_n phi_{n,j}>
    min_eigenvalues: tuple
    negative_blocks: tuple
    gap_history: tuple = ()
    gap_nonincreasing: bool = None

    @property
    def total_trace(self):
        return float(sum(self.block_traces))

    def overlap_fraction(self, n, j):
        t = self.block_traces[n]
        return float(self.coefficients[n][j] / t) if t > 0 else float("nan")


def _block_diagnostics(G, idx, H, S: SpectralData, dense_limit=MAX_SECTOR_DIM):
    """Residuals and coefficients of a window block embedded at ``idx`` of sector ``H``."""
    V = S.eigenvectors[idx, :]
    Hm = np.asarray(H)
    alpha = np.real(np.einsum("ij,ik,kj->j", V.conj(), G, V, optimize=True))
    # [H, G] with G supported on idx x idx
    A = Hm[:, idx] @ G
    B = G @ Hm[idx, :]
    A[idx, :] -= B[:, idx]
    mask = np.ones(Hm.shape[0], dtype=bool)
    mask[idx] = False
    comm = np.sqrt(np.linalg.norm(A) ** 2 + np.linalg.norm(B[:, mask]) ** 2)
    if Hm.shape[0] <= dense_limit:
        Gh = V.conj().T @ G @ V
        lab = S.cluster_labels()
        off = Gh * (lab[:, None] != lab[None, :])
        offd = float(np.linalg.norm(off))
    else:
        kept = sum(np.linalg.norm(V[:, c].conj().T @ G @ V[:, c]) ** 2 for c in S.clusters)
        offd = float(np.sqrt(max(np.linalg.norm(G) ** 2 - kept, 0.0)))
    return float(comm), offd, alpha


def extract_limit(state, H, T_star, D: ObservableDictionary = None, spectra=None,
                  sites=None, mode="mean", window: WindowFunction = BOX,
                  gap_history=()) -> LimitReport:
    """Localize ``M(T_star)`` (or the dephased state) and reconstruct its blocks.

    The window is taken from ``sites``, else from the dictionary; with
    neither, all sites are kept and the candidate is ``M(T_star)`` itself.
    """
    if isinstance(state, FockDensity):
        d, stat = state.modes, state.statistics
    else:
        d, stat = H.modes, H.statistics
    if mode not in ("mean", "dephase"):
        raise InputError(f"unknown mode {mode!r}")
    spectra = spectra or [eigendecompose(b) for b in H.blocks]
    if sites is None:
        sites = _dictionary_sites(D) if D is not None else tuple(range(d))
    sites = tuple(sorted(int(s) for s in sites))
    blocks, traces = mean_support_blocks(state, spectra, T_star, sites, window, d, stat, mode)
    local = localized_gammas(blocks, traces, d, stat, sites)
    mats = reconstruct_matrices(local, len(sites), stat)
    mats = [0.5 * (m + m.conj().T) for m in mats]
    cand = FockDensity.from_matrices(len(sites), stat, mats, normalized=False, check_psd=False)
    comms, offs, coefs, mins, neg = [], [], [], [], []
    for n, G in enumerate(mats):
        lam_min = min_eigenvalue(G)
        mins.append(lam_min)
        neg.append(bool(lam_min < -NEGATIVE_TOL * max(1.0, abs(np.trace(G).real))))
        if n == 0:
            comms.append(0.0)
            offs.append(0.0)
            coefs.append(np.array([float(G[0, 0].real)]))
            continue
        idx = window_index_map(d, n, stat, sites)
        c, o, a = _block_diagnostics(G, idx, H.blocks[n].matrix, spectra[n])
        comms.append(c)
        offs.append(o)
        coefs.append(a)
    gaps = tuple(float(g) for g in gap_history if np.isfinite(g))
    flag = bool(all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:]))) if gaps else None
    return LimitReport(cand, sites, tuple(float(np.trace(m).real) for m in mats), tuple(comms),
                       tuple(offs), tuple(coefs), tuple(mins), tuple(neg), gaps, flag)


# ------------------------------------------------------------------ experiment driver

@dataclass(frozen=True, eq=False)
class EscapeResult:
    config: EscapeConfig
    report: LimitReport
    sweep: SweepTable
    bound_overlap: float  # <phi_b, G_1 phi_b> / tr G_1
    top_block_trace: float
    lost: bool


def run_escape(cfg: EscapeConfig, dictionary_radius=None) -> EscapeResult:
    """Sweep the T schedule, extract the limit at the last T and summarize."""
    if not cfg.T_schedule:
        raise InputError("escape run needs a T schedule")
    H = escape_hamiltonian(cfg)
    spectra = escape_spectra(cfg)
    terms = escape_state(cfg)
    L = cfg.lattice.length
    radius = cfg.window_radius if dictionary_radius is None else dictionary_radius
    D = window_dictionary(L, cfg.N, cfg.statistics, cfg.window_center, radius)
    sweep = ergodic_sweep(terms, H, cfg.T_schedule, D, spectra)
    report = extract_limit(terms, H, cfg.T_schedule[-1], D, spectra, sites=cfg.window_sites,
                           gap_history=sweep.gaps[1:])
    b = next((c.bound_index for c in cfg.components if c.bound_particles == 1), 0)
    overlap = report.overlap_fraction(1, b) if cfg.N >= 1 else float("nan")
    top = report.block_traces[cfg.N]
    return EscapeResult(cfg, report, sweep, overlap, top, top < LOSS_THRESHOLD)
