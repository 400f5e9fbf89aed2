"""Reduced density matrices, Fock-block states and window observables.

``reduce`` on an ``m``-particle sector returns ``C(m, n)`` times the
partial trace over the last ``m - n`` particles. Two routes exist:

* ``route="tensor"`` embeds the sector into the plain tensor power,
  takes the partial trace there and compresses back (reference route);
* ``route="fast"`` (default) applies a precomputed sparse map acting on
  ``vec(X)``, built from annihilation strings in the occupation basis.

Both are linear in the input, so they also apply to non-Hermitian
matrices such as commutators.
"""
from __future__ import annotations

from dataclasses import InitVar, dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np
import scipy.sparse as sp

from .errors import InputError
from .fock import (FockOperator, SectorBasis, apply_strings, creation_op, embedding,
                   sector_basis, symmetrized_tensor)

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
NORMALIZATION_TOL = 1e-10
ZERO_BLOCK_TOL = 1e-9


def _is_hermitian(m, tol=HERMITIAN_TOL):
    if not m.size:
        return True
    scale = max(1.0, float(np.max(np.abs(m))))
    return float(np.max(np.abs(m - m.conj().T))) <= tol * scale


def min_eigenvalue(m):
    m = np.asarray(m)
    if m.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Positive semidefinite matrix on one sector (not necessarily trace one).

    Pass ``check_psd=False`` to skip the eigenvalue test, e.g. for large
    blocks already known to be positive or for reconstructed blocks.
    """

    sector: SectorBasis
    matrix: np.ndarray
    check_psd: InitVar[bool] = True

    def __post_init__(self, check_psd):
        m = np.asarray(self.matrix)
        if m.shape != (self.sector.dim, self.sector.dim):
            raise InputError(f"matrix shape {m.shape} does not match {self.sector}")
        if not np.all(np.isfinite(m)):
            raise InputError("density matrix has non-finite entries")
        if not _is_hermitian(m):
            raise InputError("density matrix is not Hermitian")
        if check_psd:
            tr = abs(float(np.trace(m).real))
            if min_eigenvalue(m) < -PSD_TOL * max(tr, 1.0):
                raise InputError("density matrix is not positive semidefinite")
        m = np.array(m, copy=True)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self):
        return float(np.trace(self.matrix).real)


@dataclass(frozen=True, eq=False)
class FockDensity:
    """Block state ``G_0 (+) G_1 (+) ... (+) G_N`` on the truncated Fock space."""

    blocks: tuple
    normalized: bool = True

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise InputError("need at least the vacuum block")
        d, stat = blocks[0].sector.modes, blocks[0].sector.statistics
        for n, b in enumerate(blocks):
            s = b.sector
            if s.particles != n or s.modes != d or s.statistics != stat:
                raise InputError(f"block {n} lives on {s}")
        object.__setattr__(self, "blocks", blocks)
        if self.normalized and abs(sum(self.traces()) - 1.0) > NORMALIZATION_TOL:
            raise InputError(f"total trace {sum(self.traces())} is not 1")

    @property
    def N(self):
        return len(self.blocks) - 1

    @property
    def modes(self):
        return self.blocks[0].sector.modes

    @property
    def statistics(self):
        return self.blocks[0].sector.statistics

    def traces(self):
        return [b.trace for b in self.blocks]

    def __getitem__(self, n):
        return self.blocks[n]

    @classmethod
    def from_matrices(cls, d, statistics, matrices, normalized=True, check_psd=True):
        blocks = [DensityMatrix(sector_basis(d, n, statistics), np.asarray(m, dtype=complex)
                                .reshape(sector_basis(d, n, statistics).dim, -1), check_psd)
                  for n, m in enumerate(matrices)]
        return cls(tuple(blocks), normalized)

    @classmethod
    def single_sector(cls, rho: DensityMatrix, normalized=True):
        """Embed a state on the ``N``-particle sector with empty lower blocks."""
        s = rho.sector
        blocks = [DensityMatrix(sector_basis(s.modes, n, s.statistics),
                                np.zeros((sector_basis(s.modes, n, s.statistics).dim,) * 2), False)
                  for n in range(s.particles)]
        return cls(tuple(blocks) + (rho,), normalized)

    @classmethod
    def vacuum(cls, d, N, statistics):
        mats = [np.ones((1, 1))] + [np.zeros((sector_basis(d, n, statistics).dim,) * 2)
                                   for n in range(1, N + 1)]
        return cls.from_matrices(d, statistics, mats, check_psd=False)


@dataclass(frozen=True, eq=False)
class ReducedSet:
    """``gammas[n]`` is the ``n``-particle reduced matrix; ``gammas[0]`` is 1x1."""

    N: int
    modes: int
    statistics: str
    gammas: tuple

    def __post_init__(self):
        g = tuple(np.asarray(x) for x in self.gammas)
        if len(g) != self.N + 1:
            raise InputError(f"expected {self.N + 1} reduced matrices, got {len(g)}")
        for n, x in enumerate(g):
            D = sector_basis(self.modes, n, self.statistics).dim
            if x.shape != (D, D):
                raise InputError(f"reduced matrix {n} has shape {x.shape}, expected {(D, D)}")
        object.__setattr__(self, "gammas", g)

    def __getitem__(self, n):
        return self.gammas[n]

    def sector(self, n):
        return sector_basis(self.modes, n, self.statistics)


# ------------------------------------------------------------------ reduction

def _annihilation_entries(d, m, n, statistics):
    """Entries ``(a, k, j, v)`` of ``v = <k| a_{x_n} ... a_{x_1} |j> / c_a``.

    ``a`` runs over the ``n``-particle states with modes ``x_1 <= ... <= x_n``,
    ``j`` over the ``m``-particle and ``k`` over the ``(m-n)``-particle
    states; ``c_a = sqrt(prod n_p!)`` for bosons, 1 for fermions.
    """
    small = sector_basis(d, n, statistics)
    big = sector_basis(d, m, statistics)
    lists = small.mode_lists[:, ::-1]
    if statistics == "boson":
        norms = np.array([np.sqrt(np.prod([factorial(int(o)) for o in occ]))
                          for occ in small.states])
    else:
        norms = np.ones(small.dim)
    a, j, k, v = apply_strings(big, m - n, lists, np.zeros(n, dtype=np.uint8), 1.0 / norms)
    return a, k, j, v


@lru_cache(maxsize=64)
def reduction_map(d, m, n, statistics):
    """Sparse ``R`` with ``vec(reduce(X)) = R @ vec(X)`` (row-major vec).

    Includes the ``C(m, n)`` prefactor.
    """
    if not 0 <= n <= m:
        raise InputError(f"cannot reduce {m} particles to {n}")
    Dn = sector_basis(d, n, statistics).dim
    Dm = sector_basis(d, m, statistics).dim
    a, k, j, v = _annihilation_entries(d, m, n, statistics)
    order = np.argsort(k, kind="stable")
    a, k, j, v = a[order], k[order], j[order], v[order]
    # all ordered pairs of entries sharing the same k
    starts = np.searchsorted(k, k, side="left")
    ends = np.searchsorted(k, k, side="right")
    sizes = ends - starts
    i1 = np.repeat(np.arange(k.size), sizes)
    offs = np.arange(i1.size) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    i2 = np.repeat(starts, sizes) + offs
    rows = a[i1] * Dn + a[i2]
    cols = j[i1] * Dm + j[i2]
    vals = v[i1] * np.conj(v[i2])
    R = sp.csr_matrix((vals, (rows, cols)), shape=(Dn * Dn, Dm * Dm))
    R.sum_duplicates()
    R.data.flags.writeable = False
    return R


def reduce_matrix(X, d, m, n, statistics, route="fast"):
    """``C(m, n) Tr_{n+1..m} X`` for a matrix ``X`` on the ``m``-particle sector."""
    X = np.asarray(X)
    Dm = sector_basis(d, m, statistics).dim
    if X.shape != (Dm, Dm):
        raise InputError(f"matrix shape {X.shape} does not match sector dimension {Dm}")
    if not 0 <= n <= m:
        raise InputError(f"cannot reduce {m} particles to {n}")
    if route == "tensor":
        return tensor_reduce_matrix(X, d, m, n, statistics)
    if route != "fast":
        raise InputError(f"unknown route {route!r}")
    if n == m:
        return np.array(X, dtype=complex)
    Dn = sector_basis(d, n, statistics).dim
    return (reduction_map(d, m, n, statistics) @ X.ravel()).reshape(Dn, Dn)


def tensor_reduce_matrix(X, d, m, n, statistics):
    """Reference route: embed, trace the last ``m - n`` tensor factors, compress."""
    Em = embedding(d, m, statistics).toarray()
    Et = Em.reshape(d ** n, d ** (m - n), -1)
    T = np.einsum("irj,jl,krl->ik", Et, np.asarray(X), Et.conj(), optimize=True)
    En = embedding(d, n, statistics).toarray()
    return comb(m, n) * (En.conj().T @ T @ En)


def partial_trace_matrix(X, d, m, n, statistics):
    """Plain ``Tr_{n+1..m} X`` (no binomial factor)."""
    return reduce_matrix(X, d, m, n, statistics) / comb(m, n)


def reduce(rho: DensityMatrix, n, route="fast", check_psd=False) -> DensityMatrix:
    """``Gamma^(n) = C(N, n) Tr_{n+1..N} Gamma`` of a state on the ``N`` sector."""
    s = rho.sector
    if n > s.particles or n < 0:
        raise InputError(f"cannot reduce {s.particles} particles to {n}")
    out = reduce_matrix(rho.matrix, s.modes, s.particles, n, s.statistics, route)
    return DensityMatrix(sector_basis(s.modes, n, s.statistics), out, check_psd)


def fock_reduce_matrix(blocks, d, statistics, n):
    """``G_n + sum_{m > n} C(m, n) Tr_{n+1..m} G_m`` for raw block matrices."""
    N = len(blocks) - 1
    if not 0 <= n <= N:
        raise InputError(f"need 0 <= n <= {N}")
    out = np.array(blocks[n], dtype=complex)
    for m in range(n + 1, N + 1):
        out = out + reduce_matrix(blocks[m], d, m, n, statistics)
    return out


def fock_reduce(state: FockDensity, n, check_psd=False) -> DensityMatrix:
    mats = [b.matrix for b in state.blocks]
    out = fock_reduce_matrix(mats, state.modes, state.statistics, n)
    return DensityMatrix(sector_basis(state.modes, n, state.statistics), out, check_psd)


def reduced_set(state: FockDensity) -> ReducedSet:
    mats = [b.matrix for b in state.blocks]
    gam = tuple(fock_reduce_matrix(mats, state.modes, state.statistics, n)
                for n in range(state.N + 1))
    return ReducedSet(state.N, state.modes, state.statistics, gam)


def reconstruct_matrices(gammas, d, statistics):
    """Invert ``fock_reduce``: ``G_n = sum_{m >= n} (-1)^(m-n) C(m,n) Tr_{n+1..m} Gamma^(m)``."""
    N = len(gammas) - 1
    out = []
    for n in range(N + 1):
        g = np.array(gammas[n], dtype=complex)
        for m in range(n + 1, N + 1):
            g = g + (-1) ** (m - n) * reduce_matrix(gammas[m], d, m, n, statistics)
        out.append(g)
    return out


def reconstruct_blocks(R: ReducedSet) -> FockDensity:
    """Block state whose reduced matrices are ``R``.

    Positivity is not enforced; ``zero_blocks`` lists blocks whose trace
    is below ``ZERO_BLOCK_TOL`` in absolute value.
    """
    mats = reconstruct_matrices(R.gammas, R.modes, R.statistics)
    return FockDensity.from_matrices(R.modes, R.statistics, mats, normalized=False,
                                     check_psd=False)


def zero_blocks(state: FockDensity, tol=ZERO_BLOCK_TOL):
    return [n for n, t in enumerate(state.traces()) if abs(t) < tol]


# ------------------------------------------------------------------ correlations

def _as_blocks(state):
    if isinstance(state, FockDensity):
        return [b.matrix for b in state.blocks], state.modes, state.statistics
    raise InputError("expected a FockDensity")


def correlations(state: FockDensity, fs, gs):
    """``Tr(a*(f_1) ... a*(f_n) a(g_1) ... a(g_n) Gamma)``."""
    fs, gs = list(fs), list(gs)
    if len(fs) != len(gs):
        raise InputError("creation and annihilation lists differ in length")
    blocks, d, stat = _as_blocks(state)
    n = len(fs)
    total = 0j
    for m in range(n, len(blocks)):
        Y = np.asarray(blocks[m], dtype=complex)
        # apply a(g_n) first, down to the (m - n) sector
        for k, g in enumerate(reversed(gs)):
            lower = sector_basis(d, m - k - 1, stat)
            Y = creation_op(g, lower).conj().T @ Y
        for k, f in enumerate(reversed(fs)):
            Y = creation_op(f, sector_basis(d, m - n + k, stat)) @ Y
        total += np.trace(Y)
    return complex(total)


def reduced_correlation(gamma_n, fs, gs, d, statistics):
    """Pairing ``<a*(g_n)...a*(g_1)|vac>, Gamma^(n) a*(f_1)...a*(f_n)|vac>>``.

    Equal to ``correlations(state, fs, gs)`` when ``gamma_n`` is the
    ``n``-particle reduced matrix of ``state``. The annihilation vectors
    enter in reverse order, which matters only for fermions.
    """
    fs, gs = list(fs), list(gs)
    if len(fs) != len(gs):
        raise InputError("creation and annihilation lists differ in length")
    left = symmetrized_tensor(gs[::-1], d, statistics)
    right = symmetrized_tensor(fs, d, statistics)
    return complex(left.conj() @ np.asarray(gamma_n) @ right)


# ------------------------------------------------------------------ windows

def window_states(basis: SectorBasis, sites):
    """Indices of the states of ``basis`` with every particle on ``sites``."""
    mask = np.zeros(basis.modes, dtype=bool)
    mask[np.asarray(list(sites), dtype=int)] = True
    return np.nonzero(basis.states[:, ~mask].sum(axis=1) == 0)[0]


def window_index_map(d, n, statistics, sites):
    """Positions in the full ``d``-mode sector of the window-mode sector states.

    Entry ``i`` is the full-sector index of state ``i`` of
    ``sector_basis(len(sites), n, statistics)``. Site order is preserved,
    so no fermionic signs arise.
    """
    sites = np.sort(np.asarray(list(sites), dtype=int))
    wb = sector_basis(len(sites), n, statistics)
    full = np.zeros((wb.dim, d), dtype=np.int64)
    full[:, sites] = wb.states
    return np.atleast_1d(sector_basis(d, n, statistics).index(full))


def localize(R: ReducedSet, sites) -> ReducedSet:
    """Reduced matrices of the state localized to ``sites``.

    ``gamma_W^(n) = (1_W)^{(x)n} gamma^(n) (1_W)^{(x)n}`` written on the
    sectors of ``len(sites)`` modes.
    """
    sites = np.sort(np.asarray(list(sites), dtype=int))
    gam = []
    for n in range(R.N + 1):
        if R.statistics == "fermion" and n > len(sites):
            raise InputError("window too small for this many fermions")
        idx = window_index_map(R.modes, n, R.statistics, sites)
        gam.append(np.asarray(R.gammas[n])[np.ix_(idx, idx)])
    return ReducedSet(R.N, len(sites), R.statistics, tuple(gam))


@dataclass(frozen=True)
class DictionaryBlock:
    particles: int
    states: np.ndarray  # sector indices of the window states
    center: int
    radius: int


@dataclass(frozen=True, eq=False)
class ObservableDictionary:
    """Window observables ``K`` with ``||K|| <= 1`` on sectors ``n = 1..N``.

    For each sector and each pair ``p <= q`` of window states the entries
    are ``|p><p|`` (``p = q``), ``|p><q| + h.c.`` and ``i(|p><q| - h.c.)``.
    Pairings ``Tr(K gamma)`` are evaluated in bulk, never forming ``K``.
    """

    modes: int
    statistics: str
    blocks: tuple

    def pairings(self, gammas):
        """Dictionary values ``Tr(K gamma^(n))``, concatenated over blocks."""
        out = []
        for blk in self.blocks:
            g = np.asarray(gammas[blk.particles])[np.ix_(blk.states, blk.states)]
            iu = np.triu_indices(len(blk.states), 1)
            out.append(np.real(np.diag(g)))
            out.append(np.real(g[iu] + g.T[iu]))
            out.append(np.real(1j * (g.T[iu] - g[iu])))
        return np.concatenate(out) if out else np.zeros(0)

    def __len__(self):
        return sum(len(b.states) ** 2 for b in self.blocks)

    def entries(self):
        """Yield ``(n, K, label, metadata)``; intended for small dictionaries."""
        for blk in self.blocks:
            D = sector_basis(self.modes, blk.particles, self.statistics).dim
            meta = {"center": blk.center, "radius": blk.radius}
            s = blk.states
            for p in s:
                K = np.zeros((D, D), dtype=complex)
                K[p, p] = 1
                yield blk.particles, K, f"n{blk.particles}:diag:{p}", meta
            for i in range(len(s)):
                for j in range(i + 1, len(s)):
                    p, q = s[i], s[j]
                    K = np.zeros((D, D), dtype=complex)
                    K[p, q] = K[q, p] = 1
                    yield blk.particles, K, f"n{blk.particles}:re:{p}:{q}", meta
            for i in range(len(s)):
                for j in range(i + 1, len(s)):
                    p, q = s[i], s[j]
                    K = np.zeros((D, D), dtype=complex)
                    K[p, q], K[q, p] = 1j, -1j
                    yield blk.particles, K, f"n{blk.particles}:im:{p}:{q}", meta


def window_dictionary(d, N, statistics, center, radius=8, sectors=None) -> ObservableDictionary:
    """Default dictionary: window of sites ``[center - radius, center + radius]``."""
    if radius < 0:
        raise InputError("window radius must be non-negative")
    sites = range(max(0, center - radius), min(d, center + radius + 1))
    sectors = range(1, N + 1) if sectors is None else sectors
    blocks = []
    for n in sectors:
        if statistics == "fermion" and n > d:
            continue
        idx = window_states(sector_basis(d, n, statistics), sites)
        blocks.append(DictionaryBlock(n, idx, int(center), int(radius)))
    return ObservableDictionary(d, statistics, tuple(blocks))


def _gammas(x):
    if isinstance(x, ReducedSet):
        return x.gammas
    if isinstance(x, FockDensity):
        return reduced_set(x).gammas
    raise InputError("expected a FockDensity or ReducedSet")


def weak_star_gap(first, second, dictionary: ObservableDictionary):
    """``max_K |Tr(K (Gamma_1^(n) - Gamma_2^(n)))|`` over the dictionary."""
    g1, g2 = _gammas(first), _gammas(second)
    diff = [np.asarray(a) - np.asarray(b) for a, b in zip(g1, g2)]
    vals = dictionary.pairings(diff)
    return float(np.max(np.abs(vals))) if vals.size else 0.0


# ------------------------------------------------------------------ energy

def energy_seminorm(state: FockDensity, H0: FockOperator):
    """``sum_n tr(sqrt(H0_n) G_n sqrt(H0_n))``; every ``H0_n`` with ``n >= 1`` must be positive."""
    if H0.N < state.N:
        raise InputError("free Hamiltonian has fewer sectors than the state")
    total = 0.0
    for n, blk in enumerate(state.blocks):
        if n == 0:
            continue
        total += sector_energy(blk.matrix, H0[n].matrix)
    return total


def sector_energy(G, H):
    """``tr(sqrt(H) G sqrt(H))`` for positive definite ``H``, evaluated spectrally."""
    lam, V = np.linalg.eigh(np.asarray(H))
    if lam.size and lam[0] <= 0:
        raise InputError("free Hamiltonian must be positive; shift h first")
    Gh = V.conj().T @ np.asarray(G) @ V
    return float(np.real(np.sum(lam * np.diag(Gh))))


# ------------------------------------------------------------------ random states

def random_density(D, rng, rank=None, trace=1.0):
    """Random positive matrix of size ``D`` with the given trace."""
    rank = D if rank is None else rank
    A = rng.normal(size=(D, rank)) + 1j * rng.normal(size=(D, rank))
    G = A @ A.conj().T
    t = np.trace(G).real
    return G * (trace / t) if t > 0 else G


def random_sector_state(d, n, statistics, rng, rank=None) -> DensityMatrix:
    basis = sector_basis(d, n, statistics)
    return DensityMatrix(basis, random_density(basis.dim, rng, rank), check_psd=False)


def random_fock_density(d, N, statistics, rng, rank=None) -> FockDensity:
    """Random block state with random block weights summing to one."""
    weights = rng.dirichlet(np.ones(N + 1))
    mats = []
    for n in range(N + 1):
        D = sector_basis(d, n, statistics).dim
        mats.append(random_density(D, rng, rank, weights[n]))
    return FockDensity.from_matrices(d, statistics, mats, check_psd=False)
