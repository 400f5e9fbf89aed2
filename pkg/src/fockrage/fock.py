"""Occupation-number sectors, ladder operators and many-body Hamiltonians.

Conventions
-----------
* Sector states are occupation vectors of length ``d`` summing to ``n``,
  ordered lexicographically descending, so ``(1,0,...)`` comes first.
* ``|occ>`` is the normalized state ``a*_{x1} ... a*_{xn}|vac>`` with the
  occupied modes ``x1 <= ... <= xn`` ascending, divided by
  ``sqrt(prod n_p!)`` for bosons.
* Fermionic ``a*_p`` carries the sign ``(-1)^(number of occupied q < p)``.
* ``a*(f1)...a*(fn)|vac>`` (unnormalized) is the elementary symmetric or
  antisymmetric tensor of ``f1, ..., fn``; see ``symmetrized_tensor``.

The first-quantized route (``embedding``, ``tensor_hamiltonian``,
``lift_first_quantized``) works on the plain tensor power and shares no
code with the ladder-operator route beyond the basis enumeration.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm

from . import _kernels
from .errors import CapacityError, EmptySectorError, InputError
from .onebody import HERMITIAN_RTOL, OneBodyOperator, TwoBodyOperator, _hermitian_defect

MAX_SECTOR_DIM = 4096
MAX_TENSOR_DIM = 4096

STATISTICS = ("boson", "fermion")


def sector_dimension(d, n, statistics):
    if statistics == "boson":
        return comb(d + n - 1, n) if d > 0 else int(n == 0)
    return comb(d, n)


@lru_cache(maxsize=None)
def _count_table(d, n, fermion):
    """``t[m, r]``: number of ways to put ``r`` particles in ``m`` modes."""
    t = np.zeros((d + 1, n + 1), dtype=np.int64)
    for m in range(d + 1):
        for r in range(n + 1):
            t[m, r] = comb(m, r) if fermion else (comb(m + r - 1, r) if m else int(r == 0))
    t.flags.writeable = False
    return t


@dataclass(frozen=True, eq=False)
class SectorBasis:
    modes: int
    particles: int
    statistics: str
    states: np.ndarray

    @property
    def dim(self):
        return self.states.shape[0]

    @property
    def fermion(self):
        return self.statistics == "fermion"

    @property
    def mode_lists(self):
        """Occupied modes of each state, ascending, with repetition."""
        sites = np.arange(self.modes)
        return np.array([np.repeat(sites, occ) for occ in self.states],
                        dtype=np.int64).reshape(self.dim, self.particles)

    def index(self, occ):
        """Position of an occupation vector (or an array of them) in this basis."""
        occ = np.atleast_2d(np.asarray(occ, dtype=np.int64))
        if occ.shape[1] != self.modes or np.any(occ.sum(axis=1) != self.particles) or np.any(occ < 0):
            raise InputError("occupation vector does not belong to this sector")
        if self.fermion and np.any(occ > 1):
            raise InputError("fermionic occupations must be 0 or 1")
        table = _count_table(self.modes, self.particles, self.fermion)
        idx = _kernels.rank_states(occ, table, self.fermion)
        return idx if len(idx) > 1 else int(idx[0])

    def __repr__(self):
        return f"SectorBasis(d={self.modes}, n={self.particles}, {self.statistics}, dim={self.dim})"


@lru_cache(maxsize=256)
def sector_basis(d, n, statistics) -> SectorBasis:
    """Enumerate the ``n``-particle sector over ``d`` modes."""
    if statistics not in STATISTICS:
        raise InputError(f"statistics must be 'boson' or 'fermion', got {statistics!r}")
    d, n = int(d), int(n)
    if d < 1 or n < 0:
        raise InputError("need d >= 1 and n >= 0")
    if statistics == "fermion" and n > d:
        raise EmptySectorError(f"no fermionic states with {n} particles in {d} modes")
    gen = (itertools.combinations(range(d), n) if statistics == "fermion"
           else itertools.combinations_with_replacement(range(d), n))
    combos = list(gen)
    lists = np.array(combos, dtype=np.int64).reshape(len(combos), n)
    states = np.zeros((lists.shape[0], d), dtype=np.int64)
    for col in range(n):
        np.add.at(states, (np.arange(lists.shape[0]), lists[:, col]), 1)
    states.flags.writeable = False
    return SectorBasis(d, n, statistics, states)


def _check_dim(basis, max_dim):
    if basis.dim > max_dim:
        raise CapacityError(
            f"sector d={basis.modes} n={basis.particles} ({basis.statistics}) has dimension "
            f"{basis.dim} > budget {max_dim}")


def apply_strings(basis, target_n, modes, dag, coefs):
    """Ladder-operator strings on every state of ``basis``; COO output."""
    table = _count_table(basis.modes, target_n, basis.fermion)
    modes = np.asarray(modes, dtype=np.int64).reshape(len(coefs), len(dag))
    return _kernels.ladder_coo(basis.states, modes, np.asarray(dag, dtype=np.uint8),
                               np.asarray(coefs, dtype=np.complex128), table, basis.fermion)


# ---------------------------------------------------------------- ladder ops

def creation_op(f, basis: SectorBasis):
    """Matrix of ``a*(f)`` from ``basis`` (n particles) to the n+1 sector."""
    f = np.asarray(f, dtype=np.complex128).ravel()
    if f.shape[0] != basis.modes:
        raise InputError(f"vector has {f.shape[0]} components for {basis.modes} modes")
    if not np.all(np.isfinite(f)):
        raise InputError("non-finite coefficients")
    target = sector_basis(basis.modes, basis.particles + 1, basis.statistics)
    out = np.zeros((target.dim, basis.dim), dtype=np.complex128)
    p = np.nonzero(f)[0]
    if p.size:
        _, src, tgt, val = apply_strings(basis, basis.particles + 1, p[:, None], [1], f[p])
        np.add.at(out, (tgt, src), val)
    return out


def annihilation_op(f, basis: SectorBasis):
    """Matrix of ``a(f)`` from ``basis`` (n >= 1 particles) to the n-1 sector."""
    if basis.particles < 1:
        raise InputError("cannot annihilate in the vacuum sector")
    lower = sector_basis(basis.modes, basis.particles - 1, basis.statistics)
    return creation_op(f, lower).conj().T


def symmetrized_tensor(fs, d, statistics):
    """``a*(f1) ... a*(fn)|vac>`` as a vector in the ``n``-particle sector."""
    fs = [np.asarray(f, dtype=np.complex128).ravel() for f in fs]
    vec = np.ones(1, dtype=np.complex128)
    for k, f in enumerate(reversed(fs)):
        vec = creation_op(f, sector_basis(d, k, statistics)) @ vec
    return vec


# ---------------------------------------------------------------- operators

@dataclass(frozen=True, eq=False)
class ManyBodyOperator:
    sector: SectorBasis
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.shape != (self.sector.dim, self.sector.dim):
            raise InputError(f"matrix shape {m.shape} does not match {self.sector}")
        if _hermitian_defect(m) > HERMITIAN_RTOL:
            raise InputError("many-body operator is not Hermitian")
        m = np.array(m, copy=True)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Block-diagonal operator ``H_0 (+) H_1 (+) ... (+) H_N``, ``H_0 = 0``."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(self.blocks)
        for n, b in enumerate(blocks):
            if b.sector.particles != n:
                raise InputError(f"block {n} lives on the {b.sector.particles}-particle sector")
        if np.any(blocks[0].matrix != 0):
            raise InputError("the vacuum block must vanish")
        object.__setattr__(self, "blocks", blocks)

    @property
    def N(self):
        return len(self.blocks) - 1

    @property
    def modes(self):
        return self.blocks[0].sector.modes

    @property
    def statistics(self):
        return self.blocks[0].sector.statistics

    def __getitem__(self, n):
        return self.blocks[n]


def sector_hamiltonian(h: OneBodyOperator, w: TwoBodyOperator, n, statistics,
                       max_dim=MAX_SECTOR_DIM) -> ManyBodyOperator:
    """``sum h_pq a*_p a_q + 1/2 sum w_(pq),(rs) a*_p a*_q a_s a_r`` on the ``n`` sector."""
    d = h.dim
    if w is not None and w.dim != d:
        raise InputError("h and w act on different one-particle spaces")
    basis = sector_basis(d, n, statistics)
    _check_dim(basis, max_dim)
    D = basis.dim
    real = np.isrealobj(h.matrix) and (w is None or np.isrealobj(w.matrix))
    H = np.zeros((D, D), dtype=float if real else np.complex128)

    def scatter(src, tgt, val):
        np.add.at(H, (tgt, src), val.real if real else val)

    if n >= 1:
        hm = h.matrix
        p, q = np.nonzero(hm)
        if p.size > 4 * d:
            Hh = _sandwich(basis, hm, 1)
            H += Hh.real if real else Hh
        elif p.size:
            _, src, tgt, val = apply_strings(basis, n, np.stack([p, q], axis=1), [1, 0], hm[p, q])
            scatter(src, tgt, val)
    if n >= 2 and w is not None:
        if w.is_diagonal:
            W = w.pair_potential()
            occ = basis.states.astype(float)
            energy = 0.5 * (np.einsum("ip,pq,iq->i", occ, W, occ) - occ @ np.diag(W))
            H[np.diag_indices(D)] += energy
        else:
            Hw = 0.5 * _sandwich(basis, w.matrix, 2)
            H += Hw.real if real else Hw
    return ManyBodyOperator(basis, H)


def _sandwich(basis, X, order):
    """``sum_k A_k^* X A_k`` with ``A_k[(r_1..r_m), j] = <k| a_(r_m) .. a_(r_1) |j>``.

    Annihilating first costs ``d^m dim`` string applications rather than
    ``nnz(X) dim``, which matters for dense one- and two-body matrices.
    """
    d, n = basis.modes, basis.particles
    idx = np.indices((d,) * order).reshape(order, -1)[::-1].T
    tuples, src, tgt, val = apply_strings(basis, n - order, idx, [0] * order,
                                          np.ones(len(idx)))
    lower = sector_dimension(d, n - order, basis.statistics)
    m = d ** order
    A = sp.csr_matrix((val, (tgt * m + tuples, src)), shape=(lower * m, basis.dim))
    XI = sp.kron(sp.identity(lower, format="csr"), sp.csr_matrix(X), format="csr")
    return (A.conj().T @ (XI @ A)).toarray()


def second_quantize(h: OneBodyOperator, w: TwoBodyOperator, N, statistics,
                    max_dim=MAX_SECTOR_DIM) -> FockOperator:
    """Fock-space Hamiltonian ``0 (+) h (+) H_2 (+) ... (+) H_N``."""
    if N < 0:
        raise InputError("N must be non-negative")
    d = h.dim
    for n in range(N + 1):
        _check_dim(sector_basis(d, n, statistics), max_dim)
    blocks = [sector_hamiltonian(h, w, n, statistics, max_dim) for n in range(N + 1)]
    return FockOperator(tuple(blocks))


def free_hamiltonian(h: OneBodyOperator, N, statistics, max_dim=MAX_SECTOR_DIM) -> FockOperator:
    """``H^0 = 0 (+) h (+) ... (+) sum_j h_j``."""
    return second_quantize(h, None, N, statistics, max_dim)


# ---------------------------------------------------------------- tensor route

def _check_tensor(d, n, max_tensor):
    if d ** n > max_tensor:
        raise CapacityError(f"tensor power d^n = {d}^{n} = {d ** n} exceeds budget {max_tensor}")


def _digits(d, n):
    """All multi-indices of ``(C^d)^(x)n`` in row-major order, shape ``(d^n, n)``."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(np.unravel_index(np.arange(d ** n), (d,) * n), dtype=np.int64).T


@lru_cache(maxsize=64)
def embedding(d, n, statistics, max_tensor=MAX_TENSOR_DIM):
    """Isometry from the occupation basis into the plain tensor power.

    Column ``j`` is the normalized symmetric/antisymmetric tensor of
    state ``j``. Returned as a CSR matrix of shape ``(d^n, D)``.
    """
    _check_tensor(d, n, max_tensor)
    basis = sector_basis(d, n, statistics)
    lookup = {tuple(row): j for j, row in enumerate(basis.states.tolist())}
    digits = _digits(d, n)
    rows, cols, vals = [], [], []
    nfact = factorial(n)
    for i, y in enumerate(digits.tolist()):
        occ = [0] * d
        for x in y:
            occ[x] += 1
        if statistics == "fermion":
            if max(occ, default=0) > 1:
                continue
            inversions = sum(1 for a in range(n) for b in range(a + 1, n) if y[a] > y[b])
            coef = (-1) ** inversions / np.sqrt(nfact)
        else:
            coef = np.sqrt(np.prod([factorial(o) for o in occ]) / nfact)
        rows.append(i)
        cols.append(lookup[tuple(occ)])
        vals.append(coef)
    E = sp.csr_matrix((vals, (rows, cols)), shape=(d ** n, basis.dim))
    E.data.flags.writeable = False
    return E


def place_two_body(w: TwoBodyOperator, j, l, n):
    """``w_{jl}``: ``w`` acting on tensor factors ``j < l`` of ``(C^d)^(x)n``."""
    d = w.dim
    coo = w.tocoo()
    a, b = np.divmod(coo.row, d)
    c, e = np.divmod(coo.col, d)
    strides = d ** np.arange(n - 1, -1, -1)
    others = [f for f in range(n) if f not in (j, l)]
    if others:
        od = _digits(d, len(others))
        base = od @ strides[others]
    else:
        base = np.zeros(1, dtype=np.int64)
    rows = (base[:, None] + a * strides[j] + b * strides[l]).ravel()
    cols = (base[:, None] + c * strides[j] + e * strides[l]).ravel()
    vals = np.broadcast_to(coo.data, (base.size, coo.data.size)).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(d ** n, d ** n))


def place_one_body(h, j, n):
    d = h.shape[0]
    return sp.kron(sp.kron(sp.identity(d ** j), sp.csr_matrix(h)), sp.identity(d ** (n - j - 1)),
                   format="csr")


def tensor_hamiltonian(h: OneBodyOperator, w: TwoBodyOperator, n, max_tensor=MAX_TENSOR_DIM):
    """``sum_j h_j + sum_{j<l} w_jl`` on the full tensor power (sparse)."""
    d = h.dim
    _check_tensor(d, n, max_tensor)
    H = sp.csr_matrix((d ** n, d ** n), dtype=np.complex128)
    for j in range(n):
        H = H + place_one_body(h.matrix, j, n)
    if w is not None:
        for j in range(n):
            for l in range(j + 1, n):
                H = H + place_two_body(w, j, l, n)
    return H


def cross_interaction(w: TwoBodyOperator, n, N):
    """``W_n = sum_{j <= n < l} w_jl``: first ``n`` particles against the other ``N - n``."""
    d = w.dim
    W = sp.csr_matrix((d ** N, d ** N), dtype=np.complex128)
    for j in range(n):
        for l in range(n, N):
            W = W + place_two_body(w, j, l, N)
    return W


def lift_first_quantized(h: OneBodyOperator, w: TwoBodyOperator, n, statistics,
                         max_tensor=MAX_TENSOR_DIM) -> ManyBodyOperator:
    """Compress the tensor-power Hamiltonian onto the sector (oracle route)."""
    d = h.dim
    _check_tensor(d, n, max_tensor)
    basis = sector_basis(d, n, statistics)
    if n == 0:
        return ManyBodyOperator(basis, np.zeros((1, 1)))
    E = embedding(d, n, statistics, max_tensor)
    H = tensor_hamiltonian(h, w, n, max_tensor)
    Hs = (E.T @ (H @ E)).toarray()
    return ManyBodyOperator(basis, 0.5 * (Hs + Hs.conj().T))


def split_interaction_check(H_N, H_n, H_rest, W_n):
    """``||H_N - H_n (x) 1 - 1 (x) H_rest - W_n||_F`` on the tensor power."""
    dn = H_n.shape[0]
    dr = H_rest.shape[0]
    diff = (sp.csr_matrix(H_N) - sp.kron(H_n, sp.identity(dr)) - sp.kron(sp.identity(dn), H_rest)
            - sp.csr_matrix(W_n))
    return float(sparse_norm(diff)) if sp.issparse(diff) else float(np.linalg.norm(diff))


def split_interaction_residual(h: OneBodyOperator, w: TwoBodyOperator, N, n,
                               max_tensor=MAX_TENSOR_DIM):
    """Build all pieces on the tensor power and return the split residual."""
    _check_tensor(h.dim, N, max_tensor)
    if not 0 <= n <= N:
        raise InputError("need 0 <= n <= N")
    d = h.dim
    H_N = tensor_hamiltonian(h, w, N, max_tensor)
    H_n = tensor_hamiltonian(h, w, n, max_tensor) if n else sp.csr_matrix((1, 1))
    H_r = tensor_hamiltonian(h, w, N - n, max_tensor) if N - n else sp.csr_matrix((1, 1))
    W = cross_interaction(w, n, N) if w is not None else sp.csr_matrix((d ** N, d ** N))
    return split_interaction_check(H_N, H_n, H_r, W)
