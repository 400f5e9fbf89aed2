"""One- and two-body operators for open 1D lattices.

Pair-space convention: a two-body matrix acts on ``C^d (x) C^d`` with the
ordered pair ``(x1, x2)`` at row ``x1 * d + x2`` (row-major). The
``fock`` module relies on this ordering.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InputError, NumericError

HERMITIAN_RTOL = 1e-12


def _freeze(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def _hermitian_defect(m):
    if sp.issparse(m):
        if m.nnz == 0:
            return 0.0
        diff = abs(m - m.conj().T)
        return float(diff.max()) / max(1.0, float(abs(m).max()))
    if not m.size:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(m))))
    return float(np.max(np.abs(m - m.conj().T))) / scale


def swap_permutation(d):
    """Index map of the factor swap: ``(Swap x)[i] = x[perm[i]]`` on ``C^d (x) C^d``."""
    x1, x2 = np.divmod(np.arange(d * d), d)
    return x2 * d + x1


@dataclass(frozen=True)
class OneBodyOperator:
    matrix: np.ndarray
    shift: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise InputError(f"one-body matrix must be square and non-empty, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InputError("one-body matrix has non-finite entries")
        if _hermitian_defect(m) > HERMITIAN_RTOL:
            raise InputError("one-body matrix is not Hermitian")
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def dim(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class TwoBodyOperator:
    """Two-body interaction on the ordered-pair space of ``dim`` modes.

    ``matrix`` may be a dense array or a scipy sparse matrix; lattice
    interactions are stored sparse because they are diagonal.
    """

    matrix: object
    dim: int
    exchange_symmetric: bool = field(init=False, default=True)

    def __post_init__(self):
        m = self.matrix
        d = int(self.dim)
        if sp.issparse(m):
            m = sp.csr_matrix(m)
        else:
            m = np.asarray(m)
        if m.shape != (d * d, d * d):
            raise InputError(f"two-body matrix must be {d * d}x{d * d}, got {m.shape}")
        data = m.data if sp.issparse(m) else m
        if not np.all(np.isfinite(data)):
            raise InputError("two-body matrix has non-finite entries")
        if _hermitian_defect(m) > HERMITIAN_RTOL:
            raise InputError("two-body matrix is not Hermitian")
        perm = swap_permutation(d)
        swapped = m[perm][:, perm]
        if sp.issparse(m):
            defect = float(abs(swapped - m).max()) if m.nnz else 0.0
            scale = max(1.0, float(abs(m).max())) if m.nnz else 1.0
        else:
            defect = float(np.max(np.abs(swapped - m), initial=0.0))
            scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
        if defect / scale > HERMITIAN_RTOL:
            raise InputError("two-body matrix is not symmetric under exchange of particles")
        if sp.issparse(m):
            m.sort_indices()
            m.data.flags.writeable = False
        else:
            m = _freeze(m)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "exchange_symmetric", True)

    @classmethod
    def zero(cls, d):
        return cls(sp.csr_matrix((d * d, d * d)), d)

    def toarray(self):
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.array(self.matrix)

    def tocoo(self):
        return sp.coo_matrix(self.matrix)

    @property
    def is_diagonal(self):
        coo = self.tocoo()
        return bool(np.all((coo.row == coo.col) | (coo.data == 0)))

    def pair_potential(self):
        """``W[p, q] = <pq|w|pq>``; the whole interaction when ``is_diagonal``."""
        d = self.dim
        return np.real(self.matrix.diagonal()).reshape(d, d)


@dataclass(frozen=True)
class LatticeSpec:
    length: int
    hopping: float = 1.0
    potential: tuple = None
    boundary: str = "open"

    def __post_init__(self):
        if int(self.length) != self.length or self.length < 1:
            raise InputError("lattice length must be a positive integer")
        pot = self.potential
        if pot is None:
            pot = (0.0,) * int(self.length)
        pot = tuple(float(v) for v in pot)
        if len(pot) != self.length:
            raise InputError(f"potential has {len(pot)} entries for a lattice of {self.length} sites")
        if self.boundary != "open":
            raise InputError("only open boundary conditions are implemented")
        if not np.isfinite(self.hopping):
            raise InputError("hopping must be finite")
        object.__setattr__(self, "potential", pot)

    @classmethod
    def with_wells(cls, length, hopping=1.0, wells=()):
        """Lattice whose potential is zero except at the given ``(site, value)`` pairs."""
        pot = [0.0] * length
        for site, value in wells:
            pot[int(site)] += float(value)
        return cls(length, hopping, tuple(pot))


def build_lattice_one_body(spec: LatticeSpec) -> OneBodyOperator:
    """Discrete Laplacian plus potential: diagonal ``2|t| + V(x)``, off-diagonal ``-t``."""
    if spec.length < 2:
        raise InputError("lattice needs at least two sites")
    pot = np.asarray(spec.potential, dtype=float)
    if not np.all(np.isfinite(pot)):
        raise InputError("potential has non-finite entries")
    t = float(spec.hopping)
    m = np.diag(2.0 * abs(t) + pot)
    off = np.full(spec.length - 1, -t)
    m += np.diag(off, 1) + np.diag(off, -1)
    return OneBodyOperator(m)


def shift_spectrum(h: OneBodyOperator, margin: float = 0.1) -> OneBodyOperator:
    """Add a multiple of the identity so the lowest eigenvalue is ``1 + margin``.

    The applied constant is accumulated in ``shift``.
    """
    if not margin > 0:
        raise InputError("margin must be positive")
    try:
        lowest = float(np.linalg.eigvalsh(h.matrix)[0])
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}") from exc
    e = 1.0 + margin - lowest
    m = h.matrix + e * np.eye(h.dim)
    return OneBodyOperator(m, shift=h.shift + e)


def build_pair_interaction(spec: LatticeSpec, profile: dict) -> TwoBodyOperator:
    """Density-density interaction ``w(x1 - x2)`` on the lattice.

    ``profile`` is ``{"kind": "contact", "g": g}``,
    ``{"kind": "exponential", "g": g, "a": a}`` or ``{"kind": "none"}``.
    """
    d = int(spec.length)
    kind = profile.get("kind", "none")
    x = np.arange(d)
    r = np.abs(x[:, None] - x[None, :]).astype(float)
    if kind == "none":
        vals = np.zeros_like(r)
    elif kind == "contact":
        g = float(profile["g"])
        if not np.isfinite(g):
            raise InputError("interaction strength must be finite")
        vals = np.where(r == 0, g, 0.0)
    elif kind == "exponential":
        g = float(profile["g"])
        a = float(profile["a"])
        if not (np.isfinite(g) and np.isfinite(a)):
            raise InputError("interaction parameters must be finite")
        if a <= 0:
            raise InputError("exponential range a must be positive")
        vals = g * np.exp(-r / a)
    else:
        raise InputError(f"unknown interaction profile {kind!r}")
    return TwoBodyOperator(sp.diags(vals.ravel(), format="csr"), d)


@dataclass(frozen=True)
class HypW2Diagnostic:
    singular_values: list  # one descending array per window
    tail_mass: dict  # rank r -> list of sum of s_i^2 beyond r, per window


def hyp_w2_diagnostic(h: OneBodyOperator, w: TwoBodyOperator, windows, ranks=()):
    """Singular values of ``(K1 + K2) B`` with ``B = (h1+h2)^(-1/2) w (h1+h2)^(-1/2)``.

    ``windows`` is a list of one-body matrices ``K`` (typically site
    projectors). ``tail_mass[r]`` is the squared Hilbert-Schmidt mass of
    the singular values beyond index ``r``.
    """
    d = h.dim
    if w.dim != d:
        raise InputError("h and w act on different one-particle spaces")
    lam, v = np.linalg.eigh(h.matrix)
    if lam[0] <= 1.0:
        raise InputError("h must be shifted so that h > 1")
    eye = np.eye(d)
    # h1 + h2 is diagonal in the product eigenbasis
    s = (lam[:, None] + lam[None, :]).ravel()
    vv = np.kron(v, v)
    inv_sqrt = (vv * s ** -0.5) @ vv.conj().T
    b = inv_sqrt @ w.toarray() @ inv_sqrt
    svals, tails = [], {int(r): [] for r in ranks}
    for k in windows:
        k = np.asarray(k)
        kk = np.kron(k, eye) + np.kron(eye, k)
        sv = np.linalg.svd(kk @ b, compute_uv=False)
        sv = np.sort(np.abs(sv))[::-1]
        svals.append(sv)
        for r in tails:
            tails[r].append(float(np.sum(sv[r:] ** 2)))
    return HypW2Diagnostic(svals, tails)


def window_projector(d, sites):
    """Diagonal projector onto the given lattice sites."""
    k = np.zeros((d, d))
    sites = np.asarray(list(sites), dtype=int)
    k[sites, sites] = 1.0
    return k
