"""Spectral evolution, ergodic means, dephasing and the one-body RAGE statistic.

Every time average is evaluated in closed form in the eigenbasis: entry
``(j, k)`` of the windowed mean is ``G_jk * kappa((l_j - l_k) T)`` with
``kappa(x) = int chi(u) exp(-i x u) du``. Quadrature versions exist only
as cross-checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import InputError, NumericError
from .fock import FockOperator, ManyBodyOperator
from .reduced import DensityMatrix, FockDensity

DEFAULT_CLUSTER_RTOL = 1e-9
RESIDUAL_RTOL = 1e-9


# ------------------------------------------------------------------ spectra

@dataclass(frozen=True, eq=False)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clusters: tuple
    designation: tuple
    cluster_tol: float

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def cluster_labels(self):
        """Cluster number of every eigenvalue index."""
        lab = np.empty(self.dim, dtype=np.int64)
        for c, idx in enumerate(self.clusters):
            lab[idx] = c
        return lab

    def with_designation(self, designation):
        designation = tuple(designation)
        if len(designation) != len(self.clusters):
            raise InputError("one designation per cluster is required")
        bad = set(designation) - {"point", "quasi-continuum"}
        if bad:
            raise InputError(f"unknown designation {bad}")
        return SpectralData(self.eigenvalues, self.eigenvectors, self.clusters, designation,
                            self.cluster_tol)


def _matrix_of(H):
    if isinstance(H, ManyBodyOperator):
        return H.matrix
    return np.asarray(H)


def cluster_indices(eigenvalues, tol):
    """Group sorted eigenvalues so that each group spans at most ``tol``."""
    clusters, start = [], 0
    for i in range(1, len(eigenvalues) + 1):
        if i == len(eigenvalues) or eigenvalues[i] - eigenvalues[start] > tol:
            clusters.append(np.arange(start, i))
            start = i
    return tuple(clusters)


def eigendecompose(H, cluster_tol=None) -> SpectralData:
    """Dense Hermitian eigendecomposition with gap clustering.

    ``cluster_tol`` defaults to ``1e-9`` times the spectral range. All
    clusters start out designated ``"point"``.
    """
    m = _matrix_of(H)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError("Hamiltonian must be square")
    if np.iscomplexobj(m) and not np.any(m.imag):
        m = m.real
    try:
        lam, V = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}") from exc
    norm = float(np.max(np.abs(lam), initial=0.0))
    if m.shape[0] <= 2048:
        res = float(np.linalg.norm(m @ V - V * lam, 2)) if m.size else 0.0
        if res > RESIDUAL_RTOL * max(norm, 1e-300) and res > 1e-300:
            raise NumericError(f"eigendecomposition residual {res:.3e} too large")
    if cluster_tol is None:
        span = float(lam[-1] - lam[0]) if lam.size else 0.0
        cluster_tol = DEFAULT_CLUSTER_RTOL * max(span, 1.0)
    clusters = cluster_indices(lam, cluster_tol)
    return SpectralData(lam, V, clusters, ("point",) * len(clusters), float(cluster_tol))


def _spectral(H, cluster_tol=None):
    return H if isinstance(H, SpectralData) else eigendecompose(H, cluster_tol)


def fock_spectra(H: FockOperator, cluster_tol=None):
    return [eigendecompose(b, cluster_tol) for b in H.blocks]


def designate_quasi_continuum(S: SpectralData, band, sites, weight_threshold=0.5):
    """Mark clusters inside ``band`` with window weight below the threshold.

    The window weight of an eigenvector is its squared norm on ``sites``;
    a cluster qualifies when all its eigenvalues lie in the closed band and
    its mean window weight is below ``weight_threshold``.
    """
    lo, hi = band
    sites = np.asarray(list(sites), dtype=int)
    weights = np.sum(np.abs(S.eigenvectors[sites, :]) ** 2, axis=0)
    des = []
    for idx in S.clusters:
        lam = S.eigenvalues[idx]
        inside = np.all((lam >= lo) & (lam <= hi))
        des.append("quasi-continuum" if inside and weights[idx].mean() < weight_threshold
                   else "point")
    return S.with_designation(des)


# ------------------------------------------------------------------ windows

@dataclass(frozen=True)
class WindowFunction:
    """Nonnegative averaging profile ``chi`` with unit integral.

    ``box`` and ``triangle`` live on ``[0, 1]``; ``gaussian`` has
    parameters ``mu`` and ``sigma``.
    """

    kind: str = "box"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("box", "triangle", "gaussian"):
            raise InputError(f"unknown window {self.kind!r}")
        if self.kind == "gaussian":
            mu = float(self.params.get("mu", 0.5))
            sigma = float(self.params.get("sigma", 0.15))
            if not (np.isfinite(mu) and np.isfinite(sigma) and sigma > 0):
                raise InputError("gaussian window needs finite mu and sigma > 0")
            object.__setattr__(self, "params", {"mu": mu, "sigma": sigma})

    def kappa(self, x):
        """``int chi(u) exp(-i x u) du``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return np.exp(-0.5j * x) * np.sinc(x / (2 * np.pi))
        if self.kind == "triangle":
            return np.exp(-0.5j * x) * np.sinc(x / (4 * np.pi)) ** 2
        mu, sigma = self.params["mu"], self.params["sigma"]
        return np.exp(-1j * x * mu - 0.5 * (sigma * x) ** 2)

    def density(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "box":
            return np.where((u >= 0) & (u <= 1), 1.0, 0.0)
        if self.kind == "triangle":
            return np.where((u >= 0) & (u <= 1), 2.0 - 4.0 * np.abs(u - 0.5), 0.0)
        mu, sigma = self.params["mu"], self.params["sigma"]
        return np.exp(-0.5 * ((u - mu) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))

    def support(self):
        if self.kind == "gaussian":
            mu, sigma = self.params["mu"], self.params["sigma"]
            return mu - 10 * sigma, mu + 10 * sigma
        return 0.0, 1.0


BOX = WindowFunction("box")


# ------------------------------------------------------------------ matrix kernels

def to_eigenbasis(G, S: SpectralData):
    V = S.eigenvectors
    return V.conj().T @ np.asarray(G) @ V


def from_eigenbasis(Gh, S: SpectralData):
    V = S.eigenvectors
    return V @ Gh @ V.conj().T


def evolve_matrix(G, S: SpectralData, t):
    """``exp(-itH) G exp(itH)``."""
    ph = np.exp(-1j * S.eigenvalues * t)
    return from_eigenbasis(ph[:, None] * to_eigenbasis(G, S) * ph.conj()[None, :], S)


def mean_kernel(S: SpectralData, T, window: WindowFunction = BOX):
    lam = S.eigenvalues
    return window.kappa((lam[:, None] - lam[None, :]) * T)


def ergodic_mean_matrix(G, S: SpectralData, T, window: WindowFunction = BOX):
    if not T > 0:
        raise InputError("averaging time T must be positive")
    return from_eigenbasis(to_eigenbasis(G, S) * mean_kernel(S, T, window), S)


def dephase_matrix(G, S: SpectralData):
    lab = S.cluster_labels()
    mask = lab[:, None] == lab[None, :]
    return from_eigenbasis(to_eigenbasis(G, S) * mask, S)


def quadrature_mean_matrix(G, S: SpectralData, T, steps, window: WindowFunction = BOX):
    """Trapezoidal ``int chi(u) Gamma(uT) du`` on ``steps`` uniform intervals."""
    if not T > 0:
        raise InputError("averaging time T must be positive")
    if steps < 1:
        raise InputError("need at least one quadrature interval")
    a, b = window.support()
    u = np.linspace(a, b, steps + 1)
    wts = np.full(u.size, (b - a) / steps)
    wts[[0, -1]] *= 0.5
    wts = wts * window.density(u)
    Gh = to_eigenbasis(G, S)
    dl = S.eigenvalues[:, None] - S.eigenvalues[None, :]
    acc = np.zeros_like(Gh, dtype=complex)
    for ui, wi in zip(u, wts):
        if wi:
            acc += wi * np.exp(-1j * dl * ui * T)
    return from_eigenbasis(Gh * acc, S)


def ergodic_mean_compressed(G, S: SpectralData, T, support, window: WindowFunction = BOX,
                            chunk=512):
    """Rows and columns ``support`` of the windowed mean, without the full matrix.

    ``G`` is a density matrix or, for pure states, a state vector. Useful
    when only a window of a large sector is observed.
    """
    if not T > 0:
        raise InputError("averaging time T must be positive")
    V = S.eigenvectors
    lam = S.eigenvalues
    support = np.asarray(support, dtype=np.int64)
    VS = V[support]
    G = np.asarray(G)
    pure = G.ndim == 1
    if pure:
        c = V.conj().T @ G
    else:
        Gh = to_eigenbasis(G, S)
    real_v = not np.iscomplexobj(V)
    out = np.zeros((support.size, support.size), dtype=complex)
    for start in range(0, lam.size, chunk):
        J = slice(start, min(start + chunk, lam.size))
        K = window.kappa((lam[J, None] - lam[None, :]) * T)
        block = (c[J, None] * c.conj()[None, :] if pure else Gh[J]) * K
        if real_v:
            # BLAS needs contiguous real operands; strided .real views are slow
            VJ = np.ascontiguousarray(VS[:, J])
            Br = np.ascontiguousarray(block.real) @ VS.T
            Bi = np.ascontiguousarray(block.imag) @ VS.T
            out += VJ @ Br + 1j * (VJ @ Bi)
        else:
            out += VS[:, J] @ (block @ VS.conj().T)
    return out


def trace_norm(X):
    X = np.asarray(X)
    if X.size == 0:
        return 0.0
    herm = np.allclose(X, X.conj().T, rtol=0, atol=1e-14 * max(1.0, np.max(np.abs(X))))
    if herm:
        return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (X + X.conj().T)))))
    return float(np.sum(np.linalg.svd(X, compute_uv=False)))


# ------------------------------------------------------------------ typed front-ends

def _fock_spectra(H, state):
    if isinstance(H, FockOperator):
        spectra = fock_spectra(H)
    else:
        spectra = [_spectral(h) for h in H]
    if len(spectra) < state.N + 1:
        raise InputError("Hamiltonian has fewer sectors than the state")
    return spectra


def _check_dims(G, S):
    if G.shape != (S.dim, S.dim):
        raise InputError(f"state of shape {G.shape} does not match Hamiltonian of dimension {S.dim}")


def _map(state, H, fn):
    if isinstance(state, FockDensity):
        spectra = _fock_spectra(H, state)
        mats = []
        for blk, S in zip(state.blocks, spectra):
            _check_dims(blk.matrix, S)
            mats.append(fn(blk.matrix, S))
        return FockDensity.from_matrices(state.modes, state.statistics,
                                         [0.5 * (m + m.conj().T) for m in mats],
                                         normalized=False, check_psd=False)
    if isinstance(state, DensityMatrix):
        S = _spectral(H)
        _check_dims(state.matrix, S)
        m = fn(state.matrix, S)
        return DensityMatrix(state.sector, 0.5 * (m + m.conj().T), check_psd=False)
    G = np.asarray(state)
    S = _spectral(H)
    _check_dims(G, S)
    return fn(G, S)


def evolve(state, H, t):
    """``exp(-itH) Gamma exp(itH)``; blockwise for a ``FockDensity``.

    ``H`` may be a ``ManyBodyOperator``, a matrix, a ``SpectralData``, a
    ``FockOperator`` or a list of per-sector spectra.
    """
    return _map(state, H, lambda G, S: evolve_matrix(G, S, t))


def ergodic_mean(state, H, T, window: WindowFunction = BOX):
    """``int chi(u) Gamma(uT) du`` in closed spectral form."""
    if not T > 0:
        raise InputError("averaging time T must be positive")
    return _map(state, H, lambda G, S: ergodic_mean_matrix(G, S, T, window))


def ergodic_mean_quadrature(state, H, T, steps, window: WindowFunction = BOX):
    return _map(state, H, lambda G, S: quadrature_mean_matrix(G, S, T, steps, window))


def dephase(state, H):
    """``sum_c P_c Gamma P_c`` over eigenvalue clusters: the infinite-time mean."""
    return _map(state, H, dephase_matrix)


def _matrix(state):
    if isinstance(state, DensityMatrix):
        return state.matrix
    return np.asarray(state)


# ------------------------------------------------------------------ bounds and statistics

@dataclass(frozen=True)
class ShiftBound:
    lhs: float
    bound: float
    passed: bool


def conjugation_shift_bound(state, H, s, T, atol=1e-10) -> ShiftBound:
    """``||e^{-isH} M(T) e^{isH} - M(T)||_1`` against ``2|s| tr(Gamma) / T`` (box mean)."""
    if not T > 0:
        raise InputError("averaging time T must be positive")
    S = _spectral(H)
    G = _matrix(state)
    M = ergodic_mean_matrix(G, S, T)
    lhs = trace_norm(evolve_matrix(M, S, s) - M)
    bound = 2.0 * abs(s) * float(np.trace(G).real) / T
    return ShiftBound(lhs, bound, lhs <= bound + atol)


def dephasing_distance(state, H, T, window: WindowFunction = BOX):
    """``||M(T) - dephase(Gamma)||_1``."""
    S = _spectral(H)
    G = _matrix(state)
    return trace_norm(ergodic_mean_matrix(G, S, T, window) - dephase_matrix(G, S))


def dephasing_envelope(state, H, T, points=65, window: WindowFunction = BOX):
    """Mean of ``||M(T') - dephase(Gamma)||_1`` over ``T'`` in ``[T, 2T]``.

    The pointwise distance is ``||B - U_T B U_T^*||_1 / T`` with bounded
    ``B``, so it decays like ``1/T`` only up to oscillations; the mean over
    a dyadic block smooths them out.
    """
    S = _spectral(H)
    G = _matrix(state)
    D = dephase_matrix(G, S)
    Ts = np.linspace(T, 2 * T, points)
    return float(np.mean([trace_norm(ergodic_mean_matrix(G, S, t, window) - D) for t in Ts]))


def minimal_gap(S: SpectralData):
    lam = np.array([S.eigenvalues[idx].mean() for idx in S.clusters])
    return float(np.min(np.diff(lam))) if lam.size > 1 else np.inf


@dataclass(frozen=True)
class RageStatistic:
    value: float
    empty_selection: bool


def _selected(S: SpectralData, selection):
    if selection is None or selection == "quasi-continuum":
        cl = [c for c, des in enumerate(S.designation) if des == "quasi-continuum"]
    elif selection == "all":
        cl = list(range(len(S.clusters)))
    else:
        cl = [int(c) for c in selection]
        if any(c < 0 or c >= len(S.clusters) for c in cl):
            raise InputError("cluster selection out of range")
    if not cl:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([S.clusters[c] for c in cl])


def _rage_parts(x, K, S, selection):
    x = np.asarray(x, dtype=complex).ravel()
    K = np.asarray(K)
    if x.shape[0] != S.dim or K.shape != (S.dim, S.dim):
        raise InputError("vector, observable and Hamiltonian dimensions differ")
    idx = _selected(S, selection)
    V = S.eigenvectors[:, idx]
    y = V.conj().T @ x
    KV = K @ V
    A = KV.conj().T @ KV
    return idx, y, A


def classic_rage_statistic(x, K, S: SpectralData, selection="quasi-continuum", T=1.0,
                           window: WindowFunction = BOX) -> RageStatistic:
    """Time average of ``||K P_sel e^{-itH} x||^2`` over ``[0, T]``.

    ``selection`` is ``"quasi-continuum"`` (clusters designated so),
    ``"all"`` or an explicit list of cluster numbers.
    """
    if not T > 0:
        raise InputError("averaging time T must be positive")
    idx, y, A = _rage_parts(x, K, S, selection)
    if idx.size == 0:
        return RageStatistic(0.0, True)
    lam = S.eigenvalues[idx]
    kern = window.kappa((lam[None, :] - lam[:, None]) * T)
    val = np.einsum("j,jk,k,jk->", y.conj(), A, y, kern)
    return RageStatistic(float(val.real), False)


def classic_rage_quadrature(x, K, S: SpectralData, selection="quasi-continuum", T=1.0,
                            steps=4096) -> RageStatistic:
    """Trapezoidal reference for ``classic_rage_statistic`` (box window)."""
    idx, y, A = _rage_parts(x, K, S, selection)
    if idx.size == 0:
        return RageStatistic(0.0, True)
    KV = A  # Gram matrix of K V
    lam = S.eigenvalues[idx]
    ts = np.linspace(0.0, T, steps + 1)
    vals = np.empty(ts.size)
    for i, t in enumerate(ts):
        z = np.exp(-1j * lam * t) * y
        vals[i] = float(np.real(z.conj() @ KV @ z))
    return RageStatistic(float(trapezoid(vals, ts) / T), False)
