"""Truncated BBGKY hierarchy for the reduced matrices of a Fock-space state.

With ``R_n = C(n+1, n) Tr_{n+1}`` acting from sector ``n+1`` to ``n``,
the collision term satisfies

    (n+1) sum_j Tr_{n+1}[w_{j,n+1}, g] = R_n [H_{n+1}, g] - [H_n, R_n g],

because ``Tr_{n+1}[h_{n+1}, g] = 0``. The solver uses this sector form;
``route="tensor"`` evaluates the left side literally on the tensor power
and serves as a cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dynamics import SpectralData, eigendecompose, trace_norm
from .errors import AccuracyError, InputError
from .fock import FockOperator, embedding, place_one_body, place_two_body
from .onebody import OneBodyOperator, TwoBodyOperator
from .reduced import FockDensity, ReducedSet, reduce_matrix, reduction_map

DEFAULT_STEP = 1e-3
DEFAULT_TOL = 1e-8


def _blocks(H):
    if isinstance(H, FockOperator):
        return [b.matrix for b in H.blocks]
    return [np.asarray(getattr(b, "matrix", b)) for b in H]


def _comm(A, B):
    return A @ B - B @ A


# ------------------------------------------------------------------ right-hand side

def collision_sector(g_next, H_n, H_next, d, n, statistics):
    """``(n+1) sum_j Tr_{n+1}[w_{j,n+1}, g_next]`` via the sector identity."""
    return (reduce_matrix(_comm(H_next, g_next), d, n + 1, n, statistics)
            - _comm(H_n, reduce_matrix(g_next, d, n + 1, n, statistics)))


def _sqrt_factor(h: OneBodyOperator, power):
    lam, V = np.linalg.eigh(h.matrix)
    if lam[0] <= 0:
        raise InputError("the dressed form needs a positive h; shift it first")
    return (V * lam ** power) @ V.conj().T


def collision_tensor(g_next, h: OneBodyOperator, w: TwoBodyOperator, n, statistics,
                     dressed=False):
    """Collision term on the tensor power of ``n+1`` factors.

    With ``dressed=True`` the commutator is taken between
    ``h_{n+1}^{-1/2} w_{j,n+1} h_{n+1}^{-1/2}`` and
    ``h_{n+1}^{1/2} g h_{n+1}^{1/2}``, which has the same partial trace.
    """
    d = w.dim
    E1 = embedding(d, n + 1, statistics)
    X = np.asarray((E1 @ sp.csr_matrix(g_next) @ E1.T).todense())
    Wsum = sp.csr_matrix((d ** (n + 1),) * 2, dtype=complex)
    for j in range(n):
        Wsum = Wsum + place_two_body(w, j, n, n + 1)
    if dressed:
        hm = place_one_body(_sqrt_factor(h, -0.5), n, n + 1)
        hp = place_one_body(_sqrt_factor(h, 0.5), n, n + 1)
        Wsum = hm @ Wsum @ hm
        X = hp @ X
        X = (hp.T @ X.T).T
    C = Wsum @ X - (Wsum.T @ X.T).T
    C = np.asarray(C).reshape(d ** n, d, d ** n, d).trace(axis1=1, axis2=3)
    En = embedding(d, n, statistics).toarray()
    return (n + 1) * (En.T @ C @ En)


def hierarchy_rhs(R: ReducedSet, H, w: TwoBodyOperator = None, h: OneBodyOperator = None,
                  route="sector", dressed=False) -> ReducedSet:
    """``d gamma^(n)/dt = -i([H_n, gamma^(n)] + collision_n)``, ``gamma^(N+1) = 0``.

    ``route="tensor"`` needs ``w`` (and ``h`` when ``dressed``).
    """
    Hs = _blocks(H)
    if len(Hs) < R.N + 1:
        raise InputError("missing Hamiltonian blocks")
    if len(R.gammas) != R.N + 1:
        raise InputError("missing reduced matrices")
    out = []
    for n in range(R.N + 1):
        g = np.asarray(R.gammas[n])
        val = _comm(Hs[n], g)
        if n < R.N:
            if route == "sector":
                val = val + collision_sector(R.gammas[n + 1], Hs[n], Hs[n + 1], R.modes, n,
                                             R.statistics)
            elif route == "tensor":
                if w is None:
                    raise InputError("the tensor route needs the two-body operator")
                val = val + collision_tensor(R.gammas[n + 1], h, w, n, R.statistics, dressed)
            else:
                raise InputError(f"unknown route {route!r}")
        out.append(-1j * val)
    return ReducedSet(R.N, R.modes, R.statistics, tuple(out))


# ------------------------------------------------------------------ trajectories

@dataclass(frozen=True, eq=False)
class HierarchyTrajectory:
    """``levels[n][i]`` is ``gamma^(n)`` at ``times[i]``."""

    times: np.ndarray
    levels: tuple
    modes: int
    statistics: str
    method: str
    step: float
    error_estimate: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return len(self.levels) - 1

    def at(self, i) -> ReducedSet:
        return ReducedSet(self.N, self.modes, self.statistics,
                          tuple(lv[i] for lv in self.levels))

    def traces(self):
        return np.array([[np.trace(m).real for m in lv] for lv in self.levels])


def _vec_ops(Hs, d, N, statistics):
    """Sparse Liouvillians ``L_n`` and collision maps ``K_n`` on row-major vecs."""
    L, K = [], []
    for n in range(N + 1):
        H = sp.csr_matrix(Hs[n])
        I = sp.identity(H.shape[0], format="csr")
        L.append(-1j * (sp.kron(H, I) - sp.kron(I, H.T)))
    for n in range(N):
        Rn = reduction_map(d, n + 1, n, statistics)
        K.append(-1j * (Rn @ (1j * L[n + 1]) - (1j * L[n]) @ Rn))
    return L, K


class _ExactTop:
    """Exact ``gamma^(N)(t)`` by spectral conjugation."""

    def __init__(self, g0, S: SpectralData):
        self.S = S
        self.ghat = S.eigenvectors.conj().T @ g0 @ S.eigenvectors

    def __call__(self, t):
        ph = np.exp(-1j * self.S.eigenvalues * t)
        V = self.S.eigenvectors
        return V @ (ph[:, None] * self.ghat * ph.conj()[None, :]) @ V.conj().T


def _rk4(y0, A, forcing, times):
    """Classical RK4 for ``y' = A y + forcing(t)`` on the given uniform grid."""
    ys = np.empty((times.size, y0.size), dtype=complex)
    ys[0] = y0
    y = y0.copy()
    f_prev = forcing(times[0])
    for i in range(times.size - 1):
        t, dt = times[i], times[i + 1] - times[i]
        f_mid = forcing(t + 0.5 * dt)
        f_end = forcing(t + dt)
        k1 = A @ y + f_prev
        k2 = A @ (y + 0.5 * dt * k1) + f_mid
        k3 = A @ (y + 0.5 * dt * k2) + f_mid
        k4 = A @ (y + dt * k3) + f_end
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[i + 1] = y
        f_prev = f_end
    return ys


def _grid(T, step):
    if not (np.isfinite(T) and T > 0):
        raise InputError("final time must be positive and finite")
    if not (np.isfinite(step) and step > 0):
        raise InputError("step must be positive and finite")
    nsteps = max(1, int(round(T / step)))
    return np.linspace(0.0, T, nsteps + 1)


def _solve_rk4(R0: ReducedSet, Hs, top: _ExactTop, times):
    N, d, stat = R0.N, R0.modes, R0.statistics
    L, K = _vec_ops(Hs, d, N, stat)
    sizes = [np.asarray(g).size for g in R0.gammas[:N]]
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    # block upper-bidiagonal generator over levels 0..N-1
    rows = []
    for n in range(N):
        row = [None] * N
        row[n] = L[n]
        if n + 1 < N:
            row[n + 1] = K[n]
        rows.append(row)
    A = sp.bmat(rows, format="csr") if N else None
    y0 = np.concatenate([np.asarray(g, dtype=complex).ravel() for g in R0.gammas[:N]])
    KN = K[N - 1]
    lo = offs[N - 1]

    def forcing(t):
        f = np.zeros(y0.size, dtype=complex)
        f[lo:] = KN @ top(t).ravel()
        return f

    ys = _rk4(y0, A, forcing, times)
    levels = []
    for n in range(N):
        D = int(np.sqrt(sizes[n]))
        levels.append(ys[:, offs[n]:offs[n + 1]].reshape(times.size, D, D))
    return levels


def _top_levels(top, times):
    return np.array([top(t) for t in times])


def _cumulative_duhamel(C, S: SpectralData, times, corrected):
    """``int_0^t e^{-i(t-s)H} C(s) e^{i(t-s)H} ds`` at every grid time.

    Trapezoid in the interaction picture; with ``corrected`` the
    Euler-Maclaurin endpoint term (derivatives by second-order finite
    differences) raises the order to four.
    """
    V, lam = S.eigenvectors, S.eigenvalues
    dt = times[1] - times[0]
    Ch = np.einsum("ji,tjk,kl->til", V.conj(), C, V, optimize=True)
    ph = np.exp(1j * np.outer(times, lam))
    D = ph[:, :, None] * Ch * ph.conj()[:, None, :]
    acc = np.zeros_like(D)
    acc[1:] = np.cumsum(0.5 * dt * (D[1:] + D[:-1]), axis=0)
    if corrected and times.size >= 3:
        dD = np.gradient(D, dt, axis=0, edge_order=2)
        acc[1:] -= dt ** 2 / 12.0 * (dD[1:] - dD[0])
    out = ph.conj()[:, :, None] * acc * ph[:, None, :]
    return np.einsum("ij,tjk,lk->til", V, out, V.conj(), optimize=True)


def _conjugation_path(g0, S: SpectralData, times):
    V, lam = S.eigenvectors, S.eigenvalues
    gh = V.conj().T @ g0 @ V
    ph = np.exp(-1j * np.outer(times, lam))
    out = ph[:, :, None] * gh[None] * ph.conj()[:, None, :]
    return np.einsum("ij,tjk,lk->til", V, out, V.conj(), optimize=True)


def _collision_series(g_next, Hs, d, n, statistics):
    """Collision term at every time for a stack ``g_next[t]``."""
    Rn = reduction_map(d, n + 1, n, statistics)
    Hn, H1 = Hs[n], Hs[n + 1]
    comm = np.einsum("ij,tjk->tik", H1, g_next) - np.einsum("tij,jk->tik", g_next, H1)
    Dn = Hn.shape[0]
    nt = g_next.shape[0]
    a = (Rn @ comm.reshape(nt, -1).T).T.reshape(nt, Dn, Dn)
    r = (Rn @ g_next.reshape(nt, -1).T).T.reshape(nt, Dn, Dn)
    return a - (np.einsum("ij,tjk->tik", Hn, r) - np.einsum("tij,jk->tik", r, Hn))


def _solve_picard(R0: ReducedSet, Hs, spectra, times, top):
    N, d, stat = R0.N, R0.modes, R0.statistics
    levels = [np.zeros((times.size,) + np.asarray(g).shape, dtype=complex) for g in R0.gammas]
    levels[N] = _top_levels(top, times)
    # Picard sweeps; the triangular structure makes N sweeps exact
    for _ in range(N):
        new = list(levels)
        for n in range(N - 1, -1, -1):
            C = _collision_series(levels[n + 1], Hs, d, n, stat)
            new[n] = (_conjugation_path(np.asarray(R0.gammas[n]), spectra[n], times)
                      - 1j * _cumulative_duhamel(C, spectra[n], times, corrected=True))
        levels = new
    return levels[:N]


def hierarchy_solve(R0: ReducedSet, H, w: TwoBodyOperator = None, T=5.0, step=DEFAULT_STEP,
                    method="rk4", tol=DEFAULT_TOL, record_every=1) -> HierarchyTrajectory:
    """Integrate the hierarchy from ``R0`` up to time ``T``.

    Level ``N`` is conjugated exactly; lower levels use ``method``
    (``"rk4"`` or ``"picard"``). The error estimate compares the run with
    one at twice the step (Richardson, order 4); if it exceeds ``tol`` an
    ``AccuracyError`` carrying a suggested step is raised. ``w`` is not
    needed by the sector route and is accepted for interface symmetry.
    """
    Hs = _blocks(H)
    N = R0.N
    if len(Hs) < N + 1:
        raise InputError("missing Hamiltonian blocks")
    if method not in ("rk4", "picard"):
        raise InputError(f"unknown method {method!r}")
    times = _grid(T, step)
    dt = times[1] - times[0]
    spectra = [eigendecompose(Hs[n]) for n in range(N + 1)]
    top = _ExactTop(np.asarray(R0.gammas[N], dtype=complex), spectra[N])

    def run(ts):
        if N == 0:
            return []
        if method == "rk4":
            return _solve_rk4(R0, Hs, top, ts)
        return _solve_picard(R0, Hs, spectra, ts, top)

    lower = run(times)
    estimate = 0.0
    if N and times.size >= 3 and (times.size - 1) % 2 == 0:
        coarse = run(times[::2])
        for n in range(N):
            diff = max(trace_norm(a - b) for a, b in zip(lower[n][::2][1:], coarse[n][1:]))
            estimate = max(estimate, diff / 15.0)
        if estimate > tol:
            suggested = 0.9 * dt * (tol / estimate) ** 0.25
            raise AccuracyError(f"error estimate {estimate:.3e} exceeds tolerance {tol:.1e}; "
                                f"try step {suggested:.3e}", estimate, suggested)
    sel = slice(None, None, max(1, int(record_every)))
    ts = times[sel]
    levels = [lv[sel] for lv in lower] + [_top_levels(top, ts)]
    return HierarchyTrajectory(ts, tuple(levels), R0.modes, R0.statistics, method, dt, estimate)


def exact_trajectory(state: FockDensity, H: FockOperator, times) -> HierarchyTrajectory:
    """Reduced matrices of ``e^{-itH} Gamma e^{itH}`` on a time grid."""
    times = np.asarray(times, dtype=float)
    Hs = _blocks(H)
    d, stat, N = state.modes, state.statistics, state.N
    paths = [_conjugation_path(np.asarray(b.matrix, dtype=complex), eigendecompose(Hs[m]), times)
             for m, b in enumerate(state.blocks)]
    levels = []
    for n in range(N + 1):
        acc = paths[n].copy()
        for m in range(n + 1, N + 1):
            Rm = reduction_map(d, m, n, stat)
            Dn = acc.shape[1]
            acc += (Rm @ paths[m].reshape(times.size, -1).T).T.reshape(times.size, Dn, Dn)
        levels.append(acc)
    step = float(times[1] - times[0]) if times.size > 1 else 0.0
    return HierarchyTrajectory(times, tuple(levels), d, stat, "exact", step)


# ------------------------------------------------------------------ residuals

def hierarchy_residual(traj: HierarchyTrajectory, H, form="commutator", h=None, w=None):
    """Defect of the Duhamel form along a trajectory, per level and time.

    ``form="commutator"`` uses the sector collision term;
    ``form="dressed"`` evaluates the ``h^{-1/2}``-dressed commutator on the
    tensor power (needs ``h`` and ``w``). The time integral is the plain
    trapezoid on the trajectory grid, so the defect is second order in
    the grid step. Returns an array ``res[n, i]`` of trace norms.
    """
    Hs = _blocks(H)
    times = traj.times
    if times.size < 2 or not np.allclose(np.diff(times), times[1] - times[0]):
        raise InputError("residual needs a uniform time grid")
    N, d, stat = traj.N, traj.modes, traj.statistics
    res = np.zeros((N + 1, times.size))
    for n in range(N + 1):
        S = eigendecompose(Hs[n])
        pred = _conjugation_path(traj.levels[n][0], S, times)
        if n < N:
            if form == "commutator":
                C = _collision_series(traj.levels[n + 1], Hs, d, n, stat)
            elif form == "dressed":
                if h is None or w is None:
                    raise InputError("the dressed form needs h and w")
                C = np.array([collision_tensor(g, h, w, n, stat, dressed=True)
                              for g in traj.levels[n + 1]])
            else:
                raise InputError(f"unknown form {form!r}")
            pred = pred - 1j * _cumulative_duhamel(C, S, times, corrected=False)
        res[n] = [trace_norm(a - b) for a, b in zip(traj.levels[n], pred)]
    return res


def max_trace_distance(a: HierarchyTrajectory, b: HierarchyTrajectory):
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times):
        raise InputError("trajectories use different time grids")
    return max(trace_norm(x - y) for la, lb in zip(a.levels, b.levels) for x, y in zip(la, lb))
