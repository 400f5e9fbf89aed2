import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_hermitian, random_state_vector
from fockrage.dynamics import (BOX, WindowFunction, classic_rage_quadrature,
                               classic_rage_statistic, conjugation_shift_bound, dephase,
                               dephasing_distance, designate_quasi_continuum, eigendecompose,
                               ergodic_mean, ergodic_mean_quadrature, evolve, minimal_gap,
                               trace_norm)
from fockrage.errors import InputError
from fockrage.onebody import LatticeSpec, build_lattice_one_body, shift_spectrum
from fockrage.reduced import random_density

TWO_LEVEL_H = np.diag([0.0, 1.0])
TWO_LEVEL_G = np.full((2, 2), 0.5)


def test_eigendecompose_diagonal():
    S = eigendecompose(np.diag([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(S.eigenvalues, [1, 2, 3])
    np.testing.assert_allclose(np.abs(S.eigenvectors), np.eye(3))
    assert [list(c) for c in S.clusters] == [[0], [1], [2]]


def test_eigendecompose_degenerate():
    S = eigendecompose(np.diag([1.0, 1.0, 2.0]), cluster_tol=1e-9)
    assert [list(c) for c in S.clusters] == [[0, 1], [2]]


def test_free_lattice_spectrum():
    h = shift_spectrum(build_lattice_one_body(LatticeSpec(64)))
    S = eigendecompose(h.matrix)
    k = np.arange(1, 65)
    np.testing.assert_allclose(S.eigenvalues, np.sort(2 - 2 * np.cos(k * np.pi / 65) + h.shift),
                               atol=1e-12)


def test_spectral_residual_and_clusters(rng):
    H = random_hermitian(20, rng)
    S = eigendecompose(H)
    V, lam = S.eigenvectors, S.eigenvalues
    assert np.linalg.norm(H @ V - V * lam) <= 1e-9 * np.linalg.norm(H, 2)
    assert sorted(np.concatenate(S.clusters).tolist()) == list(range(20))
    for c in S.clusters:
        assert np.ptp(lam[c]) <= S.cluster_tol


def test_evolve_zero_time_and_commuting(rng):
    H = random_hermitian(6, rng)
    G = random_density(6, rng)
    np.testing.assert_allclose(evolve(G, H, 0.0), G, atol=1e-13)
    C = H @ H  # commutes with H
    np.testing.assert_allclose(evolve(C, H, 3.3), C, atol=1e-11)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.floats(-20, 20), st.floats(-20, 20), st.integers(0, 2 ** 31 - 1))
def test_group_law(D, s, t, seed):
    rng = np.random.default_rng(seed)
    H = random_hermitian(D, rng)
    G = random_density(D, rng)
    np.testing.assert_allclose(evolve(evolve(G, H, s), H, t), evolve(G, H, s + t), atol=1e-11)


def test_mean_of_commuting_state(rng):
    H = random_hermitian(5, rng)
    G = dephase(random_density(5, rng), H)
    for T in (0.1, 3.0, 100.0):
        np.testing.assert_allclose(ergodic_mean(G, H, T), G, atol=1e-12)


def test_two_level_mean():
    M = ergodic_mean(TWO_LEVEL_G, TWO_LEVEL_H, 2 * np.pi)
    np.testing.assert_allclose(M, np.diag([0.5, 0.5]), atol=1e-15)
    np.testing.assert_allclose(dephase(TWO_LEVEL_G, TWO_LEVEL_H), np.diag([0.5, 0.5]), atol=1e-15)


def test_mean_rejects_nonpositive_time():
    with pytest.raises(InputError):
        ergodic_mean(TWO_LEVEL_G, TWO_LEVEL_H, 0.0)


@pytest.mark.parametrize("window", [BOX, WindowFunction("triangle"),
                                    WindowFunction("gaussian", {"mu": 0.5, "sigma": 0.1})])
def test_window_normalized_and_kappa(window):
    lo, hi = window.support()
    u = np.linspace(lo, hi, 200001)
    dens = window.density(u)
    assert np.all(dens >= 0)
    assert np.trapezoid(dens, u) == pytest.approx(1.0, abs=1e-6)
    for x in (0.0, 1.3, 7.0):
        ref = np.trapezoid(dens * np.exp(-1j * x * u), u)
        assert window.kappa(x) == pytest.approx(ref, abs=1e-6)


@pytest.mark.parametrize("window", [BOX, WindowFunction("triangle")])
def test_quadrature_converges_second_order(window, rng):
    H = random_hermitian(8, rng)
    G = random_density(8, rng)
    M = ergodic_mean(G, H, 3.0, window)
    e1 = trace_norm(ergodic_mean_quadrature(G, H, 3.0, 200, window) - M)
    e2 = trace_norm(ergodic_mean_quadrature(G, H, 3.0, 400, window) - M)
    assert 3.5 <= e1 / e2 <= 4.5


def test_mean_is_state(rng):
    H = random_hermitian(10, rng)
    G = random_density(10, rng)
    M = ergodic_mean(G, H, 7.0)
    assert np.trace(M).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(M)[0] >= -1e-12
    assert np.trace(H @ M).real == pytest.approx(np.trace(H @ G).real, abs=1e-10)


def test_dephase_idempotent_and_commutes(rng):
    H = random_hermitian(9, rng)
    G = random_density(9, rng)
    P = dephase(G, H)
    np.testing.assert_allclose(dephase(P, H), P, atol=1e-12)
    assert np.linalg.norm(H @ P - P @ H) <= 1e-10


def test_eigenprojector_dephases_to_itself(rng):
    H = random_hermitian(6, rng)
    v = np.linalg.eigh(H)[1][:, 2]
    P = np.outer(v, v.conj())
    np.testing.assert_allclose(dephase(P, H), P, atol=1e-12)


def test_dephasing_distance_decays(rng):
    H = random_hermitian(20, rng)
    G = random_density(20, rng)
    S = eigendecompose(H)
    g = minimal_gap(S)
    ds = [dephasing_distance(G, H, T / g) for T in (200.0, 400.0, 800.0)]
    assert ds[0] > ds[1] > ds[2]


def test_shift_bound_examples(rng):
    H = random_hermitian(16, rng)
    G = random_density(16, rng)
    assert conjugation_shift_bound(G, H, 0.0, 5.0).lhs == pytest.approx(0.0, abs=1e-13)
    assert conjugation_shift_bound(dephase(G, H), H, 2.0, 5.0).lhs < 1e-12
    r = conjugation_shift_bound(G, H, 1.0, 100.0)
    assert r.passed and r.lhs <= 0.02


def test_classic_rage_examples(rng):
    h = build_lattice_one_body(LatticeSpec.with_wells(12, 1.0, [(6, -4.0)]))
    S = designate_quasi_continuum(eigendecompose(h.matrix), (0.0, 4.0), [5, 6, 7])
    bound_vec = S.eigenvectors[:, 0]
    K = np.diag(rng.uniform(size=12))
    assert S.designation[0] == "point"
    assert classic_rage_statistic(bound_vec, K, S, T=10.0).value == pytest.approx(0, abs=1e-14)
    x = random_state_vector(12, rng)
    for T in (0.5, 20.0):
        assert classic_rage_statistic(x, np.eye(12), S, "all", T).value == pytest.approx(1.0, abs=1e-12)
    empty = classic_rage_statistic(x, K, S, [], 1.0)
    assert empty.empty_selection and empty.value == 0.0


def test_classic_rage_matches_quadrature(rng):
    h = build_lattice_one_body(LatticeSpec(10))
    S = eigendecompose(h.matrix)
    x = random_state_vector(10, rng)
    K = np.diag(np.arange(10) < 4).astype(float)
    a = classic_rage_statistic(x, K, S, "all", 5.0).value
    b = classic_rage_quadrature(x, K, S, "all", 5.0, steps=20000).value
    assert a == pytest.approx(b, abs=1e-7)


def test_classic_rage_decreases_with_L(thresholds):
    vals = []
    for L in (16, 32, 64):
        S = eigendecompose(build_lattice_one_body(LatticeSpec(L)).matrix)
        x = np.zeros(L)
        x[L // 2] = 1
        K = np.outer(x, x)
        vals.append(classic_rage_statistic(x, K, S, "all", 1000.0).value)
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] <= thresholds["classic_rage_L64_T1000_max"]


def test_unknown_window():
    with pytest.raises(InputError):
        WindowFunction("hann")
