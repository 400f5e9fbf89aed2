import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fockrage.errors import InputError
from fockrage.onebody import (LatticeSpec, OneBodyOperator, TwoBodyOperator,
                              build_lattice_one_body, build_pair_interaction, hyp_w2_diagnostic,
                              shift_spectrum, swap_permutation, window_projector)


def test_laplacian_two_sites():
    h = build_lattice_one_body(LatticeSpec(2, 1.0, (0.0, 0.0)))
    np.testing.assert_array_equal(h.matrix, [[2, -1], [-1, 2]])


def test_zero_hopping_is_diagonal_potential():
    h = build_lattice_one_body(LatticeSpec(3, 0.0, (5, 6, 7)))
    np.testing.assert_array_equal(h.matrix, np.diag([5.0, 6.0, 7.0]))


def test_single_well_binds_below_band():
    spec = LatticeSpec.with_wells(64, 1.0, [(32, -4.0)])
    lam = np.linalg.eigvalsh(build_lattice_one_body(spec).matrix)
    assert lam[0] < 0
    assert lam[1] >= 0


@pytest.mark.parametrize("diag,shift", [((0, 1), 1.5), ((2, 3), -0.5)])
def test_shift_spectrum_diagonal(diag, shift):
    h = shift_spectrum(OneBodyOperator(np.diag(diag).astype(float)), 0.5)
    np.testing.assert_allclose(h.matrix, np.diag([1.5, 2.5]), atol=1e-14)
    assert h.shift == pytest.approx(shift)


def test_shift_spectrum_lattice():
    spec = LatticeSpec.with_wells(64, 1.0, [(32, -4.0)])
    h = shift_spectrum(build_lattice_one_body(spec), 0.1)
    assert abs(np.linalg.eigvalsh(h.matrix)[0] - 1.1) <= 1e-10 * (1 + abs(h.shift))


def test_shift_requires_positive_margin():
    with pytest.raises(InputError):
        shift_spectrum(OneBodyOperator(np.eye(2)), 0.0)


def test_contact_profile():
    w = build_pair_interaction(LatticeSpec(2), {"kind": "contact", "g": 2.0})
    np.testing.assert_array_equal(np.diag(w.toarray()).real, [2, 0, 0, 2])
    assert w.is_diagonal


def test_exponential_small_range_matches_contact():
    spec = LatticeSpec(5)
    a = build_pair_interaction(spec, {"kind": "exponential", "g": 1.0, "a": 1e-6}).toarray()
    b = build_pair_interaction(spec, {"kind": "contact", "g": 1.0}).toarray()
    np.testing.assert_allclose(a, b, atol=1e-300)


def test_exponential_entry():
    w = build_pair_interaction(LatticeSpec(4), {"kind": "exponential", "g": 1.0, "a": 2.0})
    assert w.toarray()[0 * 4 + 3, 0 * 4 + 3] == pytest.approx(np.exp(-1.5), abs=1e-15)


@pytest.mark.parametrize("profile", [{"kind": "exponential", "g": 1.0, "a": 0.0},
                                     {"kind": "exponential", "g": np.inf, "a": 1.0},
                                     {"kind": "yukawa", "g": 1.0}])
def test_bad_profiles(profile):
    with pytest.raises(InputError):
        build_pair_interaction(LatticeSpec(3), profile)


def test_nonfinite_potential_rejected():
    with pytest.raises(InputError):
        build_lattice_one_body(LatticeSpec(2, 1.0, (0.0, float("nan"))))


def test_non_hermitian_rejected():
    with pytest.raises(InputError):
        OneBodyOperator(np.array([[0, 1], [0, 0]], dtype=float))


def test_exchange_symmetry_required():
    W = np.zeros((4, 4))
    W[1, 1] = 1.0  # (0,1) but not (1,0)
    with pytest.raises(InputError):
        TwoBodyOperator(W, 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.floats(-3, 3), st.floats(0.1, 5), st.sampled_from(["contact", "exponential"]))
def test_constructed_operators_hermitian_and_symmetric(L, t, g, kind):
    spec = LatticeSpec(L, t)
    h = build_lattice_one_body(spec)
    np.testing.assert_allclose(h.matrix, h.matrix.conj().T, atol=1e-12)
    w = build_pair_interaction(spec, {"kind": kind, "g": g, "a": 1.5}).toarray()
    p = swap_permutation(L)
    np.testing.assert_allclose(w, w.conj().T, atol=1e-12)
    np.testing.assert_allclose(w[np.ix_(p, p)], w, atol=1e-12)


def _hyp_setup(L=6):
    spec = LatticeSpec(L)
    return spec, shift_spectrum(build_lattice_one_body(spec))


def test_hyp_w2_zero_interaction():
    spec, h = _hyp_setup()
    w = build_pair_interaction(spec, {"kind": "none"})
    diag = hyp_w2_diagnostic(h, w, [window_projector(6, range(2, 4))])
    assert np.all(diag.singular_values[0] == 0)


def test_hyp_w2_identity_window_doubles():
    spec, h = _hyp_setup()
    w = build_pair_interaction(spec, {"kind": "contact", "g": 1.0})
    diag = hyp_w2_diagnostic(h, w, [np.eye(6)])
    lam, v = np.linalg.eigh(h.matrix)
    s = (lam[:, None] + lam[None, :]).ravel()
    vv = np.kron(v, v)
    inv = (vv * s ** -0.5) @ vv.conj().T
    ref = np.linalg.svd(inv @ w.toarray() @ inv, compute_uv=False)
    np.testing.assert_allclose(diag.singular_values[0], 2 * np.sort(ref)[::-1], atol=1e-12)


def test_hyp_w2_sorted_nonnegative_and_pinned(thresholds):
    spec = LatticeSpec(32)
    h = shift_spectrum(build_lattice_one_body(spec))
    w = build_pair_interaction(spec, {"kind": "contact", "g": 1.0})
    diag = hyp_w2_diagnostic(h, w, [window_projector(32, range(12, 20))], ranks=[16, 64])
    sv = diag.singular_values[0]
    assert np.all(sv >= 0) and np.all(np.diff(sv) <= 0)
    assert diag.tail_mass[16][0] <= thresholds["hyp_w2_tail_mass_L32_rank16_max"]
    assert diag.tail_mass[64][0] <= thresholds["hyp_w2_tail_mass_L32_rank64_max"]


def test_hyp_w2_requires_shift():
    spec = LatticeSpec(4)
    with pytest.raises(InputError):
        hyp_w2_diagnostic(build_lattice_one_body(spec), build_pair_interaction(spec, {"kind": "none"}), [])
