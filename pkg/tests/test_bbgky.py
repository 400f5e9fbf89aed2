import numpy as np
import pytest

from conftest import random_one_body, random_two_body
from fockrage.bbgky import (exact_trajectory, hierarchy_residual, hierarchy_rhs, hierarchy_solve,
                            max_trace_distance)
from fockrage.dynamics import evolve, trace_norm
from fockrage.errors import AccuracyError, InputError
from fockrage.fock import free_hamiltonian, second_quantize
from fockrage.onebody import (LatticeSpec, build_lattice_one_body, build_pair_interaction,
                              shift_spectrum)
from fockrage.rage import (Component, Packet, default_escape_config, escape_spectra,
                           escape_state, scattering_reference, terms_to_density)
from fockrage.reduced import (ReducedSet, random_fock_density, reduced_set,
                              window_dictionary, weak_star_gap)


def _model(d, N, stat, kind="contact", g=0.5):
    spec = LatticeSpec(d)
    h = shift_spectrum(build_lattice_one_body(spec))
    w = build_pair_interaction(spec, {"kind": kind, "g": g, "a": 1.0})
    return h, w, second_quantize(h, w, N, stat)


def test_rhs_free_is_commutator(rng):
    h = random_one_body(4, rng)
    H0 = free_hamiltonian(h, 2, "boson")
    R = reduced_set(random_fock_density(4, 2, "boson", rng))
    dR = hierarchy_rhs(R, H0)
    for n in range(3):
        Hn = H0[n].matrix
        np.testing.assert_allclose(dR[n], -1j * (Hn @ R[n] - R[n] @ Hn), atol=1e-12)


def test_rhs_top_level_has_no_collision(rng):
    h, w = random_one_body(3, rng), random_two_body(3, rng)
    H = second_quantize(h, w, 3, "fermion")
    R = reduced_set(random_fock_density(3, 3, "fermion", rng))
    HN = H[3].matrix
    np.testing.assert_allclose(hierarchy_rhs(R, H)[3], -1j * (HN @ R[3] - R[3] @ HN), atol=1e-13)


@pytest.mark.parametrize("stat", ["boson", "fermion"])
def test_rhs_routes_agree_and_traces_constant(stat, rng):
    d = 3
    h, w = random_one_body(d, rng), random_two_body(d, rng)
    H = second_quantize(h, w, 2, stat)
    R = ReducedSet(2, d, stat, tuple(
        np.asarray(x) for x in reduced_set(random_fock_density(d, 2, stat, rng)).gammas))
    a = hierarchy_rhs(R, H)
    b = hierarchy_rhs(R, H, w=w, route="tensor")
    hs = shift_spectrum(h)
    c = hierarchy_rhs(R, second_quantize(hs, w, 2, stat), w=w, h=hs, route="tensor", dressed=True)
    for n in range(3):
        np.testing.assert_allclose(a[n], b[n], atol=1e-12)
        assert abs(np.trace(a[n])) < 1e-12
    # the dressed form has the same partial trace: collision terms agree
    np.testing.assert_allclose(c[1] + 1j * (hs.matrix @ R[1] - R[1] @ hs.matrix),
                               b[1] + 1j * (h.matrix @ R[1] - R[1] @ h.matrix), atol=1e-11)


def test_rhs_tensor_needs_w(rng):
    h = random_one_body(3, rng)
    R = reduced_set(random_fock_density(3, 1, "boson", rng))
    with pytest.raises(InputError):
        hierarchy_rhs(R, free_hamiltonian(h, 1, "boson"), route="tensor")


def test_free_solution_is_conjugation(rng):
    h = shift_spectrum(random_one_body(4, rng))
    H0 = free_hamiltonian(h, 2, "boson")
    st_ = random_fock_density(4, 2, "boson", rng)
    traj = hierarchy_solve(reduced_set(st_), H0, T=1.0, step=5e-3)
    for n in range(3):
        ref = evolve(reduced_set(st_)[n], H0[n].matrix, traj.times[-1])
        assert trace_norm(traj.levels[n][-1] - ref) < 1e-9


def test_solve_matches_exact_short(rng):
    h, w, H = _model(4, 2, "boson")
    st_ = random_fock_density(4, 2, "boson", rng)
    traj = hierarchy_solve(reduced_set(st_), H, T=1.0, step=1e-2)
    exact = exact_trajectory(st_, H, traj.times)
    assert max_trace_distance(traj, exact) < 1e-7
    tr = traj.traces()
    assert np.ptp(tr, axis=1).max() < 1e-8


def test_picard_agrees_with_rk4(rng):
    h, w, H = _model(3, 3, "fermion", "exponential", 1.0)
    st_ = random_fock_density(3, 3, "fermion", rng)
    R0 = reduced_set(st_)
    a = hierarchy_solve(R0, H, T=1.0, step=5e-3, method="rk4")
    b = hierarchy_solve(R0, H, T=1.0, step=5e-3, method="picard", tol=1e-6)
    exact = exact_trajectory(st_, H, a.times)
    assert max_trace_distance(a, b) <= max_trace_distance(a, exact) + max_trace_distance(b, exact) + 1e-12
    assert max_trace_distance(a, b) < 1e-6


def test_accuracy_error_suggests_step(rng):
    h, w, H = _model(4, 2, "boson", g=3.0)
    R0 = reduced_set(random_fock_density(4, 2, "boson", rng))
    with pytest.raises(AccuracyError) as info:
        hierarchy_solve(R0, H, T=2.0, step=0.25, tol=1e-10)
    assert 0 < info.value.suggested_step < 0.25


def test_residual_free_is_quadrature_small(rng):
    h = shift_spectrum(random_one_body(3, rng))
    H0 = free_hamiltonian(h, 2, "boson")
    st_ = random_fock_density(3, 2, "boson", rng)
    ex = exact_trajectory(st_, H0, np.linspace(0, 1, 1001))
    assert hierarchy_residual(ex, H0).max() < 1e-6


def test_residual_three_fermions(rng):
    h, w, H = _model(6, 3, "fermion", "exponential", 1.0)
    st_ = random_fock_density(6, 3, "fermion", rng)
    ex = exact_trajectory(st_, H, np.linspace(0, 1, 1001))
    assert hierarchy_residual(ex, H).max() <= 1e-6


def test_residual_second_order(rng):
    h, w, H = _model(4, 2, "boson", "exponential", 1.0)
    st_ = random_fock_density(4, 2, "boson", rng)
    r = [hierarchy_residual(exact_trajectory(st_, H, np.linspace(0, 1, p)), H).max()
         for p in (33, 65)]
    assert 3.5 <= r[0] / r[1] <= 4.5


def test_dressed_residual_matches(rng):
    h, w, H = _model(3, 2, "boson")
    st_ = random_fock_density(3, 2, "boson", rng)
    ex = exact_trajectory(st_, H, np.linspace(0, 0.5, 101))
    a = hierarchy_residual(ex, H)
    b = hierarchy_residual(ex, H, form="dressed", h=h, w=w)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_residual_needs_uniform_grid(rng):
    h, w, H = _model(3, 1, "boson")
    st_ = random_fock_density(3, 1, "boson", rng)
    with pytest.raises(InputError):
        hierarchy_residual(exact_trajectory(st_, H, [0.0, 0.1, 0.3]), H)


def test_geometric_continuity_escape_family():
    """Bound particle plus a packet placed ever farther away: window data at
    fixed time approach those of the evolved bound state alone."""
    L = 48
    base = default_escape_config(L, schedule=(0.25,))
    xb = base.window_center
    spectra = escape_spectra(base)
    D = window_dictionary(L, 2, "boson", xb, 4)
    limit = scattering_reference(
        default_escape_config(L, schedule=(0.25,), components=(Component(1.0, 1, 0, ()),)))
    gaps = []
    for k in (8, 16, 24):
        cfg = default_escape_config(L, schedule=(0.25,), components=(
            Component(1.0, 1, 0, (Packet(xb + k, 2.0, 0.5),)),))
        st_ = terms_to_density(cfg, escape_state(cfg))
        gaps.append(weak_star_gap(evolve(st_, spectra, 2.0), evolve(limit, spectra, 2.0), D))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-6
