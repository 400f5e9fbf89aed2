"""The compiled and numpy kernels must agree exactly."""
import importlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fockrage import BACKEND, _pykernels
from fockrage.fock import _count_table, sector_basis, sector_dimension

ck = pytest.importorskip("fockrage._ckernels")

sectors = st.tuples(st.integers(1, 7), st.integers(0, 4), st.sampled_from(["boson", "fermion"]))


def test_backend_name():
    assert BACKEND in ("cython", "python")


def test_pure_python_switch(monkeypatch):
    import fockrage._kernels as k
    monkeypatch.setenv("FOCKRAGE_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(k)
        assert mod.BACKEND == "python"
        assert mod.rank_states is _pykernels.rank_states
    finally:
        monkeypatch.delenv("FOCKRAGE_PURE_PYTHON")
        importlib.reload(k)


@settings(max_examples=60, deadline=None)
@given(sectors)
def test_rank_states_agree(sec):
    d, n, stat = sec
    if stat == "fermion" and n > d:
        return
    basis = sector_basis(d, n, stat)
    table = _count_table(d, n, stat == "fermion")
    a = _pykernels.rank_states(basis.states, table, stat == "fermion")
    b = ck.rank_states(basis.states, table, stat == "fermion")
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, np.arange(sector_dimension(d, n, stat)))


@settings(max_examples=60, deadline=None)
@given(sectors, st.integers(0, 2 ** 31 - 1), st.sampled_from([(1,), (0,), (1, 0), (1, 1, 0, 0)]))
def test_ladder_coo_agree(sec, seed, dag):
    d, n, stat = sec
    fermion = stat == "fermion"
    target = n + sum(1 if x else -1 for x in dag)
    if target < 0 or (fermion and (n > d or target > d)):
        return
    rng = np.random.default_rng(seed)
    basis = sector_basis(d, n, stat)
    table = _count_table(d, target, fermion)
    modes = rng.integers(0, d, size=(5, len(dag)))
    coefs = rng.normal(size=5) + 1j * rng.normal(size=5)
    dag = np.array(dag, dtype=np.uint8)
    ra = _pykernels.ladder_coo(basis.states, modes, dag, coefs, table, fermion)
    rb = ck.ladder_coo(basis.states, modes, dag, coefs, table, fermion)

    def canon(r):
        s, src, tgt, val = r
        order = np.lexsort((tgt, src, s))
        return s[order], src[order], tgt[order], val[order]

    for x, y in zip(canon(ra), canon(rb)):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-14)
