# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled occupation-basis kernels; same contract as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline long long _rank(const long long[::1] occ, const long long[:, ::1] counts,
                            bint fermion, long long total) noexcept nogil:
    cdef Py_ssize_t d = occ.shape[0]
    cdef Py_ssize_t p
    cdef long long r = total, pos = 0, v, vmax, op
    for p in range(d):
        if r == 0:
            break
        op = occ[p]
        vmax = r
        if fermion and vmax > 1:
            vmax = 1
        v = op + 1
        while v <= vmax:
            pos += counts[d - p - 1, r - v]
            v += 1
        r -= op
    return pos


def rank_states(occ, counts, fermion):
    cdef const long long[:, ::1] o = np.ascontiguousarray(occ, dtype=np.int64)
    cdef const long long[:, ::1] c = np.ascontiguousarray(counts, dtype=np.int64)
    cdef Py_ssize_t n = o.shape[0], d = o.shape[1], i, p
    cdef long long total
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] res = out
    cdef bint ferm = fermion
    for i in range(n):
        total = 0
        for p in range(d):
            total += o[i, p]
        res[i] = _rank(o[i], c, ferm, total)
    return out


def ladder_coo(occ, modes, dag, coefs, counts, fermion):
    cdef const long long[:, ::1] o = np.ascontiguousarray(occ, dtype=np.int64)
    cdef const long long[:, ::1] m = np.ascontiguousarray(modes, dtype=np.int64)
    cdef const unsigned char[::1] dg = np.ascontiguousarray(dag, dtype=np.uint8)
    cdef const double complex[::1] cf = np.ascontiguousarray(coefs, dtype=np.complex128)
    cdef const long long[:, ::1] c = np.ascontiguousarray(counts, dtype=np.int64)
    cdef bint ferm = fermion
    cdef Py_ssize_t nstates = o.shape[0], d = o.shape[1]
    cdef Py_ssize_t nstrings = m.shape[0], k = m.shape[1]
    cdef Py_ssize_t s, j, i, q, nout = 0
    cdef long long p, total0 = 0, total, parity
    cdef double complex amp
    cdef bint alive
    cur_arr = np.empty(d, dtype=np.int64)
    cdef long long[::1] cur = cur_arr

    if nstates > 0:
        for q in range(d):
            total0 += o[0, q]
    total = total0
    for i in range(k):
        total += 1 if dg[i] else -1

    cap = nstrings * nstates
    s_out = np.empty(cap, dtype=np.int64)
    src_out = np.empty(cap, dtype=np.int64)
    tgt_out = np.empty(cap, dtype=np.int64)
    val_out = np.empty(cap, dtype=np.complex128)
    cdef long long[::1] so = s_out, sr = src_out, tg = tgt_out
    cdef double complex[::1] vo = val_out

    with nogil:
        for s in range(nstrings):
            for j in range(nstates):
                # the rightmost operator alone often kills the state; skip the copy
                if k > 0:
                    p = m[s, k - 1]
                    if dg[k - 1]:
                        if ferm and o[j, p] != 0:
                            continue
                    elif o[j, p] == 0:
                        continue
                for q in range(d):
                    cur[q] = o[j, q]
                amp = cf[s]
                alive = True
                for i in range(k - 1, -1, -1):
                    p = m[s, i]
                    if ferm:
                        if dg[i]:
                            if cur[p] != 0:
                                alive = False
                                break
                        elif cur[p] != 1:
                            alive = False
                            break
                        parity = 0
                        for q in range(p):
                            parity += cur[q]
                        if parity & 1:
                            amp = -amp
                        cur[p] += 1 if dg[i] else -1
                    else:
                        if dg[i]:
                            amp = amp * sqrt(<double>(cur[p] + 1))
                            cur[p] += 1
                        else:
                            if cur[p] == 0:
                                alive = False
                                break
                            amp = amp * sqrt(<double>cur[p])
                            cur[p] -= 1
                if not alive:
                    continue
                so[nout] = s
                sr[nout] = j
                tg[nout] = _rank(cur, c, ferm, total)
                vo[nout] = amp
                nout += 1
    return s_out[:nout].copy(), src_out[:nout].copy(), tgt_out[:nout].copy(), val_out[:nout].copy()
