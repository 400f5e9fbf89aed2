"""Pure numpy implementation of the occupation-basis kernels.

Used when the compiled ``_ckernels`` module is unavailable, and as the
reference the compiled version is tested against. Loops run over
operator strings; each string is applied to all basis states at once.
"""
import numpy as np


def rank_states(occ, counts, fermion):
    """Position of each occupation row in the lexicographically descending order."""
    occ = np.asarray(occ, dtype=np.int64)
    nstates, d = occ.shape
    remaining = occ.sum(axis=1)
    rank = np.zeros(nstates, dtype=np.int64)
    nmax = counts.shape[1] - 1
    for p in range(d):
        m = d - p - 1
        op = occ[:, p]
        vmax = np.minimum(remaining, 1) if fermion else remaining
        for v in range(1, nmax + 1):
            take = (v > op) & (v <= vmax)
            if not take.any():
                if v > vmax.max(initial=0):
                    break
                continue
            rank[take] += counts[m, remaining[take] - v]
        remaining = remaining - op
    return rank


def ladder_coo(occ, modes, dag, coefs, counts, fermion):
    """Apply operator strings to every basis state.

    Parameters
    ----------
    occ : (D, d) int array
        Occupations of the source sector.
    modes : (S, k) int array
        Mode of each ladder operator; column ``k-1`` acts first.
    dag : (k,) bool array
        True for a creation operator in that column.
    coefs : (S,) complex array
        Prefactor of each string.
    counts : 2d int array
        Sector-size table of the target sector (see ``fock._count_table``).
    fermion : bool

    Returns
    -------
    strings, src, tgt, vals
        One entry per nonvanishing (string, source state) pair.
    """
    occ = np.asarray(occ, dtype=np.int64)
    modes = np.asarray(modes, dtype=np.int64)
    dag = np.asarray(dag, dtype=bool)
    coefs = np.asarray(coefs, dtype=np.complex128)
    nstates, d = occ.shape
    nstrings, k = modes.shape
    out_s, out_src, out_tgt, out_val = [], [], [], []
    for s in range(nstrings):
        cur = occ.copy()
        amp = np.full(nstates, coefs[s], dtype=np.complex128)
        alive = np.ones(nstates, dtype=bool)
        for i in range(k - 1, -1, -1):
            p = modes[s, i]
            np_ = cur[:, p]
            if fermion:
                sign = 1 - 2 * (cur[:, :p].sum(axis=1) & 1)
                if dag[i]:
                    alive &= np_ == 0
                    cur[:, p] = np_ + 1
                else:
                    alive &= np_ == 1
                    cur[:, p] = np_ - 1
                amp = amp * sign
            else:
                if dag[i]:
                    amp = amp * np.sqrt(np.maximum(np_ + 1.0, 0.0))
                    cur[:, p] = np_ + 1
                else:
                    alive &= np_ > 0
                    amp = amp * np.sqrt(np.maximum(np_, 0).astype(float))
                    cur[:, p] = np_ - 1
        src = np.nonzero(alive)[0]
        if src.size == 0:
            continue
        tgt = rank_states(cur[src], counts, fermion)
        out_s.append(np.full(src.size, s, dtype=np.int64))
        out_src.append(src)
        out_tgt.append(tgt)
        out_val.append(amp[src])
    if not out_s:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy(), np.zeros(0, dtype=np.complex128)
    return (np.concatenate(out_s), np.concatenate(out_src),
            np.concatenate(out_tgt), np.concatenate(out_val))
