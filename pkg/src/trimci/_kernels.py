"""Compiled kernels over packed determinant arrays.

Determinant rows are ``uint64`` words: ``nw`` alpha words then ``nw`` beta
words (``nw = ceil(m / 64)``). Everything here is single-threaded and visits
determinants and excitations in a fixed order, so results are bitwise
reproducible.
"""

import numpy as np
from numba import njit

U1 = np.uint64(1)
U63 = np.uint64(63)
EMPTY = -1


@njit(cache=True, inline="always")
def _popcount(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return np.int64((x * np.uint64(0x0101010101010101)) >> np.uint64(56))


@njit(cache=True, inline="always")
def _test(row, off, i):
    return (row[off + (i >> 6)] >> np.uint64(i & 63)) & U1


@njit(cache=True, inline="always")
def _flip(row, off, i):
    row[off + (i >> 6)] ^= U1 << np.uint64(i & 63)


@njit(cache=True)
def _hash_row(row):
    h = np.uint64(0x9E3779B97F4A7C15)
    for k in range(row.shape[0]):
        z = row[k] + h + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        h = z ^ (z >> np.uint64(31))
    return h


@njit(cache=True, inline="always")
def _rows_equal(a, b):
    for k in range(a.shape[0]):
        if a[k] != b[k]:
            return False
    return True


# -- row index (open addressing over int64 slots) ----------------------------

@njit(cache=True)
def _capacity(n):
    cap = 16
    while cap < 2 * n + 2:
        cap *= 2
    return cap


@njit(cache=True)
def index_build(rows):
    """Slots mapping each row to its position; returns (slots, n_duplicates)."""
    n = rows.shape[0]
    cap = _capacity(n)
    slots = np.full(cap, EMPTY, dtype=np.int64)
    mask = np.uint64(cap - 1)
    dups = 0
    for i in range(n):
        h = np.int64(_hash_row(rows[i]) & mask)
        while True:
            j = slots[h]
            if j == EMPTY:
                slots[h] = i
                break
            if _rows_equal(rows[j], rows[i]):
                dups += 1
                break
            h = (h + 1) & (cap - 1)
    return slots, dups


@njit(cache=True, inline="always")
def index_find(slots, rows, query):
    cap = slots.shape[0]
    h = np.int64(_hash_row(query) & np.uint64(cap - 1))
    while True:
        j = slots[h]
        if j == EMPTY:
            return -1
        if _rows_equal(rows[j], query):
            return j
        h = (h + 1) & (cap - 1)


@njit(cache=True)
def index_lookup(slots, rows, queries):
    out = np.empty(queries.shape[0], dtype=np.int64)
    for i in range(queries.shape[0]):
        out[i] = index_find(slots, rows, queries[i])
    return out


# -- growable accumulator keyed by row -----------------------------------------

@njit(cache=True)
def _acc_new(width, cap_rows):
    slots = np.full(_capacity(cap_rows), EMPTY, dtype=np.int64)
    keys = np.zeros((cap_rows, width), dtype=np.uint64)
    vals = np.zeros(cap_rows)
    return slots, keys, vals


@njit(cache=True)
def _acc_grow(slots, keys, vals, n):
    new_rows = keys.shape[0] * 2
    nkeys = np.zeros((new_rows, keys.shape[1]), dtype=np.uint64)
    nkeys[:n] = keys[:n]
    nvals = np.zeros(new_rows)
    nvals[:n] = vals[:n]
    cap = _capacity(new_rows)
    nslots = np.full(cap, EMPTY, dtype=np.int64)
    for i in range(n):
        h = np.int64(_hash_row(nkeys[i]) & np.uint64(cap - 1))
        while nslots[h] != EMPTY:
            h = (h + 1) & (cap - 1)
        nslots[h] = i
    return nslots, nkeys, nvals


@njit(cache=True)
def _acc_slot(slots, keys, n, query):
    """Position of ``query`` in keys, or ``-(probe slot) - 1`` if absent."""
    cap = slots.shape[0]
    h = np.int64(_hash_row(query) & np.uint64(cap - 1))
    while True:
        j = slots[h]
        if j == EMPTY:
            return -h - 1
        if _rows_equal(keys[j], query):
            return j
        h = (h + 1) & (cap - 1)


# -- integrals and excitations ------------------------------------------------

@njit(cache=True)
def _occupied(row, off, m, out):
    n = 0
    for i in range(m):
        if _test(row, off, i):
            out[n] = i
            n += 1
    return n


@njit(cache=True)
def _prefix_counts(row, off, m, cnt):
    c = 0
    for i in range(m):
        cnt[i] = c
        if _test(row, off, i):
            c += 1
    cnt[m] = c


@njit(cache=True)
def diagonal_one(row, nw, m, h1, jmat, kmat, ecore, occ_a, occ_b):
    na = _occupied(row, 0, m, occ_a)
    nb = _occupied(row, nw, m, occ_b)
    e = ecore
    for i in range(na):
        p = occ_a[i]
        e += h1[p, p]
        for j in range(i + 1, na):
            q = occ_a[j]
            e += jmat[p, q] - kmat[p, q]
    for i in range(nb):
        p = occ_b[i]
        e += h1[p, p]
        for j in range(i + 1, nb):
            q = occ_b[j]
            e += jmat[p, q] - kmat[p, q]
    for i in range(na):
        p = occ_a[i]
        for j in range(nb):
            e += jmat[p, occ_b[j]]
    return e


@njit(cache=True)
def diagonal(dets, m, h1, jmat, kmat, ecore):
    nw = dets.shape[1] // 2
    out = np.empty(dets.shape[0])
    occ_a = np.empty(m, dtype=np.int64)
    occ_b = np.empty(m, dtype=np.int64)
    for i in range(dets.shape[0]):
        out[i] = diagonal_one(dets[i], nw, m, h1, jmat, kmat, ecore, occ_a, occ_b)
    return out


@njit(cache=True, inline="always")
def _single_value(p, r, occ_s, ns, occ_o, no, h1, eri):
    h = h1[p, r]
    for i in range(ns):
        q = occ_s[i]
        if q != p:
            h += eri[p, r, q, q] - eri[p, q, q, r]
    for i in range(no):
        q = occ_o[i]
        h += eri[p, r, q, q]
    return h


@njit(cache=True)
def emit_connections(row, nw, m, cutoff, h1, eri,
                     s_order, s_bound, ss_ptr, ss_r, ss_s, ss_v,
                     os_ptr, os_r, os_s, os_v,
                     out_rows, out_vals, occ_a, occ_b, cnt_a, cnt_b):
    """Write every determinant D' with |<D'|H|D>| > cutoff (D' != D) into out_rows.

    Singles are scanned per hole in descending bound order and doubles per
    hole pair in descending magnitude, each loop exiting at the cutoff.
    Returns the number of rows written; out_vals holds signed elements.
    """
    na = _occupied(row, 0, m, occ_a)
    nb = _occupied(row, nw, m, occ_b)
    _prefix_counts(row, 0, m, cnt_a)
    _prefix_counts(row, nw, m, cnt_b)
    width = 2 * nw
    n = 0
    nbr = s_order.shape[1]
    # singles
    for spin in range(2):
        if spin == 0:
            off, occ_s, ns, occ_o, no, cnt = 0, occ_a, na, occ_b, nb, cnt_a
        else:
            off, occ_s, ns, occ_o, no, cnt = nw, occ_b, nb, occ_a, na, cnt_b
        for i in range(ns):
            p = occ_s[i]
            for k in range(nbr):
                if s_bound[p, k] <= cutoff:
                    break
                r = s_order[p, k]
                if _test(row, off, r):
                    continue
                h = _single_value(p, r, occ_s, ns, occ_o, no, h1, eri)
                if abs(h) <= cutoff:
                    continue
                par = cnt[p] + cnt[r] - (1 if p < r else 0)
                if par & 1:
                    h = -h
                for w in range(width):
                    out_rows[n, w] = row[w]
                _flip(out_rows[n], off, p)
                _flip(out_rows[n], off, r)
                out_vals[n] = h
                n += 1
    # same-spin doubles
    for spin in range(2):
        if spin == 0:
            off, occ_s, ns, cnt = 0, occ_a, na, cnt_a
        else:
            off, occ_s, ns, cnt = nw, occ_b, nb, cnt_b
        for i in range(ns):
            p = occ_s[i]
            for j in range(i + 1, ns):
                q = occ_s[j]
                base = p * m + q
                for e in range(ss_ptr[base], ss_ptr[base + 1]):
                    v = ss_v[e]
                    if abs(v) <= cutoff:
                        break
                    r = ss_r[e]
                    s = ss_s[e]
                    if _test(row, off, r) or _test(row, off, s):
                        continue
                    par = (cnt[p] + cnt[q] - 1
                           + cnt[s] - (1 if p < s else 0) - (1 if q < s else 0)
                           + cnt[r] - (1 if p < r else 0) - (1 if q < r else 0))
                    for w in range(width):
                        out_rows[n, w] = row[w]
                    _flip(out_rows[n], off, p)
                    _flip(out_rows[n], off, q)
                    _flip(out_rows[n], off, r)
                    _flip(out_rows[n], off, s)
                    out_vals[n] = -v if par & 1 else v
                    n += 1
    # opposite-spin doubles
    for i in range(na):
        p = occ_a[i]
        for j in range(nb):
            q = occ_b[j]
            base = p * m + q
            for e in range(os_ptr[base], os_ptr[base + 1]):
                v = os_v[e]
                if abs(v) <= cutoff:
                    break
                r = os_r[e]
                s = os_s[e]
                if _test(row, 0, r) or _test(row, nw, s):
                    continue
                par = (cnt_a[p] + cnt_a[r] - (1 if p < r else 0)
                       + cnt_b[q] + cnt_b[s] - (1 if q < s else 0))
                for w in range(width):
                    out_rows[n, w] = row[w]
                _flip(out_rows[n], 0, p)
                _flip(out_rows[n], 0, r)
                _flip(out_rows[n], nw, q)
                _flip(out_rows[n], nw, s)
                out_vals[n] = -v if par & 1 else v
                n += 1
    return n


@njit(cache=True)
def pair_element(ri, rj, nw, m, h1, eri, jmat, kmat, ecore, occ_a, occ_b):
    """<rj|H|ri> for two packed rows by excitation analysis (0 beyond doubles)."""
    deg_a = 0
    deg_b = 0
    for w in range(nw):
        deg_a += _popcount(ri[w] ^ rj[w])
        deg_b += _popcount(ri[nw + w] ^ rj[nw + w])
    tot = deg_a + deg_b
    if tot == 0:
        return diagonal_one(ri, nw, m, h1, jmat, kmat, ecore, occ_a, occ_b)
    if tot > 4:
        return 0.0
    # holes/particles by spin
    ha = np.empty(2, dtype=np.int64)
    pa = np.empty(2, dtype=np.int64)
    hb = np.empty(2, dtype=np.int64)
    pb = np.empty(2, dtype=np.int64)
    nha = npa = nhb = npb = 0
    for i in range(m):
        a_i = _test(ri, 0, i)
        a_j = _test(rj, 0, i)
        if a_i != a_j:
            if a_i:
                ha[nha] = i
                nha += 1
            else:
                pa[npa] = i
                npa += 1
        b_i = _test(ri, nw, i)
        b_j = _test(rj, nw, i)
        if b_i != b_j:
            if b_i:
                hb[nhb] = i
                nhb += 1
            else:
                pb[npb] = i
                npb += 1
    na = _occupied(ri, 0, m, occ_a)
    nb = _occupied(ri, nw, m, occ_b)
    if tot == 2:
        if nha == 1:
            p, r, off = ha[0], pa[0], 0
            h = _single_value(p, r, occ_a, na, occ_b, nb, h1, eri)
        else:
            p, r, off = hb[0], pb[0], nw
            h = _single_value(p, r, occ_b, nb, occ_a, na, h1, eri)
        par = _below(ri, off, p) + _below(ri, off, r) - (1 if p < r else 0)
        return -h if par & 1 else h
    if nha == 1:
        p, r, q, s = ha[0], pa[0], hb[0], pb[0]
        par = (_below(ri, 0, p) + _below(ri, 0, r) - (1 if p < r else 0)
               + _below(ri, nw, q) + _below(ri, nw, s) - (1 if q < s else 0))
        v = eri[p, r, q, s]
        return -v if par & 1 else v
    if nha == 2:
        p, q, r, s, off = ha[0], ha[1], pa[0], pa[1], 0
    else:
        p, q, r, s, off = hb[0], hb[1], pb[0], pb[1], nw
    par = (_below(ri, off, p) + _below(ri, off, q) - 1
           + _below(ri, off, s) - (1 if p < s else 0) - (1 if q < s else 0)
           + _below(ri, off, r) - (1 if p < r else 0) - (1 if q < r else 0))
    v = eri[p, r, q, s] - eri[p, s, q, r]
    return -v if par & 1 else v


@njit(cache=True, inline="always")
def _below(row, off, i):
    c = 0
    for w in range(i >> 6):
        c += _popcount(row[off + w])
    b = i & 63
    if b:
        c += _popcount(row[off + (i >> 6)] & ((U1 << np.uint64(b)) - U1))
    return c


# -- projected Hamiltonian ----------------------------------------------------

@njit(cache=True)
def _grow_csr(indices, data):
    k = indices.shape[0] * 2
    ni = np.empty(k, dtype=np.int64)
    nd = np.empty(k)
    ni[:indices.shape[0]] = indices
    nd[:data.shape[0]] = data
    return ni, nd


@njit(cache=True)
def build_csr_generated(dets, slots, m, h1, eri, s_order, s_bound,
                        ss_ptr, ss_r, ss_s, ss_v, os_ptr, os_r, os_s, os_v, max_conn):
    """Off-diagonal CSR of H over ``dets`` by generating each row's connections."""
    n = dets.shape[0]
    nw = dets.shape[1] // 2
    buf_rows = np.zeros((max_conn, 2 * nw), dtype=np.uint64)
    buf_vals = np.zeros(max_conn)
    occ_a = np.empty(m, dtype=np.int64)
    occ_b = np.empty(m, dtype=np.int64)
    cnt_a = np.empty(m + 1, dtype=np.int64)
    cnt_b = np.empty(m + 1, dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices = np.empty(max(16, 8 * n), dtype=np.int64)
    data = np.empty(max(16, 8 * n))
    nnz = 0
    for i in range(n):
        k = emit_connections(dets[i], nw, m, 0.0, h1, eri, s_order, s_bound,
                             ss_ptr, ss_r, ss_s, ss_v, os_ptr, os_r, os_s, os_v,
                             buf_rows, buf_vals, occ_a, occ_b, cnt_a, cnt_b)
        start = nnz
        for c in range(k):
            j = index_find(slots, dets, buf_rows[c])
            if j < 0:
                continue
            if nnz == indices.shape[0]:
                indices, data = _grow_csr(indices, data)
            indices[nnz] = j
            data[nnz] = buf_vals[c]
            nnz += 1
        if nnz > start:
            order = np.argsort(indices[start:nnz], kind="mergesort")
            seg_i = indices[start:nnz][order].copy()
            seg_d = data[start:nnz][order].copy()
            indices[start:nnz] = seg_i
            data[start:nnz] = seg_d
        indptr[i + 1] = nnz
    return indptr, indices[:nnz].copy(), data[:nnz].copy()


@njit(cache=True)
def count_present(dets, slots, rows, m, h1, eri, s_order, s_bound,
                  ss_ptr, ss_r, ss_s, ss_v, os_ptr, os_r, os_s, os_v, max_conn):
    """Number of connections of each listed row that land inside ``dets``."""
    nw = dets.shape[1] // 2
    buf_rows = np.zeros((max_conn, 2 * nw), dtype=np.uint64)
    buf_vals = np.zeros(max_conn)
    occ_a = np.empty(m, dtype=np.int64)
    occ_b = np.empty(m, dtype=np.int64)
    cnt_a = np.empty(m + 1, dtype=np.int64)
    cnt_b = np.empty(m + 1, dtype=np.int64)
    out = np.zeros(rows.shape[0], dtype=np.int64)
    for t in range(rows.shape[0]):
        k = emit_connections(dets[rows[t]], nw, m, 0.0, h1, eri, s_order, s_bound,
                             ss_ptr, ss_r, ss_s, ss_v, os_ptr, os_r, os_s, os_v,
                             buf_rows, buf_vals, occ_a, occ_b, cnt_a, cnt_b)
        for c in range(k):
            if index_find(slots, dets, buf_rows[c]) >= 0:
                out[t] += 1
    return out


@njit(cache=True)
def build_csr_pairs(dets, m, h1, eri, jmat, kmat, ecore):
    """Off-diagonal CSR of H over ``dets`` by testing all pairs (small sets)."""
    n = dets.shape[0]
    nw = dets.shape[1] // 2
    occ_a = np.empty(m, dtype=np.int64)
    occ_b = np.empty(m, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    cap = max(16, 8 * n)
    ri = np.empty(cap, dtype=np.int64)
    rj = np.empty(cap, dtype=np.int64)
    rv = np.empty(cap)
    nnz = 0
    for i in range(n):
        for j in range(i + 1, n):
            deg = 0
            for w in range(2 * nw):
                deg += _popcount(dets[i, w] ^ dets[j, w])
            if deg > 4:
                continue
            v = pair_element(dets[i], dets[j], nw, m, h1, eri, jmat, kmat, ecore, occ_a, occ_b)
            if v == 0.0:
                continue
            if nnz == ri.shape[0]:
                ri2 = np.empty(2 * nnz, dtype=np.int64)
                rj2 = np.empty(2 * nnz, dtype=np.int64)
                rv2 = np.empty(2 * nnz)
                ri2[:nnz] = ri
                rj2[:nnz] = rj
                rv2[:nnz] = rv
                ri, rj, rv = ri2, rj2, rv2
            ri[nnz] = i
            rj[nnz] = j
            rv[nnz] = v
            nnz += 1
            counts[i] += 1
            counts[j] += 1
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        indptr[i + 1] = indptr[i] + counts[i]
    fill = indptr[:-1].copy()
    indices = np.empty(2 * nnz, dtype=np.int64)
    data = np.empty(2 * nnz)
    # pairs arrive ordered by (i, j) so both halves land column-sorted
    for e in range(nnz):
        i = ri[e]
        j = rj[e]
        indices[fill[j]] = i
        data[fill[j]] = rv[e]
        fill[j] += 1
    for e in range(nnz):
        i = ri[e]
        j = rj[e]
        indices[fill[i]] = j
        data[fill[i]] = rv[e]
        fill[i] += 1
    for i in range(n):
        seg = indices[indptr[i]:indptr[i + 1]]
        order = np.argsort(seg, kind="mergesort")
        indices[indptr[i]:indptr[i + 1]] = seg[order].copy()
        data[indptr[i]:indptr[i + 1]] = data[indptr[i]:indptr[i + 1]][order].copy()
    return indptr, indices, data


@njit(cache=True)
def matvec_generated(dets, slots, x, m, h1, eri, s_order, s_bound,
                     ss_ptr, ss_r, ss_s, ss_v, os_ptr, os_r, os_s, os_v, max_conn, diag):
    """y = H x without storing H (connections regenerated per call)."""
    n = dets.shape[0]
    nw = dets.shape[1] // 2
    buf_rows = np.zeros((max_conn, 2 * nw), dtype=np.uint64)
    buf_vals = np.zeros(max_conn)
    occ_a = np.empty(m, dtype=np.int64)
    occ_b = np.empty(m, dtype=np.int64)
    cnt_a = np.empty(m + 1, dtype=np.int64)
    cnt_b = np.empty(m + 1, dtype=np.int64)
    y = np.empty(n)
    for i in range(n):
        k = emit_connections(dets[i], nw, m, 0.0, h1, eri, s_order, s_bound,
                             ss_ptr, ss_r, ss_s, ss_v, os_ptr, os_r, os_s, os_v,
                             buf_rows, buf_vals, occ_a, occ_b, cnt_a, cnt_b)
        acc = diag[i] * x[i]
        for c in range(k):
            j = index_find(slots, dets, buf_rows[c])
            if j >= 0:
                acc += buf_vals[c] * x[j]
        y[i] = acc
    return y


# -- expansion and perturbation -----------------------------------------------

@njit(cache=True)
def collect_candidates(core, abs_c, theta, slots, m, h1, eri, s_order, s_bound,
                       ss_ptr, ss_r, ss_s, ss_v, os_ptr, os_r, os_s, os_v, max_conn):
    """Determinants outside ``core`` with max_j |H_ij c_j| > theta, with that max.

    Rows are returned in first-discovery order.
    """
    n = core.shape[0]
    nw = core.shape[1] // 2
    width = 2 * nw
    buf_rows = np.zeros((max_conn, width), dtype=np.uint64)
    buf_vals = np.zeros(max_conn)
    occ_a = np.empty(m, dtype=np.int64)
    occ_b = np.empty(m, dtype=np.int64)
    cnt_a = np.empty(m + 1, dtype=np.int64)
    cnt_b = np.empty(m + 1, dtype=np.int64)
    aslots, keys, vals = _acc_new(width, 1024)
    count = 0
    for j in range(n):
        cj = abs_c[j]
        if cj == 0.0:
            continue
        k = emit_connections(core[j], nw, m, theta / cj, h1, eri, s_order, s_bound,
                             ss_ptr, ss_r, ss_s, ss_v, os_ptr, os_r, os_s, os_v,
                             buf_rows, buf_vals, occ_a, occ_b, cnt_a, cnt_b)
        for c in range(k):
            score = abs(buf_vals[c]) * cj
            if score <= theta:
                continue
            q = buf_rows[c]
            if index_find(slots, core, q) >= 0:
                continue
            pos = _acc_slot(aslots, keys, count, q)
            if pos >= 0:
                if score > vals[pos]:
                    vals[pos] = score
                continue
            if 2 * (count + 1) > aslots.shape[0] or count == keys.shape[0]:
                aslots, keys, vals = _acc_grow(aslots, keys, vals, count)
                pos = _acc_slot(aslots, keys, count, q)
            aslots[-pos - 1] = count
            keys[count] = q
            vals[count] = score
            count += 1
    return keys[:count].copy(), vals[:count].copy()


@njit(cache=True)
def pt2_numerators(core, coeffs, eps, slots, m, h1, eri, s_order, s_bound,
                   ss_ptr, ss_r, ss_s, ss_v, os_ptr, os_r, os_s, os_v, max_conn):
    """External determinants a and sum_j H_aj c_j over contributions |H_aj c_j| > eps.

    Contributions from all parents are summed before any squaring.
    """
    n = core.shape[0]
    nw = core.shape[1] // 2
    width = 2 * nw
    buf_rows = np.zeros((max_conn, width), dtype=np.uint64)
    buf_vals = np.zeros(max_conn)
    occ_a = np.empty(m, dtype=np.int64)
    occ_b = np.empty(m, dtype=np.int64)
    cnt_a = np.empty(m + 1, dtype=np.int64)
    cnt_b = np.empty(m + 1, dtype=np.int64)
    aslots, keys, vals = _acc_new(width, 1024)
    count = 0
    for j in range(n):
        cj = coeffs[j]
        if cj == 0.0:
            continue
        k = emit_connections(core[j], nw, m, eps / abs(cj), h1, eri, s_order, s_bound,
                             ss_ptr, ss_r, ss_s, ss_v, os_ptr, os_r, os_s, os_v,
                             buf_rows, buf_vals, occ_a, occ_b, cnt_a, cnt_b)
        for c in range(k):
            contrib = buf_vals[c] * cj
            if abs(contrib) <= eps:
                continue
            q = buf_rows[c]
            if index_find(slots, core, q) >= 0:
                continue
            pos = _acc_slot(aslots, keys, count, q)
            if pos >= 0:
                vals[pos] += contrib
                continue
            if 2 * (count + 1) > aslots.shape[0] or count == keys.shape[0]:
                aslots, keys, vals = _acc_grow(aslots, keys, vals, count)
                pos = _acc_slot(aslots, keys, count, q)
            aslots[-pos - 1] = count
            keys[count] = q
            vals[count] = contrib
            count += 1
    return keys[:count].copy(), vals[:count].copy()
