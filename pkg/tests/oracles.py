"""Independent reference implementations used only by the tests.

The Hamiltonian oracle applies creation/annihilation operators to explicit
occupation-number vectors (spin-orbitals ordered all-alpha then all-beta) and
never touches the Slater-Condon code paths.
"""

import itertools

import numpy as np

from trimci.determinants import Determinant


def _apply_annihilate(occ, k):
    if not occ[k]:
        return None, 0
    sign = -1 if sum(occ[:k]) % 2 else 1
    out = list(occ)
    out[k] = 0
    return tuple(out), sign


def _apply_create(occ, k):
    if occ[k]:
        return None, 0
    sign = -1 if sum(occ[:k]) % 2 else 1
    out = list(occ)
    out[k] = 1
    return tuple(out), sign


def _apply_string(occ, ops):
    """Apply operators right-to-left; ops are (kind, index) with kind 'c' or 'a'."""
    sign = 1
    for kind, k in reversed(ops):
        occ, s = (_apply_create if kind == "c" else _apply_annihilate)(occ, k)
        if occ is None:
            return None, 0
        sign *= s
    return occ, sign


def occ_vector(det, m):
    return tuple(((det.alpha >> p) & 1) for p in range(m)) + tuple(((det.beta >> p) & 1) for p in range(m))


def det_from_occ(occ, m):
    a = sum(1 << p for p in range(m) if occ[p])
    b = sum(1 << p for p in range(m) if occ[m + p])
    return Determinant(a, b)


def brute_force_hamiltonian(ints, dets):
    """Dense H over ``dets`` from explicit second-quantized operator application."""
    m = ints.m
    index = {occ_vector(d, m): i for i, d in enumerate(dets)}
    n = len(dets)
    H = np.zeros((n, n))
    h1 = ints.one_body
    eri = ints.eri
    so = [(p, s) for s in (0, 1) for p in range(m)]  # spin-orbital k -> (spatial, spin)
    nso = 2 * m
    for j, d in enumerate(dets):
        occ = occ_vector(d, m)
        H[j, j] += ints.core_energy
        for P in range(nso):
            for Q in range(nso):
                (p, sp_), (q, sq) = so[P], so[Q]
                if sp_ != sq or h1[p, q] == 0.0:
                    continue
                out, sign = _apply_string(occ, [("c", P), ("a", Q)])
                if out is not None and out in index:
                    H[index[out], j] += sign * h1[p, q]
        # 1/2 sum <PQ|RS> a+_P a+_Q a_S a_R, <PQ|RS> = (pr|qs) d(sP,sR) d(sQ,sS)
        for P in range(nso):
            for Q in range(nso):
                for R in range(nso):
                    if so[P][1] != so[R][1]:
                        continue
                    for S in range(nso):
                        if so[Q][1] != so[S][1]:
                            continue
                        v = eri[so[P][0], so[R][0], so[Q][0], so[S][0]]
                        if v == 0.0:
                            continue
                        out, sign = _apply_string(occ, [("c", P), ("c", Q), ("a", S), ("a", R)])
                        if out is not None and out in index:
                            H[index[out], j] += 0.5 * sign * v
    return H


def sector(m, n_up, n_down):
    alphas = sorted(sum(1 << p for p in c) for c in itertools.combinations(range(m), n_up))
    betas = sorted(sum(1 << p for p in c) for c in itertools.combinations(range(m), n_down))
    return [Determinant(a, b) for a in alphas for b in betas]


def dense_lowest(H):
    w, v = np.linalg.eigh(H)
    return w[0], v[:, 0]
