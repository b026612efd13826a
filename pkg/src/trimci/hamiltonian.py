"""Binds an :class:`IntegralTable` to the compiled determinant kernels."""

from __future__ import annotations

from math import comb

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .determinants import n_words
from .integrals import IntegralTable


class DuplicateDeterminantError(ValueError):
    pass


class KernelTables:
    """Contiguous arrays the kernels need, derived once per integral table."""

    def __init__(self, ints: IntegralTable):
        self.ints = ints
        self.m = ints.m
        self.nw = n_words(ints.m)
        self.n_up, self.n_down = ints.n_up, ints.n_down
        eri = np.ascontiguousarray(ints.eri)
        self.eri = eri
        self.h1 = np.ascontiguousarray(ints.one_body)
        self.jmat = np.ascontiguousarray(np.einsum("ppqq->pq", eri))
        self.kmat = np.ascontiguousarray(np.einsum("pqqp->pq", eri))
        self.ecore = float(ints.core_energy)
        hb = ints.heat_bath_index
        self.hb = hb
        self._tabs = (hb.single_order, hb.single_bound, hb.ss_ptr, hb.ss_r, hb.ss_s, hb.ss_v,
                      hb.os_ptr, hb.os_r, hb.os_s, hb.os_v)
        self.max_conn = self._max_connections()

    def _max_connections(self):
        m, na, nb = self.m, self.n_up, self.n_down
        singles = na * (m - na) + nb * (m - nb)
        hb = self.hb
        longest_ss = int(np.max(np.diff(hb.ss_ptr))) if len(hb.ss_ptr) > 1 else 0
        longest_os = int(np.max(np.diff(hb.os_ptr))) if len(hb.os_ptr) > 1 else 0
        ss = (min(comb(na, 2) * comb(m - na, 2), comb(na, 2) * longest_ss)
              + min(comb(nb, 2) * comb(m - nb, 2), comb(nb, 2) * longest_ss))
        os_ = min(na * nb * (m - na) * (m - nb), na * nb * longest_os)
        return max(1, singles + ss + os_)

    def mean_connections(self):
        """Rough per-determinant connection count used to pick a build strategy."""
        m, na, nb = self.m, self.n_up, self.n_down
        hb = self.hb
        singles = int(np.count_nonzero(hb.single_bound)) * (na + nb) / max(m, 1)
        n_ss = max(1, m * (m - 1) // 2)
        ss = (comb(na, 2) + comb(nb, 2)) * len(hb.ss_v) / n_ss
        os_ = na * nb * len(hb.os_v) / max(1, m * m)
        return singles + ss + os_

    def check_sector(self, dets):
        if dets.ndim != 2 or dets.shape[1] != 2 * self.nw or dets.dtype != np.uint64:
            raise ValueError(f"expected uint64 rows of width {2 * self.nw}")

    def diagonal(self, dets):
        return K.diagonal(dets, self.m, self.h1, self.jmat, self.kmat, self.ecore)

    def connections(self, row, cutoff=0.0):
        """(rows, signed elements) of every D' coupled to ``row`` above ``cutoff``."""
        buf = np.zeros((self.max_conn, 2 * self.nw), dtype=np.uint64)
        vals = np.zeros(self.max_conn)
        occ_a = np.empty(self.m, dtype=np.int64)
        occ_b = np.empty(self.m, dtype=np.int64)
        ca = np.empty(self.m + 1, dtype=np.int64)
        cb = np.empty(self.m + 1, dtype=np.int64)
        n = K.emit_connections(np.ascontiguousarray(row, dtype=np.uint64), self.nw, self.m,
                               float(cutoff), self.h1, self.eri, *self._tabs, buf, vals,
                               occ_a, occ_b, ca, cb)
        return buf[:n].copy(), vals[:n].copy()

    def pair_element(self, ri, rj):
        occ_a = np.empty(self.m, dtype=np.int64)
        occ_b = np.empty(self.m, dtype=np.int64)
        return K.pair_element(np.ascontiguousarray(ri), np.ascontiguousarray(rj), self.nw,
                              self.m, self.h1, self.eri, self.jmat, self.kmat, self.ecore,
                              occ_a, occ_b)

    def index(self, dets):
        slots, dups = K.index_build(dets)
        if dups:
            raise DuplicateDeterminantError(f"{dups} duplicate determinant(s) in set")
        return slots

    def estimated_nnz(self, dets, slots, sample=256):
        """Off-diagonal nonzeros over ``dets`` extrapolated from a fixed-seed row sample."""
        n = dets.shape[0]
        if n <= sample:
            rows = np.arange(n, dtype=np.int64)
        else:
            rows = np.sort(np.random.default_rng(0).choice(n, sample, replace=False))
        counts = K.count_present(dets, slots, rows, self.m, self.h1, self.eri, *self._tabs,
                                 self.max_conn)
        return float(counts.mean()) * n if len(rows) else 0.0

    def offdiagonal_csr(self, dets, slots=None, method="auto"):
        n = dets.shape[0]
        if method == "auto":
            method = "pairs" if n <= 64 or n < 2 * self.mean_connections() else "generate"
        if method == "pairs":
            indptr, indices, data = K.build_csr_pairs(dets, self.m, self.h1, self.eri,
                                                      self.jmat, self.kmat, self.ecore)
        else:
            if slots is None:
                slots = self.index(dets)
            indptr, indices, data = K.build_csr_generated(dets, slots, self.m, self.h1,
                                                          self.eri, *self._tabs, self.max_conn)
        if n < 2 ** 31 and len(indices) < 2 ** 31:
            indices, indptr = indices.astype(np.int32), indptr.astype(np.int32)
        return sp.csr_matrix((data, indices, indptr), shape=(n, n))

    def matvec(self, dets, slots, x, diag):
        return K.matvec_generated(dets, slots, np.ascontiguousarray(x, dtype=np.float64),
                                  self.m, self.h1, self.eri, *self._tabs, self.max_conn, diag)

    def candidates(self, core, abs_c, theta, slots):
        return K.collect_candidates(core, np.ascontiguousarray(abs_c, dtype=np.float64),
                                    float(theta), slots, self.m, self.h1, self.eri,
                                    *self._tabs, self.max_conn)

    def pt2_numerators(self, core, coeffs, eps, slots):
        return K.pt2_numerators(core, np.ascontiguousarray(coeffs, dtype=np.float64),
                                float(eps), slots, self.m, self.h1, self.eri,
                                *self._tabs, self.max_conn)


_CACHE_ATTR = "_kernel_tables"


def tables_for(ints: IntegralTable) -> KernelTables:
    kt = ints.__dict__.get(_CACHE_ATTR)
    if kt is None:
        kt = KernelTables(ints)
        ints.__dict__[_CACHE_ATTR] = kt
    return kt
