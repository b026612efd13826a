"""Slater determinants as pairs of occupation bitmasks.

A determinant is stored as two Python integers, one per spin channel, with bit
``p`` set when spatial orbital ``p`` is occupied. Spin-orbitals are ordered
all-alpha (ascending) then all-beta (ascending); every fermionic sign in the
package follows from that ordering.

The functions here are the readable reference path. The bulk kernels used by
the solver live in :mod:`trimci._kernels` and operate on ``uint64`` word arrays
produced by :func:`to_array`.
"""

from __future__ import annotations

import dataclasses
from typing import Iterable, NamedTuple, Sequence

import numpy as np

MAX_ORBITALS = 128
WORD_BITS = 64

DIAGONAL, SINGLE, DOUBLE = "diagonal", "single", "double"
AA, BB, AB = "aa", "bb", "ab"


class Determinant(NamedTuple):
    alpha: int
    beta: int

    def occupied(self, m: int) -> tuple[list[int], list[int]]:
        return bits_to_list(self.alpha, m), bits_to_list(self.beta, m)

    def swap_spins(self) -> "Determinant":
        return Determinant(self.beta, self.alpha)

    def __repr__(self):
        return f"Determinant(alpha={self.alpha:#x}, beta={self.beta:#x})"


@dataclasses.dataclass(frozen=True)
class Excitation:
    """Classified difference between two determinants.

    ``holes`` are the orbitals vacated in the ket, ``particles`` the ones filled
    in the bra. For ``ab`` doubles the first entry is the alpha orbital.
    """

    kind: str
    spin_channel: str | None = None
    holes: tuple[int, ...] = ()
    particles: tuple[int, ...] = ()
    phase: int = 1

    @property
    def degree(self) -> int:
        return len(self.holes)


TOO_FAR = None


def popcount(x: int) -> int:
    return bin(x).count("1")


def bits_to_list(x: int, m: int | None = None) -> list[int]:
    out = []
    p = 0
    while x:
        if x & 1:
            out.append(p)
        x >>= 1
        p += 1
    if m is not None and out and out[-1] >= m:
        raise ValueError(f"bit {out[-1]} set beyond orbital count {m}")
    return out


def list_to_bits(orbs: Iterable[int]) -> int:
    x = 0
    for p in orbs:
        x |= 1 << p
    return x


def _below(x: int, p: int) -> int:
    return popcount(x & ((1 << p) - 1))


def hamming_distance(d1: Determinant, d2: Determinant) -> int:
    """Number of spin-orbitals whose occupation differs (a single has distance 2)."""
    return popcount(d1.alpha ^ d2.alpha) + popcount(d1.beta ^ d2.beta)


def _move_sign(occ: int, p: int, r: int) -> int:
    # sign of a^dag_r a_p acting on occ (p occupied, r empty)
    n = _below(occ, p) + _below(occ, r) - (1 if p < r else 0)
    return -1 if n & 1 else 1


def _double_same_sign(occ: int, p: int, q: int, r: int, s: int) -> int:
    # sign of a^dag_r a^dag_s a_q a_p with p < q, r < s
    n = (_below(occ, p) + _below(occ, q) - 1
         + _below(occ, s) - (p < s) - (q < s)
         + _below(occ, r) - (p < r) - (q < r))
    return -1 if n & 1 else 1


def excitation_between(d1: Determinant, d2: Determinant) -> Excitation | None:
    """Excitation taking ``d1`` (ket) to ``d2`` (bra), or ``None`` beyond doubles."""
    xa = d1.alpha ^ d2.alpha
    xb = d1.beta ^ d2.beta
    na, nb = popcount(xa), popcount(xb)
    if na + nb > 4:
        return TOO_FAR
    if na + nb == 0:
        return Excitation(DIAGONAL)
    ha, pa = bits_to_list(xa & d1.alpha), bits_to_list(xa & d2.alpha)
    hb, pb = bits_to_list(xb & d1.beta), bits_to_list(xb & d2.beta)
    if len(ha) != len(pa) or len(hb) != len(pb):
        raise ValueError("determinants belong to different particle-number sectors")
    if na == 2 and nb == 0:
        return Excitation(SINGLE, AA, (ha[0],), (pa[0],), _move_sign(d1.alpha, ha[0], pa[0]))
    if nb == 2 and na == 0:
        return Excitation(SINGLE, BB, (hb[0],), (pb[0],), _move_sign(d1.beta, hb[0], pb[0]))
    if na == 4:
        return Excitation(DOUBLE, AA, tuple(ha), tuple(pa), _double_same_sign(d1.alpha, *ha, *pa))
    if nb == 4:
        return Excitation(DOUBLE, BB, tuple(hb), tuple(pb), _double_same_sign(d1.beta, *hb, *pb))
    phase = _move_sign(d1.alpha, ha[0], pa[0]) * _move_sign(d1.beta, hb[0], pb[0])
    return Excitation(DOUBLE, AB, (ha[0], hb[0]), (pa[0], pb[0]), phase)


def diagonal_element(d: Determinant, ints) -> float:
    m = ints.m
    occ_a, occ_b = d.occupied(m)
    e = ints.core_energy
    for occ in (occ_a, occ_b):
        for i, p in enumerate(occ):
            e += ints.one(p, p)
            for q in occ[i + 1:]:
                e += ints.two(p, p, q, q) - ints.two(p, q, q, p)
    for p in occ_a:
        for q in occ_b:
            e += ints.two(p, p, q, q)
    return e


def matrix_element(d1: Determinant, d2: Determinant, ints) -> float:
    """Slater-Condon matrix element <d2|H|d1> (real, so symmetric in its arguments)."""
    ex = excitation_between(d1, d2)
    if ex is None:
        return 0.0
    if ex.kind == DIAGONAL:
        return diagonal_element(d1, ints)
    m = ints.m
    if ex.kind == SINGLE:
        p, r = ex.holes[0], ex.particles[0]
        same, other = (d1.alpha, d1.beta) if ex.spin_channel == AA else (d1.beta, d1.alpha)
        h = ints.one(p, r)
        for q in bits_to_list(same, m):
            if q != p:
                h += ints.two(p, r, q, q) - ints.two(p, q, q, r)
        for q in bits_to_list(other, m):
            h += ints.two(p, r, q, q)
        return ex.phase * h
    if ex.spin_channel == AB:
        (p, q), (r, s) = ex.holes, ex.particles
        return ex.phase * ints.two(p, r, q, s)
    (p, q), (r, s) = ex.holes, ex.particles
    return ex.phase * (ints.two(p, r, q, s) - ints.two(p, s, q, r))


def sector_size(m: int, n_up: int, n_down: int) -> int:
    from math import comb

    return comb(m, n_up) * comb(m, n_down)


def random_determinants(m: int, n_up: int, n_down: int, count: int, seed=None,
                        rng: np.random.Generator | None = None) -> list[Determinant]:
    """Draw ``count`` distinct determinants uniformly from the (n_up, n_down) sector.

    Each spin string is a Fisher-Yates selection of orbital indices; duplicates
    are redrawn. Deterministic for a fixed seed.
    """
    if not (0 <= n_up <= m and 0 <= n_down <= m):
        raise ValueError(f"cannot place ({n_up}, {n_down}) electrons in {m} orbitals")
    if count < 1:
        raise ValueError("count must be >= 1")
    total = sector_size(m, n_up, n_down)
    if count > total:
        raise ValueError(f"sector holds {total} determinants, {count} requested")
    if rng is None:
        rng = np.random.default_rng(seed)
    seen = set()
    out = []
    while len(out) < count:
        a = list_to_bits(int(i) for i in rng.permutation(m)[:n_up])
        b = list_to_bits(int(i) for i in rng.permutation(m)[:n_down])
        d = Determinant(a, b)
        if d not in seen:
            seen.add(d)
            out.append(d)
    return out


# -- array form -------------------------------------------------------------

def n_words(m: int) -> int:
    if not 0 < m <= MAX_ORBITALS:
        raise ValueError(f"orbital count {m} outside supported range 1..{MAX_ORBITALS}")
    return (m + WORD_BITS - 1) // WORD_BITS


_MASK64 = (1 << 64) - 1


def to_array(dets: Sequence[Determinant], m: int) -> np.ndarray:
    """Pack determinants into a ``(n, 2 * n_words)`` uint64 array.

    Columns are alpha words (low word first) followed by beta words.
    """
    nw = n_words(m)
    out = np.zeros((len(dets), 2 * nw), dtype=np.uint64)
    limit = 1 << m
    for i, (a, b) in enumerate(dets):
        if a >= limit or b >= limit:
            raise ValueError(f"determinant {i} has bits beyond orbital {m - 1}")
        for w in range(nw):
            out[i, w] = (a >> (64 * w)) & _MASK64
            out[i, nw + w] = (b >> (64 * w)) & _MASK64
    return out


def from_array(arr: np.ndarray) -> list[Determinant]:
    nw = arr.shape[1] // 2
    rows = arr.tolist()
    out = []
    for row in rows:
        a = b = 0
        for w in range(nw):
            a |= int(row[w]) << (64 * w)
            b |= int(row[nw + w]) << (64 * w)
        out.append(Determinant(a, b))
    return out


def canonical_order(arr: np.ndarray) -> np.ndarray:
    """Permutation sorting rows lexicographically by (alpha, beta) integer value."""
    nw = arr.shape[1] // 2
    # np.lexsort: last key is primary
    keys = [arr[:, nw + w] for w in range(nw)] + [arr[:, w] for w in range(nw)]
    return np.lexsort(keys)


def swap_spins_array(arr: np.ndarray) -> np.ndarray:
    nw = arr.shape[1] // 2
    return np.ascontiguousarray(np.concatenate([arr[:, nw:], arr[:, :nw]], axis=1))


def row_keys(arr: np.ndarray) -> list[tuple[int, ...]]:
    """Hashable per-row keys (used for set comparisons in analysis and tests)."""
    return [tuple(r) for r in arr.tolist()]
