"""Exact diagonalization over a full particle sector (small systems only)."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .determinants import list_to_bits, sector_size, to_array
from .eigensolver import EigenResult, build_projected, davidson_lowest
from .engine import WavefunctionState
from .hamiltonian import tables_for
from .integrals import IntegralTable

DEFAULT_SECTOR_CAP = 2_000_000


class SectorTooLargeError(ValueError):
    def __init__(self, count, cap):
        super().__init__(f"sector holds {count} determinants, above the cap of {cap}; "
                         "use a TrimCI run instead")
        self.count = count
        self.cap = cap


def _strings(m, n):
    out = np.array([list_to_bits(c) for c in combinations(range(m), n)], dtype=object)
    return np.array(sorted(out), dtype=object)


def enumerate_sector(m, n_up, n_down, cap=DEFAULT_SECTOR_CAP):
    """Every determinant of the sector as packed rows, in canonical order."""
    count = sector_size(m, n_up, n_down)
    if count > cap:
        raise SectorTooLargeError(count, cap)
    alphas = _strings(m, n_up)
    betas = _strings(m, n_down)
    a_rows = to_array([(a, 0) for a in alphas], m)
    b_rows = to_array([(0, b) for b in betas], m)
    nw = a_rows.shape[1] // 2
    out = np.empty((count, 2 * nw), dtype=np.uint64)
    # alpha-major: canonical order sorts on alpha first, then beta
    out[:, :nw] = np.repeat(a_rows[:, :nw], len(betas), axis=0)
    out[:, nw:] = np.tile(b_rows[:, nw:], (len(alphas), 1))
    return out


def fci_ground_state(ints: IntegralTable, cap=DEFAULT_SECTOR_CAP, tol=1e-10):
    """Lowest eigenpair over the whole sector; returns ``(dets, EigenResult)``."""
    dets = enumerate_sector(ints.m, ints.n_up, ints.n_down, cap)
    tables_for(ints)
    H = build_projected(dets, ints)
    return dets, davidson_lowest(H, tol=tol)


def fci_state(ints: IntegralTable, cap=DEFAULT_SECTOR_CAP) -> WavefunctionState:
    dets, res = fci_ground_state(ints, cap)
    return WavefunctionState.from_eigen(dets, res.coefficients, res.energy, 0, ints.m)


def fidelity(state: WavefunctionState, reference: WavefunctionState) -> float:
    """|<state|reference>|^2 over the union of supports."""
    if state.dets.shape[1] != reference.dets.shape[1]:
        raise ValueError("states use different determinant widths")
    a = {row.tobytes(): c for row, c in zip(state.dets, state.coeffs)}
    overlap = sum(a[row.tobytes()] * c for row, c in zip(reference.dets, reference.coeffs)
                  if row.tobytes() in a)
    return float(min(1.0, overlap * overlap))


__all__ = ["DEFAULT_SECTOR_CAP", "EigenResult", "SectorTooLargeError", "enumerate_sector",
           "fci_ground_state", "fci_state", "fidelity"]
