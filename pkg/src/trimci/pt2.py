"""Second-order Epstein-Nesbet correction and linear extrapolation."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .determinants import from_array
from .engine import WavefunctionState
from .hamiltonian import tables_for
from .integrals import IntegralTable


class NearDegeneracyError(ArithmeticError):
    def __init__(self, det, gap):
        super().__init__(f"external determinant {det} has E_var - H_aa = {gap:.3e}")
        self.det = det
        self.gap = gap


class DegenerateFitError(ValueError):
    pass


@dataclasses.dataclass
class PT2Result:
    e_var: float
    e_per: float
    epsilon2: float
    n_external: int
    # number of external determinants with a positive contribution (E_var above H_aa)
    n_positive: int = 0

    @property
    def e_tot(self):
        return self.e_var + self.e_per


def pt2_correction(state: WavefunctionState, ints: IntegralTable, epsilon2=1e-6,
                   denominator="epstein_nesbet") -> PT2Result:
    """E_per = sum_a (sum_j H_aj c_j)^2 / (E_var - H_aa) over external determinants.

    Only contributions with |H_aj c_j| > epsilon2 are kept; every parent's
    contribution to a given external determinant is summed before squaring.
    ``denominator="moller_plesset"`` swaps H_aa for the diagonal one-body
    orbital-energy difference (experimental).
    """
    if denominator not in ("epstein_nesbet", "moller_plesset"):
        raise ValueError(f"unknown denominator {denominator!r}")
    e_var = float(state.energy)
    if not math.isfinite(epsilon2):
        return PT2Result(e_var, 0.0, epsilon2, 0)
    kt = tables_for(ints)
    slots = kt.index(state.dets)
    rows, num = kt.pt2_numerators(state.dets, state.coeffs, epsilon2, slots)
    if len(rows) == 0:
        return PT2Result(e_var, 0.0, epsilon2, 0)
    if denominator == "epstein_nesbet":
        haa = kt.diagonal(rows)
        gap = e_var - haa
    else:
        gap = _mp_gaps(kt, state, rows)
    bad = np.flatnonzero(np.abs(gap) < 1e-12)
    if len(bad):
        det = from_array(rows[bad[:1]])[0]
        raise NearDegeneracyError(det, float(gap[bad[0]]))
    # fixed-order reduction keeps the sum bitwise reproducible
    order = np.lexsort(rows.T[::-1])
    terms = num[order] ** 2 / gap[order]
    return PT2Result(e_var, float(math.fsum(terms)), epsilon2, len(rows),
                     int(np.count_nonzero(gap > 0)))


def _mp_gaps(kt, state, rows):
    # orbital energies from the one-body diagonal; reference is the top determinant
    eps = np.diag(kt.h1)
    ref = state.dets[int(np.argmax(np.abs(state.coeffs)))]

    def orbital_sum(r):
        tot = 0.0
        half = len(r) // 2
        for w, word in enumerate(r):
            base = (w % half) * 64
            x = int(word)
            while x:
                low = x & -x
                tot += eps[base + low.bit_length() - 1]
                x ^= low
        return tot

    e_ref = orbital_sum(ref)
    return np.array([e_ref - orbital_sum(r) for r in rows])


@dataclasses.dataclass
class ExtrapolationResult:
    points: list
    slope: float
    intercept: float
    r_squared: float


def extrapolate(points, weighted=False) -> ExtrapolationResult:
    """Least-squares line of E_var + E_per against -E_per; the intercept is the estimate.

    ``points`` are ``(e_var, e_per)`` pairs. ``weighted`` weights each point by
    1/E_per^2, favouring the most converged ones.
    """
    pts = [(float(v), float(p)) for v, p in points]
    if len(pts) < 2:
        raise DegenerateFitError("extrapolation needs at least two points")
    x = np.array([-p for _, p in pts])
    y = np.array([v + p for v, p in pts])
    if np.ptp(x) == 0:
        raise DegenerateFitError("all points share the same E_per")
    w = np.ones_like(x)
    if weighted:
        w = 1.0 / np.maximum(x, 1e-300) ** 2
    A = np.column_stack([np.ones_like(x), x]) * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(A, y * np.sqrt(w), rcond=None)
    intercept, slope = float(coef[0]), float(coef[1])
    fit = intercept + slope * x
    ybar = np.average(y, weights=w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    ss_res = float(np.sum(w * (y - fit) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return ExtrapolationResult(list(zip(x.tolist(), y.tolist())), slope, intercept, r2)
