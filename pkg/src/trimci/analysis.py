"""Wavefunction statistics: Hamming profiles, rank power laws, complexity, MDS."""

from __future__ import annotations

import csv
import dataclasses
import math

import numpy as np

from .determinants import Determinant, from_array
from .engine import WavefunctionState


class FitError(ValueError):
    pass


def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return ((x * np.uint64(0x0101010101010101)) >> np.uint64(56)).astype(np.int64)


def hamming_to(dets, ref_row):
    """Spin-orbital Hamming distance of every packed row to ``ref_row``."""
    return _popcount64(np.bitwise_xor(dets, ref_row[None, :])).sum(axis=1)


def _top_index(coeffs):
    # rows are canonical, so argmax's first hit is the canonical tie-break
    return int(np.argmax(np.abs(coeffs)))


@dataclasses.dataclass
class HammingDistribution:
    reference: Determinant
    weights: dict

    def rows(self):
        return sorted(self.weights.items())


def hamming_distribution(state: WavefunctionState) -> HammingDistribution:
    """Weight sum_i |c_i|^2 per Hamming distance from the largest-|c| determinant."""
    if len(state) == 0:
        raise ValueError("empty wavefunction")
    k = _top_index(state.coeffs)
    dist = hamming_to(state.dets, state.dets[k])
    w = np.bincount(dist, weights=state.coeffs ** 2)
    weights = {int(d): float(v) for d, v in enumerate(w) if v > 0 or d == 0}
    return HammingDistribution(from_array(state.dets[k:k + 1])[0], weights)


def cumulative_weight(coeffs):
    """F(r) over ranks 1..R, sorted by descending |c|^2."""
    p = np.sort(np.asarray(coeffs, dtype=float) ** 2)[::-1]
    return np.cumsum(p)


@dataclasses.dataclass
class PowerLawFit:
    alpha: float
    r_squared: float
    fit_range: tuple
    n_points: int

    @property
    def sigma(self):
        return 1.0 / self.alpha if self.alpha != 0 else math.inf


def _ols(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0:
        raise FitError("degenerate abscissae")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return float(slope), float(intercept), r2


def power_law_fit(coeffs, fit_lo_frac=0.01, fit_hi_frac=0.5) -> PowerLawFit:
    R = len(coeffs)
    if R < 10:
        raise FitError(f"need at least 10 determinants, got {R}")
    if not 0 <= fit_lo_frac < fit_hi_frac <= 1:
        raise FitError("fit fractions must satisfy 0 <= lo < hi <= 1")
    tail = 1.0 - cumulative_weight(coeffs)
    ranks = np.arange(1, R + 1)
    lo = max(1, int(math.ceil(fit_lo_frac * R)))
    hi = max(lo, int(math.floor(fit_hi_frac * R)))
    sel = (ranks >= lo) & (ranks <= hi) & (tail > 1e-14)
    if np.count_nonzero(sel) < 3:
        raise FitError("fewer than 3 usable ranks in the fit window")
    slope, _, r2 = _ols(np.log10(ranks[sel]), np.log10(tail[sel]))
    return PowerLawFit(-slope, r2, (lo, hi), int(np.count_nonzero(sel)))


def cumulative_and_fit(state: WavefunctionState, fit_lo_frac=0.01, fit_hi_frac=0.5):
    """Rank power law 1 - F(r) ~ r^-alpha fitted over the middle of the rank range."""
    return power_law_fit(state.coeffs, fit_lo_frac, fit_hi_frac)


@dataclasses.dataclass
class ComplexityReport:
    epsilon: float
    r_alg: float
    sigma_a: float
    log10_r: float

    @property
    def k(self):
        return math.log10(1.0 / self.epsilon)

    def s_a_vs(self, sigma_0):
        """Algorithmic entropy relative to an intrinsic complexity ``sigma_0``."""
        return self.k * (self.sigma_a - sigma_0)


def complexity_report(epsilon, r_alg) -> ComplexityReport:
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if r_alg < 1:
        raise ValueError("r_alg must be >= 1")
    log_r = math.log10(r_alg)
    return ComplexityReport(epsilon, r_alg, log_r / math.log10(1.0 / epsilon), log_r)


def scaling_fit(points):
    """Least squares of log10(fraction) against lattice size; ``(slope, intercept, r2)``."""
    pts = list(points)
    if len(pts) < 2:
        raise FitError("need at least two points")
    n = np.array([p[0] for p in pts], dtype=float)
    r = np.array([p[1] for p in pts], dtype=float)
    if np.any(r <= 0) or np.any(r > 1):
        raise FitError("fractions must lie in (0, 1]")
    return _ols(n, np.log10(r))


@dataclasses.dataclass
class MDSEmbedding:
    points: np.ndarray
    stress: float
    selected: np.ndarray
    eigenvalues: np.ndarray


def classical_mds(dist, dims=2):
    """Torgerson scaling of a distance matrix; returns (coords, eigenvalues, stress)."""
    D2 = np.asarray(dist, dtype=float) ** 2
    n = D2.shape[0]
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ D2 @ J
    w, v = np.linalg.eigh(B)
    order = np.argsort(w)[::-1][:dims]
    lam = np.clip(w[order], 0.0, None)
    X = v[:, order] * np.sqrt(lam)
    diff = X[:, None, :] - X[None, :, :]
    rec = np.sqrt((diff ** 2).sum(axis=2))
    denom = np.linalg.norm(dist)
    stress = float(np.linalg.norm(rec - dist) / denom) if denom > 0 else 0.0
    return X, w[order], stress


def mds_embedding(state: WavefunctionState, k_max=2000) -> MDSEmbedding:
    """2-D classical MDS of the top-``k_max`` determinants under Hamming distance.

    Axes are flipped so the largest-|c| determinant has non-negative coordinates.
    """
    n = len(state)
    if n < 3:
        raise ValueError("MDS needs at least 3 determinants")
    order = np.lexsort((np.arange(n), -np.abs(state.coeffs)))
    sel = order[:min(k_max, n)]
    rows = state.dets[sel]
    dist = np.stack([hamming_to(rows, rows[i]) for i in range(len(rows))]).astype(float)
    if not np.any(dist):
        raise ValueError("all selected determinants coincide")
    X, lam, stress = classical_mds(dist)
    for ax in range(X.shape[1]):
        if X[0, ax] < 0:
            X[:, ax] = -X[:, ax]
    X[np.abs(X) < 1e-300] = 0.0
    return MDSEmbedding(X, stress, sel, lam)


# -- CSV export --------------------------------------------------------------

def write_hamming_csv(dist: HammingDistribution, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "weight"])
        for d, v in dist.rows():
            w.writerow([d, repr(v)])


def write_cumulative_csv(coeffs, path):
    tail = 1.0 - cumulative_weight(coeffs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "one_minus_F"])
        for r, v in enumerate(tail, start=1):
            w.writerow([r, repr(float(max(v, 0.0)))])


def write_mds_csv(state: WavefunctionState, emb: MDSEmbedding, path):
    dets = from_array(state.dets[emb.selected])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "alpha_bits_hex", "beta_bits_hex", "coeff", "x", "y"])
        for i, (d, idx) in enumerate(zip(dets, emb.selected)):
            w.writerow([int(idx), f"{d.alpha:x}", f"{d.beta:x}", repr(float(state.coeffs[idx])),
                        repr(float(emb.points[i, 0])), repr(float(emb.points[i, 1]))])
