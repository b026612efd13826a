"""The expansion/trimming loop.

One iteration takes the current core, expands it along strong Hamiltonian
couplings into a pool, trims the pool in random groups (each diagonalized
together with the core), diagonalizes the surviving set and keeps the
largest-amplitude determinants as the next core.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from . import _kernels as K
from .determinants import (canonical_order, from_array, random_determinants, sector_size,
                           to_array)
from .eigensolver import DavidsonError, build_projected, davidson_lowest
from .hamiltonian import tables_for
from .integrals import IntegralTable

log = logging.getLogger(__name__)

STRATEGIES = ("heat_bath", "uniform", "normalized_uniform")


class ConfigError(ValueError):
    pass


class IterationError(RuntimeError):
    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


class EnsembleError(RuntimeError):
    def __init__(self, failures):
        super().__init__(f"all {len(failures)} ensemble runs failed: "
                         + "; ".join(str(f) for f in failures))
        self.failures = failures


@dataclasses.dataclass
class TrimCIConfig:
    initial_random_count: int = 100
    first_cycle_keep_size: int | None = 10
    pool_core_ratio: float = 10.0
    strategy: str = "heat_bath"
    num_groups: int = 10
    keep_ratio: float | None = 0.1
    # survivors per group = ceil(local_trim_keep_ratio * |core| / num_groups); experimental
    local_trim_keep_ratio: float | None = None
    core_set_ratio: Sequence[float] = (1.0, 1.0, 1.0, 1.1)
    max_final_dets: int = 1000
    num_runs: int = 1
    seed: int = 0
    trim_disable_threshold: int | None = None
    ensemble_iterations: int = 4
    max_iterations: int = 1000
    plateau_tol: float = 1e-9
    plateau_window: int = 3
    theta_initial: float = 1e-3
    davidson_tol: float = 1e-8
    monotone_guard: bool = True
    # add the lowest-diagonal determinant found by single-swap descent to the random start
    seed_reference: bool = False
    workers: int = 1
    log_path: str | None = None

    def __post_init__(self):
        self.core_set_ratio = tuple(float(r) for r in self.core_set_ratio)

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not self.pool_core_ratio > 1:
            raise ConfigError("pool_core_ratio must exceed 1")
        if self.keep_ratio is not None and self.local_trim_keep_ratio is not None:
            raise ConfigError("keep_ratio and local_trim_keep_ratio are mutually exclusive")
        if self.keep_ratio is None and self.local_trim_keep_ratio is None:
            raise ConfigError("one of keep_ratio or local_trim_keep_ratio is required")
        if self.keep_ratio is not None and not 0 < self.keep_ratio <= 1:
            raise ConfigError("keep_ratio must lie in (0, 1]")
        if self.local_trim_keep_ratio is not None and not self.local_trim_keep_ratio > 0:
            raise ConfigError("local_trim_keep_ratio must be positive")
        if not self.core_set_ratio or any(r < 1 for r in self.core_set_ratio):
            raise ConfigError("core_set_ratio entries must all be >= 1")
        if self.num_groups < 1:
            raise ConfigError("num_groups must be >= 1")
        if self.initial_random_count < 1:
            raise ConfigError("initial_random_count must be >= 1")
        if self.first_cycle_keep_size is not None and self.first_cycle_keep_size < 1:
            raise ConfigError("first_cycle_keep_size must be >= 1")
        if self.max_final_dets < 1:
            raise ConfigError("max_final_dets must be >= 1")
        if self.num_runs < 1:
            raise ConfigError("num_runs must be >= 1")
        return self

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["core_set_ratio"] = list(self.core_set_ratio)
        return d


@dataclasses.dataclass
class WavefunctionState:
    """Explicit wavefunction: canonically sorted determinants and unit-norm amplitudes."""

    dets: np.ndarray
    coeffs: np.ndarray
    energy: float
    iteration: int
    m: int

    def __len__(self):
        return self.dets.shape[0]

    def determinants(self):
        return from_array(self.dets)

    @classmethod
    def from_eigen(cls, dets, coeffs, energy, iteration, m):
        order = canonical_order(dets)
        return cls(np.ascontiguousarray(dets[order]), np.asarray(coeffs)[order].copy(),
                   float(energy), iteration, m)

    @classmethod
    def from_determinants(cls, dets, coeffs, m, energy=float("nan"), iteration=0):
        return cls.from_eigen(to_array(dets, m), np.asarray(coeffs, dtype=float), energy,
                              iteration, m)


@dataclasses.dataclass
class IterationRecord:
    iteration: int
    core_size: int
    pool_size: int
    theta: float | None
    energy: float
    wall_time: float

    def to_json(self):
        theta = None if self.theta is None or not math.isfinite(self.theta) else self.theta
        return json.dumps({"iteration": self.iteration, "core_size": self.core_size,
                           "pool_size": self.pool_size, "theta": theta,
                           "energy": self.energy, "wall_time_s": self.wall_time})


def _rng(seed, *stream):
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *stream])


def _top_k(abs_c, k):
    """Indices of the k largest |c|; rows are canonically sorted so index breaks ties."""
    order = np.lexsort((np.arange(len(abs_c)), -abs_c))
    return np.sort(order[:k])


# -- expansion ---------------------------------------------------------------

def _pool_from(core_dets, cand, chosen):
    pool = np.concatenate([core_dets, cand[chosen]]) if len(chosen) else core_dets.copy()
    return np.ascontiguousarray(pool[canonical_order(pool)])


def expand(core: WavefunctionState, ints: IntegralTable, target_pool_size, strategy="heat_bath",
           seed=0, theta=1e-3, max_adjust=30):
    """Grow ``core`` into a pool of roughly ``target_pool_size`` determinants.

    A determinant enters when |H_ij c_j| > theta for at least one core member
    j. theta is halved/doubled from its starting value, then bisected once the
    acceptance band [0.8, 1.5] * target is bracketed; after ``max_adjust``
    steps the closest achievable size wins. Returns ``(pool, theta_used)``.
    """
    kt = tables_for(ints)
    n_core = len(core)
    slots = kt.index(core.dets)
    abs_c = np.abs(core.coeffs)
    if strategy != "heat_bath":
        return _expand_sampled(core, kt, slots, abs_c, target_pool_size, strategy, seed)

    lo, hi = 0.8 * target_pool_size, 1.5 * target_pool_size
    theta = float(theta) if theta and math.isfinite(theta) and theta > 0 else 1e-3
    theta_gen = theta
    cand, scores = kt.candidates(core.dets, abs_c, theta_gen, slots)
    if len(scores) == 0 and kt.candidates(core.dets, abs_c, 0.0, slots)[0].shape[0] == 0:
        return core.dets.copy(), math.inf

    too_small = None  # largest theta known to give too small a pool
    too_big = None    # smallest theta known to give too big a pool
    best = None
    for step in range(max_adjust + 1):
        if theta < theta_gen:
            cand, scores = kt.candidates(core.dets, abs_c, theta, slots)
            theta_gen = theta
        size = n_core + int(np.count_nonzero(scores > theta))
        key = (abs(size - target_pool_size), -size)
        if best is None or key < best[0]:
            best = (key, theta)
        if lo <= size <= hi or step == max_adjust:
            break
        if size > hi:
            too_big = theta if too_big is None else min(too_big, theta)
        else:
            too_small = theta if too_small is None else max(too_small, theta)
        if too_big is not None and too_small is not None:
            theta = math.sqrt(too_big * too_small)
        elif too_big is not None:
            theta *= 2.0
        else:
            theta *= 0.5
    if lo <= size <= hi or too_big is None:
        theta = theta if lo <= size <= hi else best[1]
        if theta < theta_gen:
            cand, scores = kt.candidates(core.dets, abs_c, theta, slots)
        chosen = np.flatnonzero(scores > theta)
        return _pool_from(core.dets, cand, chosen), theta
    # tied scores straddle the band: keep everything above the tier and draw
    # the rest of the target from it at random
    if too_big < theta_gen:
        cand, scores = kt.candidates(core.dets, abs_c, too_big, slots)
    upper = math.inf if too_small is None else too_small
    sure = np.flatnonzero(scores > upper)
    tier = np.flatnonzero((scores > too_big) & (scores <= upper))
    need = max(0, min(int(target_pool_size) - n_core - len(sure), len(tier)))
    tier = tier[canonical_order(cand[tier])] if len(tier) else tier
    extra = _rng(seed, 3).choice(tier, size=need, replace=False) if need else tier[:0]
    chosen = np.sort(np.concatenate([sure, extra]))
    return _pool_from(core.dets, cand, chosen), too_big


def _expand_sampled(core, kt, slots, abs_c, target, strategy, seed):
    # experimental: random selection among all coupled determinants
    cand, scores = kt.candidates(core.dets, abs_c, 0.0, slots)
    order = canonical_order(cand)
    cand, scores = cand[order], scores[order]
    want = int(min(max(target - len(core), 0), len(cand)))
    rng = _rng(seed, 7)
    if strategy == "uniform":
        chosen = rng.choice(len(cand), size=want, replace=False)
    else:
        p = scores / scores.sum() if scores.sum() > 0 else None
        chosen = rng.choice(len(cand), size=want, replace=False, p=p)
    return _pool_from(core.dets, cand, np.sort(chosen)), 0.0


# -- trimming ----------------------------------------------------------------

def _positions(kt, dets, queries):
    slots = kt.index(dets)
    return K.index_lookup(slots, dets, np.ascontiguousarray(queries))


def _group_survivors(H_pool, ints, pool, core_pos, group, keep, guess_core, tol):
    idx = np.concatenate([core_pos, group])
    if H_pool is not None and H_pool.explicit:
        H = H_pool.submatrix(idx)
    else:
        H = build_projected(pool[idx], ints)
    guess = np.concatenate([guess_core, np.zeros(len(group))])
    res = davidson_lowest(H, guess=guess if np.any(guess) else None, tol=tol)
    c_new = np.abs(res.coefficients[len(core_pos):])
    # group rows are pool indices, so ordering by them is canonical order
    order = np.lexsort((group, -c_new))
    return group[order[:keep]]


def _local_trim_idx(pool, core, ints, num_groups, keep_ratio, seed, local_trim_keep_ratio=None,
                    H_pool=None, tol=1e-8, workers=1):
    kt = tables_for(ints)
    core_pos = _positions(kt, pool, core.dets)
    if np.any(core_pos < 0):
        raise ValueError("pool must contain every core determinant")
    is_core = np.zeros(len(pool), dtype=bool)
    is_core[core_pos] = True
    new = np.flatnonzero(~is_core)
    if len(new) == 0:
        return np.sort(core_pos)
    if keep_ratio is not None and not 0 < keep_ratio <= 1:
        raise ValueError("keep_ratio must lie in (0, 1]")
    perm = _rng(seed, 1).permutation(len(new))
    groups = [new[g] for g in np.array_split(perm, num_groups) if len(g)]
    if keep_ratio == 1 and local_trim_keep_ratio is None:
        return np.arange(len(pool))
    guess_core = core.coeffs

    def keep_for(g):
        if local_trim_keep_ratio is not None:
            return math.ceil(local_trim_keep_ratio * len(core) / num_groups)
        return math.ceil(keep_ratio * len(g))

    def work(g):
        return _group_survivors(H_pool, ints, pool, core_pos, g, keep_for(g), guess_core, tol)

    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            survivors = list(ex.map(work, groups))
    else:
        survivors = [work(g) for g in groups]
    return np.sort(np.concatenate([core_pos] + survivors))


def local_trim(pool, core: WavefunctionState, ints, num_groups=10, keep_ratio=0.1, seed=0,
               local_trim_keep_ratio=None, H_pool=None, tol=1e-8, workers=1):
    """Reduced pool: the core plus the strongest new determinants of each random group."""
    idx = _local_trim_idx(pool, core, ints, num_groups, keep_ratio, seed,
                          local_trim_keep_ratio, H_pool, tol, workers)
    return np.ascontiguousarray(pool[idx])


def _warm_vector(kt, dets, warm_start):
    if warm_start is None:
        return None
    if isinstance(warm_start, WavefunctionState):
        pos = _positions(kt, dets, warm_start.dets)
        v = np.zeros(len(dets))
        ok = pos >= 0
        v[pos[ok]] = warm_start.coeffs[ok]
        return v if np.any(v) else None
    v = np.asarray(warm_start, dtype=float)
    return v if np.any(v) else None


def _global_trim(reduced, ints, k_b, warm_start=None, H=None, tol=1e-8, iteration=0, m=None):
    kt = tables_for(ints)
    m = ints.m if m is None else m
    if H is None:
        H = build_projected(reduced, ints)
    res = davidson_lowest(H, guess=_warm_vector(kt, reduced, warm_start), tol=tol)
    if k_b >= len(reduced):
        state = WavefunctionState.from_eigen(reduced, res.coefficients, res.energy, iteration, m)
        return state, res, H
    keep = _top_k(np.abs(res.coefficients), k_b)
    sub = H.submatrix(keep) if H.explicit else build_projected(reduced[keep], ints)
    guess = res.coefficients[keep]
    res2 = davidson_lowest(sub, guess=guess, tol=tol)
    state = WavefunctionState.from_eigen(reduced[keep], res2.coefficients, res2.energy,
                                         iteration, m)
    return state, res, H


def global_trim(reduced, ints, k_b, warm_start=None, tol=1e-8, iteration=0):
    """Diagonalize the reduced pool and re-solve on its top-k_b determinants."""
    if len(reduced) == 0:
        raise ValueError("reduced pool is empty")
    state, _, _ = _global_trim(np.ascontiguousarray(reduced), ints, k_b, warm_start, tol=tol,
                               iteration=iteration)
    return state


# -- driver ------------------------------------------------------------------

def reference_determinant(ints: IntegralTable) -> np.ndarray:
    """Aufbau filling on the one-body diagonal, then single swaps while H_ii drops."""
    kt = tables_for(ints)
    order = np.argsort(np.diag(kt.h1), kind="stable")
    alpha, beta = sorted(order[:ints.n_up]), sorted(order[:ints.n_down])
    best = to_array([(sum(1 << int(p) for p in alpha), sum(1 << int(p) for p in beta))], ints.m)[0]
    e_best = float(kt.diagonal(best[None, :])[0])
    while True:
        rows, _ = kt.connections(best)
        if len(rows) == 0:
            return best
        single = _popcount_rows(np.bitwise_xor(rows, best[None, :])) == 2
        rows = rows[single]
        if len(rows) == 0:
            return best
        rows = rows[canonical_order(rows)]
        diag = kt.diagonal(rows)
        k = int(np.argmin(diag))
        if diag[k] >= e_best - 1e-12:
            return best
        best, e_best = rows[k].copy(), float(diag[k])


def _popcount_rows(arr):
    return np.array([sum(bin(int(w)).count("1") for w in r) for r in arr], dtype=np.int64)


class TrimCIRun:
    """Stateful single run; :meth:`step` performs one expansion/trimming iteration."""

    def __init__(self, config: TrimCIConfig, ints: IntegralTable, seed=None, log_stream=None):
        self.config = config.validate()
        self.ints = ints
        self.seed = config.seed if seed is None else seed
        self.kt = tables_for(ints)
        self.records: list[IterationRecord] = []
        self.state: WavefunctionState | None = None
        self.theta = config.theta_initial
        self.done = False
        self.stop_reason = None
        self.iteration = 0
        self._log_stream = log_stream
        self._t0 = time.perf_counter()

    def _record(self, pool_size, theta):
        rec = IterationRecord(self.iteration, len(self.state), int(pool_size), theta,
                              self.state.energy, time.perf_counter() - self._t0)
        self.records.append(rec)
        if self._log_stream is not None:
            self._log_stream.write(rec.to_json() + "\n")
            self._log_stream.flush()
        log.info("iter %d core %d pool %d theta %s E %.10f", rec.iteration, rec.core_size,
                 rec.pool_size, rec.theta, rec.energy)
        return rec

    def initialize(self):
        cfg, ints = self.config, self.ints
        total = sector_size(ints.m, ints.n_up, ints.n_down)
        count = min(cfg.initial_random_count, total)
        dets = random_determinants(ints.m, ints.n_up, ints.n_down, count,
                                   rng=_rng(self.seed, 0))
        arr = to_array(dets, ints.m)
        if cfg.seed_reference:
            ref = reference_determinant(ints)
            if not np.any(np.all(arr == ref, axis=1)):
                arr = np.vstack([arr, ref[None, :]])
        arr = np.ascontiguousarray(arr[canonical_order(arr)])
        keep = cfg.first_cycle_keep_size
        keep = len(arr) if keep is None else min(keep, len(arr), cfg.max_final_dets)
        self.state, _, _ = _global_trim(arr, ints, keep, tol=cfg.davidson_tol, iteration=0)
        return self._record(len(arr), None)

    def _scheduled(self):
        ratios = self.config.core_set_ratio
        return ratios[(self.iteration - 1) % len(ratios)]

    def step(self):
        if self.state is None:
            return self.initialize()
        cfg, ints = self.config, self.ints
        self.iteration += 1
        n_core = len(self.state)
        ratio = self._scheduled()
        if ratio > 1 and n_core >= cfg.max_final_dets:
            self.iteration -= 1
            self.done, self.stop_reason = True, "max_final_dets"
            return None
        k_b = int(round(ratio * n_core))
        if ratio > 1:
            k_b = max(k_b, n_core + 1)
        k_b = min(k_b, cfg.max_final_dets)
        try:
            rec = self._iterate(n_core, k_b)
        except (DavidsonError, ValueError, MemoryError) as exc:
            raise IterationError(self.iteration, exc) from exc
        self._check_plateau()
        if self.iteration >= cfg.max_iterations and not self.done:
            self.done, self.stop_reason = True, "max_iterations"
        return rec

    def _iterate(self, n_core, k_b):
        cfg, ints, prev = self.config, self.ints, self.state
        target = int(math.ceil(cfg.pool_core_ratio * n_core))
        pool, theta = expand(prev, ints, target, cfg.strategy,
                             seed=int(_rng(self.seed, 5, self.iteration).integers(2 ** 31)),
                             theta=self.theta)
        if math.isfinite(theta) and theta > 0:
            self.theta = theta
        H_pool = build_projected(pool, ints)
        skip_trim = cfg.trim_disable_threshold is not None and n_core >= cfg.trim_disable_threshold
        if skip_trim:
            keep_idx = np.arange(len(pool))
        else:
            keep_idx = _local_trim_idx(
                pool, prev, ints, cfg.num_groups, cfg.keep_ratio,
                seed=int(_rng(self.seed, 2, self.iteration).integers(2 ** 31)),
                local_trim_keep_ratio=cfg.local_trim_keep_ratio, H_pool=H_pool,
                tol=cfg.davidson_tol, workers=cfg.workers)
        reduced = np.ascontiguousarray(pool[keep_idx])
        H_red = H_pool.submatrix(keep_idx) if H_pool.explicit and len(keep_idx) < len(pool) \
            else (H_pool if len(keep_idx) == len(pool) else None)
        state, res, H_red = _global_trim(reduced, ints, k_b, warm_start=prev, H=H_red,
                                         tol=cfg.davidson_tol, iteration=self.iteration,
                                         m=ints.m)
        if (cfg.monotone_guard and self.iteration >= 2
                and state.energy > prev.energy + 1e-10):
            state = self._guarded(reduced, res, H_red, prev, k_b)
        self.state = state
        return self._record(len(pool), theta)

    def _guarded(self, reduced, res, H_red, prev, k_b):
        # keep the previous core and fill the remaining slots by amplitude
        kt = self.kt
        pos = _positions(kt, reduced, prev.dets)
        is_prev = np.zeros(len(reduced), dtype=bool)
        is_prev[pos] = True
        others = np.flatnonzero(~is_prev)
        extra = max(k_b - len(prev), 0)
        ranked = others[np.lexsort((others, -np.abs(res.coefficients[others])))][:extra]
        keep = np.sort(np.concatenate([pos, ranked]))
        sub = H_red.submatrix(keep) if H_red.explicit else build_projected(reduced[keep],
                                                                          self.ints)
        out = davidson_lowest(sub, guess=_warm_vector(kt, reduced[keep], prev),
                              tol=self.config.davidson_tol)
        return WavefunctionState.from_eigen(reduced[keep], out.coefficients, out.energy,
                                            self.iteration, self.ints.m)

    def _check_plateau(self):
        cfg = self.config
        w = max(cfg.plateau_window, len(cfg.core_set_ratio))
        recs = self.records[1:]
        if len(recs) < w + 1:
            return
        window = recs[-(w + 1):]
        if len({r.core_size for r in window}) == 1 and \
                window[0].energy - window[-1].energy < cfg.plateau_tol:
            self.done, self.stop_reason = True, "plateau"

    def run(self, max_steps=None):
        if self.state is None:
            self.initialize()
        steps = 0
        while not self.done and (max_steps is None or steps < max_steps):
            self.step()
            steps += 1
        return self.state, self.records


def _open_log(config):
    return open(config.log_path, "w") if config.log_path else None


def run(config: TrimCIConfig, ints: IntegralTable):
    """Single TrimCI run; returns ``(final_state, records)``."""
    config.validate()
    stream = _open_log(config)
    try:
        return TrimCIRun(config, ints, log_stream=stream).run()
    finally:
        if stream is not None:
            stream.close()


@dataclasses.dataclass
class RunSummary:
    run_index: int
    seed: int
    energy: float
    core_size: int
    iterations: int
    error: str | None = None


def ensemble_run(config: TrimCIConfig, ints: IntegralTable):
    """Independent runs (seed + index) for a few iterations; the best one continues.

    Returns ``(state, records, summaries)``; ties go to the lower run index.
    """
    config.validate()
    if config.num_runs < 2:
        raise ConfigError("ensemble_run needs num_runs >= 2")
    runs, summaries, failures = [], [], []
    for i in range(config.num_runs):
        r = TrimCIRun(config, ints, seed=config.seed + i)
        try:
            r.run(max_steps=config.ensemble_iterations)
            summaries.append(RunSummary(i, r.seed, r.state.energy, len(r.state), r.iteration))
            runs.append(r)
        except (IterationError, ValueError) as exc:
            failures.append(exc)
            summaries.append(RunSummary(i, config.seed + i, math.nan, 0, r.iteration, str(exc)))
            runs.append(None)
    ok = [i for i, r in enumerate(runs) if r is not None]
    if not ok:
        raise EnsembleError(failures)
    best = min(ok, key=lambda i: (runs[i].state.energy, i))
    chosen = runs[best]
    stream = _open_log(config)
    try:
        if stream is not None:
            for rec in chosen.records:
                stream.write(rec.to_json() + "\n")
            chosen._log_stream = stream
        chosen.run()
    finally:
        if stream is not None:
            stream.close()
        chosen._log_stream = None
    return chosen.state, chosen.records, summaries
