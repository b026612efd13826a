"""One- and two-electron integrals: FCIDUMP I/O, Hubbard lattices, heat-bath tables.

Two-electron integrals are in chemist notation ``(pq|rs)`` with the real
8-fold permutational symmetry; only the lexicographically smallest index
tuple of each symmetry class is stored.
"""

from __future__ import annotations

import dataclasses
import functools
import gzip
import io
import os
import re
from typing import IO

import numpy as np

from .determinants import MAX_ORBITALS


class FCIDUMPError(ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def canonical_key(p, q, r, s):
    a = (p, q) if p <= q else (q, p)
    b = (r, s) if r <= s else (s, r)
    return a + b if a <= b else b + a


def symmetry_images(p, q, r, s):
    return {(p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
            (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p)}


@dataclasses.dataclass
class HeatBathIndex:
    """Excitation tables sorted by descending coupling magnitude.

    Same-spin doubles (p<q -> r<s) carry ``(pr|qs) - (ps|qr)``; opposite-spin
    doubles (p alpha, q beta -> r alpha, s beta) carry ``(pr|qs)``. Pair
    ``(p, q)`` owns entries ``ptr[p*m+q]:ptr[p*m+q+1]``. Singles are ranked per
    hole orbital by an upper bound on ``|<D'|H|D>|`` over all occupations.
    """

    m: int
    ss_ptr: np.ndarray
    ss_r: np.ndarray
    ss_s: np.ndarray
    ss_v: np.ndarray
    os_ptr: np.ndarray
    os_r: np.ndarray
    os_s: np.ndarray
    os_v: np.ndarray
    single_order: np.ndarray
    single_bound: np.ndarray

    def pair_list(self, p, q, same_spin):
        """``[(r, s, |v|), ...]`` for hole pair (p, q), sorted non-increasing in |v|."""
        if same_spin:
            if p > q:
                p, q = q, p
            ptr, r, s, v = self.ss_ptr, self.ss_r, self.ss_s, self.ss_v
        else:
            ptr, r, s, v = self.os_ptr, self.os_r, self.os_s, self.os_v
        k = p * self.m + q
        sl = slice(ptr[k], ptr[k + 1])
        return [(int(a), int(b), abs(float(c))) for a, b, c in zip(r[sl], s[sl], v[sl])]

    @property
    def n_entries(self):
        return len(self.ss_v) + len(self.os_v)


def _sorted_nonzero(vals, rr, ss):
    keep = vals != 0.0
    vals, rr, ss = vals[keep], rr[keep], ss[keep]
    order = np.lexsort((ss, rr, -np.abs(vals)))
    return vals[order], rr[order], ss[order]


def build_heat_bath(one_body, eri):
    m = one_body.shape[0]
    ss_ptr = np.zeros(m * m + 1, dtype=np.int64)
    os_ptr = np.zeros(m * m + 1, dtype=np.int64)
    ss_parts, os_parts = [], []
    r_idx, s_idx = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    upper = r_idx < s_idx
    for p in range(m):
        for q in range(m):
            k = p * m + q
            if p < q:
                block = eri[p, :, q, :] - eri[p, :, q, :].T
                mask = upper & (r_idx != p) & (r_idx != q) & (s_idx != p) & (s_idx != q)
                v, rr, ss = _sorted_nonzero(block[mask], r_idx[mask], s_idx[mask])
                ss_parts.append((rr, ss, v))
                ss_ptr[k + 1] = len(v)
            block = eri[p, :, q, :]
            mask = (r_idx != p) & (s_idx != q)
            v, rr, ss = _sorted_nonzero(block[mask], r_idx[mask], s_idx[mask])
            os_parts.append((rr, ss, v))
            os_ptr[k + 1] = len(v)
    ss_ptr = np.cumsum(ss_ptr)
    os_ptr = np.cumsum(os_ptr)

    def cat(parts, i, dtype):
        if not parts:
            return np.zeros(0, dtype=dtype)
        return np.ascontiguousarray(np.concatenate([x[i] for x in parts]).astype(dtype))

    # single bound: |t_pr| + sum_q 2|(pr|qq)| + |(pq|qr)|
    coul = np.einsum("prqq->prq", eri)
    exch = np.einsum("pqqr->prq", eri)
    bound = np.abs(one_body) + 2.0 * np.abs(coul).sum(axis=2) + np.abs(exch).sum(axis=2)
    order = np.zeros((m, max(m - 1, 0)), dtype=np.int64)
    sbound = np.zeros((m, max(m - 1, 0)))
    for p in range(m):
        others = np.array([r for r in range(m) if r != p], dtype=np.int64)
        if len(others) == 0:
            continue
        b = bound[p, others]
        o = np.lexsort((others, -b))
        order[p] = others[o]
        sbound[p] = b[o]
    return HeatBathIndex(
        m=m,
        ss_ptr=ss_ptr, ss_r=cat(ss_parts, 0, np.int64), ss_s=cat(ss_parts, 1, np.int64),
        ss_v=cat(ss_parts, 2, np.float64),
        os_ptr=os_ptr, os_r=cat(os_parts, 0, np.int64), os_s=cat(os_parts, 1, np.int64),
        os_v=cat(os_parts, 2, np.float64),
        single_order=order, single_bound=sbound,
    )


@dataclasses.dataclass(eq=False)
class IntegralTable:
    """Hamiltonian integrals over ``m`` spatial orbitals (0-based indices)."""

    m: int
    n_electrons: int
    ms2: int
    core_energy: float
    one_body: np.ndarray
    two_body: dict = dataclasses.field(default_factory=dict)
    duplicates: int = 0

    def __post_init__(self):
        if not 0 < self.m <= MAX_ORBITALS:
            raise ValueError(f"orbital count {self.m} outside 1..{MAX_ORBITALS}")
        self.one_body = np.asarray(self.one_body, dtype=np.float64)
        if self.one_body.shape != (self.m, self.m):
            raise ValueError("one-body table has wrong shape")
        if not np.array_equal(self.one_body, self.one_body.T):
            raise ValueError("one-body table is not symmetric")
        if (self.n_electrons + self.ms2) % 2:
            raise ValueError("NELEC and MS2 have inconsistent parity")

    @property
    def n_up(self) -> int:
        return (self.n_electrons + self.ms2) // 2

    @property
    def n_down(self) -> int:
        return (self.n_electrons - self.ms2) // 2

    def one(self, p, q) -> float:
        return float(self.one_body[p, q])

    def two(self, p, q, r, s) -> float:
        for i in (p, q, r, s):
            if not 0 <= i < self.m:
                raise IndexError(f"orbital index {i} out of range for m={self.m}")
        return self.two_body.get(canonical_key(p, q, r, s), 0.0)

    def set_two(self, p, q, r, s, value):
        key = canonical_key(p, q, r, s)
        if value == 0.0:
            self.two_body.pop(key, None)
        else:
            self.two_body[key] = float(value)
        self.__dict__.pop("eri", None)
        self.__dict__.pop("heat_bath_index", None)
        self.__dict__.pop("_kernel_tables", None)

    @functools.cached_property
    def eri(self) -> np.ndarray:
        """Dense ``(m, m, m, m)`` chemist-notation array used by the kernels."""
        m = self.m
        out = np.zeros((m, m, m, m))
        for (p, q, r, s), v in self.two_body.items():
            for idx in symmetry_images(p, q, r, s):
                out[idx] = v
        return out

    @functools.cached_property
    def heat_bath_index(self) -> HeatBathIndex:
        return build_heat_bath(self.one_body, self.eri)

    def __eq__(self, other):
        if not isinstance(other, IntegralTable):
            return NotImplemented
        return (self.m == other.m and self.n_electrons == other.n_electrons
                and self.ms2 == other.ms2 and self.core_energy == other.core_energy
                and np.array_equal(self.one_body, other.one_body)
                and self.two_body == other.two_body)


BASES = ("site", "momentum", "hartley")


@dataclasses.dataclass(frozen=True)
class HubbardSpec:
    lx: int
    ly: int = 1
    t: float = 1.0
    u: float = 4.0
    boundary: str = "periodic"
    n_up: int | None = None
    n_down: int | None = None
    # "site", or real plane waves on periodic lattices: "momentum" (cos/sin), "hartley"
    basis: str = "site"

    @property
    def m(self) -> int:
        return self.lx * self.ly

    def filling(self) -> tuple[int, int]:
        m = self.m
        if self.n_up is None and self.n_down is None:
            if m % 2:
                raise ValueError(f"half filling needs an even site count, got {m}")
            return m // 2, m // 2
        n_up = self.n_up if self.n_up is not None else self.n_down
        n_down = self.n_down if self.n_down is not None else self.n_up
        return n_up, n_down

    def validate(self):
        if self.lx < 1 or self.ly < 1:
            raise ValueError(f"lattice dimensions must be positive, got {self.lx}x{self.ly}")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"boundary must be 'periodic' or 'open', got {self.boundary!r}")
        if self.basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}, got {self.basis!r}")
        if self.basis != "site" and self.boundary != "periodic":
            raise ValueError(f"{self.basis} basis needs periodic boundaries")
        if self.m > MAX_ORBITALS:
            raise ValueError(f"{self.m} sites exceed the {MAX_ORBITALS}-orbital bitmask capacity")
        n_up, n_down = self.filling()
        if not (0 <= n_up <= self.m and 0 <= n_down <= self.m):
            raise ValueError(f"filling ({n_up}, {n_down}) does not fit {self.m} sites")


def lattice_bonds(lx, ly, periodic):
    """Distinct nearest-neighbour pairs ``(p, q)``, p < q, site index ``x + lx*y``."""
    bonds = set()
    for y in range(ly):
        for x in range(lx):
            p = x + lx * y
            for dx, dy in ((1, 0), (0, 1)):
                nx, ny = x + dx, y + dy
                if periodic:
                    nx %= lx
                    ny %= ly
                elif nx >= lx or ny >= ly:
                    continue
                q = nx + lx * ny
                if q != p:
                    bonds.add((min(p, q), max(p, q)))
    return sorted(bonds)


def hubbard_integrals(spec: HubbardSpec) -> IntegralTable:
    spec.validate()
    m = spec.m
    n_up, n_down = spec.filling()
    t = np.zeros((m, m))
    for p, q in lattice_bonds(spec.lx, spec.ly, spec.boundary == "periodic"):
        t[p, q] = t[q, p] = -spec.t
    table = IntegralTable(m=m, n_electrons=n_up + n_down, ms2=n_up - n_down,
                          core_energy=0.0, one_body=t)
    if spec.u != 0.0:
        for p in range(m):
            table.two_body[(p, p, p, p)] = float(spec.u)
    if spec.basis != "site":
        table = transform_integrals(table, plane_wave_orbitals(spec.lx, spec.ly, t, spec.basis))
    return table


def plane_wave_orbitals(lx, ly, hopping=None, kind="momentum"):
    """Real plane-wave orbitals on a periodic lattice as columns, ordered by band energy.

    ``kind="momentum"`` pairs each +k/-k into a cosine and a sine (a
    wavevector equal to its own negative gives one cosine); every orbital then
    has a definite inversion parity. ``kind="hartley"`` uses
    cas(k.r) = cos(k.r) + sin(k.r) for every k, which carries no parity label.
    Ties keep the generation order (kx fastest).
    """
    if kind not in ("momentum", "hartley"):
        raise ValueError(f"unknown plane-wave kind {kind!r}")
    m = lx * ly
    xs = np.array([p % lx for p in range(m)])
    ys = np.array([p // lx for p in range(m)])
    cols, seen = [], set()
    for ny in range(ly):
        for nx in range(lx):
            phase = 2 * np.pi * (nx * xs / lx + ny * ys / ly)
            if kind == "hartley":
                cols.append((np.cos(phase) + np.sin(phase)) / np.sqrt(m))
                continue
            if (nx, ny) in seen:
                continue
            mirror = ((-nx) % lx, (-ny) % ly)
            seen.update({(nx, ny), mirror})
            if mirror == (nx, ny):
                cols.append(np.cos(phase) / np.sqrt(m))
            else:
                cols.append(np.sqrt(2.0 / m) * np.cos(phase))
                cols.append(np.sqrt(2.0 / m) * np.sin(phase))
    C = np.column_stack(cols)
    if hopping is not None:
        energy = np.round(np.einsum("pi,pq,qi->i", C, hopping, C), 10)
        C = C[:, np.argsort(energy, kind="stable")]
    return C


def transform_integrals(table: IntegralTable, C, tol=1e-12) -> IntegralTable:
    """Integrals in the orthonormal orbital basis given by the columns of ``C``."""
    C = np.asarray(C, dtype=np.float64)
    m = table.m
    if C.shape != (m, m) or not np.allclose(C.T @ C, np.eye(m), atol=1e-10):
        raise ValueError("orbital matrix must be square and orthonormal")
    h = C.T @ table.one_body @ C
    h = 0.5 * (h + h.T)
    h[np.abs(h) < tol] = 0.0
    eri = np.einsum("pqrs,pi,qj,rk,sl->ijkl", table.eri, C, C, C, C, optimize=True)
    out = IntegralTable(m=m, n_electrons=table.n_electrons, ms2=table.ms2,
                        core_energy=table.core_energy, one_body=h)
    for i, j, k, l in zip(*np.nonzero(np.abs(eri) >= tol)):
        key = canonical_key(int(i), int(j), int(k), int(l))
        if key == (i, j, k, l):
            out.two_body[key] = float(eri[key])
    return out


def random_table(m, n_up, n_down, seed=None, density=1.0, scale=1.0, core_energy=0.0):
    """Random real integrals with full 8-fold symmetry (test and fuzz fixture)."""
    rng = np.random.default_rng(seed)
    h = rng.normal(scale=scale, size=(m, m))
    h = 0.5 * (h + h.T)
    table = IntegralTable(m=m, n_electrons=n_up + n_down, ms2=n_up - n_down,
                          core_energy=float(core_energy), one_body=h)
    seen = set()
    for p in range(m):
        for q in range(m):
            for r in range(m):
                for s in range(m):
                    key = canonical_key(p, q, r, s)
                    if key in seen:
                        continue
                    seen.add(key)
                    if rng.random() < density:
                        table.two_body[key] = float(rng.normal(scale=scale))
    return table


# -- FCIDUMP ------------------------------------------------------------------

_HEADER_END = re.compile(r"(&END|/)\s*$", re.IGNORECASE)
_KEY = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _parse_float(tok, lineno):
    try:
        return float(tok.replace("D", "E").replace("d", "e"))
    except ValueError:
        raise FCIDUMPError(f"non-numeric value {tok!r}", lineno) from None


def _parse_index(tok, lineno, norb):
    try:
        i = int(tok)
    except ValueError:
        raise FCIDUMPError(f"non-integer index {tok!r}", lineno) from None
    if i < 0 or i > norb:
        raise FCIDUMPError(f"index {i} outside 0..NORB={norb}", lineno)
    return i


def _parse_header(text, lineno):
    body = text.strip()
    if not body.upper().startswith("&FCI"):
        raise FCIDUMPError("header must start with '&FCI'", lineno)
    body = body[4:]
    body = _HEADER_END.sub("", body.strip())
    parts = _KEY.split(body)
    if parts[0].strip(" ,"):
        raise FCIDUMPError(f"malformed namelist near {parts[0].strip()!r}", lineno)
    fields = {}
    for key, val in zip(parts[1::2], parts[2::2]):
        fields[key.upper()] = val.strip().strip(",").strip()
    out = {}
    for name in ("NORB", "NELEC"):
        if name not in fields:
            raise FCIDUMPError(f"header is missing {name}", lineno)
    for name in ("NORB", "NELEC", "MS2"):
        if name in fields:
            try:
                out[name] = int(fields[name])
            except ValueError:
                raise FCIDUMPError(f"header field {name}={fields[name]!r} is not an integer",
                                   lineno) from None
    out.setdefault("MS2", 0)
    return out


def parse_fcidump(stream: IO[str] | str | os.PathLike) -> IntegralTable:
    """Read a Molpro-convention FCIDUMP (1-based indices) from a stream or path.

    Paths ending in ``.gz`` are decompressed transparently.
    """
    if isinstance(stream, (str, os.PathLike)):
        path = os.fspath(stream)
        opener = gzip.open if path.endswith(".gz") else open
        with opener(path, "rt") as fh:
            return parse_fcidump(fh)

    header_lines = []
    lineno = 0
    start_line = None
    for line in stream:
        lineno += 1
        if not line.strip() and not header_lines:
            continue
        if start_line is None:
            start_line = lineno
        header_lines.append(line)
        if _HEADER_END.search(line.strip()):
            break
    else:
        raise FCIDUMPError("unterminated namelist header (no &END or /)", lineno or None)
    hdr = _parse_header(" ".join(l.strip() for l in header_lines), start_line)
    norb = hdr["NORB"]
    if not 0 < norb <= MAX_ORBITALS:
        raise FCIDUMPError(f"NORB={norb} outside 1..{MAX_ORBITALS}", start_line)
    h = np.zeros((norb, norb))
    seen_one = set()
    two = {}
    core = 0.0
    dups = 0
    for line in stream:
        lineno += 1
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 5:
            raise FCIDUMPError(f"expected 5 tokens, found {len(toks)}", lineno)
        val = _parse_float(toks[0], lineno)
        i, j, k, l = (_parse_index(t, lineno, norb) for t in toks[1:])
        if i == j == k == l == 0:
            core = val
        elif k == 0 and l == 0 and i > 0 and j > 0:
            key = (min(i, j), max(i, j))
            if key in seen_one:
                dups += 1
            seen_one.add(key)
            h[i - 1, j - 1] = h[j - 1, i - 1] = val
        elif j == k == l == 0 and i > 0:
            continue  # orbital energy
        elif min(i, j, k, l) > 0:
            key = canonical_key(i - 1, j - 1, k - 1, l - 1)
            if key in two:
                dups += 1
            two[key] = val
        else:
            raise FCIDUMPError(f"unrecognised index pattern {i} {j} {k} {l}", lineno)
    nelec, ms2 = hdr["NELEC"], hdr["MS2"]
    if nelec < 0 or abs(ms2) > nelec or (nelec + ms2) % 2:
        raise FCIDUMPError(f"inconsistent NELEC={nelec}, MS2={ms2}", start_line)
    if (nelec + ms2) // 2 > norb or (nelec - ms2) // 2 > norb:
        raise FCIDUMPError(f"NELEC={nelec} does not fit NORB={norb}", start_line)
    table = IntegralTable(m=norb, n_electrons=nelec, ms2=ms2, core_energy=core, one_body=h,
                          duplicates=dups)
    table.two_body = {k: v for k, v in two.items() if v != 0.0}
    return table


def _fmt(v):
    return f"{v:.17g}"


def write_fcidump(table: IntegralTable, stream: IO[str] | str | os.PathLike):
    if isinstance(stream, (str, os.PathLike)):
        path = os.fspath(stream)
        opener = gzip.open if path.endswith(".gz") else open
        with opener(path, "wt") as fh:
            return write_fcidump(table, fh)
    m = table.m
    stream.write(f" &FCI NORB={m},NELEC={table.n_electrons},MS2={table.ms2},\n")
    stream.write("  ORBSYM=" + ",".join(["1"] * m) + ",\n")
    stream.write("  ISYM=1,\n &END\n")
    for (p, q, r, s) in sorted(table.two_body):
        v = table.two_body[(p, q, r, s)]
        if v != 0.0:
            stream.write(f"{_fmt(v)} {p + 1} {q + 1} {r + 1} {s + 1}\n")
    for p in range(m):
        for q in range(p + 1):
            v = table.one_body[p, q]
            if v != 0.0:
                stream.write(f"{_fmt(v)} {p + 1} {q + 1} 0 0\n")
    stream.write(f"{_fmt(table.core_energy)} 0 0 0 0\n")


def dumps_fcidump(table: IntegralTable) -> str:
    buf = io.StringIO()
    write_fcidump(table, buf)
    return buf.getvalue()
