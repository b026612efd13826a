import math

import hypothesis.strategies as st
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given

from trimci.determinants import Determinant, to_array
from trimci.eigensolver import (DavidsonError, build_projected, davidson_lowest,
                                variational_energy)
from trimci.hamiltonian import DuplicateDeterminantError
from trimci.integrals import HubbardSpec, hubbard_integrals, random_table

from oracles import brute_force_hamiltonian, dense_lowest, sector

TWO_SITE = hubbard_integrals(HubbardSpec(2, 1, u=4.0, boundary="open"))


def rows(dets, m):
    return to_array(dets, m)


def test_two_site_matrix():
    dets = sector(2, 1, 1)
    H = build_projected(rows(dets, 2), TWO_SITE).to_dense()
    np.testing.assert_allclose(np.diag(H), [0, 4, 4, 0] if dets[0] == Determinant(1, 2) else np.diag(H))
    np.testing.assert_allclose(H, brute_force_hamiltonian(TWO_SITE, dets), atol=1e-14)
    assert sorted(np.diag(H)) == [0.0, 0.0, 4.0, 4.0]
    assert set(np.abs(H[~np.eye(4, dtype=bool)])) <= {0.0, 1.0}


def test_two_site_ground_state():
    res = davidson_lowest(build_projected(rows(sector(2, 1, 1), 2), TWO_SITE))
    assert math.isclose(res.energy, 2 - 2 * math.sqrt(2), abs_tol=1e-12)
    assert math.isclose(np.linalg.norm(res.coefficients), 1.0, abs_tol=1e-12)


def test_single_determinant():
    d = rows([Determinant(1, 1)], 2)
    res = davidson_lowest(build_projected(d, TWO_SITE))
    assert res.energy == 4.0 and res.coefficients.tolist() == [1.0]
    assert variational_energy(d, [1.0], TWO_SITE) == 4.0


def test_unconnected_pair_is_diagonal():
    ints = random_table(6, 3, 3, seed=2)
    d = rows([Determinant(0b000111, 0b000111), Determinant(0b111000, 0b000111)], 6)
    H = build_projected(d, ints).to_dense()
    assert H[0, 1] == H[1, 0] == 0.0


def test_duplicates_rejected():
    d = rows([Determinant(1, 1), Determinant(1, 1)], 2)
    with pytest.raises(DuplicateDeterminantError):
        build_projected(d, TWO_SITE)


def test_diagonal_matrix():
    res = davidson_lowest(np.diag([1.0, 2.0, 3.0]))
    assert res.energy == 1.0
    np.testing.assert_allclose(res.coefficients, [1, 0, 0])


def test_rayleigh_quotient_matches_dense_form():
    dets = sector(2, 1, 1)
    c = np.full(4, 0.5)
    H = brute_force_hamiltonian(TWO_SITE, dets)
    assert math.isclose(variational_energy(rows(dets, 2), c, TWO_SITE), c @ H @ c, abs_tol=1e-14)
    with pytest.raises(ValueError):
        variational_energy(rows(dets, 2), 2 * c, TWO_SITE)


def test_eigenvector_energy_consistent():
    ints = hubbard_integrals(HubbardSpec(3, 2, u=4.0))
    d = rows(sector(6, 3, 3), 6)
    res = davidson_lowest(build_projected(d, ints), tol=1e-10)
    assert math.isclose(variational_energy(d, res.coefficients, ints), res.energy, abs_tol=1e-10)


def random_sparse(n, seed):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=min(1.0, 8.0 / n), random_state=rng, format="csr")
    return (A + A.T + sp.diags(rng.normal(scale=4.0, size=n))).tocsr()


@pytest.mark.parametrize("n", [600, 1500])
def test_davidson_large_sparse(n):
    A = random_sparse(n, n)
    res = davidson_lowest(A, tol=1e-9)
    assert abs(res.energy - np.linalg.eigvalsh(A.toarray())[0]) < 1e-8
    assert np.linalg.norm(A @ res.coefficients - res.energy * res.coefficients) <= 1e-9


def test_nonconvergence_carries_best():
    A = random_sparse(800, 3)
    with pytest.raises(DavidsonError) as info:
        davidson_lowest(A, tol=1e-14, max_iter=2)
    assert info.value.best is not None


def test_matrix_free_matches_explicit():
    ints = hubbard_integrals(HubbardSpec(3, 2, u=2.0))
    d = rows(sector(6, 3, 3), 6)
    explicit = davidson_lowest(build_projected(d, ints), tol=1e-10)
    free = davidson_lowest(build_projected(d, ints, memory_cap=0), tol=1e-10, dense_cutoff=0)
    assert abs(explicit.energy - free.energy) < 1e-9


def test_deterministic():
    ints = hubbard_integrals(HubbardSpec(3, 2, u=2.0))
    d = rows(sector(6, 3, 3), 6)
    a = davidson_lowest(build_projected(d, ints), dense_cutoff=0)
    b = davidson_lowest(build_projected(d, ints), dense_cutoff=0)
    assert a.energy == b.energy


@pytest.mark.parametrize("lattice", [(2, 2), (3, 2)])
def test_full_sector_is_exact(lattice):
    ints = hubbard_integrals(HubbardSpec(*lattice, u=4.0))
    dets = sector(ints.m, ints.n_up, ints.n_down)
    exact = dense_lowest(brute_force_hamiltonian(ints, dets))[0]
    res = davidson_lowest(build_projected(rows(dets, ints.m), ints), tol=1e-10)
    assert abs(res.energy - exact) < 1e-9


@given(st.integers(0, 10_000), st.integers(1, 35))
def test_nested_sets_are_monotone(seed, k):
    ints = hubbard_integrals(HubbardSpec(2, 2, u=2.0))
    dets = sector(4, 2, 2)
    order = np.random.default_rng(seed).permutation(len(dets))
    small = rows([dets[i] for i in sorted(order[:k])], 4)
    big = rows([dets[i] for i in sorted(order[:k + 1])], 4)
    e_small = davidson_lowest(build_projected(small, ints)).energy
    e_big = davidson_lowest(build_projected(big, ints)).energy
    assert e_big <= e_small + 1e-12
    assert e_big >= -4.0 * 2 - 1e-9
