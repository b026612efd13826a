import math

import hypothesis.strategies as st
import numpy as np
from hypothesis import given

from trimci.determinants import (AA, DIAGONAL, SINGLE, Determinant, canonical_order,
                                 excitation_between, from_array, hamming_distance,
                                 matrix_element, random_determinants, to_array)
from trimci.integrals import HubbardSpec, hubbard_integrals, random_table

from oracles import brute_force_hamiltonian, sector


def two_site(u=4.0):
    return hubbard_integrals(HubbardSpec(2, 1, t=1.0, u=u, boundary="open"))


def det_strategy(m, n_up, n_down):
    def pick(n):
        return st.lists(st.integers(0, m - 1), min_size=n, max_size=n, unique=True).map(
            lambda xs: sum(1 << x for x in xs))
    return st.builds(Determinant, pick(n_up), pick(n_down))


DETS_4 = det_strategy(4, 2, 2)
DETS_6 = det_strategy(6, 3, 2)


def test_identity_is_diagonal():
    d = Determinant(0b0011, 0b0101)
    ex = excitation_between(d, d)
    assert ex.kind == DIAGONAL and ex.phase == 1


def test_single_alpha_hop_sign():
    ex = excitation_between(Determinant(0b0011, 0b0011), Determinant(0b0101, 0b0011))
    assert ex.kind == SINGLE and ex.spin_channel == AA
    assert ex.holes == (1,) and ex.particles == (2,)
    assert ex.phase == 1


def test_triple_is_too_far():
    d1 = Determinant(0b000111, 0b0011)
    d2 = Determinant(0b111000, 0b0110)
    assert excitation_between(d1, d2) is None
    assert matrix_element(d1, d2, random_table(6, 3, 2, seed=1)) == 0.0


def test_hamming_examples():
    d = Determinant(0b0011, 0b0011)
    assert hamming_distance(d, d) == 0
    assert hamming_distance(d, Determinant(0b0101, 0b0011)) == 2
    assert hamming_distance(d, Determinant(0b0101, 0b0101)) == 4


def test_two_site_elements():
    ints = two_site()
    assert matrix_element(Determinant(1, 1), Determinant(1, 1), ints) == 4.0
    assert matrix_element(Determinant(1, 2), Determinant(1, 2), ints) == 0.0
    assert matrix_element(Determinant(1, 2), Determinant(2, 2), ints) == -1.0


def test_random_determinants_examples():
    assert random_determinants(2, 2, 2, 1, seed=0) == [Determinant(0b11, 0b11)]
    full = random_determinants(4, 2, 2, 36, seed=3)
    assert len(set(full)) == 36 == math.comb(4, 2) ** 2
    assert random_determinants(8, 4, 4, 20, seed=9) == random_determinants(8, 4, 4, 20, seed=9)


def test_random_determinants_rejects_oversized_request():
    import pytest
    with pytest.raises(ValueError):
        random_determinants(4, 2, 2, 37, seed=0)


def test_matches_operator_oracle_random_integrals():
    ints = random_table(4, 2, 1, seed=11)
    dets = sector(4, 2, 1)
    H = brute_force_hamiltonian(ints, dets)
    mine = np.array([[matrix_element(a, b, ints) for b in dets] for a in dets])
    np.testing.assert_allclose(mine, H, atol=1e-12)


@given(DETS_6, DETS_6, st.integers(0, 50))
def test_symmetric_elements(d1, d2, seed):
    ints = random_table(6, 3, 2, seed=seed, density=0.5)
    assert math.isclose(matrix_element(d1, d2, ints), matrix_element(d2, d1, ints),
                        rel_tol=1e-12, abs_tol=1e-12)


@given(DETS_6, DETS_6)
def test_phase_involution(d1, d2):
    ex12, ex21 = excitation_between(d1, d2), excitation_between(d2, d1)
    assert (ex12 is None) == (ex21 is None)
    if ex12 is not None:
        assert ex12.phase == ex21.phase
        assert ex12.phase in (-1, 1)
        assert hamming_distance(d1, d2) == 2 * ex12.degree


@given(DETS_6, DETS_6, DETS_6)
def test_hamming_is_metric(a, b, c):
    assert (hamming_distance(a, b) == 0) == (a == b)
    assert hamming_distance(a, b) == hamming_distance(b, a)
    assert hamming_distance(a, c) <= hamming_distance(a, b) + hamming_distance(b, c)


@given(st.lists(DETS_4, min_size=1, max_size=20, unique=True))
def test_array_round_trip_and_order(dets):
    arr = to_array(dets, 4)
    assert from_array(arr) == dets
    ordered = from_array(arr[canonical_order(arr)])
    assert ordered == sorted(dets)


def test_wide_determinants():
    d = Determinant((1 << 100) | 1, (1 << 127) | 2)
    assert from_array(to_array([d], 128)) == [d]
