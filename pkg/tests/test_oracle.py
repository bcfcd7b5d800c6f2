# tests/test_oracle.py

import itertools

import numpy as np
import pytest

from dpconsider.errors import EnumerationLimitError, InvalidPmfError
from dpconsider.models.state import ResponseParams
from dpconsider.services.oracle import (
    enumerate_cs_posterior,
    enumerate_cs_posterior_reference,
    marginal_response_prob,
    mixture_cs_pmf,
    parse_subset,
    random_mixture,
    subset_label,
    subset_matrix,
)
from dpconsider.utils.random_streams import stream
from tests.conftest import make_panel


def test_symmetric_product_measure():
    pmf = mixture_cs_pmf(np.array([1.0]), np.array([[0.5, 0.5]]))
    np.testing.assert_allclose(pmf.pmf, [0.25, 0.25, 0.25, 0.25])
    assert pmf.empty_mass == pytest.approx(0.25)


def test_degenerate_product_measure():
    pmf = mixture_cs_pmf(np.array([1.0]), np.array([[1.0, 0.0]]))
    np.testing.assert_array_equal(pmf.pmf, [0.0, 1.0, 0.0, 0.0])


def test_mixture_pmf_matches_loop_and_sums_to_one():
    rng = stream(1)
    omega = np.array([0.6, 0.4])
    Q = rng.random((2, 4))
    pmf = mixture_cs_pmf(omega, Q).pmf
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    for bits in itertools.product([0, 1], repeat=4):
        code = sum(b << j for j, b in enumerate(bits))
        p = sum(
            omega[h] * np.prod([Q[h, j] if bits[j] else 1 - Q[h, j] for j in range(4)]) for h in range(2)
        )
        assert pmf[code] == pytest.approx(p, abs=1e-15)


def test_random_mixtures_sum_to_one():
    rng = stream(2)
    for _ in range(100):
        omega, Q = random_mixture(int(rng.integers(1, 5)), int(rng.integers(1, 8)), rng)
        assert abs(mixture_cs_pmf(omega, Q).pmf.sum() - 1.0) <= 1e-12


def test_guards():
    with pytest.raises(EnumerationLimitError):
        mixture_cs_pmf(np.array([1.0]), np.full((1, 21), 0.5))
    with pytest.raises(InvalidPmfError):
        mixture_cs_pmf(np.array([0.5, 0.3]), np.full((2, 3), 0.5))


def test_subset_codes():
    assert subset_label(0b101, 3) == "{1,3}"
    assert parse_subset("{1,3}") == 0b101
    assert parse_subset("{}") == 0
    B = subset_matrix(3)
    assert B.shape == (8, 3)
    np.testing.assert_array_equal(B[0b110], [False, True, True])


def test_two_category_hand_computation():
    data = make_panel([[0]], J=2, d_x=0)
    params = ResponseParams.zeros(1, 2, 0, 0)
    q = np.array([0.5, 0.5])
    post = enumerate_cs_posterior(0, params, q, data)
    # {1}: likelihood 1, {1,2}: likelihood 1/2, equal prior weight
    np.testing.assert_allclose(post, [0.0, 2.0 / 3.0, 0.0, 1.0 / 3.0], atol=1e-15)


def test_structural_zeros_are_exact(micro_data, micro_params):
    q = np.array([0.2, 0.5, 0.7])
    post = enumerate_cs_posterior(0, micro_params, q, micro_data)
    B = subset_matrix(3)
    lacks = ~(B[:, 0] & B[:, 1])
    assert np.all(post[lacks] == 0.0)
    assert post.sum() == pytest.approx(1.0, abs=1e-12)


def test_vectorised_enumeration_matches_reference(micro_data, micro_params):
    q = np.array([0.3, 0.45, 0.9])
    for i in range(micro_data.n):
        np.testing.assert_allclose(
            enumerate_cs_posterior(i, micro_params, q, micro_data),
            enumerate_cs_posterior_reference(i, micro_params, q, micro_data),
            atol=1e-12,
        )


def test_marginal_response_prob_reduces_to_logit(micro_data, micro_params):
    full = np.zeros(8)
    full[7] = 1.0
    V = micro_params.delta + micro_data.X[0, 1] @ micro_params.beta + micro_data.Z[0, 1] @ micro_params.b[0]
    logit = np.exp(V) / np.exp(V).sum()
    for j in range(3):
        assert marginal_response_prob(j, micro_params, micro_data, 0, 1, full) == pytest.approx(logit[j], abs=1e-12)


def test_marginal_response_prob_with_equal_utilities():
    data = make_panel([[0]], J=3, d_x=0)
    params = ResponseParams.zeros(1, 3, 0, 0)
    pmf = mixture_cs_pmf(np.array([1.0]), np.array([[0.7, 0.4, 0.2]])).pmf
    B = subset_matrix(3)
    sizes = B.sum(axis=1)
    nonempty = pmf.copy()
    nonempty[0] = 0.0
    nonempty /= nonempty.sum()
    for j in range(3):
        expected = sum(nonempty[m] / sizes[m] for m in range(1, 8) if B[m, j])
        assert marginal_response_prob(j, params, data, 0, 0, pmf) == pytest.approx(expected, abs=1e-12)


def test_marginal_response_prob_matches_triple_loop(micro_data, micro_params):
    rng = stream(3)
    pmf = rng.random(8)
    pmf[0] = 0.0
    pmf /= pmf.sum()
    V = micro_params.delta + micro_data.X[1, 0] @ micro_params.beta + micro_data.Z[1, 0] @ micro_params.b[1]
    for j in range(3):
        total = 0.0
        for m in range(1, 8):
            members = [k for k in range(3) if (m >> k) & 1]
            if j in members:
                total += pmf[m] * np.exp(V[j]) / sum(np.exp(V[k]) for k in members)
        assert marginal_response_prob(j, micro_params, micro_data, 1, 0, pmf) == pytest.approx(total, abs=1e-12)
