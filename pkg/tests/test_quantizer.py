import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdq.errors import DimensionError
from spdq.numerics import random_orthonormal_rows
from spdq.quantizer import (
    QuantModel,
    code_errors,
    encode,
    greedy_codes,
    icm_assign,
    icm_assign_all,
    icm_restarts,
    indicator_matrix,
    init_quant_model,
    load_quant_model,
    quant_objective,
    quant_objective_terms,
    quantizer_step,
    reconstruct,
    save_quant_model,
    unused_codewords,
    update_C,
    update_D,
    update_Z,
)


def one_hot(classes, k):
    L = np.zeros((k, len(classes)))
    L[classes, np.arange(len(classes))] = 1
    return L


def exhaustive_code(v, D, K_d):
    M = D.shape[1] // K_d
    best, best_err = None, np.inf
    for code in itertools.product(range(K_d), repeat=M):
        err = np.sum((v - sum(D[:, m * K_d + c] for m, c in enumerate(code))) ** 2)
        if err < best_err:
            best, best_err = np.array(code), err
    return best, best_err


@pytest.fixture
def problem(rng):
    d_s, d_z, k, n, M, K_d = 6, 4, 3, 30, 2, 4
    L = one_hot(rng.integers(0, k, n), k)
    L[rng.integers(0, k), :5] = 1  # a few multi-label columns
    model = init_quant_model(d_z, d_s, k, M, K_d, n, rng)
    return model, rng.standard_normal((d_s, n)), rng.standard_normal((d_s, n)), L


def test_reconstruct_equals_indicator_product(rng):
    D = rng.standard_normal((3, 8))
    codes = rng.integers(0, 4, size=(5, 2))
    np.testing.assert_allclose(reconstruct(D, codes, 4), D @ indicator_matrix(codes, 4), atol=1e-14)
    assert np.all(indicator_matrix(codes, 4).sum(axis=0) == 2)


def test_unused_codewords():
    codes = np.array([[0, 1], [0, 3]])
    assert list(unused_codewords(codes, 4)) == [1, 2, 3, 4, 6]


def test_init_shapes(problem):
    model, *_ = problem
    assert model.M == 2 and model.bits == 4 and model.d_z == 4
    np.testing.assert_allclose(model.C_i @ model.C_i.T, np.eye(4), atol=1e-12)
    with pytest.raises(DimensionError):
        init_quant_model(7, 6, 3, 2, 4, 10, np.random.default_rng(0))


def test_update_C_is_procrustes_optimum(rng):
    S, ZL = rng.standard_normal((5, 20)), rng.standard_normal((5, 20))
    C = update_C(S, ZL)
    np.testing.assert_allclose(C @ C.T, np.eye(5), atol=1e-10)
    best = np.sum((C @ S - ZL) ** 2)
    for _ in range(200):
        other = random_orthonormal_rows(5, 5, rng)
        assert np.sum((other @ S - ZL) ** 2) >= best - 1e-9


def test_update_C_rectangular_keeps_better_current(rng):
    S, ZL = rng.standard_normal((6, 30)), rng.standard_normal((4, 30))
    current = random_orthonormal_rows(4, 6, rng)
    C = update_C(S, ZL, current)
    np.testing.assert_allclose(C @ C.T, np.eye(4), atol=1e-10)
    assert np.sum((C @ S - ZL) ** 2) <= np.sum((current @ S - ZL) ** 2)


def test_update_Z_zeroes_the_gradient(problem):
    model, Si, Ti, L = problem
    beta = 0.7
    Z = update_Z(model.C_i @ Si, model.C_t @ Ti, model.D, model.codes, L, beta, ridge=1e-6, K_d=4)
    DB = model.reconstruct()
    grad = (2 * (Z @ L - model.C_i @ Si) + 2 * (Z @ L - model.C_t @ Ti) + 2 * beta * (Z @ L - DB)) @ L.T
    assert np.abs(grad).max() < 1e-6


def test_update_Z_without_dictionary_term(problem):
    model, Si, Ti, L = problem
    Z = update_Z(model.C_i @ Si, model.C_t @ Ti, None, None, L, 0.0)
    expected = np.linalg.lstsq(np.hstack([L, L]).T, np.hstack([model.C_i @ Si, model.C_t @ Ti]).T, rcond=None)[0].T
    np.testing.assert_allclose(Z, expected, atol=1e-6)


def test_update_D_matches_dense_least_squares(problem):
    model, _, _, L = problem
    ZL = model.Z @ L
    codes = model.codes.copy()
    codes[:, 1] = np.minimum(codes[:, 1], 2)  # leave one codeword unused
    D = update_D(ZL, codes, 4)
    B = indicator_matrix(codes, 4)
    oracle = np.linalg.lstsq(B.T, ZL.T, rcond=None)[0].T
    np.testing.assert_allclose(D @ B, oracle @ B, atol=1e-6)
    assert np.abs(D[:, 7]).max() < 1e-12


def test_icm_single_dictionary_is_exhaustive(rng):
    D = rng.standard_normal((3, 8))
    V = rng.standard_normal((3, 25))
    codes = icm_assign_all(V, D, np.zeros((25, 1), dtype=np.int64), 8, sweeps=1)
    np.testing.assert_array_equal(codes[:, 0], np.argmin(((V[:, None, :] - D[:, :, None]) ** 2).sum(0), axis=0))


def test_icm_ties_go_to_lowest_index():
    D = np.array([[1.0, -1.0, 1.0, 0.0]])
    assert icm_assign(np.array([0.0]), D, [3], 4)[0] == 3  # codeword 3 is exact
    D = np.array([[1.0, -1.0, 5.0, 9.0]])
    assert icm_assign(np.array([0.0]), D, [3], 4)[0] == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.sampled_from([2, 4, 8]))
def test_icm_result_is_coordinatewise_optimal(seed, M, K_d):
    r = np.random.default_rng(seed)
    D = r.standard_normal((3, M * K_d))
    V = r.standard_normal((3, 6))
    codes = icm_assign_all(V, D, r.integers(0, K_d, (6, M)), K_d, sweeps=50)
    base = code_errors(V, D, codes, K_d)
    for m in range(M):
        for k in range(K_d):
            alt = codes.copy()
            alt[:, m] = k
            assert np.all(code_errors(V, D, alt, K_d) >= base - 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_icm_never_increases_error(seed):
    r = np.random.default_rng(seed)
    D, V = r.standard_normal((4, 12)), r.standard_normal((4, 10))
    start = r.integers(0, 4, (10, 3))
    after = icm_assign_all(V, D, start, 4, sweeps=1)
    assert np.all(code_errors(V, D, after, 4) <= code_errors(V, D, start, 4) + 1e-12)


def test_restarts_are_never_worse(rng):
    D, V = rng.standard_normal((3, 12)), rng.standard_normal((3, 40))
    start = rng.integers(0, 4, (40, 3))
    one = icm_restarts(V, D, 4, start, restarts=1, rng=np.random.default_rng(0))
    many = icm_restarts(V, D, 4, start, restarts=6, rng=np.random.default_rng(0))
    assert np.all(code_errors(V, D, many, 4) <= code_errors(V, D, one, 4) + 1e-12)


def test_encode_beats_greedy_start(rng):
    D, V = rng.standard_normal((5, 32)), rng.standard_normal((5, 50))
    assert np.all(code_errors(V, D, encode(V, D, 8), 8) <= code_errors(V, D, greedy_codes(V, D, 8), 8) + 1e-12)


def test_identical_labels_get_identical_codes(rng):
    # equal label columns give equal targets Zl, hence equal codes
    L = one_hot(np.array([0, 1, 0, 2, 0]), 3)
    Z, D = rng.standard_normal((4, 3)), rng.standard_normal((4, 8))
    codes = icm_restarts(Z @ L, D, 4, np.zeros((5, 2), dtype=np.int64))
    np.testing.assert_array_equal(codes[0], codes[2])
    np.testing.assert_array_equal(codes[0], codes[4])


def test_step_never_increases_objective(problem):
    model, Si, Ti, L = problem
    trace = [quant_objective(model, Si, Ti, L, 1.0)]
    rng = np.random.default_rng(0)
    for _ in range(10):
        model = quantizer_step(model, Si, Ti, L, 1.0, rng=rng, trace=trace)
        np.testing.assert_allclose(model.C_t @ model.C_t.T, np.eye(4), atol=1e-8)
    assert np.all(np.diff(trace) <= 1e-9)


def test_objective_terms_add_up(problem):
    model, Si, Ti, L = problem
    t = quant_objective_terms(model, Si, Ti, L, 2.0)
    assert t["total"] == pytest.approx(t["align_i"] + t["align_t"] + 2.0 * t["quant"])


def test_save_load_round_trip(problem, tmp_path):
    model, *_ = problem
    save_quant_model(model, tmp_path / "q")
    back = load_quant_model(tmp_path / "q")
    for name in ("C_i", "C_t", "Z", "D", "codes"):
        assert np.array_equal(getattr(back, name), getattr(model, name))
    assert back.K_d == model.K_d and isinstance(back, QuantModel)
