import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spdq.errors import DimensionError, MissingArtifactError, NumericalError, SchemaError
from spdq.numerics import (
    as_matrix,
    random_orthonormal_rows,
    read_codes,
    read_matrices,
    read_matrix,
    solve_spd,
    svd,
    write_codes,
    write_matrices,
    write_matrix,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_as_matrix_rejects_bad_input():
    with pytest.raises(DimensionError):
        as_matrix(np.zeros(3))
    with pytest.raises(NumericalError):
        as_matrix(np.array([[1.0, np.nan]]))


@pytest.mark.parametrize("shape", [(5, 3), (3, 5), (4, 4)])
def test_svd_reconstructs(rng, shape):
    a = rng.standard_normal(shape)
    U, sig, V = svd(a)
    np.testing.assert_allclose(U @ np.diag(sig) @ V.T, a, atol=1e-12)
    np.testing.assert_allclose(U.T @ U, np.eye(len(sig)), atol=1e-12)
    assert np.all(np.diff(sig) <= 0)


def test_solve_spd_matches_dense_solve(rng):
    a = rng.standard_normal((6, 6))
    g = a @ a.T + 0.5 * np.eye(6)
    b = rng.standard_normal((6, 2))
    np.testing.assert_allclose(solve_spd(g, b), np.linalg.solve(g, b), rtol=1e-10)
    np.testing.assert_allclose(solve_spd(g, b, ridge=0.1), np.linalg.solve(g + 0.1 * np.eye(6), b), rtol=1e-10)


def test_solve_spd_failures():
    with pytest.raises(NumericalError):
        solve_spd(np.array([[1.0, 0.0], [0.0, -1.0]]), np.ones(2))
    with pytest.raises((ValueError, NumericalError)):
        solve_spd(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))


def test_random_orthonormal_rows(rng):
    c = random_orthonormal_rows(4, 7, rng)
    assert c.shape == (4, 7)
    np.testing.assert_allclose(c @ c.T, np.eye(4), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite),
       st.sampled_from(["m.csv", "m.bin"]))
def test_matrix_round_trip_is_exact(tmp_path_factory, a, name):
    path = tmp_path_factory.mktemp("mat") / name
    write_matrix(path, a)
    assert np.array_equal(read_matrix(path), a)


def test_matrices_stream(tmp_path, rng):
    mats = [rng.standard_normal((2, 3)), rng.standard_normal((4, 1))]
    write_matrices(tmp_path / "w.bin", mats)
    back = read_matrices(tmp_path / "w.bin", 2)
    assert all(np.array_equal(a, b) for a, b in zip(mats, back))
    with pytest.raises(SchemaError):
        read_matrices(tmp_path / "w.bin", 1)


def test_codes_round_trip(tmp_path, rng):
    codes = rng.integers(0, 16, size=(9, 3))
    write_codes(tmp_path / "c.bin", codes, 16)
    back, k_d = read_codes(tmp_path / "c.bin")
    assert k_d == 16 and back.dtype == np.int64
    assert np.array_equal(back, codes)
    with pytest.raises(ValueError):
        write_codes(tmp_path / "c.bin", codes, 8)


def test_read_errors(tmp_path):
    with pytest.raises(MissingArtifactError):
        read_matrix(tmp_path / "nope.bin")
    (tmp_path / "junk.bin").write_bytes(b"NOTAMATRIX")
    with pytest.raises(SchemaError):
        read_matrix(tmp_path / "junk.bin")
    write_matrix(tmp_path / "t.bin", np.ones((3, 3)))
    data = (tmp_path / "t.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(data[:-8])
    with pytest.raises(SchemaError, match="truncated"):
        read_matrix(tmp_path / "t.bin")
