"""Dense linear algebra helpers and the on-disk matrix formats.

Everything here works on float64 ``numpy`` arrays. The two binary formats are
little-endian throughout:

* matrices: ``b"SPDQMAT1"``, rows (u64), cols (u64), then row-major f64 values
* code tables: ``b"SPDQCOD1"``, N (u64), M (u64), K_d (u64), then N*M bytes
"""

from __future__ import annotations

import os
import struct

import numpy as np
import scipy.linalg

from .errors import DimensionError, MissingArtifactError, NumericalError, SchemaError

MATRIX_MAGIC = b"SPDQMAT1"
CODES_MAGIC = b"SPDQCOD1"


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array or raise."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite values")
    return arr


def svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin singular value decomposition ``a = U @ diag(sigma) @ V.T``.

    Returns ``(U, sigma, V)`` with ``sigma`` sorted non-increasing. Note that
    ``V`` is returned un-transposed.

    Raises:
        NumericalError: if LAPACK fails to converge or ``a`` is not finite.
    """
    a = as_matrix(a, "svd input")
    try:
        u, sigma, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return u, sigma, vt.T


def solve_spd(a, b, ridge: float = 0.0) -> np.ndarray:
    """Solve ``(a + ridge * I) @ X = b`` for symmetric positive definite ``a``.

    ``b`` may be a vector or a matrix. A Cholesky factorization is used, so a
    system that is not positive definite after the ridge shift is reported as
    a ``NumericalError`` rather than silently solved.
    """
    a = as_matrix(a, "solve_spd lhs")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"solve_spd needs a square matrix, got {a.shape}")
    if ridge < 0 or not np.isfinite(ridge):
        raise ValueError(f"ridge must be finite and non-negative, got {ridge}")
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"rhs has {b.shape[0]} rows, expected {a.shape[0]}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * scale):
        raise DimensionError("solve_spd needs a symmetric matrix")
    shifted = a + ridge * np.eye(a.shape[0])
    try:
        factor = scipy.linalg.cho_factor(shifted, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"matrix is not positive definite after ridge={ridge:g}"
        ) from exc
    x = scipy.linalg.cho_solve(factor, b, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise NumericalError("solve_spd produced non-finite values")
    return x


def random_orthonormal_rows(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a ``rows x cols`` matrix with orthonormal rows (``rows <= cols``)."""
    if rows > cols:
        raise DimensionError(f"cannot have {rows} orthonormal rows in dimension {cols}")
    q, r = np.linalg.qr(rng.standard_normal((cols, rows)))
    # sign fix makes the draw Haar-distributed
    q = q * np.sign(np.diag(r))
    return q.T.copy()


# --- file formats -----------------------------------------------------------


def write_matrix(path, a, fmt: str | None = None) -> None:
    """Write a 2-D array as CSV or SPDQMAT1 binary.

    The format is taken from ``fmt`` (``"csv"`` or ``"bin"``) or, failing
    that, from the file suffix (``.csv`` means CSV, anything else binary).
    """
    a = as_matrix(a)
    fmt = fmt or _format_from_suffix(path)
    if fmt == "csv":
        # %.17g round-trips every double exactly
        np.savetxt(path, a, delimiter=",", fmt="%.17g")
        return
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_matrix(path, fmt: str | None = None) -> np.ndarray:
    if not os.path.exists(path):
        raise MissingArtifactError(f"no such matrix file: {path}")
    fmt = fmt or _format_from_suffix(path)
    if fmt == "csv":
        a = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        return as_matrix(a, str(path))
    with open(path, "rb") as fh:
        return _read_matrix_stream(fh, str(path))


def _read_matrix_stream(fh, name: str) -> np.ndarray:
    magic = fh.read(8)
    if magic != MATRIX_MAGIC:
        raise SchemaError(f"{name}: bad magic {magic!r}")
    header = fh.read(16)
    if len(header) != 16:
        raise SchemaError(f"{name}: truncated header")
    rows, cols = struct.unpack("<QQ", header)
    payload = fh.read(8 * rows * cols)
    if len(payload) != 8 * rows * cols:
        raise SchemaError(f"{name}: expected {rows}x{cols} values, file is truncated")
    a = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)
    return as_matrix(a, name)


def write_matrices(path, arrays) -> None:
    """Concatenate several SPDQMAT1 blocks into one file, in iteration order."""
    with open(path, "wb") as fh:
        for a in arrays:
            a = as_matrix(a)
            fh.write(MATRIX_MAGIC)
            fh.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_matrices(path, count: int) -> list[np.ndarray]:
    if not os.path.exists(path):
        raise MissingArtifactError(f"no such matrix file: {path}")
    with open(path, "rb") as fh:
        out = [_read_matrix_stream(fh, f"{path}[{i}]") for i in range(count)]
        if fh.read(1):
            raise SchemaError(f"{path}: trailing bytes after {count} matrices")
    return out


def write_codes(path, codes, k_d: int) -> None:
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise DimensionError(f"codes must be N x M, got shape {codes.shape}")
    if k_d > 256:
        raise ValueError("byte-packed codes need K_d <= 256")
    if codes.size and (codes.min() < 0 or codes.max() >= k_d):
        raise ValueError(f"code index outside [0, {k_d})")
    with open(path, "wb") as fh:
        fh.write(CODES_MAGIC)
        fh.write(struct.pack("<QQQ", codes.shape[0], codes.shape[1], k_d))
        fh.write(codes.astype(np.uint8).tobytes())


def read_codes(path) -> tuple[np.ndarray, int]:
    """Read a code table; returns ``(codes, K_d)`` with codes as int64 ``N x M``."""
    if not os.path.exists(path):
        raise MissingArtifactError(f"no such code file: {path}")
    with open(path, "rb") as fh:
        if fh.read(8) != CODES_MAGIC:
            raise SchemaError(f"{path}: bad magic")
        n, m, k_d = struct.unpack("<QQQ", fh.read(24))
        payload = fh.read(n * m)
    if len(payload) != n * m:
        raise SchemaError(f"{path}: truncated code table")
    codes = np.frombuffer(payload, dtype=np.uint8).reshape(n, m).astype(np.int64)
    if codes.size and codes.max() >= k_d:
        raise SchemaError(f"{path}: code index >= K_d={k_d}")
    return codes, int(k_d)


def _format_from_suffix(path) -> str:
    return "csv" if str(path).lower().endswith(".csv") else "bin"
