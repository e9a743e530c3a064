"""
Numeric Core - Dense linear algebra helpers, seeded RNG and finite differences.

Every other core module builds on these. Vectors and matrices are float64 numpy
arrays (row-major); the helpers validate shapes and finiteness so callers get a
DimensionError or NumericError instead of silent broadcasting.
"""

from typing import Callable, Iterable, Union

import numpy as np
import numpy.typing as npt

from core.errors import DimensionError, NumericError, shape_mismatch

DenseVector = npt.NDArray[np.float64]
DenseMatrix = npt.NDArray[np.float64]
Rng = np.random.Generator

ArrayLike = Union[DenseVector, DenseMatrix, Iterable[float]]


def make_rng(seed: int) -> Rng:
    """
    Create a deterministic generator for a 64-bit seed.

    PCG64 streams are identical across platforms for identical seeds.

    Args:
        seed: Non-negative integer seed

    Returns:
        numpy Generator backed by PCG64
    """
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, *labels: Union[int, str]) -> int:
    """
    Derive an independent child seed for a named stream.

    Calls with different labels never share a stream, so dictionary
    initialization and epoch shuffling stay independent of each other.

    Args:
        seed: Run seed
        labels: Stream labels (strings or integers)

    Returns:
        64-bit child seed
    """
    words = [seed]
    for label in labels:
        if isinstance(label, str):
            words.extend(label.encode("utf-8"))
        else:
            words.append(int(label))
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


def as_vector(data: ArrayLike) -> DenseVector:
    """Copy data into a contiguous 1-D float64 array."""
    vector = np.array(data, dtype=np.float64)
    if vector.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {vector.shape}")
    return vector


def as_matrix(data: ArrayLike, rows: int, cols: int) -> DenseMatrix:
    """
    Build a rows x cols matrix from row-major data.

    Args:
        data: Row-major sequence of rows * cols floats (or an array of that shape)
        rows: Row count
        cols: Column count

    Returns:
        float64 matrix

    Raises:
        DimensionError: If the element count differs from rows * cols
    """
    flat = np.array(data, dtype=np.float64).reshape(-1)
    if flat.size != rows * cols:
        raise DimensionError(f"matrix data has {flat.size} elements, expected {rows}x{cols}")
    return flat.reshape(rows, cols)


def matvec_transposed(matrix: DenseMatrix, vector: DenseVector) -> DenseVector:
    """
    Compute M^T v.

    This is the correlation step D^T r of matching pursuit.

    Args:
        matrix: rows x cols matrix
        vector: Vector of length rows

    Returns:
        Vector of length cols with result[j] = sum_i M[i, j] * v[i]

    Raises:
        DimensionError: If v.len != M.rows
    """
    if matrix.ndim != 2 or vector.ndim != 1 or vector.shape[0] != matrix.shape[0]:
        raise shape_mismatch("matvec_transposed", matrix.shape, vector.shape)
    return matrix.T @ vector


def column(matrix: DenseMatrix, j: int) -> DenseVector:
    """
    Copy the j-th column of a matrix.

    Raises:
        IndexError: If j is outside [0, cols)
    """
    if not 0 <= j < matrix.shape[1]:
        raise IndexError(f"column index {j} out of range for {matrix.shape[1]} columns")
    return matrix[:, j].copy()


def axpy(alpha: float, x: DenseVector, y: DenseVector) -> DenseVector:
    """
    Return y + alpha * x elementwise.

    The residual update of matching pursuit is axpy with alpha = -z.

    Raises:
        DimensionError: If x and y differ in length
    """
    if x.shape != y.shape:
        raise shape_mismatch("axpy", x.shape, y.shape)
    return y + alpha * x


def column_norms(matrix: DenseMatrix) -> DenseVector:
    """Euclidean norm of every column."""
    return np.sqrt(np.einsum("ij,ij->j", matrix, matrix))


def finite_difference_gradient(
    f: Callable[[DenseVector], float],
    x0: DenseVector,
    h: float = 1e-5,
) -> DenseVector:
    """
    Central-difference gradient of a scalar function.

    Args:
        f: Scalar function of a vector
        x0: Evaluation point
        h: Step size, must be positive

    Returns:
        Vector of (f(x0 + h e_i) - f(x0 - h e_i)) / (2h)

    Raises:
        ValueError: If h is not positive
        NumericError: If f is non-finite at a probe point (names the coordinate)
    """
    if not h > 0:
        raise ValueError(f"finite difference step must be positive, got {h}")

    base = as_vector(x0)
    grad = np.zeros_like(base)
    for i in range(base.shape[0]):
        plus = base.copy()
        minus = base.copy()
        plus[i] += h
        minus[i] -= h
        f_plus = float(f(plus))
        f_minus = float(f(minus))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"non-finite function value at coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def ensure_finite(array: np.ndarray, what: str) -> None:
    """Raise NumericError naming the first non-finite entry of an array."""
    bad = ~np.isfinite(array)
    if bad.any():
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NumericError(f"{what}: non-finite value at index {index}")
