"""
Small dense linear-algebra kernel used by the interface accelerators.

Vectors and matrices are plain float64 numpy arrays.  The QR factorization is
a textbook Householder sweep; it is recomputed from scratch on every call,
which is cheap because the least-squares problems here have at most a few
dozen columns.
"""

import numpy as np

from .errors import DimensionError, NonFiniteError, RankDeficient


def as_vector(x, name="vector"):
    v = np.array(x, dtype=float, copy=True).reshape(-1)
    if v.size == 0:
        raise DimensionError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return v


def as_matrix(a, name="matrix"):
    """Return a float copy of ``a`` as a 2-D array.  1-D input becomes one column."""
    m = np.array(a, dtype=float, copy=True)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return m


class HouseholderFactors:
    """
    Orthogonal factor Q stored implicitly as a list of unit reflector vectors.

    Reflector ``j`` acts on rows ``j:`` as ``I - 2 v v^T``.  A zero vector
    stands for the identity (column already zero below the diagonal).
    """

    def __init__(self, reflectors, m):
        self.reflectors = reflectors
        self.m = m

    @property
    def k(self):
        return len(self.reflectors)

    def apply_qt(self, b):
        """Return Q^T b for a vector or a matrix with ``m`` rows."""
        y = np.array(b, dtype=float, copy=True)
        if y.shape[0] != self.m:
            raise DimensionError(f"expected {self.m} rows, got {y.shape[0]}")
        for j, v in enumerate(self.reflectors):
            if y.ndim == 1:
                y[j:] -= 2.0 * v * (v @ y[j:])
            else:
                y[j:] -= 2.0 * np.outer(v, v @ y[j:])
        return y

    def apply_q(self, b):
        """Return Q b, where ``b`` has ``m`` rows."""
        y = np.array(b, dtype=float, copy=True)
        if y.shape[0] != self.m:
            raise DimensionError(f"expected {self.m} rows, got {y.shape[0]}")
        for j in range(self.k - 1, -1, -1):
            v = self.reflectors[j]
            if y.ndim == 1:
                y[j:] -= 2.0 * v * (v @ y[j:])
            else:
                y[j:] -= 2.0 * np.outer(v, v @ y[j:])
        return y

    def thin_q(self):
        """Explicit m-by-k matrix with orthonormal columns."""
        e = np.zeros((self.m, self.k))
        e[: self.k, : self.k] = np.eye(self.k)
        return self.apply_q(e)


def householder_qr(a):
    """
    Householder QR factorization of a tall matrix.

    Parameters
    ----------
    a : array_like, shape (m, k)
        Matrix with ``m >= k >= 1``.

    Returns
    -------
    factors : HouseholderFactors
        Implicit representation of the orthogonal factor.
    r : ndarray, shape (k, k)
        Upper-triangular factor.  Diagonal signs follow the reflector
        convention (``r[j, j] = -sign(a_jj) * norm``), so they may be negative.
    """
    work = as_matrix(a, "A")
    m, k = work.shape
    if k == 0 or k > m:
        raise DimensionError(f"householder_qr needs m >= k >= 1, got {m}x{k}")

    reflectors = []
    for j in range(k):
        x = work[j:, j]
        norm_x = np.linalg.norm(x)
        v = np.zeros(m - j)
        if norm_x > 0.0:
            alpha = -norm_x if x[0] >= 0.0 else norm_x
            v[:] = x
            v[0] -= alpha
            norm_v = np.linalg.norm(v)
            if norm_v > 0.0:
                v /= norm_v
                work[j:, j:] -= 2.0 * np.outer(v, v @ work[j:, j:])
            else:
                v[:] = 0.0
        reflectors.append(v)

    r = np.triu(work[:k, :k])
    return HouseholderFactors(reflectors, m), r


def back_substitute(r, y):
    """Solve the upper-triangular system ``r x = y``."""
    k = r.shape[0]
    x = np.zeros(k)
    for i in range(k - 1, -1, -1):
        x[i] = (y[i] - r[i, i + 1 :] @ x[i + 1 :]) / r[i, i]
    return x


def lstsq(a, b, threshold=0.0):
    """
    Minimize ``||a @ coeffs - b||_2`` through Householder QR.

    ``threshold`` is relative to ``max|diag(R)|``; a diagonal entry at or
    below it raises :class:`RankDeficient` so the caller can filter columns.
    With the default of zero only exactly singular factors are rejected.
    """
    a = as_matrix(a, "A")
    b = as_vector(b, "b")
    m, k = a.shape
    if b.size != m:
        raise DimensionError(f"A has {m} rows but b has {b.size} entries")
    if not np.any(a):
        raise RankDeficient("all columns of A are zero", column=0)

    factors, r = householder_qr(a)
    diag = np.abs(np.diag(r))
    cutoff = threshold * diag.max()
    bad = np.flatnonzero(diag <= cutoff)
    if bad.size:
        raise RankDeficient(
            f"R diagonal {diag[bad[0]]:.3e} at column {bad[0]} is below {cutoff:.3e}",
            column=int(bad[0]),
        )

    y = factors.apply_qt(b)[:k]
    coeffs = back_substitute(r, y)
    if not np.all(np.isfinite(coeffs)):
        raise NonFiniteError("least-squares coefficients are not finite")
    return coeffs
