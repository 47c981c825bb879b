"""Dense linear algebra and sampling kernels.

Every system matrix handled here is symmetric positive definite by
construction (a ridge term or a prior precision is always added), so all
solves go through a Cholesky factorization.
"""

from __future__ import annotations

import hashlib
from typing import Any

import numpy as np
import scipy.linalg

from .errors import FactorizationError, ParameterError, SchemaError

SYMMETRY_TOL = 1e-10


def stream_id(replication: int, tag: str) -> int:
    """Stable 63-bit stream id for a (replication, module tag) pair.

    Python's ``hash`` is salted per process, so a keyed digest is used instead;
    parallel workers derive the same id for the same pair.
    """
    digest = hashlib.blake2b(f"{int(replication)}/{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


class RngStream:
    """Reproducible random stream identified by ``(seed, stream)``.

    Two instances built from the same pair produce bit-identical draws.
    The stream advances as it is used, so hand each consumer its own.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ParameterError("seed and stream id must be non-negative")
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    @classmethod
    def for_task(cls, seed: int, replication: int, tag: str) -> "RngStream":
        return cls(seed, stream_id(replication, tag))

    def child(self, tag: str) -> "RngStream":
        """Independent stream derived from this one's identity (not its state)."""
        digest = hashlib.blake2b(f"{self.stream}:{tag}".encode(), digest_size=8).digest()
        return RngStream(self.seed, int.from_bytes(digest, "little") >> 1)

    # thin delegation; keeps call sites short
    def normal(self, loc: Any = 0.0, scale: Any = 1.0, size: Any = None):
        return self.generator.normal(loc, scale, size)

    def standard_normal(self, size: Any = None):
        return self.generator.standard_normal(size)

    def random(self, size: Any = None):
        return self.generator.random(size)

    def gamma(self, shape: Any, size: Any = None):
        return self.generator.gamma(shape, 1.0, size)

    def integers(self, low: int, high: int | None = None, size: Any = None):
        return self.generator.integers(low, high, size)

    def choice_index(self, probs: np.ndarray) -> int:
        """Draw an index from a probability vector by inverse CDF."""
        u = self.generator.random()
        cdf = np.cumsum(probs)
        idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
        return min(idx, len(probs) - 1)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def _as_square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise SchemaError(f"expected a square matrix, got shape {A.shape}")
    return A


def cholesky(A) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    A = _as_square(A)
    if not np.allclose(A, A.T, rtol=0.0, atol=SYMMETRY_TOL * max(1.0, np.abs(A).max(initial=0.0))):
        raise FactorizationError("matrix is not symmetric")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"matrix is not positive definite: {exc}") from None


def solve_spd(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    A = _as_square(A)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise SchemaError(f"dimension mismatch: A is {A.shape}, b has {b.shape[0]} rows")
    L = cholesky(A)
    return scipy.linalg.cho_solve((L, True), b, check_finite=False)


def inv_spd(A) -> np.ndarray:
    A = _as_square(A)
    inv = solve_spd(A, np.eye(A.shape[0]))
    return 0.5 * (inv + inv.T)


def ridge_fit(X, y, lam: float = 0.0, weights=None) -> np.ndarray:
    """Penalized least squares: solve ``(X'WX + lam I) beta = X'Wy``.

    Raises :class:`FactorizationError` when ``lam == 0`` and the design is
    rank deficient.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise SchemaError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if X.shape[0] < 1:
        raise SchemaError("ridge_fit needs at least one row")
    if lam < 0:
        raise ParameterError("ridge penalty must be non-negative")
    Xw = X if weights is None else X * np.asarray(weights, dtype=float)[:, None]
    gram = Xw.T @ X
    if lam:
        gram[np.diag_indices_from(gram)] += lam
    try:
        return solve_spd(gram, Xw.T @ y)
    except FactorizationError as exc:
        if lam == 0:
            raise FactorizationError(f"singular design with lambda=0; use a positive ridge penalty ({exc})") from None
        raise


def sample_mvn(mean, cov, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Draw ``mean + L z`` with ``L`` the Cholesky factor of ``cov``.

    An all-zero covariance is treated as a point mass at ``mean``. With
    ``size`` given, returns an array of shape ``(size, d)``.
    """
    mean = np.asarray(mean, dtype=float)
    cov = _as_square(cov)
    if cov.shape[0] != mean.shape[0]:
        raise SchemaError(f"mean has length {mean.shape[0]} but cov is {cov.shape}")
    if not cov.any():
        return mean.copy() if size is None else np.tile(mean, (size, 1))
    L = cholesky(cov)
    if size is None:
        return mean + L @ rng.standard_normal(mean.shape[0])
    z = rng.standard_normal((size, mean.shape[0]))
    return mean + z @ L.T


def sample_inverse_gamma(a: float, b: float, rng: RngStream, size: int | None = None):
    """Draw from IG(shape=a, scale=b), i.e. ``b / Gamma(a, 1)``."""
    if not (a > 0 and b > 0):
        raise ParameterError(f"inverse gamma needs a > 0 and b > 0, got a={a}, b={b}")
    return b / rng.gamma(a, size)
