"""Seeded randomness and the small dense-array helpers everything else shares.

All arithmetic is 64-bit floating point. Randomness comes from numpy's PCG64
generator; independent streams are derived by hashing a (master_seed, label)
pair with SHA-256, so distinct labels never share a stream and repeated runs
bit-match.

Sampler algorithms (fixed for reproducibility of result files):
  * Laplace: inverse-CDF transform of a single uniform draw per sample.
  * Gaussian: numpy ``Generator.standard_normal`` (ziggurat).
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ParameterError, ShapeError

GENERATOR_NAME = "pcg64"


def derive_seed(master_seed: int, label: str) -> int:
    """Map (master_seed, label) to a 64-bit stream seed via SHA-256.

    The label is a short path-like string naming the consumer, e.g.
    ``"learners.train"`` or ``"shadow/3"``. Distinct (seed, label) pairs give
    independent streams; identical pairs always give the same stream.
    """
    payload = f"{int(master_seed)}\x1f{label}".encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master_seed: int, label: str) -> np.random.Generator:
    """A PCG64 generator on the stream derived from (master_seed, label)."""
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, label)))


def sample_laplace(rng: np.random.Generator, scale: float, size) -> np.ndarray:
    """Draw i.i.d. Laplace(0, scale) noise of the given shape.

    Uses the inverse CDF: with u ~ U[0, 1) and v = u - 1/2,
    x = -scale * sign(v) * ln(1 - 2|v|). The u = 0 corner (probability
    2^-53 per draw) is nudged inward so the log stays finite.
    """
    if scale <= 0:
        raise ParameterError(f"laplace scale must be positive, got {scale}")
    v = rng.random(size) - 0.5
    mag = np.minimum(np.abs(v), 0.5 * (1.0 - np.finfo(np.float64).eps))
    return -scale * np.sign(v) * np.log1p(-2.0 * mag)


def sample_gaussian(rng: np.random.Generator, sigma: float, size) -> np.ndarray:
    """Draw i.i.d. N(0, sigma^2) noise of the given shape."""
    if sigma <= 0:
        raise ParameterError(f"gaussian sigma must be positive, got {sigma}")
    return sigma * rng.standard_normal(size)


def as_matrix(x) -> np.ndarray:
    """Validate and return x as a finite float64 2-D array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ShapeError("matrix entries must all be finite")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit conformance check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul expects two 2-D arrays")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes do not conform: {a.shape} @ {b.shape}")
    return a @ b


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """alpha * x + y for arrays of identical shape."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"axpy shapes differ: {x.shape} vs {y.shape}")
    return alpha * x + y


def l2_norm(x: np.ndarray) -> float:
    """Euclidean norm of a vector (or of a flattened array)."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.sum(x * x)))


def clip_rows_to_norm(m: np.ndarray, bound: float) -> np.ndarray:
    """Scale each row r to r * min(1, bound / ||r||_2).

    Rows already inside the bound (including zero rows) pass through
    unchanged, bit for bit; longer rows are scaled down onto the sphere of
    radius ``bound``, preserving direction.
    """
    if bound <= 0:
        raise ParameterError(f"clip bound must be positive, got {bound}")
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError("clip_rows_to_norm expects a 2-D array")
    norms = np.sqrt(np.sum(m * m, axis=1, keepdims=True))
    with np.errstate(divide="ignore"):
        factors = np.minimum(1.0, bound / np.maximum(norms, np.finfo(np.float64).tiny))
    return m * factors
