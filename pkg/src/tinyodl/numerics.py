"""Dense matrix helpers and a saturating Q16.16 fixed-point scalar.

Matrices are plain 2-D numpy arrays in row-major (C) order. In fixed-point
mode the arrays hold the raw Q16.16 integers in an ``int64`` container whose
values are always kept inside the signed 32-bit range.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAC_BITS = 16
ONE = 1 << FRAC_BITS
INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1

_CHUNK = 1 << 22

SCALAR_MODES = ("float64", "float32", "fixed")


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised by :func:`solve_spd` when a Cholesky pivot is not positive."""

    def __init__(self, pivot, value):
        self.pivot = pivot
        self.value = value
        super().__init__(
            f"matrix is not positive definite: pivot {pivot} has value {value!r}"
        )


def _round_shift(num, shift):
    # round to nearest, ties toward +inf (arithmetic shift of a biased value)
    return (num + (1 << (shift - 1))) >> shift


def _saturate(raw):
    if isinstance(raw, np.ndarray):
        return np.clip(raw, INT32_MIN, INT32_MAX)
    return max(INT32_MIN, min(INT32_MAX, raw))


@dataclass(frozen=True, order=True)
class FixedPoint32:
    """Signed Q16.16 value with saturating arithmetic."""

    raw: int

    def __post_init__(self):
        if not INT32_MIN <= self.raw <= INT32_MAX:
            raise OverflowError(f"raw value {self.raw} outside int32 range")

    @classmethod
    def from_float(cls, value: float) -> "FixedPoint32":
        return cls(_saturate(int(round(value * ONE))))

    def to_float(self) -> float:
        return self.raw / ONE

    def __float__(self):
        return self.to_float()

    def __add__(self, other):
        return FixedPoint32(_saturate(self.raw + other.raw))

    def __sub__(self, other):
        return FixedPoint32(_saturate(self.raw - other.raw))

    def __neg__(self):
        return FixedPoint32(_saturate(-self.raw))

    def __mul__(self, other):
        return fp_mul(self, other)

    def __truediv__(self, other):
        return fp_div(self, other)

    @property
    def saturated(self) -> bool:
        return self.raw in (INT32_MIN, INT32_MAX)


FIXED_MAX = FixedPoint32(INT32_MAX)
FIXED_MIN = FixedPoint32(INT32_MIN)


def fp_mul(a: FixedPoint32, b: FixedPoint32) -> FixedPoint32:
    return FixedPoint32(_saturate(_round_shift(a.raw * b.raw, FRAC_BITS)))


def fp_div(a: FixedPoint32, b: FixedPoint32) -> FixedPoint32:
    if b.raw == 0:
        raise ZeroDivisionError("fixed-point division by zero")
    num = a.raw << FRAC_BITS
    q, r = divmod(abs(num), abs(b.raw))
    if 2 * r >= abs(b.raw):
        q += 1
    if (num < 0) != (b.raw < 0):
        q = -q
    return FixedPoint32(_saturate(q))


# ---------------------------------------------------------------------------
# array level fixed-point kernels (raw int64 arrays)


def to_fixed(x) -> np.ndarray:
    """Quantize a float array to raw Q16.16 values (saturating)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite values")
    return _saturate(np.rint(x * ONE)).astype(np.int64)


def from_fixed(raw) -> np.ndarray:
    return np.asarray(raw, dtype=np.int64) / ONE


def fx_mul(a, b) -> np.ndarray:
    """Elementwise fixed-point product with per-op rounding and saturation."""
    prod = np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64)
    return _saturate(_round_shift(prod, FRAC_BITS))


def fx_div(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if np.any(b == 0):
        raise ZeroDivisionError("fixed-point division by zero")
    num = a << FRAC_BITS
    q, r = np.divmod(np.abs(num), np.abs(b))
    q = q + (2 * r >= np.abs(b))
    q = np.where((num < 0) != (b < 0), -q, q)
    return _saturate(q)


def fx_matmul(a, b) -> np.ndarray:
    """Fixed-point matrix product.

    Each product is rounded to Q16.16 and saturated before accumulation, the
    running sum saturates at the end (a MAC unit with a wide accumulator).
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    a2 = a[None, :] if a.ndim == 1 else a
    b2 = b[:, None] if b.ndim == 1 else b
    if a2.shape[1] != b2.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    out = np.empty((a2.shape[0], b2.shape[1]), dtype=np.int64)
    rows = max(1, _CHUNK // max(b2.size, 1))
    for r in range(0, a2.shape[0], rows):
        out[r:r + rows] = fx_mul(a2[r:r + rows, :, None], b2[None, :, :]).sum(axis=1)
    out = _saturate(out)
    if a.ndim == 1 and b.ndim == 1:
        return out[0, 0]
    if a.ndim == 1:
        return out[0]
    if b.ndim == 1:
        return out[:, 0]
    return out


def is_saturated(raw) -> bool:
    raw = np.asarray(raw)
    return bool(np.any((raw <= INT32_MIN) | (raw >= INT32_MAX)))


# ---------------------------------------------------------------------------
# mode-generic helpers


def check_mode(mode: str) -> str:
    if mode not in SCALAR_MODES:
        raise ValueError(f"unknown scalar mode {mode!r}; expected one of {SCALAR_MODES}")
    return mode


def as_mode(x, mode: str) -> np.ndarray:
    """Convert float data into the storage representation of ``mode``."""
    check_mode(mode)
    if mode == "fixed":
        return to_fixed(x)
    return np.ascontiguousarray(x, dtype=np.float32 if mode == "float32" else np.float64)


def to_float(x, mode: str) -> np.ndarray:
    if mode == "fixed":
        return from_fixed(x)
    return np.asarray(x, dtype=np.float64)


def matmul(a, b, mode: str = "float64") -> np.ndarray:
    """Matrix product in the given scalar mode.

    >>> matmul(np.array([[1., 2.], [3., 4.]]), np.array([[1.], [1.]]))
    array([[3.],
           [7.]])
    """
    a = np.asarray(a)
    b = np.asarray(b)
    ka = a.shape[-1]
    kb = b.shape[0]
    if ka != kb:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    if check_mode(mode) == "fixed":
        return fx_matmul(a, b)
    return a @ b


def cholesky(a) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if not d > 0.0:
            raise NotPositiveDefiniteError(j, float(d))
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _forward(L, b):
    y = np.empty_like(b)
    for i in range(L.shape[0]):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def _backward(U, y):
    x = np.empty_like(y)
    for i in range(U.shape[0] - 1, -1, -1):
        x[i] = (y[i] - U[i, i + 1:] @ x[i + 1:]) / U[i, i]
    return x


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ X = b`` for symmetric positive definite ``a``.

    Raises
    ------
    NotPositiveDefiniteError
        If a Cholesky pivot is not strictly positive; ``.pivot`` holds its index.
    """
    b = np.asarray(b, dtype=np.float64)
    L = cholesky(a)
    if b.shape[0] != L.shape[0]:
        raise DimensionError(f"rhs has {b.shape[0]} rows, matrix is {L.shape}")
    vec = b.ndim == 1
    b2 = b[:, None] if vec else b
    x = _backward(L.T, _forward(L, b2))
    return x[:, 0] if vec else x
