"""Dense operator arithmetic in two scalar modes.

Exact mode stores matrices as numpy object arrays of fractions.Fraction, so
every identity that holds does so bit-for-bit; float mode stores float64 (or
complex128 where a computation is intrinsically complex).  All operators are
immutable after construction: the backing arrays are marked non-writeable and
every operation allocates a fresh result, which keeps concurrent readers safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

EXACT = "exact"
FLOAT = "float"

ScalarLike = Union[int, float, complex, Fraction, str]


class DimensionMismatchError(ValueError):
    pass


class ModeMismatchError(ValueError):
    pass


class NonFiniteError(ValueError):
    pass


def _exact_entry(x: ScalarLike) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (float, np.floating)):
        # floats are exact binary rationals; the caller opted into exact mode
        return Fraction(float(x))
    raise TypeError(f"cannot use {type(x).__name__} as an exact scalar")


def _check_finite(arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError("non-finite value in float-mode operator")


class Operator:
    """Immutable dense square matrix over Fraction or float64/complex128."""

    __slots__ = ("data", "mode")

    def __init__(self, data: np.ndarray, mode: str, _trusted: bool = False):
        if mode not in (EXACT, FLOAT):
            raise ValueError(f"unknown mode {mode!r}")
        if _trusted:
            self.data = data
        else:
            if data.ndim != 2 or data.shape[0] != data.shape[1]:
                raise DimensionMismatchError(f"operator must be square, got shape {data.shape}")
            if mode == EXACT:
                out = np.empty(data.shape, dtype=object)
                for i in range(data.shape[0]):
                    for j in range(data.shape[1]):
                        out[i, j] = _exact_entry(data[i, j])
                data = out
            else:
                if np.iscomplexobj(data):
                    data = np.asarray(data, dtype=np.complex128)
                else:
                    data = np.asarray(data, dtype=np.float64)
                _check_finite(data)
            data.setflags(write=False)
            self.data = data
        self.mode = mode

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[ScalarLike]], mode: str) -> "Operator":
        n = len(rows)
        if any(len(r) != n for r in rows):
            raise DimensionMismatchError("operator must be square")
        if mode == EXACT:
            arr = np.empty((n, n), dtype=object)
            for i, row in enumerate(rows):
                for j, x in enumerate(row):
                    arr[i, j] = _exact_entry(x)
        else:
            if any(isinstance(x, complex) for row in rows for x in row):
                arr = np.array(rows, dtype=np.complex128)
            else:
                arr = np.array([[float(x) for x in row] for row in rows], dtype=np.float64)
            _check_finite(arr)
        arr.setflags(write=False)
        return cls(arr, mode, _trusted=True)

    @classmethod
    def zero(cls, n: int, mode: str) -> "Operator":
        if mode == EXACT:
            arr = np.empty((n, n), dtype=object)
            arr[:] = Fraction(0)
        else:
            arr = np.zeros((n, n), dtype=np.float64)
        arr.setflags(write=False)
        return cls(arr, mode, _trusted=True)

    @classmethod
    def identity(cls, n: int, mode: str) -> "Operator":
        if mode == EXACT:
            arr = np.empty((n, n), dtype=object)
            arr[:] = Fraction(0)
            for i in range(n):
                arr[i, i] = Fraction(1)
        else:
            arr = np.eye(n, dtype=np.float64)
        arr.setflags(write=False)
        return cls(arr, mode, _trusted=True)

    @classmethod
    def unit(cls, n: int, i: int, j: int, mode: str = EXACT) -> "Operator":
        """Matrix unit e_{ij} (1 at row i, column j, zero-based)."""
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"unit index ({i},{j}) outside dimension {n}")
        if mode == EXACT:
            arr = np.empty((n, n), dtype=object)
            arr[:] = Fraction(0)
            arr[i, j] = Fraction(1)
        else:
            arr = np.zeros((n, n), dtype=np.float64)
            arr[i, j] = 1.0
        arr.setflags(write=False)
        return cls(arr, mode, _trusted=True)

    @classmethod
    def diag(cls, entries: Sequence[ScalarLike], mode: str = EXACT) -> "Operator":
        n = len(entries)
        op = cls.zero(n, mode).data.copy()
        for i, x in enumerate(entries):
            op[i, i] = _exact_entry(x) if mode == EXACT else float(x)
        op.setflags(write=False)
        return cls(op, mode, _trusted=True)

    # -- basic queries -----------------------------------------------------

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def entry(self, i: int, j: int):
        return self.data[i, j]

    def rows(self) -> list[list]:
        return [list(r) for r in self.data]

    def is_zero(self) -> bool:
        if self.mode == EXACT:
            return all(x == 0 for x in self.data.flat)
        return not self.data.any()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Operator):
            return NotImplemented
        if self.mode != other.mode or self.dim != other.dim:
            return False
        return bool((self.data == other.data).all())

    def __hash__(self):
        raise TypeError("operators are not hashable")

    def __repr__(self) -> str:
        return f"Operator({self.dim}x{self.dim}, {self.mode})"

    # -- arithmetic --------------------------------------------------------

    def _require_compatible(self, other: "Operator") -> None:
        if self.mode != other.mode:
            raise ModeMismatchError(f"mode mismatch: {self.mode} vs {other.mode}")
        if self.dim != other.dim:
            raise DimensionMismatchError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def _wrap(self, arr: np.ndarray) -> "Operator":
        if self.mode == FLOAT:
            _check_finite(arr)
        arr.setflags(write=False)
        return Operator(arr, self.mode, _trusted=True)

    def __add__(self, other: "Operator") -> "Operator":
        self._require_compatible(other)
        return self._wrap(self.data + other.data)

    def __sub__(self, other: "Operator") -> "Operator":
        self._require_compatible(other)
        return self._wrap(self.data - other.data)

    def __neg__(self) -> "Operator":
        return self._wrap(-self.data)

    def __matmul__(self, other: "Operator") -> "Operator":
        self._require_compatible(other)
        # np.dot supports object dtype; matmul does too on current numpy,
        # dot is kept for clarity that both paths share one code route
        return self._wrap(np.dot(self.data, other.data))

    def scale(self, s: ScalarLike) -> "Operator":
        if self.mode == EXACT:
            c = _exact_entry(s)
            out = np.empty(self.data.shape, dtype=object)
            for i in range(self.dim):
                for j in range(self.dim):
                    out[i, j] = c * self.data[i, j]
            return self._wrap(out)
        if isinstance(s, Fraction):
            s = float(s)
        arr = self.data * s
        if np.iscomplexobj(arr) and not np.iscomplexobj(self.data):
            pass  # complex scalar promotes a real operator; allowed in float mode
        return self._wrap(arr)

    def __mul__(self, s: ScalarLike) -> "Operator":
        return self.scale(s)

    __rmul__ = __mul__

    # -- conversions -------------------------------------------------------

    def to_float(self) -> "Operator":
        if self.mode == FLOAT:
            return self
        arr = np.array([[float(x) for x in row] for row in self.data], dtype=np.float64)
        _check_finite(arr)
        arr.setflags(write=False)
        return Operator(arr, FLOAT, _trusted=True)

    def real_part(self) -> "Operator":
        if self.mode == EXACT or not np.iscomplexobj(self.data):
            return self
        arr = np.ascontiguousarray(self.data.real)
        arr.setflags(write=False)
        return Operator(arr, FLOAT, _trusted=True)

    def imag_part(self) -> "Operator":
        if self.mode == EXACT or not np.iscomplexobj(self.data):
            return Operator.zero(self.dim, self.mode)
        arr = np.ascontiguousarray(self.data.imag)
        arr.setflags(write=False)
        return Operator(arr, FLOAT, _trusted=True)

    def to_jsonable(self) -> list[list]:
        if self.mode == EXACT:
            return [[str(x) for x in row] for row in self.data]
        if np.iscomplexobj(self.data):
            raise ValueError("complex operators are not serializable")
        return [[float(x) for x in row] for row in self.data]


def commutator(a: Operator, b: Operator) -> Operator:
    """[a, b] = a b - b a."""
    return a @ b - b @ a


@dataclass(frozen=True)
class NormBound:
    """Frobenius norm, upper-bounded.

    In float mode `value` is the computed norm.  In exact mode `exact_square`
    is the exact rational sum of squared entries and `root_upper` a rational
    upper bound on its square root; `value` is float(root_upper).
    """

    value: float
    exact_square: Optional[Fraction] = None
    root_upper: Optional[Fraction] = None


def _rational_sqrt_upper(f: Fraction) -> Fraction:
    # sqrt(p/q) = sqrt(p q)/q <= (isqrt(p q) + 1)/q
    if f < 0:
        raise ValueError("negative square")
    if f == 0:
        return Fraction(0)
    p, q = f.numerator, f.denominator
    return Fraction(math.isqrt(p * q) + 1, q)


def norm_bound(a: Operator) -> NormBound:
    if a.mode == EXACT:
        sq = Fraction(0)
        for x in a.data.flat:
            sq += x * x
        root = _rational_sqrt_upper(sq)
        return NormBound(value=float(root), exact_square=sq, root_upper=root)
    val = float(np.sqrt((abs(a.data) ** 2).sum()))
    return NormBound(value=val)


def frobenius(a: Operator) -> float:
    """Convenience float Frobenius norm (upper bound in exact mode)."""
    if a.mode == EXACT:
        sq = Fraction(0)
        for x in a.data.flat:
            sq += x * x
        return math.sqrt(float(sq))
    return float(np.sqrt((abs(a.data) ** 2).sum()))


def operator_exp(a: Operator, tol: float = 1e-13) -> Operator:
    """exp(a) by scaling-and-squaring of the Taylor series, float mode only.

    The Taylor truncation is driven below tol divided by a conservative
    squaring amplification factor; nilpotent inputs terminate exactly.
    """
    if a.mode != FLOAT:
        raise ModeMismatchError("operator_exp requires float mode")
    if not (tol > 0):
        raise ValueError("tol must be positive")
    nrm = frobenius(a)
    if nrm == 0.0:
        return Operator.identity(a.dim, FLOAT)
    s = 0 if nrm <= 0.5 else int(math.ceil(math.log2(nrm / 0.5)))
    b = a.scale(2.0 ** (-s))
    nb = frobenius(b)  # <= 0.5
    # error amplification through s squarings: prod 2 ||exp(2^i b)|| <= 2^s e^nrm
    amp = (2.0**s) * math.exp(min(nrm, 700.0))
    tol_local = tol / max(amp, 1.0)

    acc = Operator.identity(a.dim, FLOAT)
    term = Operator.identity(a.dim, FLOAT)
    for k in range(1, 200):
        term = (term @ b).scale(1.0 / k)
        acc = acc + term
        # remaining tail <= ||term|| * q/(1-q) with q = nb/(k+1) <= 1/2
        q = nb / (k + 1)
        rem = frobenius(term) * q / (1.0 - q) if q < 1 else math.inf
        if rem <= tol_local:
            break
    else:
        raise ValueError("operator_exp did not converge within 200 terms")
    for _ in range(s):
        acc = acc @ acc
    return acc
