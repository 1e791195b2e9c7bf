"""Domain types shared across the package: two-sample data, DRM basis
functions and parameter bundles."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit


class ZidrmError(Exception):
    """Base class for all errors raised by this package."""


class EmptySample(ZidrmError, ValueError):
    pass


class NoPositives(ZidrmError, ValueError):
    pass


class DomainError(ZidrmError, ValueError):
    pass


class DimensionMismatch(ZidrmError, ValueError):
    pass


class BoundaryNu(ZidrmError):
    """A zero proportion estimate sits on {0, 1}; variance formulas are undefined."""


class NegativeValueWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class TwoSampleData:
    """Two semicontinuous samples split into zero counts and positive values.

    Positives are kept in input order. Every pooled quantity iterates over
    sample 0 first, then sample 1.
    """

    sample0_positive: np.ndarray
    sample1_positive: np.ndarray
    n00: int
    n10: int
    notes: tuple = field(default=(), compare=False)

    def __post_init__(self):
        x0 = np.array(self.sample0_positive, dtype=float).ravel()
        x1 = np.array(self.sample1_positive, dtype=float).ravel()
        for x in (x0, x1):
            if x.size and (not np.all(np.isfinite(x)) or np.any(x <= 0)):
                raise DomainError("stored positives must be finite and > 0")
        if self.n00 < 0 or self.n10 < 0:
            raise DomainError("zero counts must be nonnegative")
        if x0.size + self.n00 < 1 or x1.size + self.n10 < 1:
            raise EmptySample("each sample needs at least one observation")
        if x0.size < 1 or x1.size < 1:
            raise NoPositives("each sample needs at least one positive value")
        x0.setflags(write=False)
        x1.setflags(write=False)
        object.__setattr__(self, "sample0_positive", x0)
        object.__setattr__(self, "sample1_positive", x1)
        object.__setattr__(self, "n00", int(self.n00))
        object.__setattr__(self, "n10", int(self.n10))

    def __eq__(self, other):
        if not isinstance(other, TwoSampleData):
            return NotImplemented
        return (self.n00 == other.n00 and self.n10 == other.n10
                and np.array_equal(self.sample0_positive, other.sample0_positive)
                and np.array_equal(self.sample1_positive, other.sample1_positive))

    __hash__ = None

    @property
    def n01(self) -> int:
        return self.sample0_positive.size

    @property
    def n11(self) -> int:
        return self.sample1_positive.size

    @property
    def n0(self) -> int:
        return self.n00 + self.n01

    @property
    def n1(self) -> int:
        return self.n10 + self.n11

    @property
    def n(self) -> int:
        return self.n0 + self.n1

    @property
    def w(self) -> float:
        return self.n0 / self.n

    @property
    def positives(self) -> np.ndarray:
        """Pooled positives, sample 0 then sample 1."""
        return np.concatenate([self.sample0_positive, self.sample1_positive])

    @property
    def in_sample1(self) -> np.ndarray:
        return np.r_[np.zeros(self.n01, bool), np.ones(self.n11, bool)]

    @property
    def rho_hat(self) -> float:
        return self.n11 / (self.n01 + self.n11)

    @property
    def nu_hat(self) -> np.ndarray:
        return np.array([self.n00 / self.n0, self.n10 / self.n1])

    def full_sample(self, i: int) -> np.ndarray:
        """Sample ``i`` with its zeros appended after the positives."""
        if i == 0:
            return np.r_[self.sample0_positive, np.zeros(self.n00)]
        return np.r_[self.sample1_positive, np.zeros(self.n10)]


def load_two_sample(raw0: Sequence[float], raw1: Sequence[float],
                    zero_tol: float = 0.0) -> TwoSampleData:
    """Split two raw samples into zero counts and positives.

    Values ``<= zero_tol`` count as zeros. Strictly negative values are
    mapped to zero as well, with a :class:`NegativeValueWarning`.
    """
    if zero_tol < 0:
        raise DomainError("zero_tol must be >= 0")
    parts = []
    notes = []
    for label, raw in (("sample0", raw0), ("sample1", raw1)):
        x = np.asarray(raw, dtype=float).ravel()
        if x.size == 0:
            raise EmptySample(f"{label} is empty")
        if not np.all(np.isfinite(x)):
            raise DomainError(f"{label} contains non-finite values")
        n_neg = int(np.sum(x < 0))
        if n_neg:
            msg = f"{label}: {n_neg} negative value(s) treated as zero"
            notes.append(msg)
            warnings.warn(msg, NegativeValueWarning, stacklevel=2)
        pos = x[x > zero_tol]
        if pos.size == 0:
            raise NoPositives(f"{label} has no value above zero_tol={zero_tol}")
        parts.append((pos, x.size - pos.size))
    (x0, z0), (x1, z1) = parts
    return TwoSampleData(x0, x1, z0, z1, notes=tuple(notes))


@dataclass(frozen=True)
class BasisFunction:
    """The DRM basis q(x); ``eval`` maps an array of n positives to (n, dim)."""

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    label: str = "custom"

    def q(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.asarray(self.eval(x), dtype=float).reshape(x.size, self.dim)
        return out

    def Q(self, x) -> np.ndarray:
        """Augmented basis (1, q(x)) of shape (n, dim + 1)."""
        q = self.q(x)
        return np.column_stack([np.ones(q.shape[0]), q])


def make_basis(kind: str = "log", eval: Callable | None = None,
               dim: int | None = None) -> BasisFunction:
    kind = kind.replace("+", "_and_")
    if kind == "log":
        return BasisFunction(1, lambda x: np.log(x)[:, None], "log")
    if kind == "identity":
        return BasisFunction(1, lambda x: np.asarray(x)[:, None], "identity")
    if kind == "log_and_identity":
        return BasisFunction(2, lambda x: np.column_stack([np.log(x), x]),
                             "log+identity")
    if kind == "custom":
        if eval is None or dim is None or dim < 1:
            raise ValueError("custom basis needs eval and dim >= 1")
        return BasisFunction(int(dim), eval, "custom")
    raise ValueError(f"unknown basis kind {kind!r}")


@dataclass(frozen=True)
class ParamBundle:
    """(nu, rho, theta) together with the basis theta refers to.

    Interior values are required unless ``allow_boundary`` is set; every
    variance formula divides by nu(1-nu) or rho(1-rho).
    """

    nu: np.ndarray
    rho: float
    theta: np.ndarray
    basis: BasisFunction
    allow_boundary: bool = False

    def __post_init__(self):
        nu = np.array(self.nu, dtype=float).ravel()
        theta = np.array(self.theta, dtype=float).ravel()
        if nu.shape != (2,):
            raise DimensionMismatch("nu must have two entries")
        if theta.size != self.basis.dim + 1:
            raise DimensionMismatch(
                f"theta has length {theta.size}, basis needs {self.basis.dim + 1}")
        if not 0 < self.rho < 1:
            raise DomainError(f"rho={self.rho} must lie in (0, 1)")
        if self.allow_boundary:
            if np.any(nu < 0) or np.any(nu > 1):
                raise DomainError(f"nu={nu} outside [0, 1]")
        elif np.any(nu <= 0) or np.any(nu >= 1):
            raise BoundaryNu(f"nu={nu} must lie strictly inside (0, 1)")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def on_boundary(self) -> bool:
        return bool(np.any(self.nu <= 0) or np.any(self.nu >= 1))

    def delta(self, w: float) -> float:
        return w * (1 - self.nu[0]) + (1 - w) * (1 - self.nu[1])

    def tilt(self, x) -> np.ndarray:
        """theta' Q(x)."""
        return self.basis.Q(x) @ self.theta

    def omega(self, x) -> np.ndarray:
        return np.exp(self.tilt(x))

    def h(self, x) -> np.ndarray:
        return 1 + self.rho * np.expm1(self.tilt(x))

    def h1(self, x) -> np.ndarray:
        return tilt_h1(self.tilt(x), self.rho)

    def h0(self, x) -> np.ndarray:
        return tilt_h0(self.tilt(x), self.rho)


def tilt_h1(t, rho):
    """rho*e^t / (1 + rho(e^t - 1)) as a logistic function; never overflows."""
    return expit(np.asarray(t) + np.log(rho / (1 - rho)))


def tilt_h0(t, rho):
    """(1 - rho) / (1 + rho(e^t - 1)), computed without cancellation."""
    return expit(-np.asarray(t) - np.log(rho / (1 - rho)))
