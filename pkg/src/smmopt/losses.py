"""Per-sample loss functions: values, gradients, and smoothness constants.

Losses are defined on sparse samples x with label y:

    logistic   f(theta) = log(1 + exp(-y * x'theta)),   y in {-1, +1}
    squared    f(theta) = 1/2 (x'theta - y)^2

Gradients are supported on the sample's nonzero coordinates and are returned
as SparseVec (index/value pairs).  Per-sample gradient Lipschitz constants
are ||x||^2/4 (logistic, since sigma' <= 1/4) and ||x||^2 (squared).

An optional ridge term (mu/2)*||theta||^2 can be added to the *loss* (not the
regularizer) to make each f_n mu-strongly convex; solvers handle its (dense)
gradient contribution themselves, and `batch_objective` accepts the same
`ridge_mu` so reported objectives match what is being minimized.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .prox import penalty_value

__all__ = [
    "Sample",
    "SparseVec",
    "ProblemConstants",
    "LOSS_KINDS",
    "logistic_value_grad",
    "squared_value_grad",
    "value_grad",
    "lipschitz_constant",
    "batch_objective",
]


@dataclass
class SparseVec:
    """Sparse vector as parallel (indices, values) arrays, indices increasing."""

    indices: np.ndarray
    values: np.ndarray

    def to_dense(self, p):
        out = np.zeros(p)
        out[self.indices] = self.values
        return out


@dataclass
class Sample:
    """One observation: sparse features plus a real label.

    Feature indices are strictly increasing and values finite; classification
    losses expect labels in {-1, +1}.
    """

    indices: np.ndarray
    values: np.ndarray
    label: float

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if self.indices.size != self.values.size:
            raise ValueError("indices and values must have equal length")
        if self.indices.size and np.any(np.diff(self.indices) <= 0):
            raise ValueError("feature indices must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")

    def dot(self, theta):
        return float(theta[self.indices] @ self.values)

    def norm_sq(self):
        return float(self.values @ self.values)


@dataclass
class ProblemConstants:
    """Constants describing the optimization problem.

    L    per-sample gradient Lipschitz constant of the smooth loss
    mu   strong-convexity modulus of the loss (0 for plain losses)
    R    Lipschitz constant of the per-sample objective, if known (else None;
         harness checks use the observed running max subgradient norm)
    rho  surrogate strong-convexity modulus; rho = L for convex-rate runs,
         rho = L + mu for strongly-convex-rate runs
    """

    L: float
    mu: float = 0.0
    R: float = None
    rho: float = None

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError(f"L must be > 0, got {self.L}")
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.rho is None:
            self.rho = self.L + self.mu
        if self.rho <= 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")


def logistic_value_grad(theta, sample):
    """Value and sparse gradient of log(1 + exp(-y * x'theta)).

    Stable for margins up to +-700: the value uses logaddexp and the sigmoid
    factor uses expit.  grad = -y * sigma(-y x'theta) * x, supported on the
    sample's nonzero indices.
    """
    y = sample.label
    if y not in (-1.0, 1.0):
        raise ValueError(f"logistic loss needs labels in {{-1,+1}}, got {y}")
    z = y * sample.dot(theta)
    value = float(np.logaddexp(0.0, -z))
    coef = -y * float(expit(-z))
    return value, SparseVec(sample.indices, coef * sample.values)


def squared_value_grad(theta, sample):
    """Value and sparse gradient of 1/2 (x'theta - y)^2."""
    r = sample.dot(theta) - sample.label
    return 0.5 * r * r, SparseVec(sample.indices, r * sample.values)


_VALUE_GRAD = {"logistic": logistic_value_grad, "squared": squared_value_grad}

LOSS_KINDS = tuple(sorted(_VALUE_GRAD))


def value_grad(loss_kind, theta, sample):
    """Dispatch on loss kind name ('logistic' or 'squared')."""
    try:
        fn = _VALUE_GRAD[loss_kind]
    except KeyError:
        raise ValueError(f"unknown loss kind {loss_kind!r}") from None
    return fn(theta, sample)


def lipschitz_constant(loss_kind, sample):
    """Per-sample gradient Lipschitz constant: ||x||^2/4 logistic, ||x||^2 squared."""
    nsq = sample.norm_sq()
    if loss_kind == "logistic":
        return nsq / 4.0
    if loss_kind == "squared":
        return nsq
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def batch_objective(theta, data, reg, loss_kind="logistic", ridge_mu=0.0):
    """(1/N) sum_i f_i(theta) + psi(theta), summation in fixed index order.

    `data` provides a CSR matrix `X`, labels `y` and sample count `n`
    (see data_io.Dataset).  With ridge_mu > 0 the per-sample ridge term
    (mu/2)||theta||^2 is included once (it is sample-independent).
    """
    theta = np.asarray(theta, dtype=float)
    z = data.X @ theta
    if loss_kind == "logistic":
        vals = np.logaddexp(0.0, -data.y * z)
    elif loss_kind == "squared":
        r = z - data.y
        vals = 0.5 * r * r
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    mean = float(np.sum(vals)) / data.n
    if ridge_mu:
        mean += 0.5 * ridge_mu * float(theta @ theta)
    return mean + penalty_value(reg, theta)
