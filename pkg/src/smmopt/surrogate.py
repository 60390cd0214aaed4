"""Majorizing surrogates and the running aggregate model they average into.

A single-sample surrogate anchored at kappa upper-bounds the sample loss,
touches it at the anchor, and deviates by at most a quadratic in the
distance to the anchor.  Three flavours are supported:

  * lipschitz_gradient  -- quadratic expansion of a smooth loss,
  * proximal_gradient   -- the same plus an untouched convex penalty,
  * dc_log_penalty      -- smooth expansion plus a tangent-line
                           majorization of the concave log penalty.

Averaging these surrogates over a sample stream with weights w_n keeps the
model quadratic-plus-penalty, so the whole history collapses into one
vector q and two scalars:

    gbar_n(theta) = (curvature/2)||theta||^2 - q'theta + const
                    + psi_scale * psi(theta)

with q_n = (1-w_n) q_{n-1} + w_n (curvature*kappa - grad_n) and the same
recursion for psi_scale (seeded at 0: the initial anchor quadratic carries
no penalty) and const.  Minimizing the aggregate is a single prox call.
"""

from dataclasses import dataclass

import numpy as np

from .losses import ProblemConstants, SparseVec, value_grad
from .prox import penalty_value, prox

__all__ = [
    "AggregateSurrogate",
    "SurrogateKind",
    "init_aggregate",
    "update_aggregate",
    "minimize_aggregate",
    "aggregate_value",
    "surrogate_value",
    "target_value",
    "envelope_curvature",
    "dc_reweight",
    "log_penalty_value",
]

_KINDS = ("lipschitz_gradient", "proximal_gradient", "dc_log_penalty")


@dataclass
class AggregateSurrogate:
    """Running weighted average of quadratic surrogates, in closed form.

    q holds the aggregated linear term, curvature the (fixed) quadratic
    coefficient, psi_scale the aggregated weight on the penalty, and
    const_term the aggregated constant (NaN when updates omit loss values;
    only value queries need it, minimization never does).
    """

    q: np.ndarray
    curvature: float
    reg: object = None
    psi_scale: float = 0.0
    const_term: float = 0.0
    count: int = 0


@dataclass
class SurrogateKind:
    """Which single-sample surrogate to build, plus the constants it needs."""

    kind: str
    constants: ProblemConstants
    loss_kind: str = "logistic"
    reg: object = None
    epsilon: float = 0.01
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown surrogate kind {self.kind!r}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")


def init_aggregate(theta0, rho, reg=None):
    """Anchor quadratic (rho/2)||theta - theta0||^2, penalty-free.

    Its minimizer is theta0 itself; the first weighted update then blends
    in the first sample surrogate.
    """
    theta0 = np.asarray(theta0, dtype=float)
    if rho <= 0:
        raise ValueError(f"curvature must be positive, got {rho}")
    return AggregateSurrogate(
        q=rho * theta0,
        curvature=float(rho),
        reg=reg,
        psi_scale=0.0,
        const_term=0.5 * rho * float(theta0 @ theta0),
        count=0,
    )


def update_aggregate(state, grad_n, theta_prev, w_n, loss_value=None):
    """Blend one sample surrogate anchored at theta_prev into the aggregate.

    grad_n is the smooth-part gradient at theta_prev (sparse or dense; pass
    it ridge-inclusive when the quadratic folds a ridge term, so that
    curvature*theta_prev - grad_n is the exact linear coefficient).
    loss_value is the smooth-part value at theta_prev; omit it and
    const_term degrades to NaN while q/psi_scale stay exact.
    """
    if not 0.0 < w_n <= 1.0:
        raise ValueError(f"weight must lie in (0, 1], got {w_n}")
    theta_prev = np.asarray(theta_prev, dtype=float)
    if theta_prev.shape != state.q.shape:
        raise ValueError(
            f"anchor has shape {theta_prev.shape}, aggregate has {state.q.shape}")

    fresh = state.curvature * theta_prev
    if isinstance(grad_n, SparseVec):
        if grad_n.indices.size and grad_n.indices[-1] >= fresh.size:
            raise ValueError(
                f"gradient index {grad_n.indices[-1]} out of range for p={fresh.size}")
        fresh[grad_n.indices] -= grad_n.values
        grad_dot = float(grad_n.values @ theta_prev[grad_n.indices])
    else:
        grad_n = np.asarray(grad_n, dtype=float)
        if grad_n.shape != fresh.shape:
            raise ValueError(
                f"gradient has shape {grad_n.shape}, aggregate has {state.q.shape}")
        fresh -= grad_n
        grad_dot = float(grad_n @ theta_prev)

    state.q = (1.0 - w_n) * state.q + w_n * fresh
    state.psi_scale = (1.0 - w_n) * state.psi_scale + w_n
    if loss_value is None:
        state.const_term = float("nan")
    else:
        fresh_const = (float(loss_value) - grad_dot
                       + 0.5 * state.curvature * float(theta_prev @ theta_prev))
        state.const_term = (1.0 - w_n) * state.const_term + w_n * fresh_const
    state.count += 1
    return state


def minimize_aggregate(state):
    """Exact minimizer of the aggregate: a scaled prox of q/curvature."""
    point = state.q / state.curvature
    if state.reg is None or state.psi_scale == 0.0:
        return point
    return prox(state.reg, point, state.psi_scale / state.curvature)


def aggregate_value(state, theta):
    """Evaluate the aggregate model at theta (needs tracked const_term)."""
    theta = np.asarray(theta, dtype=float)
    val = (0.5 * state.curvature * float(theta @ theta)
           - float(state.q @ theta) + state.const_term)
    if state.reg is not None and state.psi_scale != 0.0:
        val += state.psi_scale * penalty_value(state.reg, theta)
    return val


# ---------------------------------------------------------------------------
# single-sample surrogates (value queries, used by property checks)
# ---------------------------------------------------------------------------

def surrogate_value(kind, anchor, theta, sample):
    """g(theta) for the single-sample surrogate anchored at kappa=anchor."""
    anchor = np.asarray(anchor, dtype=float)
    theta = np.asarray(theta, dtype=float)
    val, grad = value_grad(kind.loss_kind, anchor, sample)
    diff = theta - anchor
    lin = float(grad.values @ diff[grad.indices])
    L = kind.constants.L
    g = val + lin + 0.5 * L * float(diff @ diff)
    if kind.kind == "proximal_gradient":
        g += penalty_value(kind.reg, theta)
    elif kind.kind == "dc_log_penalty":
        a_anchor = np.abs(anchor)
        g += kind.lam * float(np.sum(
            np.log(a_anchor + kind.epsilon)
            + (np.abs(theta) - a_anchor) / (a_anchor + kind.epsilon)))
    return g


def target_value(kind, theta, sample):
    """f(theta) for the objective the surrogate kind majorizes."""
    theta = np.asarray(theta, dtype=float)
    val, _ = value_grad(kind.loss_kind, theta, sample)
    if kind.kind == "proximal_gradient":
        val += penalty_value(kind.reg, theta)
    elif kind.kind == "dc_log_penalty":
        val += log_penalty_value(theta, kind.epsilon, kind.lam)
    return val


def envelope_curvature(kind):
    """Curvature bounding |g - f|: the smooth constant, plus the log
    penalty's maximal second derivative when a tangent line majorizes it."""
    L = kind.constants.L
    if kind.kind == "dc_log_penalty":
        return L + kind.lam / kind.epsilon**2
    return L


# ---------------------------------------------------------------------------
# log-penalty helpers (reweighting and value)
# ---------------------------------------------------------------------------

def dc_reweight(theta_prev, epsilon, lam):
    """Per-coordinate weights lam/(|theta_j|+epsilon).

    These are the tangent slopes of the concave log penalty at theta_prev;
    feeding them to a weighted l1-norm majorizes the penalty up to an
    additive constant.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    return lam / (np.abs(np.asarray(theta_prev, dtype=float)) + epsilon)


def log_penalty_value(theta, epsilon, lam):
    """lam * sum_j log(|theta_j| + epsilon)."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return lam * float(np.sum(np.log(np.abs(np.asarray(theta, dtype=float)) + epsilon)))
