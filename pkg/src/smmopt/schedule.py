"""Weight sequences w_n and iterate-averaging state.

Schedule kinds (n is 1-based; every kind is defined for all n >= 1 and emits
weights in (0, 1], non-increasing in n):

    ConstantFiniteHorizon(gamma, horizon)   w_n = gamma / sqrt(horizon)
    SqrtDecay(gamma)                        w_n = gamma / sqrt(n)
    TunedSqrt(n0)                           w_n = sqrt((n0+1) / (n0+n))
    StronglyConvex(beta)                    w_n = (1+beta) / (1+beta*n)

Raw values above 1 are clamped to 1 (weights must lie in (0,1]).  TunedSqrt
and StronglyConvex emit w_1 = 1 exactly; solvers that require w_1 = 1 clamp
the first weight for the other kinds themselves.

Averaging: two schemes over the iterate history theta_0, theta_1, ...

    geometric    ghat_n  = (1 - w_{n+1}) * ghat_{n-1} + w_{n+1} * theta_n
    normalized   gbar_n  = sum_{k<=n+1} w_k theta_{k-1} / sum_{k<=n+1} w_k

Both are maintained simultaneously by AveragingState (each update costs one
vector op); `mode` only records which one a run designates as its output.
update_averages(state, theta, w_next) feeds the iterate together with the
weight of the *following* iteration — calling it with (theta_{n-1}, w_n) at
iteration n = 1, 2, ... makes the state hold exactly the averaged iterates
that the convergence-rate checks evaluate at sample count n.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConstantFiniteHorizon",
    "SqrtDecay",
    "TunedSqrt",
    "StronglyConvex",
    "weight",
    "AveragingState",
    "update_averages",
    "tune_n0",
    "AVERAGING_MODES",
]

AVERAGING_MODES = ("none", "geometric", "normalized")


class ConstantFiniteHorizon:
    """w_n = gamma / sqrt(horizon) for every n."""

    kind = "constant"

    def __init__(self, gamma, horizon):
        if gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {gamma}")
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        self.gamma = float(gamma)
        self.horizon = int(horizon)

    def raw(self, n):
        return self.gamma / np.sqrt(self.horizon)

    def __repr__(self):
        return f"ConstantFiniteHorizon(gamma={self.gamma}, horizon={self.horizon})"


class SqrtDecay:
    """w_n = gamma / sqrt(n)."""

    kind = "sqrt"

    def __init__(self, gamma):
        if gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {gamma}")
        self.gamma = float(gamma)

    def raw(self, n):
        return self.gamma / np.sqrt(n)

    def __repr__(self):
        return f"SqrtDecay(gamma={self.gamma})"


class TunedSqrt:
    """w_n = sqrt((n0+1)/(n0+n)); w_1 = 1 exactly for every n0."""

    kind = "tuned_sqrt"

    def __init__(self, n0):
        if n0 < 0 or int(n0) != n0:
            raise ValueError(f"n0 must be a non-negative integer, got {n0}")
        self.n0 = int(n0)

    def raw(self, n):
        return np.sqrt((self.n0 + 1.0) / (self.n0 + n))

    def __repr__(self):
        return f"TunedSqrt(n0={self.n0})"


class StronglyConvex:
    """w_n = (1+beta)/(1+beta*n) with beta in (0, 1]; w_1 = 1 exactly."""

    kind = "strongly_convex"

    def __init__(self, beta):
        if not 0 < beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {beta}")
        self.beta = float(beta)

    def raw(self, n):
        return (1.0 + self.beta) / (1.0 + self.beta * n)

    def __repr__(self):
        return f"StronglyConvex(beta={self.beta})"


def weight(schedule, n):
    """w_n for 1-based iteration n, clamped into (0, 1]."""
    if n < 1:
        raise ValueError(f"iteration index must be >= 1, got {n}")
    return min(1.0, float(schedule.raw(n)))


# ---------------------------------------------------------------------------
# averaging
# ---------------------------------------------------------------------------

@dataclass
class AveragingState:
    """Running geometric and normalized averages of the iterate stream.

    geo_avg / norm_avg are None until the first update; cumulative_weight is
    sum of the weights fed so far (the normalized average's denominator).
    """

    mode: str = "none"
    geo_avg: np.ndarray = None
    norm_avg: np.ndarray = None
    cumulative_weight: float = 0.0

    def __post_init__(self):
        if self.mode not in AVERAGING_MODES:
            raise ValueError(f"averaging mode must be one of {AVERAGING_MODES}, got {self.mode!r}")

    def output(self, theta_plain):
        """The designated iterate: the plain one for mode 'none'."""
        if self.mode == "geometric" and self.geo_avg is not None:
            return self.geo_avg
        if self.mode == "normalized" and self.norm_avg is not None:
            return self.norm_avg
        return theta_plain


def update_averages(state, theta, w_next):
    """Fold iterate `theta` with weight `w_next` into both running averages.

    Geometric: new = (1 - w_next) * old + w_next * theta (first call: theta).
    Normalized: weighted mean with weights w_k, maintained incrementally so
    the stored vector always equals sum w_k theta_k / sum w_k.

    Returns a new AveragingState; the input state is not modified.
    """
    if not 0.0 < w_next <= 1.0:
        raise ValueError(f"averaging weight must be in (0, 1], got {w_next}")
    theta = np.asarray(theta, dtype=float)
    if state.geo_avg is not None and state.geo_avg.shape != theta.shape:
        raise ValueError(
            f"iterate has shape {theta.shape}, averages have {state.geo_avg.shape}"
        )
    if state.geo_avg is None:
        geo = theta.copy()
    else:
        geo = (1.0 - w_next) * state.geo_avg + w_next * theta
    cw = state.cumulative_weight + w_next
    if state.norm_avg is None:
        norm = theta.copy()
    else:
        norm = state.norm_avg + (w_next / cw) * (theta - state.norm_avg)
    return AveragingState(mode=state.mode, geo_avg=geo, norm_avg=norm, cumulative_weight=cw)


# ---------------------------------------------------------------------------
# n0 auto-tuning
# ---------------------------------------------------------------------------

def tune_n0(candidates, subsample, solver_config):
    """Pick the TunedSqrt n0 with the lowest end-of-pass objective.

    Runs one epoch of the SMM solver on `subsample` for each candidate n0 and
    returns the candidate whose final (plain) iterate has the lowest batch
    objective on the subsample; ties break toward the smallest candidate.
    """
    from dataclasses import replace

    from .losses import batch_objective
    from .solvers import run_smm  # local import: solvers imports this module

    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate list is empty")
    if subsample is None or subsample.n < 1:
        raise ValueError("subsample must be a non-empty dataset")
    best_n0, best_obj = None, None
    for n0 in sorted(candidates):
        cfg = replace(solver_config, schedule=TunedSqrt(n0), epochs=1, eval_at=())
        rec = run_smm(cfg, subsample, None)
        obj = batch_objective(
            rec.theta, subsample, cfg.reg, loss_kind=cfg.loss_kind,
            ridge_mu=rec.constants.mu,
        )
        if best_obj is None or obj < best_obj:
            best_n0, best_obj = n0, obj
    return best_n0
