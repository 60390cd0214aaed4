"""End-to-end optimizers sharing one configuration and run-record shape.

Stochastic solvers (incremental majorization, proximal SGD, dual averaging,
and the online reweighted-l1 variant) cycle over per-epoch random
permutations of the training set; batch solvers (accelerated proximal
gradient and the reweighted-l1 round loop it powers) sweep the full dataset
per iteration.  Every run is single-threaded and deterministic: the same
(config, seed, data) produces the same iterates and the same metric rows,
byte for byte once serialized, as long as timing capture stays off.

Objectives follow one convention throughout: the smooth part is the mean
sample loss plus an optional ridge (mu/2)||theta||^2 folded into it, and
the penalty psi is evaluated on top.  Gradients passed around are always
ridge-inclusive so the quadratic model curvature rho = L + mu is exact.
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from scipy.special import expit

from .data_io import MetricsRow, epoch_stream
from .losses import (ProblemConstants, batch_objective, lipschitz_constant,
                     value_grad)
from .prox import WeightedL1, prox
from .schedule import AveragingState, update_averages, weight
from .surrogate import (dc_reweight, init_aggregate, log_penalty_value,
                        minimize_aggregate, update_aggregate)

__all__ = [
    "SolverConfig",
    "RunRecord",
    "NumericalFailure",
    "StabilityViolation",
    "run",
    "run_smm",
    "run_fobos",
    "run_rda",
    "run_fista",
    "run_batch_dc",
    "run_online_dc",
    "fista_reference",
    "dc_objective",
]

SOLVERS = ("smm", "fobos", "rda", "fista", "batch_dc", "online_dc")

# stability check slack: relative wiggle for accumulated rounding, absolute
# floor for steps so small the bound itself is at rounding scale
_STAB_REL = 1e-9
_STAB_ABS = 1e-12


class NumericalFailure(RuntimeError):
    """An objective evaluated to NaN/inf; the run is aborted."""


class StabilityViolation(RuntimeError):
    """An iterate moved farther than the per-step bound allows."""


@dataclass
class SolverConfig:
    """Everything a run needs besides the data itself."""

    solver: str = "smm"
    schedule: object = None
    averaging: str = "none"
    epochs: int = 1
    minibatch: int = 1
    seed: int = 0
    constants: ProblemConstants = None
    reg: object = None
    loss_kind: str = "logistic"
    dc_epsilon: float = 0.01
    dc_lam: float = 0.0
    dc_rounds: int = 5
    eval_every: int = None
    eval_at: tuple = None
    clamp_w1: bool = True
    record_time: bool = False

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.minibatch < 1:
            raise ValueError(f"minibatch must be >= 1, got {self.minibatch}")
        if self.eval_every is not None and self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.eval_at is not None:
            self.eval_at = tuple(int(i) for i in self.eval_at)


@dataclass
class RunRecord:
    """What a run leaves behind: metric rows and the final iterates."""

    rows: list
    theta: np.ndarray
    theta_geo: np.ndarray
    theta_norm: np.ndarray
    constants: ProblemConstants
    R_hat: float = 0.0
    stability_max_ratio: float = 0.0
    warnings: list = field(default_factory=list)


def run(config, train, test=None, checkpoint_hook=None):
    """Dispatch to the configured solver."""
    runner = {
        "smm": run_smm,
        "fobos": run_fobos,
        "rda": run_rda,
        "fista": run_fista,
        "batch_dc": run_batch_dc,
        "online_dc": run_online_dc,
    }[config.solver]
    if config.solver in ("smm", "online_dc"):
        return runner(config, train, test, checkpoint_hook=checkpoint_hook)
    return runner(config, train, test)


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _resolve_constants(config, train):
    """Fill in constants when absent: L is the max per-sample constant."""
    if config.constants is not None:
        return config.constants
    L = max(lipschitz_constant(config.loss_kind, train.sample(i))
            for i in range(train.n))
    if L <= 0:
        L = 1.0
    return ProblemConstants(L=L, mu=0.0)


def _eval_predicate(config, iters_per_epoch):
    """Return a function deciding whether iteration n emits a metrics row."""
    if config.eval_at is not None:
        points = frozenset(config.eval_at)
        return lambda n: n in points
    every = config.eval_every
    if every is None:
        every = max(1, iters_per_epoch // 10)
    return lambda n: n % every == 0


def _minibatch_value_grad(theta, train, batch_idx, loss_kind, mu):
    """Mean ridge-inclusive (value, dense gradient) over a batch at theta."""
    g = np.zeros(theta.size)
    val = 0.0
    for i in batch_idx:
        v, grad = value_grad(loss_kind, theta, train.sample(int(i)))
        val += v
        g[grad.indices] += grad.values
    b = float(len(batch_idx))
    if b != 1.0:
        g /= b
        val /= b
    if mu != 0.0:
        g += mu * theta
        val += 0.5 * mu * float(theta @ theta)
    return val, g


def _batch_value_grad(theta, data, loss_kind, mu):
    """Mean ridge-inclusive (value, gradient) over a whole dataset at theta."""
    z = data.X @ theta
    y = data.y
    if loss_kind == "logistic":
        val = float(np.sum(np.logaddexp(0.0, -y * z))) / data.n
        coef = -y * expit(-y * z)
    elif loss_kind == "squared":
        r = z - y
        val = 0.5 * float(r @ r) / data.n
        coef = r
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    g = (data.X.T @ coef) / data.n
    g = np.asarray(g).ravel()
    if mu != 0.0:
        g += mu * theta
        val += 0.5 * mu * float(theta @ theta)
    return val, g


def _objective(theta, data, config, constants):
    return batch_objective(theta, data, config.reg, loss_kind=config.loss_kind,
                           ridge_mu=constants.mu)


def _check_finite(obj, n, w):
    if not math.isfinite(obj):
        raise NumericalFailure(
            f"objective became {obj} at iteration {n} (w_n={w})")


def _stability_check(step_norm, r_hat, w, rho, n):
    bound = 2.0 * r_hat * w / rho
    if step_norm > bound * (1.0 + _STAB_REL) + _STAB_ABS:
        raise StabilityViolation(
            f"step {step_norm:.3e} exceeds bound {bound:.3e} at iteration {n} "
            f"(w_n={w}, max gradient norm {r_hat:.3e})")
    return step_norm / bound if bound > 0 else 0.0


class _Clock:
    """Cumulative wall time, or a constant zero for reproducible outputs."""

    def __init__(self, enabled):
        self.enabled = enabled
        self.t0 = time.perf_counter() if enabled else 0.0

    def read(self):
        return time.perf_counter() - self.t0 if self.enabled else 0.0


# ---------------------------------------------------------------------------
# incremental majorization (the main solver)
# ---------------------------------------------------------------------------

def run_smm(config, train, test=None, checkpoint_hook=None):
    """Averaged-surrogate minimization over a shuffled sample stream.

    Per step: blend the current sample's quadratic surrogate (anchored at
    the previous iterate) into the running aggregate with weight w_n, then
    jump to the aggregate's exact minimizer.  Iterate averages are folded
    in *before* the jump, so a metrics row at iteration n reports the
    average of the first n anchors — the quantity the convergence
    guarantees speak about.  Every step is checked against the movement
    bound ||theta_n - theta_{n-1}|| <= 2*Rhat*w_n/rho, where Rhat is the
    running max norm of (ridge-inclusive gradient + penalty subgradient).
    """
    if config.schedule is None:
        raise ValueError("run_smm requires a weight schedule")
    constants = _resolve_constants(config, train)
    if config.schedule.kind == "strongly_convex" and constants.mu <= 0:
        raise ValueError("strongly_convex schedule requires constants.mu > 0")
    rho = constants.rho
    mu = constants.mu
    p = train.p

    theta = np.zeros(p)
    agg = init_aggregate(theta, rho, config.reg)
    avg = AveragingState(mode=config.averaging)
    iters_per_epoch = -(-train.n // config.minibatch)
    should_eval = _eval_predicate(config, iters_per_epoch)
    clock = _Clock(config.record_time)

    rows = []
    r_hat = 0.0
    max_ratio = 0.0
    n = 0
    for e in range(config.epochs):
        perm = epoch_stream(train, e, config.seed)
        for start in range(0, train.n, config.minibatch):
            n += 1
            w = 1.0 if (n == 1 and config.clamp_w1) else weight(config.schedule, n)
            avg = update_averages(avg, theta, w)

            batch = perm[start:start + config.minibatch]
            val, g = _minibatch_value_grad(theta, train, batch,
                                           config.loss_kind, mu)
            if agg.psi_scale > 0.0:
                u = (agg.q - rho * theta) / agg.psi_scale
                r_n = float(np.linalg.norm(g + u))
            else:
                r_n = float(np.linalg.norm(g))
            r_hat = max(r_hat, r_n)

            update_aggregate(agg, g, theta, w, loss_value=val)
            theta_new = minimize_aggregate(agg)
            step = float(np.linalg.norm(theta_new - theta))
            ratio = _stability_check(step, r_hat, w, rho, n)
            max_ratio = max(max_ratio, ratio)
            theta = theta_new

            if should_eval(n):
                theta_eval = avg.output(theta)
                train_obj = _objective(theta_eval, train, config, constants)
                _check_finite(train_obj, n, w)
                test_obj = (_objective(theta_eval, test, config, constants)
                            if test is not None else float("nan"))
                rows.append(MetricsRow(n, e + 1, train_obj, test_obj,
                                       int(np.count_nonzero(theta_eval)),
                                       clock.read(), step, w))
                if checkpoint_hook is not None:
                    checkpoint_hook(n, theta, avg)

    avg = update_averages(avg, theta, weight(config.schedule, n + 1))
    return RunRecord(rows=rows, theta=theta, theta_geo=avg.geo_avg,
                     theta_norm=avg.norm_avg, constants=constants,
                     R_hat=r_hat, stability_max_ratio=max_ratio)


# ---------------------------------------------------------------------------
# stochastic baselines
# ---------------------------------------------------------------------------

def run_fobos(config, train, test=None):
    """Proximal SGD: a gradient step of size w_n/rho, then the prox."""
    if config.schedule is None:
        raise ValueError("run_fobos requires a weight schedule")
    constants = _resolve_constants(config, train)
    rho = constants.rho
    mu = constants.mu
    theta = np.zeros(train.p)
    avg = AveragingState(mode=config.averaging)
    iters_per_epoch = -(-train.n // config.minibatch)
    should_eval = _eval_predicate(config, iters_per_epoch)
    clock = _Clock(config.record_time)

    rows = []
    n = 0
    for e in range(config.epochs):
        perm = epoch_stream(train, e, config.seed)
        for start in range(0, train.n, config.minibatch):
            n += 1
            w = weight(config.schedule, n)
            avg = update_averages(avg, theta, w)
            batch = perm[start:start + config.minibatch]
            _, g = _minibatch_value_grad(theta, train, batch,
                                         config.loss_kind, mu)
            eta = w / rho
            point = theta - eta * g
            theta_new = prox(config.reg, point, eta) if config.reg is not None else point
            step = float(np.linalg.norm(theta_new - theta))
            theta = theta_new
            if should_eval(n):
                theta_eval = avg.output(theta)
                train_obj = _objective(theta_eval, train, config, constants)
                _check_finite(train_obj, n, w)
                test_obj = (_objective(theta_eval, test, config, constants)
                            if test is not None else float("nan"))
                rows.append(MetricsRow(n, e + 1, train_obj, test_obj,
                                       int(np.count_nonzero(theta_eval)),
                                       clock.read(), step, w))

    avg = update_averages(avg, theta, weight(config.schedule, n + 1))
    return RunRecord(rows=rows, theta=theta, theta_geo=avg.geo_avg,
                     theta_norm=avg.norm_avg, constants=constants)


def run_rda(config, train, test=None):
    """Dual averaging: prox of the scaled mean of all past gradients.

    theta_n minimizes gbar_n'theta + ||theta||^2/(2 eta_n) + psi(theta)
    with eta_n = gamma*sqrt(n); gamma is taken from the schedule when it
    has one (so comparisons share a single tuning knob).
    """
    constants = _resolve_constants(config, train)
    mu = constants.mu
    gamma = float(getattr(config.schedule, "gamma", 1.0)) if config.schedule is not None else 1.0
    theta = np.zeros(train.p)
    gsum = np.zeros(train.p)
    avg = AveragingState(mode=config.averaging)
    iters_per_epoch = -(-train.n // config.minibatch)
    should_eval = _eval_predicate(config, iters_per_epoch)
    clock = _Clock(config.record_time)

    rows = []
    n = 0
    for e in range(config.epochs):
        perm = epoch_stream(train, e, config.seed)
        for start in range(0, train.n, config.minibatch):
            n += 1
            eta = gamma * math.sqrt(n)
            avg = update_averages(avg, theta, 1.0)
            batch = perm[start:start + config.minibatch]
            _, g = _minibatch_value_grad(theta, train, batch,
                                         config.loss_kind, mu)
            gsum += g
            point = -eta * (gsum / n)
            theta_new = prox(config.reg, point, eta) if config.reg is not None else point
            step = float(np.linalg.norm(theta_new - theta))
            theta = theta_new
            if should_eval(n):
                theta_eval = avg.output(theta)
                train_obj = _objective(theta_eval, train, config, constants)
                _check_finite(train_obj, n, eta)
                test_obj = (_objective(theta_eval, test, config, constants)
                            if test is not None else float("nan"))
                rows.append(MetricsRow(n, e + 1, train_obj, test_obj,
                                       int(np.count_nonzero(theta_eval)),
                                       clock.read(), step, eta))

    avg = update_averages(avg, theta, 1.0)
    return RunRecord(rows=rows, theta=theta, theta_geo=avg.geo_avg,
                     theta_norm=avg.norm_avg, constants=constants)


# ---------------------------------------------------------------------------
# batch solvers
# ---------------------------------------------------------------------------

def _fista_core(data, reg, loss_kind, mu, L, x0, max_iter, rel_tol,
                patience=1, on_iterate=None):
    """Accelerated proximal gradient on the full empirical objective.

    Stops after `patience` consecutive iterations whose relative objective
    change is below rel_tol, or at max_iter.  Returns (x, objective,
    iterations, converged).
    """
    x = np.asarray(x0, dtype=float).copy()
    yv = x.copy()
    t = 1.0
    obj = batch_objective(x, data, reg, loss_kind=loss_kind, ridge_mu=mu)
    calm = 0
    k = 0
    for k in range(1, max_iter + 1):
        _, g = _batch_value_grad(yv, data, loss_kind, mu)
        point = yv - g / L
        x_new = prox(reg, point, 1.0 / L) if reg is not None else point
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        yv = x_new + ((t - 1.0) / t_new) * (x_new - x)
        step = float(np.linalg.norm(x_new - x))
        x, t = x_new, t_new
        new_obj = batch_objective(x, data, reg, loss_kind=loss_kind, ridge_mu=mu)
        if on_iterate is not None:
            on_iterate(k, x, new_obj, obj, step)
        if abs(new_obj - obj) <= rel_tol * max(1.0, abs(obj)):
            calm += 1
            if calm >= patience:
                obj = new_obj
                return x, obj, k, True
        else:
            calm = 0
        obj = new_obj
    return x, obj, k, False


def run_fista(config, train, test=None):
    """Batch accelerated proximal gradient; one iteration per 'epoch'.

    The objective is expected to decrease after the first couple of
    iterations; observed increases are reported as warnings, not errors
    (acceleration is not monotone in general).
    """
    constants = _resolve_constants(config, train)
    L = constants.L + constants.mu
    should_eval = _eval_predicate(config, 1)
    clock = _Clock(config.record_time)
    rows = []
    warns = []

    def on_iterate(k, x, new_obj, prev_obj, step):
        _check_finite(new_obj, k, float("nan"))
        if k > 2 and new_obj > prev_obj + 1e-12:
            msg = (f"objective increased at iteration {k}: "
                   f"{prev_obj:.12g} -> {new_obj:.12g}")
            warns.append(msg)
            warnings.warn(msg, RuntimeWarning)
        if should_eval(k):
            test_obj = (_objective(x, test, config, constants)
                        if test is not None else float("nan"))
            rows.append(MetricsRow(k, k, new_obj, test_obj,
                                   int(np.count_nonzero(x)),
                                   clock.read(), step, float("nan")))

    theta, _, _, _ = _fista_core(
        train, config.reg, config.loss_kind, constants.mu, L,
        np.zeros(train.p), max_iter=config.epochs, rel_tol=0.0,
        patience=config.epochs + 1, on_iterate=on_iterate)
    return RunRecord(rows=rows, theta=theta, theta_geo=None, theta_norm=None,
                     constants=constants, warnings=warns)


def fista_reference(data, reg=None, loss_kind="logistic", ridge_mu=0.0,
                    L=None, rel_tol=1e-12, max_iter=50000, patience=3):
    """High-accuracy minimizer/value of the batch objective.

    Used as the optimum proxy when checking convergence guarantees: runs
    until the relative objective change stays below rel_tol for `patience`
    consecutive iterations (or max_iter).  Returns (theta, objective,
    iterations).
    """
    if L is None:
        L = max(lipschitz_constant(loss_kind, data.sample(i))
                for i in range(data.n)) + ridge_mu
    theta, obj, iters, converged = _fista_core(
        data, reg, loss_kind, ridge_mu, L, np.zeros(data.p),
        max_iter=max_iter, rel_tol=rel_tol, patience=patience)
    if not converged:
        warnings.warn(
            f"reference solve hit max_iter={max_iter} before stabilizing",
            RuntimeWarning)
    return theta, obj, iters


# ---------------------------------------------------------------------------
# log-penalty (nonconvex) solvers
# ---------------------------------------------------------------------------

def dc_objective(theta, data, epsilon, lam, loss_kind="logistic"):
    """Mean sample loss plus the concave penalty lam*sum log(|theta_j|+eps)."""
    return (batch_objective(theta, data, None, loss_kind=loss_kind)
            + log_penalty_value(theta, epsilon, lam))


def run_batch_dc(config, train, test=None):
    """Round loop: retangent the log penalty, solve the weighted-l1 problem.

    Each round builds per-coordinate weights lam/(|theta_j|+eps) at the
    current iterate and solves the resulting convex problem with the batch
    solver (warm-started, capped iterations).  A round that fails to
    decrease the true log-penalty objective keeps the previous iterate, so
    the recorded objective is non-increasing by construction; an inner
    solve that hits its iteration cap is surfaced as a warning.
    """
    constants = _resolve_constants(config, train)
    L = constants.L + constants.mu
    eps, lam = config.dc_epsilon, config.dc_lam
    clock = _Clock(config.record_time)
    theta = np.zeros(train.p)
    obj = dc_objective(theta, train, eps, lam, config.loss_kind)
    _check_finite(obj, 0, float("nan"))
    rows = [MetricsRow(0, 0, obj,
                       (dc_objective(theta, test, eps, lam, config.loss_kind)
                        if test is not None else float("nan")),
                       int(np.count_nonzero(theta)), clock.read(), 0.0,
                       float("nan"))]
    warns = []
    for r in range(1, config.dc_rounds + 1):
        eta = dc_reweight(theta, eps, lam)
        inner_reg = WeightedL1(eta)
        cand, _, iters, converged = _fista_core(
            train, inner_reg, config.loss_kind, constants.mu, L, theta,
            max_iter=500, rel_tol=1e-8)
        if not converged:
            msg = f"inner solve in round {r} hit its 500-iteration cap"
            warns.append(msg)
            warnings.warn(msg, RuntimeWarning)
        cand_obj = dc_objective(cand, train, eps, lam, config.loss_kind)
        _check_finite(cand_obj, r, float("nan"))
        if cand_obj <= obj:
            step = float(np.linalg.norm(cand - theta))
            theta, obj = cand, cand_obj
        else:
            step = 0.0
        test_obj = (dc_objective(theta, test, eps, lam, config.loss_kind)
                    if test is not None else float("nan"))
        rows.append(MetricsRow(r, r, obj, test_obj,
                               int(np.count_nonzero(theta)), clock.read(),
                               step, float("nan")))
    return RunRecord(rows=rows, theta=theta, theta_geo=None, theta_norm=None,
                     constants=constants, warnings=warns)


def run_online_dc(config, train, test=None, checkpoint_hook=None):
    """Streaming log-penalty minimization with aggregated tangent weights.

    Like the main solver, but the penalty part of each sample surrogate is
    a weighted l1-norm retangented at the current anchor; the per-coordinate
    weights are averaged with the same w_n recursion as the quadratic part,
    so the aggregate minimizer is a single weighted soft-threshold.  The
    movement bound uses ||gradient|| + ||weights|| since the weights bound
    the penalty subgradients.
    """
    if config.schedule is None:
        raise ValueError("run_online_dc requires a weight schedule")
    constants = _resolve_constants(config, train)
    rho = constants.rho
    mu = constants.mu
    eps, lam = config.dc_epsilon, config.dc_lam
    p = train.p

    theta = np.zeros(p)
    q = rho * theta
    W = np.zeros(p)
    avg = AveragingState(mode=config.averaging)
    iters_per_epoch = -(-train.n // config.minibatch)
    should_eval = _eval_predicate(config, iters_per_epoch)
    clock = _Clock(config.record_time)

    rows = []
    r_hat = 0.0
    max_ratio = 0.0
    n = 0
    for e in range(config.epochs):
        perm = epoch_stream(train, e, config.seed)
        for start in range(0, train.n, config.minibatch):
            n += 1
            w = 1.0 if (n == 1 and config.clamp_w1) else weight(config.schedule, n)
            avg = update_averages(avg, theta, w)
            batch = perm[start:start + config.minibatch]
            _, g = _minibatch_value_grad(theta, train, batch,
                                         config.loss_kind, mu)
            eta = dc_reweight(theta, eps, lam)
            r_n = float(np.linalg.norm(g)) + float(np.linalg.norm(eta))
            r_hat = max(r_hat, r_n)

            q = (1.0 - w) * q + w * (rho * theta - g)
            W = (1.0 - w) * W + w * eta
            theta_new = np.sign(q / rho) * np.maximum(np.abs(q / rho) - W / rho, 0.0)
            step = float(np.linalg.norm(theta_new - theta))
            ratio = _stability_check(step, r_hat, w, rho, n)
            max_ratio = max(max_ratio, ratio)
            theta = theta_new

            if should_eval(n):
                theta_eval = avg.output(theta)
                train_obj = dc_objective(theta_eval, train, eps, lam,
                                         config.loss_kind)
                _check_finite(train_obj, n, w)
                test_obj = (dc_objective(theta_eval, test, eps, lam,
                                         config.loss_kind)
                            if test is not None else float("nan"))
                rows.append(MetricsRow(n, e + 1, train_obj, test_obj,
                                       int(np.count_nonzero(theta_eval)),
                                       clock.read(), step, w))
                if checkpoint_hook is not None:
                    checkpoint_hook(n, theta, avg)

    avg = update_averages(avg, theta, weight(config.schedule, n + 1))
    return RunRecord(rows=rows, theta=theta, theta_geo=avg.geo_avg,
                     theta_norm=avg.norm_avg, constants=constants,
                     R_hat=r_hat, stability_max_ratio=max_ratio)
