"""Empirical verification of the solver's convergence guarantees.

The checks here run the stochastic solver over many seeds, average the
recorded optimality gaps at fixed sample-count checkpoints, and compare
them against closed-form rate bounds evaluated with the run's own
constants (curvature, observed max gradient norm, distance from the
start to the optimum).  The optimum itself is a high-accuracy batch
solve on the same finite sample — a documented proxy for the expected
objective the guarantees are stated over, which is why bounds carry a
small slack multiplier.

Also here: the randomized surrogate-property suite (majorization,
tangency, quadratic envelope — with deliberately scaled curvature as a
negative control), a movement-bound replay for recorded runs, a log-log
rate-slope fit, and a linter for the weight-sequence conditions the
non-convex analysis assumes.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data_io import substream_rng
from .losses import ProblemConstants, Sample, lipschitz_constant
from .schedule import ConstantFiniteHorizon, SqrtDecay, StronglyConvex, weight
from .solvers import SolverConfig, fista_reference, run_smm
from .surrogate import SurrogateKind, envelope_curvature, surrogate_value, target_value

__all__ = [
    "Problem",
    "BoundCheck",
    "SuiteReport",
    "check_prop31",
    "check_cor32",
    "check_prop33",
    "check_stability",
    "stability_recheck",
    "fit_loglog_slope",
    "surrogate_property_suite",
    "assumption_e_report",
    "LOG_CHECKPOINTS",
]

# log-spaced sample counts used by the strongly convex rate check
LOG_CHECKPOINTS = (100, 178, 316, 562, 1000, 1778, 3162, 5623, 10000)

_DEFAULT_CHECKPOINTS = (100, 1000, 10000)


@dataclass
class Problem:
    """A dataset with the objective pieces the rate statements refer to."""

    train: object
    reg: object = None
    loss_kind: str = "logistic"
    constants: ProblemConstants = None
    name: str = ""

    def resolved_constants(self):
        if self.constants is not None:
            return self.constants
        L = max(lipschitz_constant(self.loss_kind, self.train.sample(i))
                for i in range(self.train.n))
        return ProblemConstants(L=L, mu=0.0)


@dataclass
class BoundCheck:
    """Observed-vs-bound values at each checkpoint, plus the verdict."""

    kind: str
    ns: list
    observed: list
    bounds: list
    passed: bool
    constants: dict
    slack: float
    extras: dict = field(default_factory=dict)

    def to_json_dict(self):
        out = {
            "check": self.kind,
            "pass": bool(self.passed),
            "checkpoints": [
                {"n": int(n), "observed": float(o), "bound": float(b)}
                for n, o, b in zip(self.ns, self.observed, self.bounds)
            ],
            "constants": {k: (float(v) if isinstance(v, (int, float, np.floating))
                              else v)
                          for k, v in self.constants.items()},
        }
        out.update(self.extras)
        return out


def _max_workers():
    raw = os.environ.get("SMM_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _seed_fanout(fn, seeds):
    """Run fn(seed) for each seed, results in seed order."""
    workers = _max_workers()
    if workers == 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def _actual_weights(schedule, n_total, clamp_w1):
    ws = np.array([weight(schedule, k) for k in range(1, n_total + 1)])
    if clamp_w1:
        ws[0] = 1.0
    return ws


def _epochs_for(train_n, total_steps):
    return -(-total_steps // train_n)


def _mean_gap_runs(problem, schedule, seeds, checkpoints, averaging,
                   want_theta=False):
    """Run the solver per seed; return per-seed gap rows and extremes.

    Returns (records, per_seed_objs, per_seed_thetas) where per_seed_objs
    maps each checkpoint position to the recorded objective of the
    designated average, and per_seed_thetas (if requested) holds the plain
    iterate captured at each checkpoint.
    """
    constants = problem.resolved_constants()
    n_total = max(checkpoints)
    epochs = _epochs_for(problem.train.n, n_total)

    def one(seed):
        captured = {}
        hook = ((lambda n, th, avg: captured.__setitem__(n, th.copy()))
                if want_theta else None)
        cfg = SolverConfig(solver="smm", schedule=schedule, averaging=averaging,
                           epochs=epochs, seed=seed, constants=constants,
                           reg=problem.reg, loss_kind=problem.loss_kind,
                           eval_at=checkpoints)
        rec = run_smm(cfg, problem.train, None, checkpoint_hook=hook)
        objs = {row.iteration: row.train_obj for row in rec.rows}
        return rec, objs, captured

    results = _seed_fanout(one, list(range(seeds)))
    records = [r[0] for r in results]
    objs = [r[1] for r in results]
    thetas = [r[2] for r in results]
    return constants, records, objs, thetas


def check_prop31(problem, gamma, horizon, seeds=20,
                 checkpoints=_DEFAULT_CHECKPOINTS, slack=1.05):
    """Constant-weight rate bound for the convex case.

    Mean gap of the normalized average at sample count n must not exceed
    (L d0^2 + (Rhat^2/L) sum w_k^2) / (2 sum w_k) with the weights the run
    actually used.
    """
    if seeds < 10:
        raise ValueError(f"need at least 10 seeds for a stable mean, got {seeds}")
    checkpoints = tuple(c for c in checkpoints if c <= horizon)
    if not checkpoints:
        raise ValueError("horizon is below every checkpoint")
    constants, records, objs, _ = _mean_gap_runs(
        problem, ConstantFiniteHorizon(gamma, horizon), seeds, checkpoints,
        "normalized")
    L = constants.L
    theta_star, f_star, _ = fista_reference(
        problem.train, problem.reg, problem.loss_kind, constants.mu)
    d0_sq = float(theta_star @ theta_star)
    r_hat = max(rec.R_hat for rec in records)
    ws = _actual_weights(ConstantFiniteHorizon(gamma, horizon),
                         max(checkpoints), clamp_w1=True)
    s1 = np.cumsum(ws)
    s2 = np.cumsum(ws * ws)
    ns, observed, bounds = [], [], []
    for n in checkpoints:
        gap = float(np.mean([o[n] for o in objs])) - f_star
        bound = (L * d0_sq + (r_hat**2 / L) * s2[n - 1]) / (2.0 * s1[n - 1])
        ns.append(n)
        observed.append(gap)
        bounds.append(bound)
    passed = all(o <= b * slack for o, b in zip(observed, bounds))
    return BoundCheck("prop31", ns, observed, bounds, passed,
                      {"L": L, "mu": constants.mu, "rho": constants.rho,
                       "R_hat": r_hat, "d0_sq": d0_sq, "f_star": f_star,
                       "gamma": gamma, "horizon": horizon, "seeds": seeds},
                      slack,
                      {"stability_max_ratio":
                       max(rec.stability_max_ratio for rec in records)})


def check_cor32(problem, gamma, n_max, seeds=20, checkpoints=None, slack=1.05):
    """Decaying-weight (w_n = gamma/sqrt(n)) rate bound for the convex case.

    Mean gap of the normalized average at n >= 2 must not exceed
    L d0^2/(2 gamma sqrt(n)) + Rhat^2 gamma (1+log n)/(2 L sqrt(n)).
    """
    if seeds < 10:
        raise ValueError(f"need at least 10 seeds for a stable mean, got {seeds}")
    if checkpoints is None:
        checkpoints = tuple(c for c in _DEFAULT_CHECKPOINTS if c <= n_max)
        if not checkpoints or max(checkpoints) < n_max:
            checkpoints = checkpoints + (n_max,)
    if min(checkpoints) < 2:
        raise ValueError("the bound holds for n >= 2")
    if max(checkpoints) > n_max:
        raise ValueError("checkpoints must not exceed n_max")
    constants, records, objs, _ = _mean_gap_runs(
        problem, SqrtDecay(gamma), seeds, checkpoints, "normalized")
    L = constants.L
    theta_star, f_star, _ = fista_reference(
        problem.train, problem.reg, problem.loss_kind, constants.mu)
    d0_sq = float(theta_star @ theta_star)
    r_hat = max(rec.R_hat for rec in records)
    ns, observed, bounds = [], [], []
    for n in checkpoints:
        gap = float(np.mean([o[n] for o in objs])) - f_star
        bound = (L * d0_sq / (2.0 * gamma * math.sqrt(n))
                 + r_hat**2 * gamma * (1.0 + math.log(n)) / (2.0 * L * math.sqrt(n)))
        ns.append(n)
        observed.append(gap)
        bounds.append(bound)
    passed = all(o <= b * slack for o, b in zip(observed, bounds))
    return BoundCheck("cor32", ns, observed, bounds, passed,
                      {"L": L, "mu": constants.mu, "rho": constants.rho,
                       "R_hat": r_hat, "d0_sq": d0_sq, "f_star": f_star,
                       "gamma": gamma, "n_max": n_max, "seeds": seeds},
                      slack,
                      {"stability_max_ratio":
                       max(rec.stability_max_ratio for rec in records)})


def check_prop33(problem, seeds=20, checkpoints=LOG_CHECKPOINTS, slack=1.05,
                 slope_window=(1000, 10000), slope_threshold=-0.8):
    """Strongly convex rate bound, with a log-log slope summary.

    Mean of [gap of the geometric average at n, plus (rho/2) times the
    squared distance of the plain iterate to the optimum] must not exceed
    max(2 Rhat^2/mu, rho d0^2)/(beta n + 1) with beta = mu/rho.  The fitted
    slope of that quantity over the window is reported alongside.
    """
    if seeds < 10:
        raise ValueError(f"need at least 10 seeds for a stable mean, got {seeds}")
    constants = problem.resolved_constants()
    if constants.mu <= 0:
        raise ValueError("this bound needs a strongly convex objective (mu > 0)")
    beta = constants.mu / constants.rho
    _, records, objs, thetas = _mean_gap_runs(
        problem, StronglyConvex(beta), seeds, checkpoints, "geometric",
        want_theta=True)
    rho, mu, L = constants.rho, constants.mu, constants.L
    theta_star, f_star, _ = fista_reference(
        problem.train, problem.reg, problem.loss_kind, mu)
    d0_sq = float(theta_star @ theta_star)
    r_hat = max(rec.R_hat for rec in records)
    numer = max(2.0 * r_hat**2 / mu, rho * d0_sq)
    ns, observed, bounds = [], [], []
    for n in checkpoints:
        per_seed = [objs[s][n] - f_star
                    + 0.5 * rho * float(np.sum((theta_star - thetas[s][n]) ** 2))
                    for s in range(seeds)]
        ns.append(n)
        observed.append(float(np.mean(per_seed)))
        bounds.append(numer / (beta * n + 1.0))
    passed = all(o <= b * slack for o, b in zip(observed, bounds))
    slope = fit_loglog_slope(list(zip(ns, observed)), window=slope_window)
    extras = {"slope": slope, "slope_window": list(slope_window),
              "slope_ok": bool(slope <= slope_threshold),
              "stability_max_ratio":
              max(rec.stability_max_ratio for rec in records)}
    return BoundCheck("prop33", ns, observed, bounds, passed,
                      {"L": L, "mu": mu, "rho": rho, "beta": beta,
                       "R_hat": r_hat, "d0_sq": d0_sq, "f_star": f_star,
                       "seeds": seeds},
                      slack, extras)


# ---------------------------------------------------------------------------
# movement bound
# ---------------------------------------------------------------------------

def check_stability(problem, gamma, horizon, seeds=20, slack=1.0 + 1e-9):
    """Worst per-seed ratio of step length to its movement bound.

    The solver already raises on violation mid-run; this reports how much
    headroom the runs had.  `observed` is each seed's max ratio, `bound`
    is 1.
    """
    constants = problem.resolved_constants()
    epochs = _epochs_for(problem.train.n, horizon)

    def one(seed):
        cfg = SolverConfig(solver="smm",
                           schedule=ConstantFiniteHorizon(gamma, horizon),
                           epochs=epochs, seed=seed, constants=constants,
                           reg=problem.reg, loss_kind=problem.loss_kind,
                           eval_at=())
        return run_smm(cfg, problem.train, None)

    records = _seed_fanout(one, list(range(seeds)))
    ratios = [rec.stability_max_ratio for rec in records]
    passed = all(r <= slack for r in ratios)
    return BoundCheck("stability", list(range(seeds)), ratios,
                      [1.0] * seeds, passed,
                      {"L": constants.L, "mu": constants.mu,
                       "rho": constants.rho,
                       "R_hat": max(rec.R_hat for rec in records),
                       "gamma": gamma, "horizon": horizon, "seeds": seeds},
                      slack)


def stability_recheck(rows, r_hat, rho, scale=1.0):
    """Replay the movement bound over recorded rows (needs every step).

    Returns (ok, max_ratio) under a max-gradient-norm of scale*r_hat; a
    scale below 1 is a corruption used as a negative control.
    """
    ok = True
    max_ratio = 0.0
    for row in rows:
        bound = 2.0 * (scale * r_hat) * row.w_n / rho
        if row.step_norm > bound * (1.0 + 1e-9) + 1e-12:
            ok = False
        if bound > 0:
            max_ratio = max(max_ratio, row.step_norm / bound)
    return ok, max_ratio


# ---------------------------------------------------------------------------
# rate-slope fit
# ---------------------------------------------------------------------------

def fit_loglog_slope(metrics, column="train_obj", window=None, offset=0.0):
    """Least-squares slope of log(value - offset) against log(n).

    `metrics` is either a list of metric rows (n taken from .iteration,
    value from `column`) or a list of (n, value) pairs.  `window` keeps
    only n in [lo, hi].  Non-positive values after the offset are ignored
    (they have no log); fewer than two usable points is an error.
    """
    pts = []
    for item in metrics:
        if hasattr(item, "iteration"):
            pts.append((item.iteration, getattr(item, column)))
        else:
            n, v = item
            pts.append((int(n), float(v)))
    if window is not None:
        lo, hi = window
        pts = [(n, v) for n, v in pts if lo <= n <= hi]
    pts = [(n, v - offset) for n, v in pts if v - offset > 0.0]
    if len(pts) < 2:
        raise ValueError("need at least two positive points to fit a slope")
    xs = np.log([n for n, _ in pts])
    ys = np.log([v for _, v in pts])
    slope = np.polyfit(xs, ys, 1)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# surrogate-property suite
# ---------------------------------------------------------------------------

@dataclass
class SuiteReport:
    """Verdict of the randomized majorization/tangency/envelope checks."""

    passed: bool
    trials: int
    kinds: list
    failures: dict
    worst: dict


def _suite_sample(rng, p, loss_kind):
    nnz = 4
    idx = np.sort(rng.choice(p, size=nnz, replace=False)).astype(np.int64)
    vals = rng.standard_normal(nnz)
    vals /= np.linalg.norm(vals)
    label = 1.0 if loss_kind != "logistic" or rng.random() < 0.5 else -1.0
    if loss_kind == "squared":
        label = float(rng.standard_normal())
    return Sample(idx, vals, label)


def _suite_points(rng, p, sample, trial):
    """Anchor/test-point pair; the first two trials are adversarial.

    Trial 0 aims along the sample direction from a zero-margin anchor
    (where the loss curvature is maximal), trial 1 goes far afield — the
    two regimes where an understated curvature constant must get caught.
    """
    x = np.zeros(p)
    x[sample.indices] = sample.values
    if trial == 0:
        r = rng.standard_normal(p)
        anchor = r - (float(x @ r) / float(x @ x)) * x
        theta = anchor + 2.0 * x / np.linalg.norm(x)
    elif trial == 1:
        anchor = rng.standard_normal(p)
        theta = anchor + 30.0 * x / np.linalg.norm(x)
    else:
        anchor = rng.standard_normal(p)
        theta = anchor + rng.uniform(0.1, 3.0) * rng.standard_normal(p)
    return anchor, theta


def surrogate_property_suite(loss_kind="logistic", reg=None, trials=10000,
                             seed=0, l_scale=1.0, dc_epsilon=0.01,
                             dc_lam=0.01, p=8):
    """Randomized check that every surrogate kind majorizes its target.

    Per trial and kind: tangency at the anchor to 1e-12, minorization
    failure beyond 1e-10, and the quadratic envelope |g - f| within
    (envelope curvature/2)*||theta-anchor||^2 + 1e-10.  Curvature uses the
    per-sample constant scaled by l_scale; passing l_scale < 1 understates
    it and must make the suite fail (negative control).
    """
    kinds = ["lipschitz_gradient", "proximal_gradient", "dc_log_penalty"]
    failures = {k: {"tangency": 0, "majorization": 0, "envelope": 0}
                for k in kinds}
    worst = {k: {"tangency": 0.0, "majorization": 0.0, "envelope": 0.0}
             for k in kinds}
    for kind_name in kinds:
        rng = substream_rng(seed, "suite", kind_name)
        for trial in range(trials):
            sample = _suite_sample(rng, p, loss_kind)
            L = l_scale * lipschitz_constant(loss_kind, sample)
            kind = SurrogateKind(kind_name, ProblemConstants(L=L),
                                 loss_kind=loss_kind, reg=reg,
                                 epsilon=dc_epsilon, lam=dc_lam)
            anchor, theta = _suite_points(rng, p, sample, trial)

            g_anchor = surrogate_value(kind, anchor, anchor, sample)
            f_anchor = target_value(kind, anchor, sample)
            tan = abs(g_anchor - f_anchor)
            worst[kind_name]["tangency"] = max(worst[kind_name]["tangency"], tan)
            if tan > 1e-12:
                failures[kind_name]["tangency"] += 1

            g = surrogate_value(kind, anchor, theta, sample)
            f = target_value(kind, theta, sample)
            shortfall = f - g
            worst[kind_name]["majorization"] = max(
                worst[kind_name]["majorization"], shortfall)
            if shortfall > 1e-10:
                failures[kind_name]["majorization"] += 1

            d_sq = float(np.sum((theta - anchor) ** 2))
            excess = abs(g - f) - 0.5 * envelope_curvature(kind) * d_sq
            worst[kind_name]["envelope"] = max(worst[kind_name]["envelope"], excess)
            if excess > 1e-10:
                failures[kind_name]["envelope"] += 1
    passed = all(v == 0 for per_kind in failures.values()
                 for v in per_kind.values())
    return SuiteReport(passed=passed, trials=trials, kinds=kinds,
                       failures=failures, worst=worst)


# ---------------------------------------------------------------------------
# weight-sequence linter
# ---------------------------------------------------------------------------

def assumption_e_report(schedule):
    """Symbolic check of the weight conditions the non-convex analysis uses.

    Clauses: weights non-increasing, w_1 = 1, and sum of w_n^2*sqrt(n)
    finite.  Verdicts are per schedule kind (the shapes are known in closed
    form); an unknown kind reports unsatisfied with a note.
    """
    kind = getattr(schedule, "kind", None)
    if kind == "constant":
        w1 = weight(schedule, 1) == 1.0
        report = {"nonincreasing": True, "w1_is_one": bool(w1),
                  "sq_weight_sqrt_summable": False,
                  "note": "constant weights: sum w^2 sqrt(n) grows like n^{3/2}"}
    elif kind == "sqrt":
        report = {"nonincreasing": True,
                  "w1_is_one": bool(weight(schedule, 1) == 1.0),
                  "sq_weight_sqrt_summable": False,
                  "note": "w^2 sqrt(n) ~ 1/sqrt(n): its sum diverges"}
    elif kind == "tuned_sqrt":
        report = {"nonincreasing": True, "w1_is_one": True,
                  "sq_weight_sqrt_summable": False,
                  "note": "w^2 sqrt(n) ~ 1/sqrt(n): its sum diverges"}
    elif kind == "strongly_convex":
        report = {"nonincreasing": True, "w1_is_one": True,
                  "sq_weight_sqrt_summable": True,
                  "note": "w ~ (1+beta)/(beta n): sum w^2 sqrt(n) converges"}
    else:
        report = {"nonincreasing": False, "w1_is_one": False,
                  "sq_weight_sqrt_summable": False,
                  "note": f"unknown schedule kind {kind!r}"}
    report["kind"] = kind
    report["satisfied"] = (report["nonincreasing"] and report["w1_is_one"]
                           and report["sq_weight_sqrt_summable"])
    return report
