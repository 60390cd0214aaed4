"""Flat `key = value` configuration: parsing, validation, object building.

Config files are plain text, one `section.key = value` per line, `#`
comments and blank lines allowed.  The key set is closed — anything not
in the registry is rejected with its line number — and the merged
(file + override) mapping is what gets echoed into output artifacts for
provenance.
"""

from .losses import LOSS_KINDS, ProblemConstants, lipschitz_constant
from .prox import ElasticNet, GroupLinf, L1, Ridge
from .schedule import (AVERAGING_MODES, ConstantFiniteHorizon, SqrtDecay,
                       StronglyConvex, TunedSqrt)
from .solvers import SOLVERS, SolverConfig

__all__ = [
    "ConfigError",
    "CONFIG_KEYS",
    "parse_config_file",
    "parse_override",
    "load_effective_config",
    "build_schedule",
    "build_reg",
    "build_constants",
    "build_solver_config",
    "format_config",
    "read_groups_file",
]

SCHEDULE_KINDS = ("constant", "sqrt", "tuned_sqrt", "strongly_convex")
REG_KINDS = ("none", "l1", "ridge", "elastic_net", "group_linf")


class ConfigError(Exception):
    """A configuration file, key, or value the registry cannot accept."""


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text
    return parse


def _positive_float(text):
    v = float(text)
    if v <= 0:
        raise ValueError(f"must be > 0, got {v}")
    return v


def _nonneg_float(text):
    v = float(text)
    if v < 0:
        raise ValueError(f"must be >= 0, got {v}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise ValueError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise ValueError(f"must be >= 0, got {v}")
    return v


# every addressable key with its value parser
CONFIG_KEYS = {
    "schedule.kind": _choice(SCHEDULE_KINDS),
    "schedule.gamma": _positive_float,
    "schedule.n0": _nonneg_int,
    "schedule.beta": _positive_float,
    "schedule.horizon": _positive_int,
    "loss.kind": _choice(LOSS_KINDS),
    "loss.ridge_mu": _nonneg_float,
    "reg.kind": _choice(REG_KINDS),
    "reg.lambda": _nonneg_float,
    "reg.lambda2": _nonneg_float,
    "reg.gamma1": _nonneg_float,
    "reg.gamma2": _nonneg_float,
    "reg.groups": str,
    "solver.kind": _choice(SOLVERS),
    "solver.epochs": _positive_int,
    "solver.minibatch": _positive_int,
    "solver.seed": int,
    "solver.averaging": _choice(AVERAGING_MODES),
    "solver.eval_every": _positive_int,
    "solver.dc_epsilon": _positive_float,
    "solver.dc_lam": _nonneg_float,
    "solver.dc_rounds": _positive_int,
    "solver.clamp_w1": _parse_bool,
    "constants.L": _positive_float,
    "constants.rho": _positive_float,
    "data.normalize": _parse_bool,
    "data.zero_labels": _parse_bool,
}


def _parse_pair(key, raw_value, where):
    key = key.strip()
    if key not in CONFIG_KEYS:
        raise ConfigError(f"{where}: unknown config key {key!r}")
    try:
        return key, CONFIG_KEYS[key](raw_value.strip())
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from exc


def parse_config_file(path):
    """Read a flat key=value file into a validated dict."""
    cfg = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, "
                              f"got {stripped!r}")
        key, value = stripped.split("=", 1)
        key, parsed = _parse_pair(key, value, f"{path}:{lineno}")
        cfg[key] = parsed
    return cfg


def parse_override(text):
    """Parse one `key=value` override (the --set flag)."""
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, value = text.split("=", 1)
    return _parse_pair(key, value, "override")


def load_effective_config(path=None, overrides=None):
    """Config file merged with overrides; overrides win."""
    cfg = parse_config_file(path) if path else {}
    for item in overrides or ():
        key, value = parse_override(item)
        cfg[key] = value
    return cfg


def format_config(cfg):
    """Canonical one-line echo of the effective configuration."""
    parts = []
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        parts.append(f"{key}={value}")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# object builders
# ---------------------------------------------------------------------------

def build_schedule(cfg):
    """Weight schedule from schedule.* keys; None if no kind is set."""
    kind = cfg.get("schedule.kind")
    if kind is None:
        return None
    gamma = cfg.get("schedule.gamma", 1.0)
    if kind == "constant":
        if "schedule.horizon" not in cfg:
            raise ConfigError("schedule.kind=constant needs schedule.horizon")
        return ConstantFiniteHorizon(gamma, cfg["schedule.horizon"])
    if kind == "sqrt":
        return SqrtDecay(gamma)
    if kind == "tuned_sqrt":
        return TunedSqrt(cfg.get("schedule.n0", 0))
    return StronglyConvex(cfg.get("schedule.beta", 1.0))


def read_groups_file(path, p=None):
    """Group-definition file: one group per line of 0-based indices."""
    groups = []
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read groups file {path!r}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            idx = [int(t) for t in stripped.split()]
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: non-integer index: {exc}") from exc
        if any(i < 0 for i in idx):
            raise ConfigError(f"{path}:{lineno}: negative index")
        if p is not None and any(i >= p for i in idx):
            raise ConfigError(f"{path}:{lineno}: index out of range for "
                              f"dimension {p}")
        groups.append(idx)
    if not groups:
        raise ConfigError(f"groups file {path!r} defines no groups")
    return groups


def build_reg(cfg, p=None):
    """Regularizer from reg.* keys; None for reg.kind absent or `none`."""
    kind = cfg.get("reg.kind")
    if kind is None or kind == "none":
        return None
    if kind == "l1":
        return L1(cfg.get("reg.lambda", 0.0))
    if kind == "ridge":
        return Ridge(cfg.get("reg.lambda2", 0.0))
    if kind == "elastic_net":
        return ElasticNet(cfg.get("reg.lambda", 0.0), cfg.get("reg.lambda2", 0.0))
    if "reg.groups" not in cfg:
        raise ConfigError("reg.kind=group_linf needs reg.groups (a file path)")
    groups = read_groups_file(cfg["reg.groups"], p)
    return GroupLinf(groups, cfg.get("reg.gamma1", 0.0), cfg.get("reg.gamma2", 0.0))


def build_constants(cfg, train, loss_kind):
    """Curvature constants, deriving L from the data when not pinned."""
    mu = cfg.get("loss.ridge_mu", 0.0)
    if "constants.L" in cfg:
        L = cfg["constants.L"]
    else:
        L = max(lipschitz_constant(loss_kind, train.sample(i))
                for i in range(train.n))
        if L <= 0.0:
            L = 1.0
    return ProblemConstants(L=L, mu=mu, rho=cfg.get("constants.rho"))


def build_solver_config(cfg, train=None):
    """SolverConfig from the merged mapping (constants included if data given)."""
    solver = cfg.get("solver.kind", "smm")
    schedule = build_schedule(cfg)
    if schedule is None and solver in ("smm", "fobos", "online_dc"):
        raise ConfigError(f"solver {solver!r} needs schedule.kind")
    loss_kind = cfg.get("loss.kind", "logistic")
    reg = build_reg(cfg, train.p if train is not None else None)
    constants = build_constants(cfg, train, loss_kind) if train is not None else None
    try:
        return SolverConfig(
            solver=solver,
            schedule=schedule,
            averaging=cfg.get("solver.averaging", "none"),
            epochs=cfg.get("solver.epochs", 1),
            minibatch=cfg.get("solver.minibatch", 1),
            seed=cfg.get("solver.seed", 0),
            constants=constants,
            reg=reg,
            loss_kind=loss_kind,
            dc_epsilon=cfg.get("solver.dc_epsilon", 0.01),
            dc_lam=cfg.get("solver.dc_lam", 0.0),
            dc_rounds=cfg.get("solver.dc_rounds", 5),
            eval_every=cfg.get("solver.eval_every"),
            clamp_w1=cfg.get("solver.clamp_w1", True),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
