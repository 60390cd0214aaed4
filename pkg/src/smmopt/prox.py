"""Regularizers and their exact proximal operators.

Supported penalties:

    L1(lam)                    lam * ||v||_1
    Ridge(lam2)                lam2 * ||v||_2^2
    ElasticNet(lam, lam2)      lam * ||v||_1 + lam2 * ||v||_2^2
    WeightedL1(eta, lam)       lam * sum_j eta[j] * |v[j]|,  eta[j] >= 0
    GroupLinf(groups, g1, g2)  g1 * sum_g max_{k in g} |v[k]| + g2 * ||v||_2^2
                               over pairwise-disjoint index groups

The proximal operator prox_{t*psi}(v) = argmin_u 1/2||u - v||^2 + t*psi(u)
has a closed form for each kind.  The group-ell_inf prox goes through the
Moreau decomposition

    prox_{c*||.||_inf}(v) = v - P_{c*B1}(v),

with P_{r*B1} the Euclidean projection onto the l1-ball of radius r, and the
quadratic part is folded in with the scaling identity

    prox_{t*(h + a*||.||^2)}(v) = prox_{t'*h}(v / (1 + 2*a*t)),
    t' = t / (1 + 2*a*t).

`None` is accepted everywhere a regularizer is expected and means psi = 0.
"""

import numpy as np

__all__ = [
    "L1",
    "Ridge",
    "ElasticNet",
    "WeightedL1",
    "GroupLinf",
    "prox",
    "penalty_value",
    "project_l1_ball",
    "project_l1_ball_rows",
    "soft_threshold",
]


# ---------------------------------------------------------------------------
# regularizer kinds
# ---------------------------------------------------------------------------

class L1:
    """psi(v) = lam * ||v||_1."""

    def __init__(self, lam):
        if lam < 0:
            raise ValueError(f"l1 weight must be >= 0, got {lam}")
        self.lam = float(lam)

    def __repr__(self):
        return f"L1(lam={self.lam})"


class Ridge:
    """psi(v) = lam2 * ||v||_2^2."""

    def __init__(self, lam2):
        if lam2 < 0:
            raise ValueError(f"ridge weight must be >= 0, got {lam2}")
        self.lam2 = float(lam2)

    def __repr__(self):
        return f"Ridge(lam2={self.lam2})"


class ElasticNet:
    """psi(v) = lam * ||v||_1 + lam2 * ||v||_2^2."""

    def __init__(self, lam, lam2):
        if lam < 0 or lam2 < 0:
            raise ValueError(f"elastic net weights must be >= 0, got ({lam}, {lam2})")
        self.lam = float(lam)
        self.lam2 = float(lam2)

    def __repr__(self):
        return f"ElasticNet(lam={self.lam}, lam2={self.lam2})"


class WeightedL1:
    """psi(v) = lam * sum_j eta[j] * |v[j]| with per-coordinate weights eta >= 0.

    The weights are supplied by the caller (e.g. a reweighting scheme updates
    them every iteration); they are stored here only for the current evaluation.
    """

    def __init__(self, eta, lam=1.0):
        eta = np.asarray(eta, dtype=float)
        if not np.all(np.isfinite(eta)) or np.any(eta < 0):
            raise ValueError("weighted-l1 weights must be finite and >= 0")
        if lam < 0:
            raise ValueError(f"l1 scale must be >= 0, got {lam}")
        self.eta = eta
        self.lam = float(lam)

    def __repr__(self):
        return f"WeightedL1(p={self.eta.size}, lam={self.lam})"


class GroupLinf:
    """psi(v) = gamma1 * sum_g max_{k in g} |v[k]| + gamma2 * ||v||_2^2.

    `groups` is a sequence of integer index arrays; groups must be pairwise
    disjoint (they may cover only a subset of the coordinates — coordinates
    outside every group see only the gamma2 term).
    """

    def __init__(self, groups, gamma1, gamma2=0.0):
        if gamma1 < 0 or gamma2 < 0:
            raise ValueError(f"group penalty weights must be >= 0, got ({gamma1}, {gamma2})")
        self.groups = [np.asarray(g, dtype=np.intp) for g in groups]
        seen = set()
        for g in self.groups:
            if g.size == 0:
                raise ValueError("empty group")
            s = set(int(i) for i in g)
            if len(s) != g.size or seen & s:
                raise ValueError("groups must be pairwise disjoint with unique indices")
            seen |= s
        self.gamma1 = float(gamma1)
        self.gamma2 = float(gamma2)
        # equal-sized groups get a vectorized prox path
        sizes = {g.size for g in self.groups}
        self._stack = (
            np.stack(self.groups) if len(sizes) == 1 and self.groups else None
        )

    def __repr__(self):
        return (
            f"GroupLinf(n_groups={len(self.groups)}, "
            f"gamma1={self.gamma1}, gamma2={self.gamma2})"
        )


# ---------------------------------------------------------------------------
# basic operators
# ---------------------------------------------------------------------------

def soft_threshold(v, t):
    """Elementwise soft threshold sign(v) * max(|v| - t, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def project_l1_ball(v, radius):
    """Euclidean projection of v onto {u : ||u||_1 <= radius}.

    Sort-and-threshold: the projection is sign(v) * max(|v| - tau, 0) with
    tau the smallest nonnegative shift making the result feasible.  When v is
    already feasible it is returned unchanged (exactly, no arithmetic on it).
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    v = np.asarray(v, dtype=float)
    if radius == 0.0:
        return np.zeros_like(v)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, u.size + 1)
    # largest k with u_k > (sum_{i<=k} u_i - radius)/k
    k = np.nonzero(u > (css - radius) / j)[0][-1]
    tau = (css[k] - radius) / (k + 1.0)
    return np.sign(v) * np.maximum(a - tau, 0.0)


def project_l1_ball_rows(V, radius):
    """Row-wise l1-ball projection of a 2-d array (vectorized sort-threshold)."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    V = np.asarray(V, dtype=float)
    out = V.copy()
    if radius == 0.0:
        out[:] = 0.0
        return out
    a = np.abs(V)
    infeasible = a.sum(axis=1) > radius
    if not np.any(infeasible):
        return out
    a = a[infeasible]
    u = -np.sort(-a, axis=1)
    css = np.cumsum(u, axis=1)
    j = np.arange(1, V.shape[1] + 1)
    active = u > (css - radius) / j
    k = V.shape[1] - 1 - np.argmax(active[:, ::-1], axis=1)
    rows = np.arange(a.shape[0])
    tau = (css[rows, k] - radius) / (k + 1.0)
    out[infeasible] = np.sign(V[infeasible]) * np.maximum(a - tau[:, None], 0.0)
    return out


# ---------------------------------------------------------------------------
# prox / value dispatch
# ---------------------------------------------------------------------------

def prox(reg, v, t):
    """prox_{t*psi}(v) for the given regularizer (None means psi = 0)."""
    if t <= 0:
        raise ValueError(f"prox step must be > 0, got {t}")
    v = np.asarray(v, dtype=float)
    if reg is None:
        return v.copy()
    if isinstance(reg, L1):
        return soft_threshold(v, t * reg.lam)
    if isinstance(reg, Ridge):
        return v / (1.0 + 2.0 * t * reg.lam2)
    if isinstance(reg, ElasticNet):
        return soft_threshold(v, t * reg.lam) / (1.0 + 2.0 * t * reg.lam2)
    if isinstance(reg, WeightedL1):
        if reg.eta.shape != v.shape:
            raise ValueError(
                f"weight vector has shape {reg.eta.shape}, expected {v.shape}"
            )
        return soft_threshold(v, t * reg.lam * reg.eta)
    if isinstance(reg, GroupLinf):
        return _prox_group_linf(reg, v, t)
    raise TypeError(f"unknown regularizer {reg!r}")


def _prox_group_linf(reg, v, t):
    # fold the gamma2*||.||^2 term in by rescaling, then per-group
    # prox of c*||.||_inf via Moreau: u_g = v_g - P_{c*B1}(v_g)
    shrink = 1.0 + 2.0 * t * reg.gamma2
    out = v / shrink
    c = t * reg.gamma1 / shrink
    if c == 0.0:
        return out
    if reg._stack is not None:
        sub = out[reg._stack]
        out[reg._stack] = sub - project_l1_ball_rows(sub, c)
    else:
        for g in reg.groups:
            out[g] = out[g] - project_l1_ball(out[g], c)
    return out


def penalty_value(reg, v):
    """psi(v) evaluated exactly (None means 0)."""
    if reg is None:
        return 0.0
    v = np.asarray(v, dtype=float)
    if isinstance(reg, L1):
        return reg.lam * float(np.sum(np.abs(v)))
    if isinstance(reg, Ridge):
        return reg.lam2 * float(np.dot(v, v))
    if isinstance(reg, ElasticNet):
        return reg.lam * float(np.sum(np.abs(v))) + reg.lam2 * float(np.dot(v, v))
    if isinstance(reg, WeightedL1):
        if reg.eta.shape != v.shape:
            raise ValueError(
                f"weight vector has shape {reg.eta.shape}, expected {v.shape}"
            )
        return reg.lam * float(np.sum(reg.eta * np.abs(v)))
    if isinstance(reg, GroupLinf):
        a = np.abs(v)
        if reg._stack is not None:
            tot = float(np.max(a[reg._stack], axis=1).sum())
        else:
            tot = float(sum(a[g].max() for g in reg.groups))
        return reg.gamma1 * tot + reg.gamma2 * float(np.dot(v, v))
    raise TypeError(f"unknown regularizer {reg!r}")
