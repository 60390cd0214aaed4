"""Online dictionary learning with structured column penalties.

Signals are rows (N x m); a dictionary is a dense m x K matrix whose
columns are atoms.  The per-signal loss is the elastic-net encoding value

    l(x, D) = min_alpha 0.5||x - D alpha||^2 + lam1*||alpha||_1
              + (lam2/2)*||alpha||^2,

differentiable in D with gradient -(x - D alpha) alpha' at the optimal
code.  The dictionary is regularized directly (no column-norm constraint)
by phi(D) = gamma1 * sum over columns and pixel tiles of max|d_tile|
+ gamma2*||D||_F^2, whose exact prox is available per column.

Dictionary steps mirror the vector solver's aggregate recursion, with one
extra wrinkle: the quadratic curvature is a running max over minibatch
code energies, validated by a backtracking check; when it grows, the old
aggregate is lifted by an exact quadratic centered at the current iterate
so the model stays an upper bound.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data_io import MetricsRow, epoch_stream, substream_rng
from .prox import GroupLinf, penalty_value, prox
from .schedule import StronglyConvex, weight

__all__ = [
    "Code",
    "DictAggregate",
    "DictConfig",
    "DictRunRecord",
    "encode",
    "encode_batch",
    "encoding_loss",
    "dict_grad",
    "dict_lipschitz",
    "init_dict_aggregate",
    "dict_step",
    "dict_penalty_value",
    "build_tile_groups",
    "extract_patches",
    "whiten_patches",
    "generate_synthetic_patches",
    "run_dict",
    "write_patches",
    "read_patches",
    "read_pgm",
    "write_dict",
    "read_dict",
]

_KKT_TOL = 1e-9
_MAX_SWEEPS = 10000
_BACKTRACK_CAP = 40


# ---------------------------------------------------------------------------
# encoding (elastic net, cyclic coordinate descent)
# ---------------------------------------------------------------------------

@dataclass
class Code:
    """Optimal elastic-net code for one signal, plus its residual norm."""

    alpha: np.ndarray
    residual_norm: float


def encode_batch(signals, D, lam1, lam2):
    """Codes for a batch of row signals, as a (b, K) matrix.

    Cyclic coordinate descent over atoms, all signals advanced in lockstep
    (each signal's sequence of updates is exactly the single-signal one).
    Iterates until every signal satisfies the elastic-net optimality
    conditions to 1e-9, so the result is solver-independent up to that
    tolerance.
    """
    if lam1 < 0 or lam2 < 0:
        raise ValueError("penalties must be non-negative")
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    m, K = D.shape
    if signals.shape[1] != m:
        raise ValueError(f"signals have dimension {signals.shape[1]}, dictionary has {m}")
    G = D.T @ D
    B = signals @ D
    diag = np.diag(G).copy()
    denom = diag + lam2
    if np.any(denom <= 0):
        raise ValueError("zero atom with lam2 = 0 makes the code non-unique")
    A = np.zeros((signals.shape[0], K))
    U = np.zeros_like(A)  # U = A @ G, maintained by rank-1 updates
    for _ in range(_MAX_SWEEPS):
        for j in range(K):
            target = B[:, j] - U[:, j] + diag[j] * A[:, j]
            new = np.sign(target) * np.maximum(np.abs(target) - lam1, 0.0) / denom[j]
            delta = new - A[:, j]
            if np.any(delta):
                A[:, j] = new
                U += np.outer(delta, G[:, j])
        # optimality: grad_j = U_j + lam2*A_j - B_j must lie in -lam1*sign(A_j)
        grad = U + lam2 * A - B
        viol = np.where(A != 0.0,
                        np.abs(grad + lam1 * np.sign(A)),
                        np.maximum(np.abs(grad) - lam1, 0.0))
        if viol.max(initial=0.0) <= _KKT_TOL:
            break
    else:
        warnings.warn("encoding hit the sweep cap before reaching tolerance",
                      RuntimeWarning)
    return A


def encode(x, D, lam1, lam2):
    """Optimal code of a single signal (see encode_batch)."""
    A = encode_batch(np.asarray(x, dtype=float)[None, :], D, lam1, lam2)
    alpha = A[0]
    return Code(alpha=alpha, residual_norm=float(np.linalg.norm(x - D @ alpha)))


def encoding_loss(signals, D, lam1, lam2, codes=None):
    """Mean elastic-net loss of row signals under D (codes reused if given)."""
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    if codes is None:
        codes = encode_batch(signals, D, lam1, lam2)
    R = signals - codes @ D.T
    vals = (0.5 * np.sum(R * R, axis=1)
            + lam1 * np.sum(np.abs(codes), axis=1)
            + 0.5 * lam2 * np.sum(codes * codes, axis=1))
    return float(np.mean(vals))


def dict_grad(x, D, code):
    """Gradient of the encoding loss in D at the optimal code: -(x-Da)a'."""
    alpha = code.alpha if isinstance(code, Code) else np.asarray(code, dtype=float)
    residual = np.asarray(x, dtype=float) - D @ alpha
    return -np.outer(residual, alpha)


def dict_lipschitz(codes, lam2):
    """Curvature seed for a batch: max code energy plus the ridge."""
    codes = np.atleast_2d(np.asarray(codes, dtype=float))
    if codes.size == 0:
        return float(lam2)
    return float(np.max(np.sum(codes * codes, axis=1)) + lam2)


# ---------------------------------------------------------------------------
# dictionary aggregate and step
# ---------------------------------------------------------------------------

@dataclass
class DictAggregate:
    """Matrix-valued running surrogate aggregate for the dictionary."""

    Q: np.ndarray
    curvature: float
    penalty: GroupLinf
    lam1: float
    lam2: float
    psi_scale: float = 0.0
    const_term: float = 0.0
    count: int = 0


def init_dict_aggregate(D0, curvature, penalty, lam1, lam2):
    """Anchor quadratic (curvature/2)||D - D0||_F^2, penalty-free."""
    if curvature <= 0:
        raise ValueError(f"curvature must be positive, got {curvature}")
    D0 = np.asarray(D0, dtype=float)
    return DictAggregate(
        Q=curvature * D0,
        curvature=float(curvature),
        penalty=penalty,
        lam1=lam1,
        lam2=lam2,
        const_term=0.5 * curvature * float(np.sum(D0 * D0)),
    )


def _raise_curvature(agg, new_L, anchor):
    """Lift the aggregate to a larger curvature.

    Adds (dL/2)||D - anchor||_F^2, a nonnegative quadratic, so the lifted
    model still upper-bounds everything the old one did and now carries
    the uniform coefficient new_L.
    """
    dL = new_L - agg.curvature
    if dL <= 0:
        return
    agg.Q = agg.Q + dL * anchor
    agg.const_term += 0.5 * dL * float(np.sum(anchor * anchor))
    agg.curvature = new_L


def _dict_minimize(Q, curvature, psi_scale, penalty):
    """Column-wise prox of Q/curvature under the structured penalty."""
    D = Q / curvature
    if penalty is None or psi_scale == 0.0:
        return D
    t = psi_scale / curvature
    out = np.empty_like(D)
    for j in range(D.shape[1]):
        out[:, j] = prox(penalty, D[:, j], t)
    return out


def dict_step(agg, batch, D_prev, w_n):
    """One aggregate update and minimization for a minibatch of signals.

    Encodes the batch at D_prev, averages the loss gradients, folds
    curvature*D_prev - avg_grad into Q with weight w_n, and returns the
    aggregate minimizer.  Before committing, the quadratic model of the
    batch around D_prev is checked to upper-bound the re-encoded batch
    loss at the candidate; failures double the curvature (lifting the old
    aggregate exactly, anchored at D_prev) and retry, so the accepted step
    always satisfies the majorization the analysis relies on.
    """
    if agg.curvature <= 0:
        raise ValueError(f"curvature must be positive, got {agg.curvature}")
    if not 0.0 < w_n <= 1.0:
        raise ValueError(f"weight must lie in (0, 1], got {w_n}")
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    codes = encode_batch(batch, D_prev, agg.lam1, agg.lam2)
    R = batch - codes @ D_prev.T
    avg_grad = -(R.T @ codes) / batch.shape[0]
    batch_loss = encoding_loss(batch, D_prev, agg.lam1, agg.lam2, codes=codes)
    L_try = max(agg.curvature, dict_lipschitz(codes, agg.lam2))

    anchor_sq = float(np.sum(D_prev * D_prev))
    grad_dot_anchor = float(np.sum(avg_grad * D_prev))
    for _ in range(_BACKTRACK_CAP + 1):
        Q_old = agg.Q + (L_try - agg.curvature) * D_prev
        const_old = agg.const_term + 0.5 * (L_try - agg.curvature) * anchor_sq
        Q_new = (1.0 - w_n) * Q_old + w_n * (L_try * D_prev - avg_grad)
        s_new = (1.0 - w_n) * agg.psi_scale + w_n
        const_new = ((1.0 - w_n) * const_old
                     + w_n * (batch_loss - grad_dot_anchor + 0.5 * L_try * anchor_sq))
        D_new = _dict_minimize(Q_new, L_try, s_new, agg.penalty)
        diff = D_new - D_prev
        model = (batch_loss + float(np.sum(avg_grad * diff))
                 + 0.5 * L_try * float(np.sum(diff * diff)))
        if model >= encoding_loss(batch, D_new, agg.lam1, agg.lam2) - 1e-9:
            agg.Q = Q_new
            agg.curvature = L_try
            agg.psi_scale = s_new
            agg.const_term = const_new
            agg.count += 1
            return D_new
        L_try *= 2.0
    raise RuntimeError(
        f"curvature backtracking failed to certify a step after "
        f"{_BACKTRACK_CAP} doublings (reached {L_try})")


def dict_penalty_value(D, penalty):
    """phi(D): the structured column penalty summed over atoms."""
    if penalty is None:
        return 0.0
    return float(sum(penalty_value(penalty, D[:, j]) for j in range(D.shape[1])))


# ---------------------------------------------------------------------------
# patches
# ---------------------------------------------------------------------------

def build_tile_groups(height, width, tile=2):
    """Non-overlapping tile x tile index groups over a row-major grid.

    Edge tiles are smaller when the side is not a multiple of the tile.
    """
    if tile < 1:
        raise ValueError(f"tile must be >= 1, got {tile}")
    groups = []
    for r0 in range(0, height, tile):
        for c0 in range(0, width, tile):
            idx = [r * width + c
                   for r in range(r0, min(r0 + tile, height))
                   for c in range(c0, min(c0 + tile, width))]
            groups.append(np.array(idx, dtype=np.int64))
    return groups


def extract_patches(image, size, stride=None):
    """All size x size windows of a grayscale image, flattened row-major."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-d image, got shape {image.shape}")
    if stride is None:
        stride = size
    H, W = image.shape
    if H < size or W < size:
        raise ValueError(f"image {H}x{W} is smaller than patch size {size}")
    rows = []
    for r in range(0, H - size + 1, stride):
        for c in range(0, W - size + 1, stride):
            rows.append(image[r:r + size, c:c + size].ravel())
    return np.array(rows)


def whiten_patches(signals):
    """Center the set and equalize its covariance (symmetric whitening).

    Subtracts the per-pixel mean of the whole set, eigendecomposes the
    sample covariance, and applies the symmetric inverse square root with
    eigenvalues floored at 1e-8.  Directions with genuine variance come
    out with unit variance, so the recomputed covariance is the identity
    up to sampling error; degenerate directions stay (near) zero instead
    of being amplified.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    centered = signals - signals.mean(axis=0)
    cov = (centered.T @ centered) / signals.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    scale = 1.0 / np.sqrt(np.maximum(evals, 1e-8))
    W = (evecs * scale) @ evecs.T
    return centered @ W


def generate_synthetic_patches(N, height=20, width=20, k_atoms=50, k_active=3,
                               noise=0.05, seed=0):
    """Noisy sparse combinations of a hidden random dictionary.

    Each patch activates k_active of k_atoms unit-norm Gaussian atoms with
    standard normal coefficients, plus white noise.  Returns (patches as
    rows, the hidden dictionary).
    """
    m = height * width
    rng = substream_rng(seed, "patches")
    D_true = rng.standard_normal((m, k_atoms))
    D_true /= np.linalg.norm(D_true, axis=0)
    X = np.empty((N, m))
    for i in range(N):
        support = rng.choice(k_atoms, size=k_active, replace=False)
        coeffs = rng.standard_normal(k_active)
        X[i] = D_true[:, support] @ coeffs + noise * rng.standard_normal(m)
    return X, D_true


# ---------------------------------------------------------------------------
# the online learning loop
# ---------------------------------------------------------------------------

@dataclass
class DictConfig:
    """Settings for an online dictionary run on row-signal data."""

    K: int
    lam1: float = 0.15
    lam2: float = 0.01
    gamma1: float = 0.0
    gamma2: float = 0.0
    tile: int = 2
    height: int = None
    width: int = None
    minibatch: int = 100
    epochs: int = 1
    seed: int = 0
    schedule: object = None
    eval_every: int = 1
    record_time: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"need at least one atom, got K={self.K}")
        if self.lam2 <= 0:
            raise ValueError("lam2 must be positive (codes must be unique)")
        if self.minibatch < 1 or self.epochs < 1:
            raise ValueError("minibatch and epochs must be >= 1")


@dataclass
class DictRunRecord:
    """Rows plus the final dictionary of an online run."""

    rows: list
    D: np.ndarray
    curvature: float
    warnings: list = field(default_factory=list)


class _PatchSet:
    """Adapter so epoch_stream can shuffle a plain signal matrix."""

    def __init__(self, signals):
        self.signals = signals

    @property
    def n(self):
        return self.signals.shape[0]


def run_dict(config, signals, test_signals=None, init_dict=None):
    """Stream minibatches of signals through dictionary surrogate steps.

    The per-row objective is the minibatch encoding loss at the incoming
    dictionary plus phi — the quantity whose running epoch means the
    learning curve is judged by.  The initial dictionary has unit-norm
    Gaussian columns drawn from the seeded "init" substream unless an
    explicit init_dict (m x K) is supplied.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    N, m = signals.shape
    if config.height is None or config.width is None:
        side = int(round(np.sqrt(m)))
        if side * side != m:
            raise ValueError(
                f"signal dimension {m} is not square; pass height and width")
        height, width = side, side
    else:
        height, width = config.height, config.width
        if height * width != m:
            raise ValueError(
                f"height*width = {height * width} does not match dimension {m}")

    penalty = None
    if config.gamma1 > 0 or config.gamma2 > 0:
        penalty = GroupLinf(build_tile_groups(height, width, config.tile),
                            config.gamma1, config.gamma2)
    schedule = config.schedule if config.schedule is not None else StronglyConvex(1.0)

    if init_dict is not None:
        D = np.array(init_dict, dtype=float)
        if D.shape != (m, config.K):
            raise ValueError(f"init dictionary shape {D.shape} does not match "
                             f"({m}, {config.K})")
    else:
        rng = substream_rng(config.seed, "init")
        D = rng.standard_normal((m, config.K))
        D /= np.linalg.norm(D, axis=0)

    agg = init_dict_aggregate(D, config.lam2, penalty, config.lam1, config.lam2)
    dataset = _PatchSet(signals)
    t0 = time.perf_counter() if config.record_time else 0.0

    rows = []
    n = 0
    for e in range(config.epochs):
        perm = epoch_stream(dataset, e, config.seed)
        for start in range(0, N, config.minibatch):
            n += 1
            w = 1.0 if n == 1 else weight(schedule, n)
            batch = signals[perm[start:start + config.minibatch]]
            batch_obj = (encoding_loss(batch, D, config.lam1, config.lam2)
                         + dict_penalty_value(D, penalty))
            D_new = dict_step(agg, batch, D, w)
            step = float(np.linalg.norm(D_new - D))
            D = D_new
            if n % config.eval_every == 0:
                elapsed = (time.perf_counter() - t0) if config.record_time else 0.0
                if test_signals is not None:
                    test_obj = (encoding_loss(test_signals, D, config.lam1,
                                              config.lam2)
                                + dict_penalty_value(D, penalty))
                else:
                    test_obj = float("nan")
                rows.append(MetricsRow(n, e + 1, batch_obj, test_obj,
                                       int(np.count_nonzero(D)), elapsed,
                                       step, w))
    return DictRunRecord(rows=rows, D=D, curvature=agg.curvature)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

_PATCH_MAGIC = b"SMMPATCH"


def write_patches(path, signals):
    """Binary patch file: magic, u32 m, u32 N, then N*m little-endian f64."""
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    N, m = signals.shape
    with open(path, "wb") as fh:
        fh.write(_PATCH_MAGIC)
        fh.write(np.array([m, N], dtype="<u4").tobytes())
        fh.write(signals.astype("<f8").tobytes())


def read_patches(path):
    """Read a binary patch file back into an (N, m) array."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _PATCH_MAGIC:
            raise ValueError(f"bad magic {magic!r}; not a patch file")
        header = np.frombuffer(fh.read(8), dtype="<u4")
        m, N = int(header[0]), int(header[1])
        data = np.frombuffer(fh.read(8 * N * m), dtype="<f8")
        if data.size != N * m:
            raise ValueError(f"truncated patch file: expected {N * m} values, "
                             f"got {data.size}")
        return data.reshape(N, m).copy()


def read_pgm(path):
    """Binary (P5) PGM image as a float matrix of gray levels."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i:i + 1].isspace():
            i += 1
        tokens.append(data[start:i])
    if tokens[0] != b"P5":
        raise ValueError(f"unsupported PGM type {tokens[0]!r} (binary P5 only)")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"16-bit PGM not supported (maxval {maxval})")
    i += 1  # the single whitespace after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=height * width, offset=i)
    return pixels.reshape(height, width).astype(float)


def write_dict(path, D, header_comment=None):
    """Text dictionary: `m K` header then one row of K entries per line."""
    D = np.asarray(D, dtype=float)
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(f"{D.shape[0]} {D.shape[1]}\n")
        for row in D:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_dict(path):
    """Read a text dictionary written by write_dict."""
    with open(path) as fh:
        line = fh.readline()
        while line.startswith("#"):
            line = fh.readline()
        m, K = (int(t) for t in line.split())
        D = np.loadtxt(fh, ndmin=2)
    if D.shape != (m, K):
        raise ValueError(f"dictionary body {D.shape} does not match header ({m}, {K})")
    return D
