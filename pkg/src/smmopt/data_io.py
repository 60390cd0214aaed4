"""Dataset ingestion, synthetic generators, deterministic streaming, metrics IO.

Datasets are stored as a CSR matrix plus a label vector (memory grows with
the number of nonzeros, never with n*p), with per-sample views materialized
on demand.  Text ingestion follows the de-facto sparse format

    <label> <index>:<value> <index>:<value> ...

with 1-based, strictly increasing indices per line (converted to 0-based
internally).

All randomness flows from one 64-bit seed:

  * per-epoch permutations come from a counter-based Philox generator keyed
    (seed, epoch), so any epoch's order can be re-derived statelessly and
    reproduced across processes;
  * named substreams ("data", "init", ...) hash their label into a
    SeedSequence, so different purposes can never collide with epoch keys.

Metrics files are CSV with a fixed header and floats printed at 17
significant digits, which round-trips float64 exactly.
"""

import zlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .losses import Sample

__all__ = [
    "Dataset",
    "MetricsRow",
    "parse_libsvm",
    "serialize_libsvm",
    "generate_synthetic_logreg",
    "epoch_stream",
    "substream_rng",
    "write_metrics",
    "read_metrics",
    "METRICS_HEADER",
]


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

class Dataset:
    """Immutable bag of samples: CSR features X (n x p), labels y, a name."""

    def __init__(self, X, y, name=""):
        X = sp.csr_matrix(X)
        y = np.asarray(y, dtype=float)
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} rows but {y.size} labels")
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        self.X = X
        self.y = y
        self.name = name

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def sample(self, i):
        """Materialize sample i as a Sample view (arrays share X's buffers)."""
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return Sample(self.X.indices[lo:hi].astype(np.int64), self.X.data[lo:hi],
                      float(self.y[i]))

    @property
    def samples(self):
        return [self.sample(i) for i in range(self.n)]

    @classmethod
    def from_samples(cls, samples, p=None, name=""):
        samples = list(samples)
        if not samples:
            raise ValueError("dataset must contain at least one sample")
        max_idx = max((int(s.indices[-1]) for s in samples if s.indices.size), default=-1)
        if p is None:
            p = max_idx + 1
        elif p < max_idx + 1:
            raise ValueError(f"p={p} is smaller than max feature index + 1 = {max_idx + 1}")
        indptr = np.zeros(len(samples) + 1, dtype=np.int64)
        for i, s in enumerate(samples):
            indptr[i + 1] = indptr[i] + s.indices.size
        indices = np.concatenate([s.indices for s in samples]) if indptr[-1] else np.zeros(0, dtype=np.int64)
        data = np.concatenate([s.values for s in samples]) if indptr[-1] else np.zeros(0)
        y = np.array([s.label for s in samples])
        X = sp.csr_matrix((data, indices, indptr), shape=(len(samples), p))
        return cls(X, y, name=name)


@dataclass
class MetricsRow:
    """One evaluation row of a run: objective and bookkeeping columns."""

    iteration: int
    epoch: int
    train_obj: float
    test_obj: float
    nnz: int
    elapsed_s: float
    step_norm: float
    w_n: float


# ---------------------------------------------------------------------------
# text-format parsing / serialization
# ---------------------------------------------------------------------------

def parse_libsvm(source, zero_to_minus_one=False, normalize=False, name=None):
    """Parse `<label> <idx>:<val> ...` lines into a Dataset.

    `source` may be a path or an open text stream.  Indices are 1-based and
    must be strictly increasing per line.  With zero_to_minus_one, labels
    equal to 0 are mapped to -1.  With normalize, every sample with nonzero
    norm is scaled to unit l2-norm (zero samples pass through unchanged).
    """
    if isinstance(source, str):
        with open(source) as fh:
            return parse_libsvm(fh, zero_to_minus_one, normalize, name or source)

    labels, indptr_l = [], [0]
    all_idx, all_val = [], []
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise ValueError(f"line {lineno}: bad label {parts[0]!r}") from None
        if zero_to_minus_one and label == 0.0:
            label = -1.0
        prev = 0
        idx, val = [], []
        for tok in parts[1:]:
            try:
                i_s, v_s = tok.split(":", 1)
                i, v = int(i_s), float(v_s)
            except ValueError:
                raise ValueError(f"line {lineno}: bad feature token {tok!r}") from None
            if i < 1:
                raise ValueError(f"line {lineno}: index {i} is not 1-based positive")
            if i <= prev:
                raise ValueError(f"line {lineno}: indices not strictly increasing at {i}")
            prev = i
            idx.append(i - 1)
            val.append(v)
        if normalize and val:
            nrm = float(np.linalg.norm(val))
            if nrm > 0:
                val = [v / nrm for v in val]
        labels.append(label)
        all_idx.extend(idx)
        all_val.extend(val)
        indptr_l.append(len(all_idx))
    if not labels:
        raise ValueError("no samples found")
    p = (max(all_idx) + 1) if all_idx else 0
    X = sp.csr_matrix(
        (np.array(all_val, dtype=float),
         np.array(all_idx, dtype=np.int64),
         np.array(indptr_l, dtype=np.int64)),
        shape=(len(labels), p),
    )
    return Dataset(X, np.array(labels), name=name or "<stream>")


def serialize_libsvm(dataset, target):
    """Write a Dataset back to the text format (1-based indices, %.17g)."""
    if isinstance(target, str):
        with open(target, "w") as fh:
            serialize_libsvm(dataset, fh)
            return
    X, y = dataset.X, dataset.y
    for i in range(dataset.n):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        toks = [_fmt(y[i])]
        toks += [f"{X.indices[k] + 1}:{_fmt(X.data[k])}" for k in range(lo, hi)]
        target.write(" ".join(toks) + "\n")


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def generate_synthetic_logreg(p, N, k_true, noise, seed, density=0.1, name=None):
    """Sparse-Gaussian logistic data with a k_true-sparse ground truth.

    theta_true has k_true entries equal to +-1 at seeded random positions.
    Each sample has max(1, round(density*p)) nonzeros with standard normal
    values, scaled to unit l2-norm.  Labels are sign(x'theta_true) (a fair
    coin when the margin is exactly zero, e.g. k_true = 0), then flipped
    with probability `noise`.  Returns (Dataset, theta_true).
    """
    if not 0 < density <= 1:
        raise ValueError(f"density must be in (0, 1], got {density}")
    if k_true > p:
        raise ValueError(f"k_true={k_true} exceeds p={p}")
    rng = substream_rng(seed, "data")
    theta_true = np.zeros(p)
    if k_true:
        support = rng.choice(p, size=k_true, replace=False)
        theta_true[support] = rng.choice([-1.0, 1.0], size=k_true)
    nnz = max(1, int(round(density * p)))
    indptr = np.arange(0, (N + 1) * nnz, nnz, dtype=np.int64)
    indices = np.empty(N * nnz, dtype=np.int64)
    values = np.empty(N * nnz)
    y = np.empty(N)
    for i in range(N):
        idx = np.sort(rng.choice(p, size=nnz, replace=False))
        v = rng.standard_normal(nnz)
        v /= np.linalg.norm(v)
        indices[i * nnz:(i + 1) * nnz] = idx
        values[i * nnz:(i + 1) * nnz] = v
        margin = v @ theta_true[idx]
        if margin == 0.0:
            y[i] = rng.choice([-1.0, 1.0])
        else:
            y[i] = np.sign(margin)
        if noise > 0 and rng.random() < noise:
            y[i] = -y[i]
    X = sp.csr_matrix((values, indices, indptr), shape=(N, p))
    return Dataset(X, y, name=name or f"synth(p={p},N={N})"), theta_true


# ---------------------------------------------------------------------------
# deterministic streams
# ---------------------------------------------------------------------------

def epoch_stream(dataset, epoch_index, seed):
    """Permutation of {0..n-1} for one epoch; re-derivable from (seed, epoch).

    Uses a counter-based Philox generator keyed key = seed * 2^64 + epoch so
    the permutation for any epoch is computed statelessly (no generator state
    is carried between epochs) and identically across processes.
    """
    n = dataset if isinstance(dataset, int) else dataset.n
    if epoch_index < 0:
        raise ValueError(f"epoch index must be >= 0, got {epoch_index}")
    key = (int(seed) & (2**64 - 1)) * 2**64 + int(epoch_index)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.permutation(n)


def substream_rng(seed, *labels):
    """Named random substream: independent of epoch permutations and of other labels."""
    entropy = [int(seed) & (2**64 - 1)]
    entropy += [zlib.crc32(str(label).encode()) for label in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))


# ---------------------------------------------------------------------------
# metrics files
# ---------------------------------------------------------------------------

METRICS_HEADER = "iter,epoch,train_obj,test_obj,nnz,elapsed_s,step_norm,w_n"


def _fmt(x):
    """17 significant digits: exact float64 round-trip, 'nan' for NaN."""
    return f"{float(x):.17g}"


def write_metrics(rows, path, header_comment=None):
    """Write rows as CSV; optional '# ...' first line for provenance."""
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(METRICS_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.iteration},{r.epoch},{_fmt(r.train_obj)},{_fmt(r.test_obj)},"
                f"{r.nnz},{_fmt(r.elapsed_s)},{_fmt(r.step_norm)},{_fmt(r.w_n)}\n"
            )


def read_metrics(path):
    """Read a metrics CSV back into MetricsRow objects (comments skipped)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line == METRICS_HEADER:
                continue
            f = line.split(",")
            if len(f) != 8:
                raise ValueError(f"bad metrics line: {line!r}")
            rows.append(MetricsRow(int(f[0]), int(f[1]), float(f[2]), float(f[3]),
                                   int(f[4]), float(f[5]), float(f[6]), float(f[7])))
    return rows
