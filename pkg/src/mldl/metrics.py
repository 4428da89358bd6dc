"""Embedding-quality metrics between two metric spaces over the same points.

Conventions: ``D_in`` is the source space (layer l, usually the input) and
``D_lat`` the target space (layer l', usually the latent layer). Distances
should be normalized consistently (see ``geometry.pairwise_distances``) for
the distance-valued metrics (LGD, K-min/K-max, L-KL); the rank metrics are
scale free.

k-NN sets and ranks break ties by ascending index and never include the
point itself. The rank of j for i is 1 for the nearest neighbor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.spatial.distance import cdist

from .geometry import DistanceMatrix, NeighborhoodSystem

DEFAULT_KMAX_THRESHOLD = 20.0
DEFAULT_CONT_THRESHOLD = 0.99


# ---------------------------------------------------------------------------
# distance sources


class _Rows:
    """Row blocks of a distance matrix, from a full matrix or from coordinates."""

    def __init__(self, src, normalize: bool = True):
        if isinstance(src, DistanceMatrix):
            self.full = src.d
        elif isinstance(src, _Rows):
            self.full, self.X, self.scale = src.full, src.X, src.scale
            return
        else:
            src = np.asarray(src, dtype=np.float64)
            self.full = src if src.ndim == 2 and src.shape[0] == src.shape[1] and np.allclose(np.diag(src), 0) and np.allclose(src, src.T) else None
            if self.full is None:
                self.X = src
                self.scale = 1.0 / math.sqrt(src.shape[1]) if normalize else 1.0
                return
        self.X = None
        self.scale = 1.0

    @property
    def size(self) -> int:
        return len(self.full) if self.full is not None else len(self.X)

    def block(self, i0: int, i1: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i0:i1]
        return cdist(self.X[i0:i1], self.X) * self.scale

    def pair(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        if self.full is not None:
            return self.full[rows, cols]
        return np.linalg.norm(self.X[rows] - self.X[cols], axis=1) * self.scale


def _chunks(m: int, width: int):
    step = max(1, int(4_000_000 // max(width, 1)))
    for i0 in range(0, m, step):
        yield i0, min(m, i0 + step)


def knn_indices(D, k: int) -> np.ndarray:
    """M x k nearest-neighbor indices, stable index tie-break, self excluded."""
    src = _Rows(D)
    m = src.size
    if not 1 <= k <= m - 1:
        raise ValueError(f"k must lie in [1, {m - 1}], got {k}")
    out = np.empty((m, k), dtype=np.int64)
    for i0, i1 in _chunks(m, m):
        blk = src.block(i0, i1).copy()
        blk[np.arange(i1 - i0), np.arange(i0, i1)] = np.inf
        out[i0:i1] = np.argsort(blk, axis=1, kind="stable")[:, :k]
    return out


def ranks_of(D, cols: np.ndarray) -> np.ndarray:
    """Rank of ``cols[i, c]`` among all other points as seen from i (1 = nearest)."""
    src = _Rows(D)
    m = src.size
    cols = np.asarray(cols, dtype=np.int64)
    out = np.empty(cols.shape, dtype=np.int64)
    idx = np.arange(m)
    for i0, i1 in _chunks(m, m * max(cols.shape[1], 1)):
        blk = src.block(i0, i1).copy()
        rows = np.arange(i1 - i0)
        blk[rows, np.arange(i0, i1)] = np.inf
        target = blk[rows[:, None], cols[i0:i1]]
        less = (blk[:, None, :] < target[:, :, None]).sum(axis=2)
        ties = ((blk[:, None, :] == target[:, :, None]) & (idx[None, None, :] < cols[i0:i1, :, None])).sum(axis=2)
        out[i0:i1] = less + ties + 1
    return out


# ---------------------------------------------------------------------------
# neighborhood-based metrics


def _directed(nbh: NeighborhoodSystem):
    rows, cols = nbh.directed_pairs()
    return rows, cols


def default_sigma(D_in, nbh_in: NeighborhoodSystem) -> float:
    """Squared mean neighbor distance in the source space."""
    rows, cols = _directed(nbh_in)
    if len(rows) == 0:
        raise ValueError("neighborhood system has no pairs")
    return float(np.mean(_Rows(D_in).pair(rows, cols)) ** 2)


def local_kl(D_in, D_lat, nbh_in: NeighborhoodSystem, sigma: float | None = None) -> float:
    """Sum over i of KL(u_i^in || u_i^lat), with u_i a softmax of -d^2/sigma over N_i."""
    counts = nbh_in.counts()
    if np.any(counts == 0):
        raise ValueError("local_kl: some point has an empty neighborhood")
    if sigma is None:
        sigma = default_sigma(D_in, nbh_in)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rows, cols = _directed(nbh_in)
    a = -_Rows(D_in).pair(rows, cols) ** 2 / sigma
    b = -_Rows(D_lat).pair(rows, cols) ** 2 / sigma
    m = nbh_in.size
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    def log_softmax(z):
        zmax = np.maximum.reduceat(z, starts)
        shifted = z - np.repeat(zmax, counts)
        lse = np.log(np.add.reduceat(np.exp(shifted), starts))
        return shifted - np.repeat(lse, counts)

    la, lb = log_softmax(a), log_softmax(b)
    _ = m
    return float(np.sum(np.exp(la) * (la - lb)))


def _rank_tables(D_in, D_lat, k2: int):
    """k2-NN in both spaces plus the cross ranks needed by ARRC/Trust/Cont."""
    nn_in = knn_indices(D_in, k2)
    nn_lat = knn_indices(D_lat, k2)
    # rank in the own space of the c-th neighbor is c + 1
    r_lat_of_in = ranks_of(D_lat, nn_in)
    r_in_of_lat = ranks_of(D_in, nn_lat)
    return nn_in, nn_lat, r_lat_of_in, r_in_of_lat


def _check_k(k1: int, k2: int, m: int) -> None:
    if not 1 <= k1 <= k2:
        raise ValueError(f"need 1 <= k1 <= k2, got {k1}, {k2}")
    if k2 > m - 1:
        raise ValueError(f"k2={k2} too large for {m} points")


def arrc(D_in, D_lat, k1: int = 4, k2: int = 10, tables=None) -> float:
    m = _Rows(D_in).size
    _check_k(k1, k2, m)
    nn_in, nn_lat, r_lat_of_in, r_in_of_lat = tables or _rank_tables(D_in, D_lat, k2)
    own = np.arange(1, k2 + 1)[None, :]
    # relative change for neighbors taken from each space
    rel_in = np.abs(own - r_lat_of_in) / own
    rel_lat = np.abs(own - r_in_of_lat) / own
    total = 0.0
    for k in range(k1, k2 + 1):
        kp = np.arange(1, k + 1)
        h = m * np.sum(np.abs(m - 2 * kp) / kp)
        total += (rel_in[:, :k].sum() + rel_lat[:, :k].sum()) / h
    return float(total / (k2 - k1 + 1))


def _trust_like(nn_src_k, nn_dst, r_src_of_dst, k: int, m: int) -> float:
    """Penalty over j in the destination k-NN that are outside the source k-NN."""
    r = r_src_of_dst[:, :k]
    outside = r > k
    s = float(np.sum((r - k) * outside))
    return 1.0 - 2.0 / (m * k * (2 * m - 3 * k - 1)) * s


def trustworthiness(D_in, D_lat, k1: int = 4, k2: int = 10, tables=None) -> float:
    """Penalizes latent neighbors that were not source neighbors."""
    m = _Rows(D_in).size
    _check_k(k1, k2, m)
    nn_in, nn_lat, r_lat_of_in, r_in_of_lat = tables or _rank_tables(D_in, D_lat, k2)
    vals = [_trust_like(nn_in, nn_lat, r_in_of_lat, k, m) for k in range(k1, k2 + 1)]
    return float(np.mean(vals))


def continuity(D_in, D_lat, k1: int = 4, k2: int = 10, tables=None) -> float:
    """Trustworthiness with the two spaces swapped."""
    if tables is not None:
        nn_in, nn_lat, r_lat_of_in, r_in_of_lat = tables
        tables = (nn_lat, nn_in, r_in_of_lat, r_lat_of_in)
    return trustworthiness(D_lat, D_in, k1, k2, tables)


def lgd(D_in, D_lat, nbh_in: NeighborhoodSystem | None = None, k1: int = 4, k2: int = 10,
        nn_in: np.ndarray | None = None) -> float:
    """Locally geometric distortion over k-NN sets for k in [k1, k2].

    The per-point normalizer is the size of the training neighborhood; points
    whose training neighborhood is empty (or when none is given) use k2.
    """
    src_in, src_lat = _Rows(D_in), _Rows(D_lat)
    m = src_in.size
    _check_k(k1, k2, m)
    if nn_in is None:
        nn_in = knn_indices(src_in, k2)
    if nbh_in is not None:
        size_i = nbh_in.counts().astype(np.float64)
        size_i[size_i == 0] = k2
    else:
        size_i = np.full(m, float(k2))
    rows = np.repeat(np.arange(m), k2)
    cols = nn_in[:, :k2].ravel()
    sq = ((src_in.pair(rows, cols) - src_lat.pair(rows, cols)) ** 2).reshape(m, k2)
    span = k2 - k1 + 1
    total = 0.0
    for k in range(k1, k2 + 1):
        per_point = sq[:, :k].sum(axis=1) / (span ** 2 * m * size_i)
        total += math.sqrt(per_point.sum())
    return float(total)


def mpe(X3) -> float:
    """Mean distance of points to their least-squares plane."""
    X = np.asarray(X3, dtype=np.float64)
    if X.ndim != 2 or len(X) < 3:
        raise ValueError("mpe needs at least 3 points")
    C = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(C, full_matrices=False)
    normal = vt[-1]
    return float(np.mean(np.abs(C @ normal)))


def bilipschitz(D_in, D_lat, nbh_in: NeighborhoodSystem) -> tuple[float, float]:
    """(K-min, K-max) of the local bi-Lipschitz constant over neighbor pairs.

    A zero distance on either side makes that pair's constant infinite.
    Points with empty neighborhoods are skipped.
    """
    rows, cols = _directed(nbh_in)
    if len(rows) == 0:
        raise ValueError("neighborhood system has no pairs")
    a = _Rows(D_in).pair(rows, cols)
    b = _Rows(D_lat).pair(rows, cols)
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.maximum(a / b, b / a)
    K[(a == 0) | (b == 0)] = np.inf
    per_point = np.full(nbh_in.size, -np.inf)
    np.maximum.at(per_point, rows, K)
    per_point = per_point[nbh_in.counts() > 0]
    return float(per_point.min()), float(per_point.max())


def mre(X, Xhat) -> float:
    X = np.asarray(getattr(X, "points", X), dtype=np.float64)
    Xhat = np.asarray(Xhat, dtype=np.float64)
    if X.shape != Xhat.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Xhat.shape}")
    if len(X) == 0:
        return 0.0
    return float(np.mean(np.linalg.norm(X - Xhat, axis=1)))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class MetricConfig:
    k1: int = 4
    k2: int = 10
    lgd_k1: int = 4
    lgd_k2: int = 10
    sigma_lkl: float | None = None
    kmax_threshold: float = DEFAULT_KMAX_THRESHOLD
    cont_threshold: float = DEFAULT_CONT_THRESHOLD
    # None: K-min/K-max and L-KL use the training neighborhoods; k: the input k-NN
    eval_k: int | None = None

    def __post_init__(self):
        if self.eval_k is not None and self.eval_k < 1:
            raise ValueError("eval_k must be at least 1")
        if self.k1 > self.k2 or self.lgd_k1 > self.lgd_k2:
            raise ValueError("lower rank bound exceeds upper bound")
        if self.sigma_lkl is not None and not self.sigma_lkl > 0:
            raise ValueError("sigma_lkl must be positive")


@dataclass
class MetricReport:
    l_kl: float
    arrc: float
    trust: float
    cont: float
    lgd: float
    k_min: float
    k_max: float
    mpe: float = float("nan")
    mre: float = float("nan")
    layer_pair: tuple = (0, -1)
    success: bool = False
    sigma: float = float("nan")
    seed: int | None = None

    def as_row(self) -> dict:
        row = asdict(self)
        row["layer_pair"] = "-".join(str(v) for v in self.layer_pair)
        return row


REPORT_COLUMNS = ("seed", "layer_pair", "success", "l_kl", "arrc", "trust", "cont", "lgd",
                  "k_min", "k_max", "mpe", "mre", "sigma")
METRIC_FIELDS = ("l_kl", "arrc", "trust", "cont", "lgd", "k_min", "k_max", "mpe", "mre")


def detect_success(report: MetricReport, threshold_kmax: float = DEFAULT_KMAX_THRESHOLD,
                   threshold_cont: float = DEFAULT_CONT_THRESHOLD) -> bool:
    """Automated unfolding check: bounded K-max and high continuity."""
    return bool(report.k_max <= threshold_kmax and report.cont >= threshold_cont)


def evaluate(X_in, X_lat, nbh_in: NeighborhoodSystem, config: MetricConfig = MetricConfig(),
             layer_pair=(0, -1), X_plane=None, X_recon=None, X_target=None, seed=None) -> MetricReport:
    """Full metric report between two layers given their coordinates.

    Distances are normalized by sqrt(dim) of each layer. ``X_plane`` (a 3-D
    layer) feeds MPE; ``X_recon`` with ``X_target`` (defaults to ``X_in``)
    feeds MRE.
    """
    src_in, src_lat = _Rows(X_in), _Rows(X_lat)
    k2 = max(config.k2, config.lgd_k2)
    tables = _rank_tables(src_in, src_lat, k2)
    lgd_nbh = nbh_in
    if config.eval_k is not None:
        nbh_in = NeighborhoodSystem(tuple(knn_indices(src_in, config.eval_k)), "knn", config.eval_k)
    sigma = config.sigma_lkl or default_sigma(src_in, nbh_in)
    nonempty = nbh_in.counts() > 0
    if np.all(nonempty):
        lkl = local_kl(src_in, src_lat, nbh_in, sigma)
    else:
        keep = tuple(n if len(n) else tables[0][i, :1] for i, n in enumerate(nbh_in.neighbors))
        lkl = local_kl(src_in, src_lat, NeighborhoodSystem(keep, nbh_in.mode, nbh_in.param), sigma)
    k_min, k_max = bilipschitz(src_in, src_lat, nbh_in)
    report = MetricReport(
        l_kl=lkl,
        arrc=arrc(src_in, src_lat, config.k1, config.k2, tables),
        trust=trustworthiness(src_in, src_lat, config.k1, config.k2, tables),
        cont=continuity(src_in, src_lat, config.k1, config.k2, tables),
        lgd=lgd(src_in, src_lat, lgd_nbh, config.lgd_k1, config.lgd_k2, tables[0]),
        k_min=k_min,
        k_max=k_max,
        mpe=mpe(X_plane) if X_plane is not None else float("nan"),
        mre=mre(X_in if X_target is None else X_target, X_recon) if X_recon is not None else float("nan"),
        layer_pair=tuple(layer_pair),
        sigma=sigma,
        seed=seed,
    )
    report.success = detect_success(report, config.kmax_threshold, config.cont_threshold)
    return report


@dataclass
class Summary:
    n_runs: int
    n_success: int
    tainted: bool
    means: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"n_runs": self.n_runs, "succ": self.n_success, "tainted": self.tainted, **self.means}


def aggregate(reports) -> Summary:
    """Per-metric means, success count and a taint flag for any failure or infinity."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    means = {}
    for name in METRIC_FIELDS:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        means[name] = float(np.inf) if np.any(np.isinf(vals)) else float(np.mean(vals))
    n_success = sum(bool(r.success) for r in reports)
    tainted = n_success < len(reports) or any(math.isinf(means[k]) for k in METRIC_FIELDS)
    return Summary(len(reports), n_success, tainted, means)


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_reports_csv(reports, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            row = r.as_row()
            w.writerow([format_value(row[c]) for c in REPORT_COLUMNS])


def read_reports_csv(path) -> list[MetricReport]:
    out = []
    names = {f.name for f in fields(MetricReport)}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            kw = {}
            for k, v in row.items():
                if k not in names:
                    continue
                if k == "layer_pair":
                    kw[k] = tuple(int(p) for p in v.split("-"))
                elif k == "success":
                    kw[k] = v in ("1", "True", "true")
                elif k == "seed":
                    kw[k] = int(v) if v not in ("", "None") else None
                else:
                    kw[k] = float(v)
            out.append(MetricReport(**kw))
    return out
