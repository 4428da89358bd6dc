"""Synthetic manifolds, MNIST IDX loading, shape excision and point-cloud I/O."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CACHE_MAGIC = b"MLDLPC1"

SWISS_T_RANGE = (1.5 * np.pi, 4.5 * np.pi)
SWISS_Y_RANGE = (0.0, 21.0)
SCURVE_T_RANGE = (-1.5 * np.pi, 1.5 * np.pi)
SCURVE_Y_RANGE = (0.0, 2.0)


@dataclass
class PointCloud:
    points: np.ndarray
    labels: np.ndarray | None = None
    params: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2:
            raise ValueError(f"points must be 2-D, got shape {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points contain non-finite values")
        m = len(self.points)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != m:
                raise ValueError("labels must have one entry per point")
        if self.params is not None:
            self.params = np.asarray(self.params, dtype=np.float64)
            if len(self.params) != m:
                raise ValueError("params must have one row per point")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "PointCloud":
        idx = np.asarray(idx)
        return PointCloud(
            self.points[idx],
            None if self.labels is None else self.labels[idx],
            None if self.params is None else self.params[idx],
            dict(self.meta),
        )


def _check_args(n: int, noise_sigma: float) -> None:
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be non-negative, got {noise_sigma}")


def make_swiss_roll(n: int, noise_sigma: float = 0.0, seed: int = 0) -> PointCloud:
    """sklearn-convention Swiss roll with intrinsic params (t, y)."""
    _check_args(n, noise_sigma)
    rng = np.random.default_rng(seed)
    t = SWISS_T_RANGE[0] + (SWISS_T_RANGE[1] - SWISS_T_RANGE[0]) * rng.random(n)
    y = SWISS_Y_RANGE[1] * rng.random(n)
    pts = np.column_stack([t * np.cos(t), y, t * np.sin(t)])
    pts = pts + noise_sigma * rng.standard_normal((n, 3))
    meta = {
        "generator": "swiss_roll",
        "seed": seed,
        "noise_sigma": noise_sigma,
        "param_range": [list(SWISS_T_RANGE), list(SWISS_Y_RANGE)],
    }
    return PointCloud(pts, params=np.column_stack([t, y]), meta=meta)


def make_s_curve(n: int, noise_sigma: float = 0.0, seed: int = 0) -> PointCloud:
    """sklearn-convention S-curve with intrinsic params (t, y)."""
    _check_args(n, noise_sigma)
    rng = np.random.default_rng(seed)
    t = SCURVE_T_RANGE[0] + (SCURVE_T_RANGE[1] - SCURVE_T_RANGE[0]) * rng.random(n)
    y = SCURVE_Y_RANGE[1] * rng.random(n)
    pts = np.column_stack([np.sin(t), y, np.sign(t) * (np.cos(t) - 1.0)])
    pts = pts + noise_sigma * rng.standard_normal((n, 3))
    meta = {
        "generator": "s_curve",
        "seed": seed,
        "noise_sigma": noise_sigma,
        "param_range": [list(SCURVE_T_RANGE), list(SCURVE_Y_RANGE)],
    }
    return PointCloud(pts, params=np.column_stack([t, y]), meta=meta)


def swiss_roll_surface(t, y) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return np.column_stack([t * np.cos(t), np.asarray(y, dtype=np.float64), t * np.sin(t)])


def swiss_roll_surface_distance(points, grid: int = 4000) -> np.ndarray:
    """Distance from each 3-D point to the noise-free Swiss roll surface.

    The surface is a cylinder over the spiral (t cos t, t sin t), so the
    distance reduces to the planar distance to the spiral plus the overshoot
    of y outside [0, 21]. The spiral is sampled densely and refined by a
    local Newton step.
    """
    P = np.asarray(points, dtype=np.float64)
    if len(P) == 0:
        return np.zeros(0)
    ts = np.linspace(*SWISS_T_RANGE, grid)
    curve = np.column_stack([ts * np.cos(ts), ts * np.sin(ts)])
    xz = P[:, [0, 2]]
    out = np.empty(len(P))
    chunk = 512
    for s in range(0, len(P), chunk):
        q = xz[s:s + chunk]
        d2 = ((q[:, None, :] - curve[None, :, :]) ** 2).sum(-1)
        t = ts[np.argmin(d2, axis=1)]
        for _ in range(3):
            c, si = np.cos(t), np.sin(t)
            px, pz = t * c, t * si
            dx, dz = c - t * si, si + t * c
            ddx, ddz = -2 * si - t * c, 2 * c - t * si
            rx, rz = px - q[:, 0], pz - q[:, 1]
            g = rx * dx + rz * dz
            h = dx * dx + dz * dz + rx * ddx + rz * ddz
            t = np.clip(t - g / np.where(np.abs(h) > 1e-12, h, 1e-12), *SWISS_T_RANGE)
        planar = np.hypot(t * np.cos(t) - q[:, 0], t * np.sin(t) - q[:, 1])
        y = P[s:s + chunk, 1]
        over = np.maximum(0.0, np.maximum(SWISS_Y_RANGE[0] - y, y - SWISS_Y_RANGE[1]))
        out[s:s + chunk] = np.hypot(planar, over)
    return out


# ---------------------------------------------------------------------------
# Spheres


@dataclass(frozen=True)
class SpheresSpec:
    variant: str = "Spheres5500_5500"
    n_small_spheres: int = 10
    points_per_small: int = 500
    points_on_big: int = 500
    ambient_dim: int = 101
    small_radius: float = 5.0
    big_radius: float = 25.0
    center_scale: float = 10.0 / np.sqrt(101)

    @classmethod
    def spheres10000(cls, **kw) -> "SpheresSpec":
        return cls(variant="Spheres10000", points_on_big=5000, **kw)

    @classmethod
    def spheres5500(cls, **kw) -> "SpheresSpec":
        return cls(variant="Spheres5500_5500", points_on_big=500, **kw)

    @property
    def n_points(self) -> int:
        return self.n_small_spheres * self.points_per_small + self.points_on_big


def _uniform_sphere(rng, n, dim, radius):
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v


def make_spheres(spec: SpheresSpec, seed: int = 0) -> PointCloud:
    """Small spheres around Gaussian centers, all enclosed by one big sphere."""
    if spec.ambient_dim < 2 or spec.n_small_spheres < 0:
        raise ValueError("invalid spheres spec")
    if min(spec.points_per_small, spec.points_on_big) < 0:
        raise ValueError("point counts must be non-negative")
    if not spec.big_radius > spec.center_scale + spec.small_radius:
        raise ValueError("big_radius must exceed center_scale + small_radius")
    rng = np.random.default_rng(seed)
    centers = spec.center_scale * rng.standard_normal((spec.n_small_spheres, spec.ambient_dim))
    reach = np.linalg.norm(centers, axis=1).max(initial=0.0) + spec.small_radius
    if reach >= spec.big_radius:
        raise ValueError(
            f"small spheres reach radius {reach:.3f}, not enclosed by big radius {spec.big_radius}"
        )
    blocks, labels = [], []
    for k, c in enumerate(centers):
        blocks.append(c + _uniform_sphere(rng, spec.points_per_small, spec.ambient_dim, spec.small_radius))
        labels.append(np.full(spec.points_per_small, k))
    blocks.append(_uniform_sphere(rng, spec.points_on_big, spec.ambient_dim, spec.big_radius))
    labels.append(np.full(spec.points_on_big, spec.n_small_spheres))
    meta = {"generator": spec.variant, "seed": seed, "noise_sigma": 0.0,
            "centers": centers.tolist()}
    return PointCloud(np.vstack(blocks), np.concatenate(labels), meta=meta)


# ---------------------------------------------------------------------------
# MNIST IDX

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzipped) of unsigned bytes."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
        raise ValueError(f"{path}: bad IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ValueError(f"{path}: truncated IDX header")
    shape = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(shape))
    if len(raw) - header < count:
        raise ValueError(f"{path}: truncated IDX payload ({len(raw) - header} of {count} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(shape)


def write_idx(path, array) -> None:
    a = np.asarray(array, dtype=np.uint8)
    magic = IDX_IMAGES_MAGIC if a.ndim == 3 else IDX_LABELS_MAGIC
    if a.ndim not in (1, 3):
        raise ValueError("IDX writer supports label vectors and image stacks only")
    data = struct.pack(">I", magic) + struct.pack(f">{a.ndim}I", *a.shape) + a.tobytes()
    path = Path(path)
    path.write_bytes(gzip.compress(data, mtime=0) if path.suffix == ".gz" else data)


def load_mnist(images_path, labels_path, n_train: int, n_test: int, seed: int = 0):
    """Disjoint seeded train/test subsets, pixels scaled to [0, 1]."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise ValueError(f"{images_path}: expected an image stack")
    if labels.ndim != 1 or len(labels) != len(images):
        raise ValueError("label file does not match image file")
    total = len(images)
    if n_train < 0 or n_test < 0:
        raise ValueError("subset sizes must be non-negative")
    if n_train + n_test > total:
        raise ValueError(f"requested {n_train + n_test} rows, only {total} available")
    order = np.random.default_rng(seed).permutation(total)
    flat = images.reshape(total, -1).astype(np.float64) / 255.0

    def cloud(idx, part):
        return PointCloud(flat[idx], labels[idx].astype(np.int64),
                          meta={"generator": "mnist", "seed": seed, "noise_sigma": 0.0,
                                "part": part, "indices": idx.tolist()})

    return cloud(order[:n_train], "train"), cloud(order[n_train:n_train + n_test], "test")


# ---------------------------------------------------------------------------
# shape excision in normalized intrinsic coordinates

SHAPES = ("diamond", "square", "pentagram", "five_ring")


def _star_polygon(center, radius, points=5, inner_ratio=0.382):
    ang = np.pi / 2 + np.arange(2 * points) * np.pi / points
    rad = np.where(np.arange(2 * points) % 2 == 0, radius, radius * inner_ratio)
    return np.column_stack([center[0] + rad * np.cos(ang), center[1] + rad * np.sin(ang)])


def points_in_polygon(pts, poly) -> np.ndarray:
    """Even-odd ray casting; boundary points may fall on either side."""
    pts = np.asarray(pts, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


# Olympic-style layout; offsets and radii in units of the shape size.
_RING_CENTERS = np.array([[-0.34, 0.1], [0.0, 0.1], [0.34, 0.1], [-0.17, -0.1], [0.17, -0.1]])
_RING_OUTER = 0.16
_RING_INNER = 0.11


def shape_mask(uv, shape: str, center=(0.5, 0.5), size: float = 0.3) -> np.ndarray:
    """True where normalized intrinsic coordinates fall inside the shape.

    ``size`` is the side of the square, the diagonal of the diamond, the
    outer diameter of the pentagram and the width of the five-ring group.
    """
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; choose from {SHAPES}")
    uv = np.asarray(uv, dtype=np.float64)
    if size <= 0 or len(uv) == 0:
        return np.zeros(len(uv), dtype=bool)
    du = uv[:, 0] - center[0]
    dv = uv[:, 1] - center[1]
    half = size / 2.0
    if shape == "square":
        return (np.abs(du) < half) & (np.abs(dv) < half)
    if shape == "diamond":
        return np.abs(du) + np.abs(dv) < half
    if shape == "pentagram":
        return points_in_polygon(uv, _star_polygon(center, half))
    inside = np.zeros(len(uv), dtype=bool)
    for cu, cv in _RING_CENTERS * size:
        r = np.hypot(du - cu, dv - cv)
        inside |= (r < _RING_OUTER * size) & (r > _RING_INNER * size)
    return inside


def shape_outline(shape: str, center=(0.5, 0.5), size: float = 0.3, per_edge: int = 50) -> np.ndarray:
    """Closed boundary polygon of a shape in normalized intrinsic coordinates.

    The five-ring is a union of annuli and has no single outline.
    """
    c = np.asarray(center, dtype=np.float64)
    half = size / 2.0
    if shape == "square":
        corners = c + half * np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]])
    elif shape == "diamond":
        corners = c + half * np.array([[0, -1], [1, 0], [0, 1], [-1, 0]])
    elif shape == "pentagram":
        corners = _star_polygon(c, half)
    elif shape in SHAPES:
        raise ValueError(f"{shape} has no single outline polygon")
    else:
        raise ValueError(f"unknown shape {shape!r}; choose from {SHAPES}")
    f = np.arange(per_edge)[:, None] / per_edge
    nxt = np.roll(corners, -1, axis=0)
    return np.concatenate([a + f * (b - a) for a, b in zip(corners, nxt)])


def swiss_roll_from_normalized(uv) -> np.ndarray:
    """Swiss roll surface points at normalized intrinsic coordinates in [0, 1]^2."""
    uv = np.asarray(uv, dtype=np.float64)
    t = SWISS_T_RANGE[0] + uv[:, 0] * (SWISS_T_RANGE[1] - SWISS_T_RANGE[0])
    y = SWISS_Y_RANGE[0] + uv[:, 1] * (SWISS_Y_RANGE[1] - SWISS_Y_RANGE[0])
    return swiss_roll_surface(t, y)


def normalized_params(cloud: PointCloud) -> np.ndarray:
    """Intrinsic coordinates rescaled to the unit square."""
    if cloud.params is None:
        raise ValueError("cloud has no intrinsic parameters")
    rng = cloud.meta.get("param_range")
    if rng is not None:
        lo = np.array([r[0] for r in rng])
        hi = np.array([r[1] for r in rng])
    else:
        lo = cloud.params.min(axis=0)
        hi = cloud.params.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (cloud.params - lo) / span


def excise_shape(cloud: PointCloud, shape: str, center=(0.5, 0.5), size: float = 0.3) -> PointCloud:
    """Drop the points whose intrinsic coordinates fall inside ``shape``."""
    if cloud.params is None:
        raise ValueError("excise_shape needs a cloud with intrinsic params")
    keep = ~shape_mask(normalized_params(cloud), shape, center, size)
    out = cloud.subset(np.flatnonzero(keep))
    out.meta["excised"] = {"shape": shape, "center": list(map(float, center)), "size": float(size)}
    return out


# ---------------------------------------------------------------------------
# serialization


def save_csv(cloud: PointCloud, path) -> None:
    """Columns ``x0..x{N-1},label``; the label cell is empty for unlabeled clouds."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"x{k}" for k in range(cloud.dim)] + ["label"])
        for i, row in enumerate(cloud.points):
            label = "" if cloud.labels is None else str(int(cloud.labels[i]))
            w.writerow([repr(float(v)) for v in row] + [label])


def load_csv(path) -> PointCloud:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    n = len(header) - 1
    pts = np.array([[float(v) for v in r[:n]] for r in body]).reshape(len(body), n)
    cells = [r[n] for r in body]
    labels = np.array([int(c) for c in cells]) if body and all(cells) else None
    return PointCloud(pts, labels)


def save_cache(cloud: PointCloud, path) -> None:
    m, n = cloud.points.shape
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<II", m, n))
        f.write(np.ascontiguousarray(cloud.points, dtype="<f8").tobytes())
        f.write(struct.pack("<B", cloud.labels is not None))
        if cloud.labels is not None:
            f.write(np.ascontiguousarray(cloud.labels, dtype="<i8").tobytes())
        f.write(struct.pack("<B", cloud.params is not None))
        if cloud.params is not None:
            f.write(struct.pack("<I", cloud.params.shape[1]))
            f.write(np.ascontiguousarray(cloud.params, dtype="<f8").tobytes())


def load_cache(path) -> PointCloud:
    raw = Path(path).read_bytes()
    if raw[:7] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a point-cloud cache (bad magic)")
    pos = 7

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise ValueError(f"{path}: truncated cache")
        out = struct.unpack_from(fmt, raw, pos)
        pos += size
        return out

    def array(dtype, count):
        nonlocal pos
        end = pos + 8 * count
        if end > len(raw):
            raise ValueError(f"{path}: truncated cache")
        out = np.frombuffer(raw[pos:end], dtype=dtype).copy()
        pos = end
        return out

    m, n = take("<II")
    pts = array("<f8", m * n).reshape(m, n).astype(np.float64)
    labels = params = None
    (has_labels,) = take("<B")
    if has_labels:
        labels = array("<i8", m).astype(np.int64)
    (has_params,) = take("<B")
    if has_params:
        (k,) = take("<I")
        params = array("<f8", m * k).reshape(m, k).astype(np.float64)
    return PointCloud(pts, labels, params)
