"""LIS, push-away and reconstruction losses, weight schemes and the mu schedule.

Activations are addressed by a single layer index. For an encoder with L
weight layers the indices run 0..L. For an autoencoder the decoder layers are
appended, so the stack runs 0..2L and the decoder mirror of encoder layer l
sits at ``2L - l`` (``mirror_index``).

Every ``*_grad`` function returns ``(value, grads)`` where ``grads`` maps a layer
index to dLoss/dX^(l).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import CliqueSet, DistanceMatrix, NeighborhoodSystem, clique_union

Grads = dict[int, np.ndarray]


@dataclass(frozen=True)
class WeightScheme:
    """Cross-layer weights.

    ``alpha`` maps encoder layer pairs ``(l, l')`` to weights.
    ``corresponding`` maps an encoder layer l to the weight between l and its
    decoder mirror (only used by autoencoders).
    """

    alpha: dict[tuple[int, int], float]
    name: str = "custom"
    corresponding: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        weights = list(self.alpha.values()) + list(self.corresponding.values())
        if any(w < 0 for w in weights):
            raise ValueError("scheme weights must be non-negative")
        if self.alpha and all(w == 0 for w in weights):
            pass  # an all-zero scheme is allowed; it simply switches LIS off
        norm = {}
        for (a, b), w in self.alpha.items():
            if a == b:
                raise ValueError(f"layer pair ({a}, {b}) links a layer with itself")
            key = (min(a, b), max(a, b))
            norm[key] = norm.get(key, 0.0) + float(w)
        object.__setattr__(self, "alpha", norm)

    def max_layer(self) -> int:
        return max((b for _, b in self.alpha), default=0)

    def scaled(self, factor: float) -> "WeightScheme":
        return WeightScheme(
            {k: v * factor for k, v in self.alpha.items()},
            self.name,
            {k: v * factor for k, v in self.corresponding.items()},
        )

    def pairs(self, n_layers: int, autoencoder: bool = False, mirror_decoder: bool = True):
        """Effective ``((a, b), weight)`` list over the full activation stack."""
        out = [((a, b), w) for (a, b), w in sorted(self.alpha.items()) if w != 0]
        for a, b in (p for p, _ in out):
            if b > n_layers:
                raise ValueError(f"scheme references layer {b}, encoder has layers 0..{n_layers}")
        if not autoencoder:
            if self.corresponding:
                raise ValueError("corresponding-layer weights need an autoencoder")
            return out
        extra = []
        if mirror_decoder:
            for (a, b), w in out:
                extra.append(((mirror_index(b, n_layers), mirror_index(a, n_layers)), w))
        for l, w in sorted(self.corresponding.items()):
            if not 0 <= l < n_layers:
                raise ValueError(f"corresponding layer {l} outside 0..{n_layers - 1}")
            if w != 0:
                extra.append(((l, mirror_index(l, n_layers)), w))
        merged: dict[tuple[int, int], float] = {}
        for (a, b), w in out + extra:
            key = (min(a, b), max(a, b))
            merged[key] = merged.get(key, 0.0) + w
        return sorted(merged.items())


def mirror_index(l: int, n_layers: int) -> int:
    """Stack index of the decoder layer that mirrors encoder layer ``l``."""
    return 2 * n_layers - l


def _frac(*nums, den=30):
    return [float(Fraction(n, den)) for n in nums]


_ENCODER_SCHEMES = {
    "M1": [((0, 5), 1.0)],
    "M2": list(zip([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)], _frac(2, 4, 6, 8, 10))),
    "M3": list(zip([(1, 5), (2, 5), (3, 5), (4, 5), (0, 5)], _frac(2, 4, 6, 8, 10))),
    "M4": list(zip([(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)], _frac(2, 4, 6, 8, 10))),
    "M5": list(zip([(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)], _frac(1, 1, 1, 1, 1, den=5))),
    "M6": list(zip([(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)], _frac(10, 8, 6, 4, 2))),
}

_CORRESPONDING_SCHEMES = {
    "M7": [],
    "M8": _frac(2, 4, 6, 8, 10),
    "M9": _frac(1, 1, 1, 1, 1, den=5),
    "M10": _frac(10, 8, 6, 4, 2),
}

SCHEME_NAMES = tuple(_ENCODER_SCHEMES) + tuple(_CORRESPONDING_SCHEMES)


def make_scheme(name: str, n_layers: int = 5) -> WeightScheme:
    """Named cross-layer schemes M1..M10, defined for a 5-layer encoder."""
    name = name.upper()
    if name not in SCHEME_NAMES:
        raise ValueError(f"unknown scheme {name!r}; choose from {', '.join(SCHEME_NAMES)}")
    if n_layers != 5:
        raise ValueError(f"scheme {name} is defined for a 5-layer encoder, got L={n_layers}")
    if name in _ENCODER_SCHEMES:
        return WeightScheme(dict(_ENCODER_SCHEMES[name]), name)
    corr = dict(enumerate(_CORRESPONDING_SCHEMES[name]))
    return WeightScheme({(0, 5): 1.0}, name, corr)


def input_latent_scheme(n_layers: int, weight: float = 1.0) -> WeightScheme:
    """alpha^(0,L) only, for any depth."""
    return WeightScheme({(0, n_layers): weight}, "input-latent")


@dataclass(frozen=True)
class MuSchedule:
    mu0: float
    start_epoch: int = 500
    end_epoch: int = 1000

    def __post_init__(self):
        if self.mu0 < 0:
            raise ValueError("mu0 must be >= 0")
        if self.start_epoch > self.end_epoch:
            raise ValueError("start_epoch must not exceed end_epoch")


def mu_at(schedule: MuSchedule, epoch: int) -> float:
    if epoch < schedule.start_epoch:
        return schedule.mu0
    if epoch >= schedule.end_epoch:
        return 0.0
    span = schedule.end_epoch - schedule.start_epoch
    return schedule.mu0 * (schedule.end_epoch - epoch) / span


@dataclass(frozen=True)
class ReconWeights:
    """gamma_l for encoder layers l = 0..L-1 paired with their decoder mirrors."""

    gamma: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if any(g < 0 for g in self.gamma):
            raise ValueError("reconstruction weights must be non-negative")

    @classmethod
    def uniform(cls, value: float, n_layers: int) -> "ReconWeights":
        return cls((value,) * n_layers)


# ---------------------------------------------------------------------------
# pair distances and their gradients


def _pair_dists(X: np.ndarray, ci: np.ndarray, cj: np.ndarray):
    diff = X[ci] - X[cj]
    raw = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return diff, raw, raw / np.sqrt(X.shape[1])


def _scatter_pair_grad(X, ci, cj, coef, diff, raw):
    """Gradient of sum_c coef_c * d_norm(x_i, x_j) with respect to X."""
    safe = np.where(raw > 0, raw, 1.0)
    w = np.where(raw > 0, coef / (safe * np.sqrt(X.shape[1])), 0.0)
    contrib = diff * w[:, None]
    g = np.zeros_like(X)
    np.add.at(g, ci, contrib)
    np.add.at(g, cj, -contrib)
    return g


def _add(grads: Grads, l: int, g: np.ndarray) -> None:
    if l in grads:
        grads[l] = grads[l] + g
    else:
        grads[l] = g


def lis_pair_loss(D_l, D_lp, cliques: CliqueSet) -> float:
    """Sum over cliques of |d_l(i, j) - d_l'(i, j)|."""
    a = D_l.d if isinstance(D_l, DistanceMatrix) else np.asarray(D_l)
    b = D_lp.d if isinstance(D_lp, DistanceMatrix) else np.asarray(D_lp)
    if a.shape != b.shape:
        raise ValueError(f"distance matrices differ in shape: {a.shape} vs {b.shape}")
    return float(np.abs(a[cliques.i, cliques.j] - b[cliques.i, cliques.j]).sum())


def lis_pair_grad(X_a, X_b, cliques: CliqueSet, weight: float = 1.0):
    """weight * sum |d_a - d_b| on normalized distances, with gradients for both layers."""
    ci, cj = cliques.i, cliques.j
    da_diff, da_raw, da = _pair_dists(X_a, ci, cj)
    db_diff, db_raw, db = _pair_dists(X_b, ci, cj)
    gap = da - db
    value = weight * float(np.abs(gap).sum())
    # right-derivative of |u| at 0
    sign = np.where(gap >= 0, 1.0, -1.0) * weight
    ga = _scatter_pair_grad(X_a, ci, cj, sign, da_diff, da_raw)
    gb = _scatter_pair_grad(X_b, ci, cj, -sign, db_diff, db_raw)
    return value, ga, gb


def _cliques_for(nbh, a: int, b: int) -> CliqueSet:
    """Clique union for super-clique {a, b}; ``nbh`` maps layers to systems."""
    if isinstance(nbh, NeighborhoodSystem):
        return nbh.cliques()
    na = nbh.get(a, nbh.get(0))
    nb = nbh.get(b, nbh.get(0))
    return clique_union(na, nb)


def lis_loss_grad(acts, scheme_pairs, nbh) -> tuple[float, Grads]:
    """Weighted LIS energy over the given ``((a, b), alpha)`` super-cliques.

    ``acts`` is a sequence of activation matrices indexed by stack position;
    ``nbh`` is either one NeighborhoodSystem (shared by all layers) or a dict
    from layer index to system.
    """
    total, grads = 0.0, {}
    for (a, b), w in scheme_pairs:
        if a >= len(acts) or b >= len(acts):
            raise ValueError(f"super-clique ({a}, {b}) references a missing layer")
        if w == 0:
            continue
        value, ga, gb = lis_pair_grad(acts[a], acts[b], _cliques_for(nbh, a, b), w)
        total += value
        _add(grads, a, ga)
        _add(grads, b, gb)
    return total, grads


def lis_loss(acts, scheme: WeightScheme, nbh, autoencoder: bool = False) -> float:
    xs = getattr(acts, "x_by_layer", acts)
    n_layers = (len(xs) - 1) // 2 if autoencoder else len(xs) - 1
    return lis_loss_grad(xs, scheme.pairs(n_layers, autoencoder), nbh)[0]


def push_candidates(neighbor_cliques: CliqueSet) -> np.ndarray:
    """Boolean M x M mask of pairs eligible for push-away (non-neighbors, i != j)."""
    mask = ~neighbor_cliques.mask()
    np.fill_diagonal(mask, False)
    return mask


def push_away_grad(
    X_target, neighbor_cliques: CliqueSet, B: float, candidates: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """-sum over gated non-neighbor pairs of the normalized target distance.

    The gate 1[d < B] is re-evaluated here and treated as a constant.
    ``candidates`` may carry a precomputed ``push_candidates`` mask.
    """
    if not B > 0:
        raise ValueError("push-away bound B must be positive")
    X = np.asarray(X_target, dtype=np.float64)
    n = X.shape[1]
    if candidates is None:
        candidates = push_candidates(neighbor_cliques)
    sq = np.einsum("ij,ij->i", X, X)
    raw = X @ X.T
    raw *= -2.0
    raw += sq[:, None]
    raw += sq[None, :]
    np.maximum(raw, 0.0, out=raw)
    np.sqrt(raw, out=raw)
    root_n = np.sqrt(n)
    gate = raw < B * root_n
    gate &= candidates
    gate &= raw > 0
    # symmetric matrix: each unordered pair appears twice
    value = -0.5 * float(np.sum(raw, where=gate)) / root_n
    w = np.zeros_like(raw)
    np.divide(-1.0 / root_n, raw, out=w, where=gate)
    grad = w.sum(axis=1)[:, None] * X - w @ X
    return value, grad


def push_away_loss(acts, nbh_l, target_layer: int, B: float) -> float:
    xs = getattr(acts, "x_by_layer", acts)
    cl = nbh_l.cliques() if isinstance(nbh_l, NeighborhoodSystem) else nbh_l
    return push_away_grad(xs[target_layer], cl, B)[0]


def reconstruction_grad(enc_xs, dec_xs, gammas: ReconWeights) -> tuple[float, Grads, Grads]:
    """sum_l gamma_l sum_i ||x_i^(l) - xhat_i^(l)||^2.

    ``dec_xs[l]`` is the reconstruction of encoder layer l. Returns the value
    and gradient dicts keyed by encoder layer for both sides.
    """
    total, g_enc, g_dec = 0.0, {}, {}
    for l, gamma in enumerate(gammas.gamma):
        if l >= len(enc_xs) or l >= len(dec_xs):
            raise ValueError(f"reconstruction weight given for missing layer {l}")
        x, xh = enc_xs[l], dec_xs[l]
        if x.shape != xh.shape:
            raise ValueError(f"layer {l}: encoder {x.shape} vs decoder {xh.shape}")
        if gamma == 0:
            continue
        r = x - xh
        total += gamma * float(np.einsum("ij,ij->", r, r))
        g_enc[l] = 2.0 * gamma * r
        g_dec[l] = -2.0 * gamma * r
    return total, g_enc, g_dec


def reconstruction_loss(enc_acts, dec_acts, gammas: ReconWeights) -> float:
    """``dec_acts`` is either the mirror list (index l = reconstruction of l) or
    raw decoder activations from ``forward_all`` (index 0 = latent)."""
    enc = getattr(enc_acts, "x_by_layer", enc_acts)
    dec = getattr(dec_acts, "x_by_layer", dec_acts)
    if hasattr(dec_acts, "x_by_layer"):
        dec = list(reversed(dec))
    return reconstruction_grad(enc, dec, gammas)[0]


def total_enc_loss(acts, scheme: WeightScheme, nbh, mu: float, B: float) -> float:
    xs = getattr(acts, "x_by_layer", acts)
    cl = nbh.cliques() if isinstance(nbh, NeighborhoodSystem) else nbh[0].cliques()
    push = push_away_grad(xs[-1], cl, B)[0] if mu else 0.0
    return lis_loss(xs, scheme, nbh) + mu * push


def ae_stack(enc_acts, dec_acts) -> list[np.ndarray]:
    """Concatenate encoder activations 0..L with decoder activations 1..L."""
    enc = getattr(enc_acts, "x_by_layer", enc_acts)
    dec = getattr(dec_acts, "x_by_layer", dec_acts)
    return list(enc) + list(dec[1:])


def total_ae_loss(enc_acts, dec_acts, scheme, gammas, nbh, mu, B) -> float:
    stack = ae_stack(enc_acts, dec_acts)
    L = len(getattr(enc_acts, "x_by_layer", enc_acts)) - 1
    lis = lis_loss_grad(stack, scheme.pairs(L, autoencoder=True), nbh)[0]
    rec = reconstruction_loss(enc_acts, dec_acts, gammas)
    cl = nbh.cliques() if isinstance(nbh, NeighborhoodSystem) else nbh[0].cliques()
    push = push_away_grad(stack[L], cl, B)[0] if mu else 0.0
    return lis + rec + mu * push
