"""ML-Enc / ML-AE training, inference on unseen points and decoder-driven generation."""

from __future__ import annotations

import configparser
import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import gaussian_kde

from .datasets import PointCloud
from .geometry import NeighborhoodSystem, neighborhood_for, pairwise_distances
from .losses import (
    MuSchedule,
    ReconWeights,
    WeightScheme,
    input_latent_scheme,
    lis_loss_grad,
    make_scheme,
    mu_at,
    push_away_grad,
    push_candidates,
    reconstruction_grad,
)
from .net import Adam, Architecture, LayeredActivations, NetworkParams, backward, forward_all, init_params, load_params, save_params

PREPROCESS_MODES = ("standardize", "center", "none")
PUSH_MODES = ("latent", "all")
SAMPLERS = ("uniform_bbox", "kde_latent")
HISTORY_COLUMNS = ("epoch", "mu", "lr", "lis", "push", "rec", "total", "lis_mean")


class TrainingDiverged(RuntimeError):
    """A loss term or parameter became non-finite during training."""

    def __init__(self, epoch: int, terms: dict):
        self.epoch = epoch
        self.terms = dict(terms)
        detail = ", ".join(f"{k}={v!r}" for k, v in terms.items())
        super().__init__(f"training diverged at epoch {epoch}: {detail}")


@dataclass(frozen=True)
class TrainConfig:
    arch: Architecture
    scheme: WeightScheme
    nbh_mode: str = "rball"
    nbh_param: float = 0.23
    B: float = 3.0
    mu: MuSchedule = MuSchedule(0.2, 500, 1000)
    lr: float = 1e-3
    epochs: int = 1500
    seed: int = 0
    gammas: ReconWeights | None = None
    decoder_arch: Architecture | None = None
    preprocess: str = "standardize"
    data_scale: float = 1.0
    init: str = "he"
    final_lr: float | None = None
    push_mode: str = "latent"
    nbh_update_every: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.nbh_mode not in ("knn", "rball"):
            raise ValueError(f"nbh_mode must be knn or rball, got {self.nbh_mode!r}")
        if self.preprocess not in PREPROCESS_MODES:
            raise ValueError(f"preprocess must be one of {PREPROCESS_MODES}")
        if self.push_mode not in PUSH_MODES:
            raise ValueError(f"push_mode must be one of {PUSH_MODES}")
        if not self.B > 0:
            raise ValueError("B must be positive")
        if not self.data_scale > 0:
            raise ValueError("data_scale must be positive")
        if self.nbh_update_every < 0:
            raise ValueError("nbh_update_every must be non-negative")
        if self.final_lr is not None and not self.final_lr > 0:
            raise ValueError("final_lr must be positive")
        self.scheme.pairs(self.arch.n_layers, autoencoder=bool(self.scheme.corresponding))
        if self.epochs < self.mu.end_epoch and self.mu.mu0 > 0:
            warnings.warn(f"epochs={self.epochs} ends before the push-away schedule ({self.mu.end_epoch})")

    @property
    def decoder(self) -> Architecture:
        return self.decoder_arch or self.arch.mirror()

    def recon_weights(self) -> ReconWeights:
        return self.gammas or ReconWeights.uniform(1.0, self.arch.n_layers)

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)

    def lr_at(self, epoch: int) -> float:
        """Constant lr; with ``final_lr`` set, linear decay over the pure-LIS phase."""
        start = self.mu.end_epoch
        if self.final_lr is None or epoch < start or self.epochs - 1 <= start:
            return self.lr
        frac = (epoch - start) / (self.epochs - 1 - start)
        return self.lr + (self.final_lr - self.lr) * frac


# ---------------------------------------------------------------------------
# presets


def _swiss_like(**kw) -> TrainConfig:
    base = dict(
        arch=Architecture((3, 100, 100, 100, 3, 2)),
        scheme=make_scheme("M1"),
        nbh_mode="rball",
        nbh_param=0.23,
        B=3.0,
        mu=MuSchedule(0.2, 500, 1000),
        gammas=ReconWeights.uniform(1.0, 5),
        # r=0.23 at this scale equals r=0.3 on unit-variance data
        data_scale=0.77,
    )
    base.update(kw)
    return TrainConfig(**base)


def preset(name: str, **overrides) -> TrainConfig:
    """Named hyperparameter sets per dataset."""
    name = name.lower()
    if name in ("swiss-roll", "s-curve"):
        return _swiss_like(**overrides)
    if name == "mnist":
        arch = Architecture((784, 1000, 500, 250, 100, 2))
        base = dict(arch=arch, scheme=input_latent_scheme(5), nbh_mode="knn", nbh_param=5, B=2.0,
                    mu=MuSchedule(1.0, 500, 1000), gammas=ReconWeights.uniform(200.0, 5), preprocess="none")
    elif name in ("spheres", "spheres5500"):
        arch = Architecture((101, 50, 25, 2))
        base = dict(arch=arch, scheme=input_latent_scheme(3), nbh_mode="knn", nbh_param=15, B=3.0,
                    mu=MuSchedule(0.0, 500, 1000), gammas=ReconWeights.uniform(0.0, 3), preprocess="none")
    elif name == "spheres10000":
        arch = Architecture((101, 90, 80, 70, 2))
        base = dict(arch=arch, scheme=input_latent_scheme(4), nbh_mode="knn", nbh_param=15, B=3.0,
                    mu=MuSchedule(0.0, 500, 1000), gammas=ReconWeights.uniform(0.0, 4), preprocess="none")
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    base.update(overrides)
    return TrainConfig(**base)


PRESETS = ("swiss-roll", "s-curve", "mnist", "spheres", "spheres10000")


# ---------------------------------------------------------------------------
# preprocessing


@dataclass(frozen=True)
class Preprocess:
    """Affine map x -> (x - shift) * factor applied before the network."""

    shift: np.ndarray
    factor: float

    @classmethod
    def fit(cls, X: np.ndarray, mode: str, data_scale: float = 1.0) -> "Preprocess":
        X = np.asarray(X, dtype=np.float64)
        if mode == "none":
            return cls(np.zeros(X.shape[1]), float(data_scale))
        shift = X.mean(axis=0)
        factor = float(data_scale)
        if mode == "standardize":
            # one isotropic factor so distances scale uniformly
            spread = math.sqrt(float(np.mean(X.var(axis=0))))
            if spread > 0:
                factor /= spread
        return cls(shift, factor)

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.shift) * self.factor

    def invert(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) / self.factor + self.shift


# ---------------------------------------------------------------------------
# model


@dataclass
class TrainedModel:
    config: TrainConfig
    encoder: NetworkParams
    decoder: NetworkParams | None
    prep: Preprocess
    history: dict = field(default_factory=lambda: {c: [] for c in HISTORY_COLUMNS})
    activations: LayeredActivations | None = None
    nbh: NeighborhoodSystem | None = None

    @property
    def is_autoencoder(self) -> bool:
        return self.decoder is not None

    @property
    def embedding(self) -> np.ndarray:
        return self.activations.output


def _as_array(data) -> np.ndarray:
    return np.asarray(getattr(data, "points", data), dtype=np.float64)


def _check_input(config: TrainConfig, X: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[1] != config.arch.input_dim:
        raise ValueError(f"data has shape {X.shape}, architecture expects (M, {config.arch.input_dim})")
    if len(X) < 2:
        raise ValueError("training needs at least 2 points")
    if not np.all(np.isfinite(X)):
        raise ValueError("training data contains non-finite values")


def _setup(config: TrainConfig, data):
    X_raw = _as_array(data)
    _check_input(config, X_raw)
    prep = Preprocess.fit(X_raw, config.preprocess, config.data_scale)
    X = prep.apply(X_raw)
    D = pairwise_distances(X, normalize=True)
    nbh = neighborhood_for(D, config.nbh_mode, _nbh_param(config))
    return X, prep, nbh


def _nbh_param(config: TrainConfig):
    return int(config.nbh_param) if config.nbh_mode == "knn" else float(config.nbh_param)


def _layer_systems(config: TrainConfig, nbh: NeighborhoodSystem, stack, epoch: int, current):
    """Neighborhoods used by the LIS term at ``epoch``.

    By default the input system is shared by every layer. With
    ``nbh_update_every`` > 0 each deeper layer also gets its own system,
    rebuilt from its current activations every that many epochs, and a
    super-clique uses the union of both layers' systems.
    """
    k = config.nbh_update_every
    if k == 0:
        return nbh
    if epoch % k and isinstance(current, dict):
        return current
    out = {0: nbh}
    for l in range(1, len(stack)):
        D = pairwise_distances(stack[l], normalize=True)
        out[l] = neighborhood_for(D, config.nbh_mode, _nbh_param(config))
    return out


def _push_targets(config: TrainConfig, pairs, latent: int) -> list[int]:
    if config.push_mode == "latent":
        return [latent]
    return sorted({b for (_, b), _ in pairs if b != 0})


def _record(history, epoch, mu, lr, lis, push, rec, n_cliques):
    lis, push, rec = float(lis), float(push), float(rec)
    total = lis + mu * push + rec
    terms = {"lis": lis, "push": push, "rec": rec, "total": total}
    if not all(math.isfinite(v) for v in terms.values()):
        raise TrainingDiverged(epoch, terms)
    for k, v in (("epoch", epoch), ("mu", mu), ("lr", lr), ("lis", lis), ("push", push), ("rec", rec),
                 ("total", total), ("lis_mean", lis / max(n_cliques, 1))):
        history[k].append(v)


def train_ml_enc(config: TrainConfig, data, callback=None) -> TrainedModel:
    """Full-batch Adam on LIS + mu * push-away.

    ``callback(epoch, params, acts)`` is called before each update when given.
    """
    X, prep, nbh = _setup(config, data)
    L = config.arch.n_layers
    pairs = config.scheme.pairs(L)
    cliques = nbh.cliques()
    candidates = push_candidates(cliques) if config.mu.mu0 > 0 else None
    targets = _push_targets(config, pairs, L)
    params = init_params(config.arch, config.seed, config.init)
    opt = Adam(lr=config.lr, beta1=config.betas[0], beta2=config.betas[1], eps=config.eps)
    model = TrainedModel(config, params, None, prep, nbh=nbh)
    systems = nbh
    for epoch in range(config.epochs):
        acts = forward_all(params, X)
        systems = _layer_systems(config, nbh, acts.x_by_layer, epoch, systems)
        lis, grads = lis_loss_grad(acts.x_by_layer, pairs, systems)
        mu = mu_at(config.mu, epoch)
        push = 0.0
        if mu > 0:
            for t in targets:
                value, g = push_away_grad(acts[t], cliques, config.B, candidates)
                push += value
                grads[t] = grads[t] + mu * g if t in grads else mu * g
        opt.lr = config.lr_at(epoch)
        _record(model.history, epoch, mu, opt.lr, lis, push, 0.0, len(cliques))
        if callback is not None:
            callback(epoch, params, acts)
        pgrads, _ = backward(params, acts, grads)
        params = opt.step(params, pgrads)
        if not params.is_finite():
            raise TrainingDiverged(epoch, {"params": float("nan")})
    model.encoder = params
    model.activations = forward_all(params, X)
    return model


def _ae_forward(enc: NetworkParams, dec: NetworkParams, X):
    ea = forward_all(enc, X)
    da = forward_all(dec, ea.output)
    return ea, da


def train_ml_ae(config: TrainConfig, data, callback=None) -> TrainedModel:
    """Encoder plus mirrored decoder: LIS over the whole stack, reconstruction, push-away on the latent."""
    X, prep, nbh = _setup(config, data)
    L = config.arch.n_layers
    dec_arch = config.decoder
    if dec_arch.layer_dims[0] != config.arch.output_dim or dec_arch.layer_dims[-1] != config.arch.input_dim:
        raise ValueError("decoder must map the latent dimension back to the input dimension")
    mirrored = dec_arch.layer_dims == tuple(reversed(config.arch.layer_dims))
    pairs = config.scheme.pairs(L, autoencoder=True) if mirrored else config.scheme.pairs(L)
    gammas = config.recon_weights()
    if len(gammas.gamma) != L:
        raise ValueError(f"need {L} reconstruction weights, got {len(gammas.gamma)}")
    if not mirrored and any(g != 0 for g in gammas.gamma[1:]):
        raise ValueError("intermediate reconstruction weights need a mirrored decoder")
    cliques = nbh.cliques()
    candidates = push_candidates(cliques) if config.mu.mu0 > 0 else None
    targets = _push_targets(config, pairs, L)
    enc = init_params(config.arch, config.seed, config.init)
    dec = init_params(dec_arch, config.seed + 7919, config.init)
    opt = Adam(lr=config.lr, beta1=config.betas[0], beta2=config.betas[1], eps=config.eps)
    model = TrainedModel(config, enc, dec, prep, nbh=nbh)
    n_enc = len(enc.arrays())
    Ld = dec_arch.n_layers
    systems = nbh
    for epoch in range(config.epochs):
        ea, da = _ae_forward(enc, dec, X)
        stack = list(ea.x_by_layer) + list(da.x_by_layer[1:])
        systems = _layer_systems(config, nbh, stack, epoch, systems)
        lis, g_stack = lis_loss_grad(stack, pairs, systems)
        mu = mu_at(config.mu, epoch)
        push = 0.0
        if mu > 0:
            for t in targets:
                value, g = push_away_grad(stack[t], cliques, config.B, candidates)
                push += value
                g_stack[t] = g_stack[t] + mu * g if t in g_stack else mu * g
        if mirrored:
            dec_mirror = list(reversed(da.x_by_layer))
            rec, g_re, g_rd = reconstruction_grad(ea.x_by_layer, dec_mirror, gammas)
            rd = {Ld - l: g for l, g in g_rd.items()}
        else:
            rec, g_re, g_rd = reconstruction_grad([X], [da.output], ReconWeights(gammas.gamma[:1]))
            rd = {Ld: g for g in g_rd.values()}
        opt.lr = config.lr_at(epoch)
        _record(model.history, epoch, mu, opt.lr, lis, push, rec, len(cliques))
        if callback is not None:
            callback(epoch, enc, ea)
        g_enc = {l: g for l, g in g_stack.items() if l <= L}
        for l, g in g_re.items():
            g_enc[l] = g_enc[l] + g if l in g_enc else g
        g_dec = {l - L: g for l, g in g_stack.items() if l > L}
        for l, g in rd.items():
            g_dec[l] = g_dec[l] + g if l in g_dec else g
        dgrads, g_latent = backward(dec, da, g_dec)
        g_enc[L] = g_enc[L] + g_latent if L in g_enc else g_latent
        egrads, _ = backward(enc, ea, g_enc)
        joint = NetworkParams(config.arch, enc.weights + dec.weights, enc.biases + dec.biases)
        jgrads = NetworkParams(config.arch, egrads.weights + dgrads.weights, egrads.biases + dgrads.biases)
        new = opt.step(joint, jgrads)
        ne = n_enc // 2
        enc = NetworkParams(config.arch, new.weights[:ne], new.biases[:ne], enc.seed)
        dec = NetworkParams(dec_arch, new.weights[ne:], new.biases[ne:], dec.seed)
        if not (enc.is_finite() and dec.is_finite()):
            raise TrainingDiverged(epoch, {"params": float("nan")})
    model.encoder, model.decoder = enc, dec
    model.activations = forward_all(enc, X)
    return model


def train(config: TrainConfig, data, kind: str = "enc", callback=None) -> TrainedModel:
    if kind == "enc":
        return train_ml_enc(config, data, callback)
    if kind == "ae":
        return train_ml_ae(config, data, callback)
    raise ValueError(f"model kind must be enc or ae, got {kind!r}")


# ---------------------------------------------------------------------------
# inference


def model_input(model: TrainedModel, X) -> np.ndarray:
    """Points mapped into the space the network was trained on."""
    X = _as_array(X)
    if X.ndim != 2 or X.shape[1] != model.config.arch.input_dim:
        raise ValueError(f"points have shape {X.shape}, model expects (M, {model.config.arch.input_dim})")
    return model.prep.apply(X)


def encode(model: TrainedModel, X) -> np.ndarray:
    return forward_all(model.encoder, model_input(model, X)).output


def decode(model: TrainedModel, Z) -> np.ndarray:
    """Latent codes to points in the original data space."""
    if model.decoder is None:
        raise ValueError("model has no decoder")
    Z = np.asarray(Z, dtype=np.float64)
    if len(Z) == 0:
        return np.empty((0, model.config.arch.input_dim))
    return model.prep.invert(forward_all(model.decoder, Z).output)


def reconstruct(model: TrainedModel, X) -> np.ndarray:
    """Reconstruction in model space (same space as ``model_input``)."""
    if model.decoder is None:
        raise ValueError("model has no decoder")
    return forward_all(model.decoder, encode(model, X)).output


def mirror_decoded(model: TrainedModel) -> list[np.ndarray]:
    """Decoder activations 1..L on the training data (stack positions L+1..2L)."""
    if model.decoder is None:
        raise ValueError("model has no decoder")
    return list(forward_all(model.decoder, model.embedding).x_by_layer[1:])


def _support_radius(Z: np.ndarray) -> float:
    tree = cKDTree(Z)
    d, _ = tree.query(Z, k=min(len(Z), 6))
    return 2.0 * float(np.median(d[:, -1]))


def sample_latent(model: TrainedModel, n: int, seed: int = 0, sampler: str = "uniform_bbox") -> np.ndarray:
    """Latent samples following the training embedding's support."""
    if sampler not in SAMPLERS:
        raise ValueError(f"sampler must be one of {SAMPLERS}")
    Z = model.embedding
    rng = np.random.default_rng(seed)
    dim = Z.shape[1]
    if n == 0:
        return np.empty((0, dim))
    if sampler == "kde_latent":
        kde = gaussian_kde(Z.T)
        return kde.resample(n, seed=rng).T
    # uniform over the bounding box, kept only near the embedded point cloud
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    tree, radius = cKDTree(Z), _support_radius(Z)
    out, total = [], 0
    for _ in range(1000):
        cand = rng.uniform(lo, hi, size=(max(2 * n, 64), dim))
        d, _ = tree.query(cand)
        keep = cand[d <= radius]
        out.append(keep)
        total += len(keep)
        if total >= n:
            break
    else:
        raise RuntimeError("rejection sampler could not collect enough latent samples")
    return np.concatenate(out)[:n]


def generate(model: TrainedModel, n: int, seed: int = 0, sampler: str = "uniform_bbox") -> PointCloud:
    """Decode latent samples; returns the points in data space with the latent codes in ``params``."""
    if model.decoder is None:
        raise ValueError("model has no decoder")
    if n < 0:
        raise ValueError("n must be non-negative")
    Z = sample_latent(model, n, seed, sampler)
    return PointCloud(decode(model, Z), None, Z, {"sampler": sampler, "seed": seed})


# ---------------------------------------------------------------------------
# persistence


def config_to_dict(config: TrainConfig) -> dict:
    return {
        "arch": ",".join(map(str, config.arch.layer_dims)),
        "negative_slope": config.arch.negative_slope,
        "decoder_arch": ",".join(map(str, config.decoder_arch.layer_dims)) if config.decoder_arch else "",
        "scheme": config.scheme.name,
        "alpha": json.dumps({f"{a}-{b}": w for (a, b), w in sorted(config.scheme.alpha.items())}),
        "corresponding": json.dumps({str(k): w for k, w in sorted(config.scheme.corresponding.items())}),
        "nbh_mode": config.nbh_mode,
        "nbh_param": config.nbh_param,
        "B": config.B,
        "mu0": config.mu.mu0,
        "mu_start": config.mu.start_epoch,
        "mu_end": config.mu.end_epoch,
        "lr": config.lr,
        "final_lr": "" if config.final_lr is None else config.final_lr,
        "epochs": config.epochs,
        "seed": config.seed,
        "gammas": "" if config.gammas is None else ",".join(map(repr, config.gammas.gamma)),
        "preprocess": config.preprocess,
        "data_scale": config.data_scale,
        "init": config.init,
        "push_mode": config.push_mode,
        "nbh_update_every": config.nbh_update_every,
        "betas": f"{config.betas[0]!r},{config.betas[1]!r}",
        "eps": config.eps,
    }


def _dims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError as exc:
        raise ValueError(f"bad layer list {text!r}") from exc


def config_from_dict(d: dict, base: TrainConfig | None = None) -> TrainConfig:
    """Build a config from string-valued keys; missing keys come from ``base``."""
    d = {k: v for k, v in d.items() if v is not None}
    kw = {}
    slope = float(d.get("negative_slope", base.arch.negative_slope if base else 0.01))
    if "arch" in d:
        kw["arch"] = Architecture(_dims(str(d["arch"])), slope)
    elif base is not None and "negative_slope" in d:
        kw["arch"] = Architecture(base.arch.layer_dims, slope)
    if d.get("decoder_arch"):
        kw["decoder_arch"] = Architecture(_dims(str(d["decoder_arch"])), slope)
    arch = kw.get("arch", base.arch if base else None)
    if arch is None:
        raise ValueError("config is missing 'arch'")
    if "alpha" in d and d["alpha"]:
        alpha = {tuple(int(p) for p in k.split("-")): float(v) for k, v in json.loads(d["alpha"]).items()}
        corr = {int(k): float(v) for k, v in json.loads(d.get("corresponding") or "{}").items()}
        kw["scheme"] = WeightScheme(alpha, str(d.get("scheme", "custom")), corr)
    elif "scheme" in d:
        name = str(d["scheme"])
        kw["scheme"] = input_latent_scheme(arch.n_layers) if name == "input-latent" else make_scheme(name, arch.n_layers)
    elif base is None or base.arch.n_layers != arch.n_layers:
        kw["scheme"] = input_latent_scheme(arch.n_layers)
    for key, cast in (("nbh_mode", str), ("nbh_param", float), ("B", float), ("lr", float), ("epochs", int),
                      ("seed", int), ("preprocess", str), ("data_scale", float), ("init", str),
                      ("push_mode", str), ("eps", float), ("nbh_update_every", int)):
        if key in d:
            kw[key] = cast(d[key])
    if "final_lr" in d:
        kw["final_lr"] = float(d["final_lr"]) if str(d["final_lr"]) not in ("", "none", "None") else None
    if any(k in d for k in ("mu0", "mu_start", "mu_end")):
        m = base.mu if base else MuSchedule(0.0, 500, 1000)
        kw["mu"] = MuSchedule(float(d.get("mu0", m.mu0)), int(d.get("mu_start", m.start_epoch)),
                              int(d.get("mu_end", m.end_epoch)))
    if str(d.get("gammas", "")).strip():
        vals = [float(v) for v in str(d["gammas"]).split(",") if v.strip()]
        kw["gammas"] = ReconWeights(tuple(vals if len(vals) != 1 else vals * arch.n_layers))
    elif base is not None and base.gammas is not None and len(base.gammas.gamma) != arch.n_layers:
        kw["gammas"] = ReconWeights.uniform(base.gammas.gamma[0], arch.n_layers)
    if "betas" in d:
        b1, b2 = (float(v) for v in str(d["betas"]).split(","))
        kw["betas"] = (b1, b2)
    if base is None:
        kw.setdefault("scheme", input_latent_scheme(arch.n_layers))
        return TrainConfig(**kw)
    return replace(base, **kw)


def read_config_file(path) -> dict:
    """``key = value`` lines, optionally grouped in ``[sections]``; returns {section: {key: value}}."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[train]\n" + text
    parser.read_string(text, source=str(path))
    out = {s: dict(parser[s]) for s in parser.sections()}
    return out


def write_history_csv(history: dict, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in zip(*(history[c] for c in HISTORY_COLUMNS)):
            w.writerow([str(row[0])] + [repr(float(v)) for v in row[1:]])


def read_history_csv(path) -> dict:
    hist = {c: [] for c in HISTORY_COLUMNS}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            for c in HISTORY_COLUMNS:
                hist[c].append(int(row[c]) if c == "epoch" else float(row[c]))
    return hist


def save_model(model: TrainedModel, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    save_params(model.encoder, out / "encoder.bin")
    if model.decoder is not None:
        save_params(model.decoder, out / "decoder.bin")
    meta = configparser.ConfigParser(interpolation=None)
    meta.optionxform = str
    meta["config"] = {k: str(v) for k, v in config_to_dict(model.config).items()}
    meta["preprocess"] = {"shift": ",".join(repr(float(v)) for v in model.prep.shift),
                          "factor": repr(model.prep.factor)}
    meta["model"] = {"kind": "ae" if model.decoder is not None else "enc"}
    with open(out / "model.cfg", "w") as f:
        meta.write(f)
    write_history_csv(model.history, out / "loss.csv")
    return out


def load_model(directory, X_train=None) -> TrainedModel:
    """Restore a saved model; pass the training data to rebuild activations and neighborhoods."""
    src = Path(directory)
    meta = configparser.ConfigParser(interpolation=None)
    meta.optionxform = str
    if not meta.read(src / "model.cfg"):
        raise FileNotFoundError(src / "model.cfg")
    config = config_from_dict(dict(meta["config"]))
    slope = config.arch.negative_slope
    enc = load_params(src / "encoder.bin", slope)
    dec = load_params(src / "decoder.bin", slope) if (src / "decoder.bin").exists() else None
    shift = np.array([float(v) for v in meta["preprocess"]["shift"].split(",")])
    prep = Preprocess(shift, float(meta["preprocess"]["factor"]))
    hist_path = src / "loss.csv"
    history = read_history_csv(hist_path) if hist_path.exists() else {c: [] for c in HISTORY_COLUMNS}
    model = TrainedModel(config, enc, dec, prep, history)
    if X_train is not None:
        X = model_input(model, X_train)
        model.activations = forward_all(enc, X)
        model.nbh = neighborhood_for(pairwise_distances(X, True), config.nbh_mode, _nbh_param(config))
    return model
