"""Dense LeakyReLU networks with hand-written reverse-mode gradients.

Losses in this package are functions of the per-layer activations, so
``backward`` takes the gradient of the scalar loss with respect to every
layer's activation matrix and pulls it back through the affine and
LeakyReLU maps to the weights, biases and the network input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"MLDLNET1"
DEFAULT_SLOPE = 0.01


@dataclass(frozen=True)
class Architecture:
    layer_dims: tuple[int, ...]
    negative_slope: float = DEFAULT_SLOPE

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise ValueError("an architecture needs at least an input and an output layer")
        if any(d < 1 for d in dims):
            raise ValueError(f"layer dims must be >= 1, got {dims}")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def n_layers(self) -> int:
        """Number of weight layers (L)."""
        return len(self.layer_dims) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def mirror(self) -> "Architecture":
        return Architecture(tuple(reversed(self.layer_dims)), self.negative_slope)


@dataclass
class NetworkParams:
    arch: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = None

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.arch, [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.seed
        )

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for a in self.arrays():
            a[...] = vec[pos:pos + a.size].reshape(a.shape)
            pos += a.size

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class LayeredActivations:
    """Activations ``x_by_layer[0..L]``; ``pre`` keeps the affine outputs for backward."""

    x_by_layer: list[np.ndarray]
    pre: list[np.ndarray] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.x_by_layer)

    def __getitem__(self, l: int) -> np.ndarray:
        return self.x_by_layer[l]

    @property
    def output(self) -> np.ndarray:
        return self.x_by_layer[-1]


INIT_SCHEMES = ("he", "torch")


def init_params(arch: Architecture, seed: int, scheme: str = "he") -> NetworkParams:
    """Uniform fan-in scaled initialization.

    ``he``: weights U(+-sqrt(6 / fan_in)). ``torch``: weights U(+-1 / sqrt(fan_in)),
    the default of common deep-learning libraries. Biases are U(+-1 / sqrt(fan_in))
    in both cases.
    """
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(arch.layer_dims[:-1], arch.layer_dims[1:]):
        bound = np.sqrt(6.0 / fan_in) if scheme == "he" else 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        b_bound = 1.0 / np.sqrt(fan_in)
        biases.append(rng.uniform(-b_bound, b_bound, size=fan_out))
    return NetworkParams(arch, weights, biases, seed)


def leaky_relu(z: np.ndarray, slope: float) -> np.ndarray:
    if 0 <= slope <= 1:
        return np.maximum(z, slope * z)
    return np.where(z >= 0, z, slope * z)


def forward_all(params: NetworkParams, X) -> LayeredActivations:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.arch.input_dim:
        raise ValueError(
            f"input has shape {X.shape}, network expects (M, {params.arch.input_dim})"
        )
    xs, pre = [X], []
    last = params.arch.n_layers - 1
    h = X
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W.T + b
        pre.append(z)
        h = z if l == last else leaky_relu(z, params.arch.negative_slope)
        xs.append(h)
    return LayeredActivations(xs, pre)


def backward(
    params: NetworkParams,
    acts: LayeredActivations,
    act_grads: dict[int, np.ndarray],
) -> tuple[NetworkParams, np.ndarray]:
    """Pull activation gradients back to parameter gradients.

    ``act_grads[l]`` is dLoss/dX^(l) (shape M x n_l); missing layers count as
    zero. Returns the parameter gradients (same layout as ``params``) and
    dLoss/dX^(0).
    """
    L = params.arch.n_layers
    for l in act_grads:
        if not 0 <= l <= L:
            raise ValueError(f"gradient supplied for layer {l}, network has layers 0..{L}")
    m = acts[0].shape[0]
    slope = params.arch.negative_slope
    g = act_grads.get(L)
    g = np.zeros((m, params.arch.output_dim)) if g is None else np.array(g, dtype=np.float64)
    gw: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    for l in range(L, 0, -1):
        if l != L:
            # right-derivative at 0
            neg = acts.pre[l - 1] < 0
            g = g.copy()
            g[neg] *= slope
        gw[l - 1] = g.T @ acts[l - 1]
        gb[l - 1] = g.sum(axis=0)
        g = g @ params.weights[l - 1]
        extra = act_grads.get(l - 1)
        if extra is not None:
            g = g + extra
    return NetworkParams(params.arch, gw, gb, params.seed), g


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def step(self, params: NetworkParams, grads: NetworkParams) -> NetworkParams:
        p_arrays, g_arrays = params.arrays(), grads.arrays()
        if len(p_arrays) != len(g_arrays) or any(
            p.shape != g.shape for p, g in zip(p_arrays, g_arrays)
        ):
            raise ValueError("gradient layout does not match parameters")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in p_arrays]
            self.v = [np.zeros_like(p) for p in p_arrays]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        new = []
        for p, g, m, v in zip(p_arrays, g_arrays, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            new.append(p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
        n = len(params.weights)
        return NetworkParams(params.arch, new[:n], new[n:], params.seed)


def adam_step(params, grads, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, state: Adam | None = None):
    """One Adam update; pass the returned state back in to continue a trajectory."""
    if state is None:
        state = Adam(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)
    return state.step(params, grads), state


def save_params(params: NetworkParams, path) -> None:
    dims = params.arch.layer_dims
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", params.arch.n_layers))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        for w in params.weights:
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        for b in params.biases:
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path, negative_slope: float = DEFAULT_SLOPE) -> NetworkParams:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a network checkpoint (bad magic)")
    (n_layers,) = struct.unpack_from("<I", raw, 8)
    dims = struct.unpack_from(f"<{n_layers + 1}I", raw, 12)
    pos = 12 + 4 * (n_layers + 1)
    arch = Architecture(dims, negative_slope)

    def take(count):
        nonlocal pos
        end = pos + 8 * count
        if end > len(raw):
            raise ValueError(f"{path}: truncated checkpoint")
        out = np.frombuffer(raw[pos:end], dtype="<f8").astype(np.float64)
        pos = end
        return out

    weights = [take(o * i).reshape(o, i) for i, o in zip(dims[:-1], dims[1:])]
    biases = [take(o) for o in dims[1:]]
    if pos != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return NetworkParams(arch, weights, biases)
