"""Transformer model definition, seeded toy-weight generation, binary persistence.

Weight files are little-endian binary: magic ``PHSW``, u32 version, the
config block, then every tensor in a fixed order (see ``_tensor_order``) as
``u32 rank, u32 dims..., float64 payload``.  Round trips are bit-exact and
the SHA-256 of the serialized bytes doubles as the model fingerprint.

Toy weights come from NumPy's default PCG64 generator seeded explicitly, so
the same seed always reproduces the same model bit for bit.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParam, DimensionMismatch, FormatError

MAGIC = b"PHSW"
VERSION = 1

_CONFIG_FIELDS = (
    "patch_size",
    "embed_dim",
    "num_heads",
    "head_dim",
    "num_layers",
    "num_registers",
    "ffn_hidden",
    "image_h",
    "image_w",
    "channels",
)


@dataclass(frozen=True)
class ModelConfig:
    patch_size: int
    embed_dim: int
    num_heads: int
    head_dim: int
    num_layers: int
    num_registers: int
    ffn_hidden: int
    image_h: int
    image_w: int
    channels: int
    eps: float = 1e-6

    def __post_init__(self):
        if self.embed_dim != self.num_heads * self.head_dim:
            raise BadParam("embed_dim must equal num_heads * head_dim")
        if self.num_layers < 1 or self.num_registers < 0 or self.patch_size < 1:
            raise BadParam("need num_layers >= 1, num_registers >= 0, patch_size >= 1")
        if self.image_h % self.patch_size or self.image_w % self.patch_size:
            raise BadParam("image size must be divisible by patch_size")
        if self.eps <= 0:
            raise BadParam("eps must be positive")

    @property
    def n_patches(self) -> int:
        return (self.image_h // self.patch_size) * (self.image_w // self.patch_size)

    @property
    def n_tokens(self) -> int:
        return 1 + self.num_registers + self.n_patches

    @property
    def patch_len(self) -> int:
        return self.patch_size * self.patch_size * self.channels


# small default used throughout the test-scale tooling
DEFAULT_TOY = ModelConfig(
    patch_size=8,
    embed_dim=16,
    num_heads=4,
    head_dim=4,
    num_layers=2,
    num_registers=1,
    ffn_hidden=64,
    image_h=32,
    image_w=32,
    channels=1,
)


@dataclass
class LayerWeights:
    w_q: np.ndarray
    b_q: np.ndarray
    w_k: np.ndarray
    b_k: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray
    w_o: np.ndarray
    b_o: np.ndarray
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray


@dataclass
class ModelWeights:
    config: ModelConfig
    patch_projection: np.ndarray  # (P*P*C, d)
    patch_bias: np.ndarray  # (d,)
    cls_token: np.ndarray  # (d,)
    register_tokens: np.ndarray  # (R, d)
    positional: np.ndarray  # (1+R+N, d)
    layers: list[LayerWeights] = field(default_factory=list)
    final_gamma: np.ndarray = None
    final_beta: np.ndarray = None


_LAYER_TENSORS = (
    "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o",
    "ln1_gamma", "ln1_beta", "ln2_gamma", "ln2_beta",
    "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
)


def _expected_shapes(cfg: ModelConfig):
    d, ffn = cfg.embed_dim, cfg.ffn_hidden
    layer = {
        "w_q": (d, d), "b_q": (d,), "w_k": (d, d), "b_k": (d,),
        "w_v": (d, d), "b_v": (d,), "w_o": (d, d), "b_o": (d,),
        "ln1_gamma": (d,), "ln1_beta": (d,), "ln2_gamma": (d,), "ln2_beta": (d,),
        "ffn_w1": (d, ffn), "ffn_b1": (ffn,), "ffn_w2": (ffn, d), "ffn_b2": (d,),
    }
    top = {
        "patch_projection": (cfg.patch_len, d),
        "patch_bias": (d,),
        "cls_token": (d,),
        "register_tokens": (cfg.num_registers, d),
        "positional": (cfg.n_tokens, d),
        "final_gamma": (d,),
        "final_beta": (d,),
    }
    return top, layer


def gen_toy_model(seed: int, config: ModelConfig = DEFAULT_TOY, scale: float = 0.02) -> ModelWeights:
    """Reproducible random weights (PCG64 stream, entries ~ N(0, scale^2)).

    Draw order: patch_projection, patch_bias, cls_token, register_tokens,
    positional, then per layer w_q,b_q,w_k,b_k,w_v,b_v,w_o,b_o,ffn_w1,ffn_b1,
    ffn_w2,ffn_b2.  Layer-norm gammas are ones and betas zeros (not drawn).
    """
    rng = np.random.default_rng(seed)
    d, ffn = config.embed_dim, config.ffn_hidden

    def draw(*shape):
        return rng.normal(0.0, scale, size=shape)

    layers = []
    w = ModelWeights(
        config=config,
        patch_projection=draw(config.patch_len, d),
        patch_bias=draw(d),
        cls_token=draw(d),
        register_tokens=draw(config.num_registers, d),
        positional=draw(config.n_tokens, d),
        layers=layers,
        final_gamma=np.ones(d),
        final_beta=np.zeros(d),
    )
    for _ in range(config.num_layers):
        layers.append(
            LayerWeights(
                w_q=draw(d, d), b_q=draw(d),
                w_k=draw(d, d), b_k=draw(d),
                w_v=draw(d, d), b_v=draw(d),
                w_o=draw(d, d), b_o=draw(d),
                ln1_gamma=np.ones(d), ln1_beta=np.zeros(d),
                ln2_gamma=np.ones(d), ln2_beta=np.zeros(d),
                ffn_w1=draw(d, ffn), ffn_b1=draw(ffn),
                ffn_w2=draw(ffn, d), ffn_b2=draw(d),
            )
        )
    return w


def write_tensor(buf, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    buf.write(struct.pack("<I", arr.ndim))
    for dim in arr.shape:
        buf.write(struct.pack("<I", dim))
    buf.write(arr.astype("<f8").tobytes())


def read_tensor(buf) -> np.ndarray:
    head = buf.read(4)
    if len(head) != 4:
        raise FormatError("truncated file while reading tensor rank")
    (rank,) = struct.unpack("<I", head)
    if rank > 8:
        raise FormatError(f"implausible tensor rank {rank}")
    dims = []
    for _ in range(rank):
        raw = buf.read(4)
        if len(raw) != 4:
            raise FormatError("truncated file while reading tensor dims")
        dims.append(struct.unpack("<I", raw)[0])
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    payload = buf.read(8 * count)
    if len(payload) != 8 * count:
        raise FormatError("truncated file while reading tensor payload")
    return np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)


def _iter_tensors(weights: ModelWeights):
    yield "patch_projection", weights.patch_projection
    yield "patch_bias", weights.patch_bias
    yield "cls_token", weights.cls_token
    yield "register_tokens", weights.register_tokens
    yield "positional", weights.positional
    for li, layer in enumerate(weights.layers):
        for name in _LAYER_TENSORS:
            yield f"layer{li}.{name}", getattr(layer, name)
    yield "final_gamma", weights.final_gamma
    yield "final_beta", weights.final_beta


def serialize_weights(weights: ModelWeights) -> bytes:
    cfg = weights.config
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for name in _CONFIG_FIELDS:
        buf.write(struct.pack("<I", getattr(cfg, name)))
    buf.write(struct.pack("<d", cfg.eps))
    for _, arr in _iter_tensors(weights):
        write_tensor(buf, arr)
    return buf.getvalue()


def save_weights(path, weights: ModelWeights) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_weights(weights))


def deserialize_weights(data: bytes) -> ModelWeights:
    buf = io.BytesIO(data)
    magic = buf.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    raw = buf.read(4)
    if len(raw) != 4:
        raise FormatError("truncated file while reading version")
    (version,) = struct.unpack("<I", raw)
    if version != VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    ints = []
    for name in _CONFIG_FIELDS:
        raw = buf.read(4)
        if len(raw) != 4:
            raise FormatError("truncated file while reading config")
        ints.append(struct.unpack("<I", raw)[0])
    raw = buf.read(8)
    if len(raw) != 8:
        raise FormatError("truncated file while reading config eps")
    (eps,) = struct.unpack("<d", raw)
    try:
        cfg = ModelConfig(*ints, eps=eps)
    except BadParam as exc:
        raise FormatError(f"inconsistent embedded config: {exc}") from exc

    top_shapes, layer_shapes = _expected_shapes(cfg)

    def take(name, expected):
        arr = read_tensor(buf)
        if arr.shape != expected:
            raise DimensionMismatch(
                f"tensor {name} has shape {arr.shape}, expected {expected}"
            )
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"tensor {name} contains non-finite entries")
        return arr

    weights = ModelWeights(
        config=cfg,
        patch_projection=take("patch_projection", top_shapes["patch_projection"]),
        patch_bias=take("patch_bias", top_shapes["patch_bias"]),
        cls_token=take("cls_token", top_shapes["cls_token"]),
        register_tokens=take("register_tokens", top_shapes["register_tokens"]),
        positional=take("positional", top_shapes["positional"]),
    )
    for li in range(cfg.num_layers):
        kwargs = {
            name: take(f"layer{li}.{name}", layer_shapes[name])
            for name in _LAYER_TENSORS
        }
        weights.layers.append(LayerWeights(**kwargs))
    weights.final_gamma = take("final_gamma", top_shapes["final_gamma"])
    weights.final_beta = take("final_beta", top_shapes["final_beta"])
    if buf.read(1):
        raise FormatError("trailing bytes after final tensor")
    return weights


def load_weights(path) -> ModelWeights:
    with open(path, "rb") as fh:
        return deserialize_weights(fh.read())


def fingerprint(weights: ModelWeights) -> str:
    return hashlib.sha256(serialize_weights(weights)).hexdigest()
