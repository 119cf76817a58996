"""Configurable Vision Transformer with stable layer addressing.

Pre-LN encoder: patchify -> linear embed -> prepend CLS -> add positional
embeddings -> L x (x += MHSA(LN(x)); x += MLP(LN(x))) -> LN -> head on the
CLS token. The patch embedding is an unfold + Linear (equal to the usual
conv formulation), so every weight the compression stages touch is a plain
Linear addressed by name:

    embeddings.patch_embeddings.projection
    encoder.layer.{i}.attention.{query,key,value,output}
    encoder.layer.{i}.intermediate.dense
    encoder.layer.{i}.output.dense
    classifier

Mixed-precision execution contract: the residual stream, layernorm and
softmax are always float32; a Linear whose weights are F16 stores its output
activation in F16 (as does the GELU following an F16 intermediate.dense and
the attention context when value projections are F16), widened exactly back
to float32 at the next op. All matmul accumulation is float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DimensionError, PrecisionStateError
from .tensor import (
    Dtype,
    Tensor,
    f16_round,
    gelu_array,
    layernorm_array,
    matmul_f32_array,
    softmax_array,
)

INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int
    hidden_size: int
    mlp_size: int
    num_heads: int
    image_size: int = 32
    patch_size: int = 4
    num_channels: int = 3
    num_classes: int = 10

    def __post_init__(self):
        for name in ("num_layers", "hidden_size", "mlp_size", "num_heads",
                     "image_size", "patch_size", "num_channels", "num_classes"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.hidden_size % self.num_heads:
            raise ConfigError("hidden_size must be divisible by num_heads")
        if self.image_size % self.patch_size:
            raise ConfigError("image_size must be divisible by patch_size")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def num_tokens(self) -> int:
        return self.num_patches + 1

    @property
    def patch_features(self) -> int:
        return self.num_channels * self.patch_size * self.patch_size

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads


PRESETS = {
    "vit-huge": dict(num_layers=32, hidden_size=1280, mlp_size=5120, num_heads=16,
                     image_size=224, patch_size=14, num_classes=1000),
    "vit-toy": dict(num_layers=4, hidden_size=64, mlp_size=256, num_heads=4,
                    image_size=32, patch_size=4, num_classes=10),
}


def preset_config(name: str) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (have: {sorted(PRESETS)})")
    return ModelConfig(**PRESETS[name])


class Linear:
    """y = x @ weight.T + bias, with weight [out, in] and bias [out].

    Immutable: precision/pruning changes replace the whole object. The
    transposed float32 weight is cached for the matmul kernels.
    """

    def __init__(self, weight: Tensor, bias: Tensor):
        if weight.data.ndim != 2 or bias.data.ndim != 1:
            raise DimensionError("Linear expects 2-D weight and 1-D bias")
        if bias.shape[0] != weight.shape[0]:
            raise DimensionError("bias length must equal weight rows")
        if weight.dtype is not bias.dtype:
            raise PrecisionStateError("weight and bias dtypes must match")
        self.weight = weight
        self.bias = bias
        self._wt32 = None
        self._b32 = None

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def storage(self) -> Dtype:
        return self.weight.dtype

    def apply(self, x: np.ndarray) -> np.ndarray:
        """float32 [N, in] -> float32 [N, out]; accumulation in float32."""
        if self._wt32 is None:
            self._wt32 = np.ascontiguousarray(self.weight.to_f32().T)
            self._b32 = self.bias.to_f32()
        return matmul_f32_array(x, self._wt32) + self._b32

    def param_count(self) -> int:
        return self.weight.size + self.bias.size


@dataclass
class LayerNormParams:
    weight: Tensor  # gamma, always F32
    bias: Tensor    # beta, always F32


@dataclass
class EncoderLayer:
    layernorm_before: LayerNormParams
    query: Linear
    key: Linear
    value: Linear
    attn_output: Linear
    layernorm_after: LayerNormParams
    intermediate: Linear
    output: Linear
    # surviving MLP channels, indices into the layer's original channel space
    mlp_channel_ids: np.ndarray = field(default=None)

    @property
    def mlp_size(self) -> int:
        return self.intermediate.out_features


@dataclass
class VitModel:
    config: ModelConfig
    patch_embed: Linear
    cls_token: Tensor
    pos_embed: Tensor
    layers: list
    final_layernorm: LayerNormParams
    head: Linear
    quant_dynamic: bool = False

    def copy(self) -> "VitModel":
        """Independent model object; tensor buffers are shared (immutable)."""
        layers = [replace(layer) for layer in self.layers]
        return VitModel(self.config, self.patch_embed, self.cls_token,
                        self.pos_embed, layers, self.final_layernorm, self.head,
                        self.quant_dynamic)

    def named_linears(self):
        yield "embeddings.patch_embeddings.projection", self.patch_embed
        for i, layer in enumerate(self.layers):
            base = f"encoder.layer.{i}"
            yield f"{base}.attention.query", layer.query
            yield f"{base}.attention.key", layer.key
            yield f"{base}.attention.value", layer.value
            yield f"{base}.attention.output", layer.attn_output
            yield f"{base}.intermediate.dense", layer.intermediate
            yield f"{base}.output.dense", layer.output
        yield "classifier", self.head

    def get_linear(self, name: str):
        for n, lin in self.named_linears():
            if n == name:
                return lin
        raise KeyError(name)

    def set_linear(self, name: str, new) -> None:
        if name == "embeddings.patch_embeddings.projection":
            self.patch_embed = new
            return
        if name == "classifier":
            self.head = new
            return
        parts = name.split(".")
        if parts[:2] == ["encoder", "layer"]:
            layer = self.layers[int(parts[2])]
            attr = {"attention.query": "query", "attention.key": "key",
                    "attention.value": "value", "attention.output": "attn_output",
                    "intermediate.dense": "intermediate",
                    "output.dense": "output"}.get(".".join(parts[3:]))
            if attr is not None:
                setattr(layer, attr, new)
                return
        raise KeyError(name)


class ObserverSet:
    """Read-only taps on named layers during forward.

    Output observers fire on the stored activation of any named Linear —
    post-GELU for intermediate.dense (the value actually fed forward),
    directly for everything else. Input observers fire on the float32 input
    rows of any named Linear; the quantizer uses them to record calibration
    inputs. Arrays are [tokens, features] and never writable.
    """

    def __init__(self):
        self._outputs = {}
        self._inputs = {}

    def on_output(self, name, fn):
        self._outputs[name] = fn

    def on_input(self, name, fn):
        self._inputs[name] = fn

    def emit_output(self, name, arr):
        fn = self._outputs.get(name)
        if fn is not None:
            fn(_readonly(arr))

    def emit_input(self, name, arr):
        fn = self._inputs.get(name)
        if fn is not None:
            fn(_readonly(arr))


def _readonly(arr):
    view = arr.view()
    view.flags.writeable = False
    return view


def init_model(config: ModelConfig, seed: int) -> VitModel:
    """Deterministic random initialization.

    Generator: numpy PCG64 seeded with ``seed``; weight matrices, the CLS
    token, and positional embeddings are drawn as normal(0, 0.02) in float64
    and cast to float32; biases start at zero and layernorm affines at
    identity. Draw order is fixed: patch_embed.weight, cls_token, pos_embed,
    then per layer query/key/value/output/intermediate/output weights, then
    the classifier weight. Bit-reproducible for a given (config, seed).
    """
    rng = np.random.Generator(np.random.PCG64(seed))

    def normal(*shape):
        return Tensor(rng.normal(0.0, INIT_STD, size=shape).astype(np.float32))

    def zeros(n):
        return Tensor(np.zeros(n, dtype=np.float32))

    def ones(n):
        return Tensor(np.ones(n, dtype=np.float32))

    def linear(out_f, in_f):
        return Linear(normal(out_f, in_f), zeros(out_f))

    def ln(h):
        return LayerNormParams(ones(h), zeros(h))

    h = config.hidden_size
    patch_embed = linear(h, config.patch_features)
    cls_token = normal(h)
    pos_embed = normal(config.num_tokens, h)
    layers = []
    for _ in range(config.num_layers):
        layers.append(EncoderLayer(
            layernorm_before=ln(h),
            query=linear(h, h), key=linear(h, h), value=linear(h, h),
            attn_output=linear(h, h),
            layernorm_after=ln(h),
            intermediate=linear(config.mlp_size, h),
            output=linear(h, config.mlp_size),
            mlp_channel_ids=_frozen_ids(np.arange(config.mlp_size, dtype=np.int64)),
        ))
    return VitModel(config, patch_embed, cls_token, pos_embed, layers,
                    ln(h), linear(config.num_classes, h))


def _frozen_ids(ids: np.ndarray) -> np.ndarray:
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    ids.flags.writeable = False
    return ids


def count_params(model: VitModel) -> int:
    """Exact element count of all weights, biases, CLS and positional embeddings.

    Quantized layers count their INT8 weight and bias elements; the
    dequantization scales are bookkeeping, not architecture parameters.
    """
    total = model.cls_token.size + model.pos_embed.size
    total += model.patch_embed.param_count() + model.head.param_count()
    total += model.final_layernorm.weight.size + model.final_layernorm.bias.size
    for layer in model.layers:
        for lin in (layer.query, layer.key, layer.value, layer.attn_output,
                    layer.intermediate, layer.output):
            total += lin.param_count()
        for lnp in (layer.layernorm_before, layer.layernorm_after):
            total += lnp.weight.size + lnp.bias.size
    return total


def config_param_count(config: ModelConfig) -> int:
    """Parameter count straight from the architecture (no tensors built)."""
    h, m = config.hidden_size, config.mlp_size
    embed = config.patch_features * h + h + h + config.num_tokens * h
    per_layer = 2 * h + 4 * (h * h + h) + 2 * h + (h * m + m) + (m * h + h)
    head = h * config.num_classes + config.num_classes + 2 * h
    return embed + config.num_layers * per_layer + head


def count_flops(model: VitModel, batch: int) -> int:
    """Analytic multiply-add count (2*M*K*N per matmul) for one forward pass.

    Covers patch embedding, attention (qkv, scores, context, output
    projection), the MLP at each layer's current width, and the head.
    """
    cfg = model.config
    t, h = cfg.num_tokens, cfg.hidden_size
    total = 2 * batch * cfg.num_patches * cfg.patch_features * h
    for layer in model.layers:
        total += 3 * 2 * batch * t * h * h      # q, k, v
        total += 2 * 2 * batch * t * t * h      # scores + context
        total += 2 * batch * t * h * h          # output projection
        m = layer.mlp_size
        total += 2 * batch * t * h * m + 2 * batch * t * m * h
    total += 2 * batch * h * cfg.num_classes
    return total


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """[B,C,H,W] -> [B, num_patches, C*patch*patch].

    Patches are ordered row-major over the grid; within a patch, features
    are ordered (channel, row, col) — the conv-as-linear layout.
    """
    b, c, height, width = images.shape
    gh, gw = height // patch, width // patch
    x = images.reshape(b, c, gh, patch, gw, patch)
    x = x.transpose(0, 2, 4, 1, 3, 5)
    return x.reshape(b, gh * gw, c * patch * patch)


def _apply_linear(lin, name: str, x2d: np.ndarray, observers,
                  round_output: bool = True, emit_output: bool = True) -> np.ndarray:
    """Run a (possibly quantized/F16) linear on float32 rows.

    Returns the *stored* activation: float32, except F16 layers whose output
    is rounded to binary16 (suppressed for the classifier, whose logits are
    contractually float32). Output observation for intermediate.dense is
    deferred to the caller, which reports the post-GELU value instead.
    """
    if observers is not None:
        observers.emit_input(name, x2d)
    y = lin.apply(x2d)
    if round_output and lin.storage is Dtype.F16:
        y = f16_round(y)
    if emit_output and observers is not None:
        observers.emit_output(name, _widen(y))
    return y


def _widen(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float32) if x.dtype != np.float32 else x


def forward(model: VitModel, images: Tensor, observers: ObserverSet | None = None) -> Tensor:
    """Run the model on a batch of images; logits are returned in float32."""
    cfg = model.config
    if images.dtype is not Dtype.F32:
        raise PrecisionStateError("input images must be F32")
    expected = (cfg.num_channels, cfg.image_size, cfg.image_size)
    if images.data.ndim != 4 or images.shape[1:] != expected:
        raise DimensionError(f"expected images [B,{expected[0]},{expected[1]},{expected[2]}], "
                             f"got {tuple(images.shape)}")
    b = images.shape[0]
    t, h, nh, hd = cfg.num_tokens, cfg.hidden_size, cfg.num_heads, cfg.head_dim

    patches = patchify(images.data, cfg.patch_size)
    emb = _apply_linear(model.patch_embed, "embeddings.patch_embeddings.projection",
                        patches.reshape(b * cfg.num_patches, -1), observers)
    emb = _widen(emb).reshape(b, cfg.num_patches, h)
    x = np.empty((b, t, h), dtype=np.float32)
    x[:, 0, :] = model.cls_token.to_f32()
    x[:, 1:, :] = emb
    x += model.pos_embed.to_f32()

    scale = np.float32(1.0 / np.sqrt(hd))
    for i, layer in enumerate(model.layers):
        base = f"encoder.layer.{i}"
        # attention sublayer
        hn = layernorm_array(x, layer.layernorm_before.weight.data,
                             layer.layernorm_before.bias.data)
        flat = hn.reshape(b * t, h)
        q = _apply_linear(layer.query, f"{base}.attention.query", flat, observers)
        k = _apply_linear(layer.key, f"{base}.attention.key", flat, observers)
        v = _apply_linear(layer.value, f"{base}.attention.value", flat, observers)
        q = _widen(q).reshape(b, t, nh, hd).transpose(0, 2, 1, 3)
        k = _widen(k).reshape(b, t, nh, hd).transpose(0, 2, 1, 3)
        v = _widen(v).reshape(b, t, nh, hd).transpose(0, 2, 1, 3)
        ctx = np.empty((b, nh, t, hd), dtype=np.float32)
        for bi in range(b):
            for head in range(nh):
                scores = matmul_f32_array(
                    np.ascontiguousarray(q[bi, head]),
                    np.ascontiguousarray(k[bi, head].T)) * scale
                probs = softmax_array(scores, axis=-1)
                ctx[bi, head] = matmul_f32_array(probs, np.ascontiguousarray(v[bi, head]))
        ctx = ctx.transpose(0, 2, 1, 3).reshape(b * t, h)
        if layer.value.storage is Dtype.F16:
            ctx = _widen(f16_round(ctx))
        attn = _apply_linear(layer.attn_output, f"{base}.attention.output",
                             np.ascontiguousarray(ctx), observers)
        x = x + _widen(attn).reshape(b, t, h)

        # MLP sublayer
        hn = layernorm_array(x, layer.layernorm_after.weight.data,
                             layer.layernorm_after.bias.data)
        inter = _apply_linear(layer.intermediate, f"{base}.intermediate.dense",
                              hn.reshape(b * t, h), observers, emit_output=False)
        act = gelu_array(_widen(inter))
        if layer.intermediate.storage is Dtype.F16:
            act = f16_round(act)
        act32 = _widen(act)
        if observers is not None:
            observers.emit_output(f"{base}.intermediate.dense", act32)
        out = _apply_linear(layer.output, f"{base}.output.dense", act32, observers)
        x = x + _widen(out).reshape(b, t, h)

    final = layernorm_array(x, model.final_layernorm.weight.data,
                            model.final_layernorm.bias.data)
    cls = np.ascontiguousarray(final[:, 0, :])
    logits = _apply_linear(model.head, "classifier", cls, observers,
                           round_output=False)
    return Tensor(_widen(logits))
