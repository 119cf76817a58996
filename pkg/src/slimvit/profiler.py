"""Activation profiling over a small calibration set.

Observers attach to named linears, the calibration batch runs through one
forward pass, and per-output-channel mean absolute activations accumulate in
float64 (deterministic: profiling is single-pass and sequential, so stats
are a pure function of model and calibration data). Input-channel means are
recorded alongside for the quantizer's equalization scales. Per-layer
activation byte counts mirror the analytic memory model.

Profiling requires the model in its F32 state: it precedes every conversion
in the pipeline.
"""

from __future__ import annotations

import fnmatch
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, PrecisionStateError, UnknownLayerError
from .model import ObserverSet, VitModel, forward
from .tensor import Dtype, Tensor

DEFAULT_LAYER_FILTER = ("encoder.layer.*.intermediate.dense",
                        "encoder.layer.*.output.dense")


@dataclass
class CalibrationSet:
    """A small labeled sample driving profiling and quantization scales."""

    images: Tensor   # [N, C, H, W], standardized F32
    labels: list

    def __post_init__(self):
        if self.images.data.ndim != 4 or self.images.shape[0] < 1:
            raise InputError("calibration set must contain at least one image")
        if len(self.labels) != self.images.shape[0]:
            raise InputError("label count must match image count")

    @property
    def num_samples(self) -> int:
        return self.images.shape[0]

    @classmethod
    def from_dataset(cls, dataset, n: int = 32) -> "CalibrationSet":
        """Take the first ``n`` samples of a dataset as calibration data."""
        if n < 1 or n > dataset.num_samples:
            raise InputError(f"need 1 <= n <= {dataset.num_samples}, got {n}")
        images = Tensor(np.ascontiguousarray(dataset.images.data[:n]))
        return cls(images, list(dataset.labels[:n]))


class MeanAbsAccumulator:
    """Running per-channel mean of |activation| over samples and tokens."""

    def __init__(self, width: int):
        self.sums = np.zeros(width, dtype=np.float64)
        self.tokens = 0

    def update(self, arr: np.ndarray) -> None:
        rows = arr.reshape(-1, arr.shape[-1])
        self.sums += np.abs(rows, dtype=np.float64).sum(axis=0)
        self.tokens += rows.shape[0]

    def mean(self) -> np.ndarray:
        if self.tokens == 0:
            raise InputError("no activations observed")
        return self.sums / self.tokens


@dataclass
class LayerStats:
    channel_mean_abs: np.ndarray   # float64, one entry per output channel
    input_mean_abs: np.ndarray     # float64, one entry per input channel
    samples_seen: int
    tokens_seen: int
    activation_bytes: int          # bytes of the layer output at calibration batch size


class ActivationStats:
    """Per-layer activation statistics, immutable once returned by profile()."""

    def __init__(self, layers: dict):
        self._layers = layers

    def layer_names(self):
        return list(self._layers)

    def get(self, layer: str) -> LayerStats:
        try:
            return self._layers[layer]
        except KeyError:
            raise UnknownLayerError(f"no statistics for layer {layer!r}") from None

    def __contains__(self, layer: str) -> bool:
        return layer in self._layers

    def items(self):
        return self._layers.items()

    def to_json(self) -> str:
        doc = {"layers": {
            name: {
                "channel_mean_abs": st.channel_mean_abs.tolist(),
                "input_mean_abs": st.input_mean_abs.tolist(),
                "samples_seen": st.samples_seen,
                "tokens_seen": st.tokens_seen,
                "activation_bytes": st.activation_bytes,
            } for name, st in self._layers.items()
        }}
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ActivationStats":
        doc = json.loads(text)
        layers = {}
        for name, st in doc["layers"].items():
            layers[name] = LayerStats(
                channel_mean_abs=np.asarray(st["channel_mean_abs"], dtype=np.float64),
                input_mean_abs=np.asarray(st["input_mean_abs"], dtype=np.float64),
                samples_seen=int(st["samples_seen"]),
                tokens_seen=int(st["tokens_seen"]),
                activation_bytes=int(st["activation_bytes"]),
            )
        return cls(layers)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "ActivationStats":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _match_layers(model: VitModel, layer_filter) -> list:
    if layer_filter is None:
        layer_filter = DEFAULT_LAYER_FILTER
    if isinstance(layer_filter, str):
        layer_filter = (layer_filter,)
    names = [name for name, _ in model.named_linears()
             if any(fnmatch.fnmatchcase(name, pat) for pat in layer_filter)]
    if not names:
        raise ConfigError(f"layer filter {layer_filter!r} matches no layer")
    return names


def profile(model: VitModel, calib: CalibrationSet, layer_filter=None) -> ActivationStats:
    """Collect per-channel mean absolute activations for the matched layers.

    The whole calibration set runs as a single batch; float64 accumulation
    makes the result independent of everything but (model, calib, filter).
    """
    if calib.num_samples < 1:
        raise InputError("empty calibration set")
    for name, lin in model.named_linears():
        if lin.storage is not Dtype.F32:
            raise PrecisionStateError(
                f"profiling requires an F32 model, but {name} is {lin.storage.name}")
    names = _match_layers(model, layer_filter)

    out_acc = {name: MeanAbsAccumulator(model.get_linear(name).out_features)
               for name in names}
    in_acc = {name: MeanAbsAccumulator(model.get_linear(name).in_features)
              for name in names}
    observers = ObserverSet()
    for name in names:
        observers.on_output(name, out_acc[name].update)
        observers.on_input(name, in_acc[name].update)

    forward(model, calib.images, observers)

    layers = {}
    for name in names:
        acc = out_acc[name]
        width = model.get_linear(name).out_features
        layers[name] = LayerStats(
            channel_mean_abs=acc.mean(),
            input_mean_abs=in_acc[name].mean(),
            samples_seen=calib.num_samples,
            tokens_seen=acc.tokens,
            activation_bytes=acc.tokens * width * Dtype.F32.bytes_per_element,
        )
    return ActivationStats(layers)


def dump_samples(calib: CalibrationSet, k: int, out_dir: str, seed: int = 0) -> list:
    """Write ``k`` randomly selected calibration images as PPM files.

    Produces ``sample_<index>.ppm`` (P6, maxval 255, pixels de-normalized
    from the standardized floats) plus ``manifest.csv`` with an
    ``index,label`` header. Returns the selected indices.
    """
    n = calib.num_samples
    if k < 0 or k > n:
        raise InputError(f"need 0 <= k <= {n}, got {k}")
    if calib.images.shape[1] != 3:
        raise InputError("PPM dump requires 3-channel images")
    rng = np.random.Generator(np.random.PCG64(seed))
    indices = sorted(rng.choice(n, size=k, replace=False).tolist())

    os.makedirs(out_dir, exist_ok=True)
    lines = ["index,label"]
    for idx in indices:
        img = calib.images.data[idx]
        path = os.path.join(out_dir, f"sample_{idx:05d}.ppm")
        _write_ppm(path, img)
        lines.append(f"{idx},{calib.labels[idx]}")
    with open(os.path.join(out_dir, "manifest.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return indices


def denormalize_to_bytes(img: np.ndarray) -> np.ndarray:
    """Invert the (x/255 - 0.5) / 0.5 standardization back to uint8."""
    v = np.rint((img.astype(np.float64) * 0.5 + 0.5) * 255.0)
    return np.clip(v, 0, 255).astype(np.uint8)


def _write_ppm(path: str, img: np.ndarray) -> None:
    c, h, w = img.shape
    pixels = denormalize_to_bytes(img).transpose(1, 2, 0)  # HWC interleaved
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
