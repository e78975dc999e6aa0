"""Conv-layer FLOP accounting for color-vs-grayscale and resolution sweeps.

Counting convention: one multiply-accumulate is one FLOP, plus one FLOP per
output element for the bias add when a layer has one. Grayscale input only
changes the first layer's input channels (3 -> 1); every later layer is
untouched, so the color/gray totals differ exactly by the layer-1 delta.

Grouped (depthwise) convolutions are supported through a ``groups`` field:
each output channel sees in_channels/groups inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

from .errors import InputError


@dataclass(frozen=True)
class ConvLayerSpec:
    """One convolution layer: k x k kernel, stride, zero padding, optional bias."""

    name: str
    kernel: int
    in_channels: int
    out_channels: int
    stride: int = 1
    padding: int = 0
    has_bias: bool = False
    groups: int = 1

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1:
            raise InputError(f"layer {self.name!r}: kernel and stride must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise InputError(f"layer {self.name!r}: channel counts must be >= 1")
        if self.padding < 0:
            raise InputError(f"layer {self.name!r}: padding must be >= 0")
        if self.groups < 1 or self.in_channels % self.groups or self.out_channels % self.groups:
            raise InputError(
                f"layer {self.name!r}: groups must divide both channel counts"
            )


@dataclass(frozen=True)
class ModelSpec:
    """Named ordered conv stack with its nominal input size."""

    name: str
    input_w: int
    input_h: int
    layers: Tuple[ConvLayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise InputError(f"model {self.name!r} has no layers")
        if self.input_w < 1 or self.input_h < 1:
            raise InputError(f"model {self.name!r}: input size must be >= 1")
        first = self.layers[0].in_channels
        if first not in (1, 3):
            raise InputError(
                f"model {self.name!r}: first layer must take 1 or 3 channels, got {first}"
            )
        object.__setattr__(self, "layers", tuple(self.layers))


@dataclass(frozen=True)
class FlopsReport:
    """Per-layer and total FLOPs for one color mode, plus the gray/color ratio."""

    model_name: str
    color_mode: str
    input_w: int
    input_h: int
    per_layer: Tuple[Tuple[str, int], ...]
    total: int
    layer1_color: int
    layer1_gray: int
    total_color: int
    total_gray: int

    @property
    def gray_to_color_ratio(self) -> float:
        return self.total_gray / self.total_color

    def to_dict(self) -> dict:
        return {
            "schema": "flops-report/1",
            "model": self.model_name,
            "color_mode": self.color_mode,
            "input": [self.input_w, self.input_h],
            "per_layer": [
                {"name": n, "flops": f, "kflops": format_kflops(f)} for n, f in self.per_layer
            ],
            "total": self.total,
            "total_kflops": format_kflops(self.total),
            "layer1_color": self.layer1_color,
            "layer1_gray": self.layer1_gray,
            "total_color": self.total_color,
            "total_gray": self.total_gray,
            "gray_to_color_ratio": self.gray_to_color_ratio,
        }


def format_kflops(flops: int, decimals: int = 2) -> str:
    """Exact integer count rendered as kFLOPS (divide by 1000, fixed decimals)."""
    return f"{flops / 1000:.{decimals}f}"


def conv_flops(layer: ConvLayerSpec, in_w: int, in_h: int) -> Tuple[int, int, int]:
    """FLOPs and output size of one conv layer on an in_w x in_h input.

    flops = out_h * out_w * out_channels * (k^2 * in_channels/groups + bias)
    out   = floor((in + 2*padding - k) / stride) + 1 per axis
    """
    padded_w = in_w + 2 * layer.padding
    padded_h = in_h + 2 * layer.padding
    if padded_w < layer.kernel or padded_h < layer.kernel:
        raise InputError(
            f"layer {layer.name!r}: kernel {layer.kernel} exceeds padded input "
            f"{padded_w}x{padded_h}"
        )
    out_w = (padded_w - layer.kernel) // layer.stride + 1
    out_h = (padded_h - layer.kernel) // layer.stride + 1
    per_output = layer.kernel * layer.kernel * layer.in_channels // layer.groups
    if layer.has_bias:
        per_output += 1
    return out_w * out_h * layer.out_channels * per_output, out_w, out_h


def gray_variant(model: ModelSpec) -> ModelSpec:
    """The same stack with a single-channel first layer."""
    first = model.layers[0]
    if first.in_channels == 1:
        return model
    if first.groups != 1:
        raise InputError(
            f"model {model.name!r}: cannot rewrite a grouped first layer to grayscale"
        )
    layers = (replace(first, in_channels=1),) + model.layers[1:]
    return replace(model, layers=layers)


def _chain(model: ModelSpec, in_w: int, in_h: int) -> Tuple[List[Tuple[str, int]], int]:
    per_layer: List[Tuple[str, int]] = []
    total = 0
    w, h = in_w, in_h
    for layer in model.layers:
        flops, w, h = conv_flops(layer, w, h)
        per_layer.append((layer.name, flops))
        total += flops
    return per_layer, total


def model_flops(model: ModelSpec, color_mode: str = "color") -> FlopsReport:
    """Chain the stack at its nominal input size in the requested color mode."""
    if color_mode not in ("color", "gray"):
        raise InputError(f"color_mode must be 'color' or 'gray', got {color_mode!r}")
    color_model = model
    gray_model = gray_variant(model)
    per_color, total_color = _chain(color_model, model.input_w, model.input_h)
    per_gray, total_gray = _chain(gray_model, model.input_w, model.input_h)
    per_layer, total = (per_gray, total_gray) if color_mode == "gray" else (per_color, total_color)
    return FlopsReport(
        model_name=model.name,
        color_mode=color_mode,
        input_w=model.input_w,
        input_h=model.input_h,
        per_layer=tuple(per_layer),
        total=total,
        layer1_color=per_color[0][1],
        layer1_gray=per_gray[0][1],
        total_color=total_color,
        total_gray=total_gray,
    )


def resolution_sweep(model: ModelSpec, sizes: Sequence[int],
                     color_mode: str = "color") -> List[Tuple[int, int]]:
    """Total FLOPs for square inputs of each size, in the given order."""
    if color_mode not in ("color", "gray"):
        raise InputError(f"color_mode must be 'color' or 'gray', got {color_mode!r}")
    swept = gray_variant(model) if color_mode == "gray" else model
    results = []
    for size in sizes:
        if size < 1:
            raise InputError(f"sweep size must be >= 1, got {size}")
        _, total = _chain(swept, size, size)
        results.append((size, total))
    return results


def at_resolution(model: ModelSpec, size: int) -> ModelSpec:
    """The same stack re-declared with a square input of the given size."""
    if size < 1:
        raise InputError(f"resolution must be >= 1, got {size}")
    return replace(model, input_w=size, input_h=size)
