"""Offline FLOP/feature-size formulas for the shipped model descriptions.

The JSON files under ``pamdi/data/models`` are produced by
``python -m pamdi.flops`` and are checked against these functions by the test
suite.  Counting conventions (one multiply-add = 2 FLOPs):

* convolution: ``2 * k*k * c_in/groups * c_out * h_out * w_out``
* batch norm (inference, fused scale+shift): 2 per element
* ReLU, residual add, flatten copy: 1 per element
* max pool: ``k*k`` per output element; global average pool: ``h*w`` per channel
* linear: ``2 * in * out`` per row

Feature vectors are float32 (4 bytes per element).  The ResNet block lists
follow the top-level module order of the torchvision implementations, with the
residual stages expanded into individual blocks; for ResNet-50 that gives 23
blocks.
"""
from __future__ import annotations

import json
from typing import List, Tuple

from .model import DATA_DIR, LayerSpec, ModelSpec

BYTES_PER_ELEMENT = 4
NUM_CLASSES = 10


def _conv(c_in, c_out, k, h_out, w_out, groups=1):
    return 2.0 * k * k * (c_in // groups) * c_out * h_out * w_out


def _bottleneck(c_in, mid, c_out, stride, h_in):
    h = h_in // stride
    flops = _conv(c_in, mid, 1, h_in, h_in) + 3 * mid * h_in * h_in
    flops += _conv(mid, mid, 3, h, h) + 3 * mid * h * h
    flops += _conv(mid, c_out, 1, h, h) + 2 * c_out * h * h
    if stride != 1 or c_in != c_out:
        flops += _conv(c_in, c_out, 1, h, h) + 2 * c_out * h * h
    flops += 2 * c_out * h * h  # add + relu
    return flops, c_out * h * h, h


def _basic_block(c_in, c_out, stride, h_in):
    # CIFAR ResNet "option A" shortcut: strided identity with zero padding, no FLOPs
    h = h_in // stride
    flops = _conv(c_in, c_out, 3, h, h) + 3 * c_out * h * h
    flops += _conv(c_out, c_out, 3, h, h) + 2 * c_out * h * h
    flops += 2 * c_out * h * h
    return flops, c_out * h * h, h


def resnet50_blocks(image_size: int = 224) -> List[Tuple[str, float, float]]:
    """(name, flops, output elements) for the 23 top-level ResNet-50 blocks."""
    blocks = []
    h = image_size // 2
    blocks.append(("conv1", _conv(3, 64, 7, h, h), 64 * h * h))
    blocks.append(("bn1", 2.0 * 64 * h * h, 64 * h * h))
    blocks.append(("relu", 1.0 * 64 * h * h, 64 * h * h))
    h //= 2
    blocks.append(("maxpool", 9.0 * 64 * h * h, 64 * h * h))
    c_in = 64
    for stage, (mid, count, stride) in enumerate([(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)], 1):
        for i in range(count):
            s = stride if i == 0 else 1
            flops, elems, h = _bottleneck(c_in, mid, mid * 4, s, h)
            blocks.append((f"layer{stage}.{i}", flops, elems))
            c_in = mid * 4
    blocks.append(("avgpool", float(c_in * h * h), c_in))
    blocks.append(("flatten", float(c_in), c_in))
    blocks.append(("fc", 2.0 * c_in * NUM_CLASSES, NUM_CLASSES))
    return blocks


def resnet56_blocks(image_size: int = 32) -> List[Tuple[str, float, float]]:
    """(name, flops, output elements) for CIFAR ResNet-56: stem, 27 basic blocks, head."""
    blocks = []
    h = image_size
    blocks.append(("conv1", _conv(3, 16, 3, h, h), 16 * h * h))
    blocks.append(("bn1", 2.0 * 16 * h * h, 16 * h * h))
    blocks.append(("relu", 1.0 * 16 * h * h, 16 * h * h))
    c_in = 16
    for stage, (c_out, stride) in enumerate([(16, 1), (32, 2), (64, 2)], 1):
        for i in range(9):
            s = stride if i == 0 else 1
            flops, elems, h = _basic_block(c_in, c_out, s, h)
            blocks.append((f"layer{stage}.{i}", flops, elems))
            c_in = c_out
    blocks.append(("avgpool", float(c_in * h * h), c_in))
    blocks.append(("flatten", float(c_in), c_in))
    blocks.append(("fc", 2.0 * c_in * NUM_CLASSES, NUM_CLASSES))
    return blocks


def gpt2_layer_flops(batch: int, seq: int, hidden: int = 768) -> float:
    tokens = batch * seq
    dense = 24.0 * tokens * hidden * hidden  # qkv (6), out proj (2), mlp (16)
    attention = 4.0 * batch * seq * seq * hidden  # scores + weighted sum
    elementwise = tokens * (2 * 5 * hidden + 2 * hidden + 8 * 4 * hidden)  # 2 layernorms, 2 adds, gelu
    return dense + attention + elementwise


def gpt2_blocks(batch: int, seq: int = 64, hidden: int = 768, layers: int = 12):
    """Twelve decoder layers; embedding lookup folded into the first, final layer norm into the last."""
    tokens = batch * seq
    per_layer = gpt2_layer_flops(batch, seq, hidden)
    blocks = []
    for i in range(layers):
        flops = per_layer
        if i == 0:
            flops += tokens * hidden  # position embedding add
        if i == layers - 1:
            flops += 5.0 * tokens * hidden
        blocks.append((f"h.{i}", flops, tokens * hidden))
    return blocks


def _to_spec(model_id, blocks, input_bytes, output_bytes) -> ModelSpec:
    layers = tuple(
        LayerSpec(i, float(flops), float(elems * BYTES_PER_ELEMENT))
        for i, (_, flops, elems) in enumerate(blocks, start=1)
    )
    return ModelSpec(model_id, layers, float(input_bytes), float(output_bytes))


def build_all() -> List[ModelSpec]:
    specs = [
        _to_spec("resnet50_224", resnet50_blocks(224), 3 * 224 * 224 * BYTES_PER_ELEMENT,
                 NUM_CLASSES * BYTES_PER_ELEMENT),
        _to_spec("resnet56_32", resnet56_blocks(32), 3 * 32 * 32 * BYTES_PER_ELEMENT,
                 NUM_CLASSES * BYTES_PER_ELEMENT),
    ]
    for batch in (12, 16):
        seq, hidden = 64, 768
        specs.append(_to_spec(f"gpt2_small_b{batch}", gpt2_blocks(batch, seq, hidden),
                              batch * seq * 8, batch * seq * hidden * BYTES_PER_ELEMENT))
    return specs


def write_all() -> None:
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    for spec in build_all():
        path = DATA_DIR / f"{spec.model_id}.json"
        path.write_text(json.dumps(spec.to_dict(), indent=1) + "\n")
        print(f"{path.name}: {spec.num_layers} layers, {spec.total_flops / 1e9:.3f} GFLOP")


if __name__ == "__main__":
    write_all()
