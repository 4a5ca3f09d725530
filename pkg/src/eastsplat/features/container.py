"""EASTNET/1 weights container.

Text header, then raw little-endian float32 tensor data. Header grammar
(one directive per line, terminated by ``end``):

    EASTNET/1
    normalization <mean r g b> <std r g b>
    layer conv <name>
    layer relu <name> [tap]
    layer pool <name> [tap]
    tensor <name> <dim...> @ <offset> crc32 <hex>
    end

Offsets are relative to the first byte after the header. The declared
layer order defines the network; every conv layer must have
``<name>.weight`` and ``<name>.bias`` tensors.
"""

from __future__ import annotations

import zlib
from pathlib import Path

import numpy as np

from ..errors import WeightsFormatError
from .network import ConvLayer, NetworkSpec, PoolLayer, ReluLayer

MAGIC = "EASTNET/1"


def save_weights(net: NetworkSpec, path) -> None:
    net.validate()
    lines = [MAGIC]
    mean = " ".join(f"{v:.9g}" for v in net.normalization_mean)
    std = " ".join(f"{v:.9g}" for v in net.normalization_std)
    lines.append(f"normalization {mean} {std}")

    tensors = []
    for layer in net.layers:
        tap = " tap" if layer.name in net.tap_points else ""
        lines.append(f"layer {layer.kind} {layer.name}{tap}")
        if layer.kind == "conv":
            tensors.append((f"{layer.name}.weight", np.ascontiguousarray(layer.weight, dtype="<f4")))
            tensors.append((f"{layer.name}.bias", np.ascontiguousarray(layer.bias, dtype="<f4")))

    offset = 0
    blobs = []
    for name, arr in tensors:
        raw = arr.tobytes()
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"tensor {name} {dims} @ {offset} crc32 {zlib.crc32(raw):08x}")
        blobs.append(raw)
        offset += len(raw)
    lines.append("end")

    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for raw in blobs:
            fh.write(raw)


def load_weights(path) -> NetworkSpec:
    path = Path(path)
    if not path.is_file():
        raise WeightsFormatError(f"weights container does not exist: {path}")
    data = path.read_bytes()

    header_lines = []
    pos = 0
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise WeightsFormatError("header not terminated by 'end'")
        line = data[pos:nl].decode("ascii", errors="replace").strip()
        pos = nl + 1
        if line == "end":
            break
        header_lines.append(line)
    payload = data[pos:]

    if not header_lines or header_lines[0] != MAGIC:
        raise WeightsFormatError(f"bad magic: expected {MAGIC}")

    norm_mean = np.array([0.0, 0.0, 0.0])
    norm_std = np.array([1.0, 1.0, 1.0])
    layer_decls = []  # (kind, name, is_tap)
    tensor_decls = {}  # name -> (shape, offset, crc)
    for line in header_lines[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "normalization":
            if len(parts) != 7:
                raise WeightsFormatError("normalization expects 6 values")
            vals = [float(v) for v in parts[1:]]
            norm_mean = np.array(vals[:3])
            norm_std = np.array(vals[3:])
        elif parts[0] == "layer":
            if len(parts) < 3 or parts[1] not in ("conv", "relu", "pool"):
                raise WeightsFormatError(f"malformed layer line: {line!r}")
            layer_decls.append((parts[1], parts[2], len(parts) > 3 and parts[3] == "tap"))
        elif parts[0] == "tensor":
            try:
                at = parts.index("@")
                shape = tuple(int(d) for d in parts[2:at])
                offset = int(parts[at + 1])
                assert parts[at + 2] == "crc32"
                crc = int(parts[at + 3], 16)
            except (ValueError, IndexError, AssertionError):
                raise WeightsFormatError(f"malformed tensor line: {line!r}")
            tensor_decls[parts[1]] = (shape, offset, crc)
        else:
            raise WeightsFormatError(f"unknown header directive: {parts[0]!r}")

    def read_tensor(name, expect_ndim):
        if name not in tensor_decls:
            raise WeightsFormatError(f"container is missing declared tensor {name!r}")
        shape, offset, crc = tensor_decls[name]
        if len(shape) != expect_ndim:
            raise WeightsFormatError(
                f"tensor {name!r}: expected {expect_ndim} dims, header declares {shape}")
        nbytes = int(np.prod(shape)) * 4
        raw = payload[offset:offset + nbytes]
        if len(raw) != nbytes:
            raise WeightsFormatError(
                f"tensor {name!r}: payload truncated at offset {offset}")
        if zlib.crc32(raw) != crc:
            raise WeightsFormatError(f"tensor {name!r}: checksum failure, data corrupt")
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    layers = []
    taps = []
    for kind, name, is_tap in layer_decls:
        if kind == "conv":
            weight = read_tensor(f"{name}.weight", 4)
            bias = read_tensor(f"{name}.bias", 1)
            if bias.shape[0] != weight.shape[0]:
                raise WeightsFormatError(
                    f"tensor {name}.bias: length {bias.shape[0]} does not match "
                    f"{name}.weight output channels {weight.shape[0]}")
            layers.append(ConvLayer(name, weight, bias))
        elif kind == "relu":
            layers.append(ReluLayer(name))
        else:
            layers.append(PoolLayer(name))
        if is_tap:
            taps.append(name)

    net = NetworkSpec(layers=layers, tap_points=tuple(taps),
                      normalization_mean=norm_mean, normalization_std=norm_std)
    try:
        net.validate()
    except Exception as exc:
        raise WeightsFormatError(str(exc)) from exc
    return net
