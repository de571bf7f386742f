"""Binary checkpoints.

Layout: a 4-byte little-endian header length, a UTF-8 JSON header describing
the layers, then for every layer its weights (row-major) and its bias as
little-endian float64.
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict

import numpy as np

from domain.entities.network import LayerParams, Network
from domain.exceptions import ContractViolationError
from domain.repositories.checkpoint_repository import CheckpointRepository
from domain.value_objects.layer_spec import Activation, LayerSpec, LossKind

CHECKPOINT_FORMAT = "ekfac-bench-checkpoint"
CHECKPOINT_VERSION = 1
HEADER_LENGTH = struct.Struct("<I")
FLOAT = np.dtype("<f8")


def encode_checkpoint(network: Network) -> bytes:
    header: Dict[str, Any] = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "loss": network.loss.value,
        "seed": network.seed,
        "layers": [
            {"d_in": s.d_in, "d_out": s.d_out, "activation": s.activation.value}
            for s in network.specs
        ],
    }
    encoded = json.dumps(header).encode("utf-8")
    parts = [HEADER_LENGTH.pack(len(encoded)), encoded]
    for params in network.params:
        parts.append(params.weights.astype(FLOAT).tobytes(order="C"))
        parts.append(params.bias.astype(FLOAT).tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> Network:
    if len(data) < HEADER_LENGTH.size:
        raise ContractViolationError("Checkpoint truncated before the header length")
    (length,) = HEADER_LENGTH.unpack_from(data, 0)
    offset = HEADER_LENGTH.size + length
    if len(data) < offset:
        raise ContractViolationError(
            f"Checkpoint header truncated at byte offset {len(data)}"
        )
    try:
        header = json.loads(data[HEADER_LENGTH.size : offset].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContractViolationError(f"Checkpoint header is not JSON: {e}") from e
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ContractViolationError("Not a checkpoint written by this package")
    if header.get("version") != CHECKPOINT_VERSION:
        raise ContractViolationError(
            f"Unsupported checkpoint version {header.get('version')}"
        )

    specs, params = [], []
    for layer in header["layers"]:
        spec = LayerSpec(
            d_in=layer["d_in"],
            d_out=layer["d_out"],
            activation=Activation(layer["activation"]),
        )
        sizes = (spec.d_in * spec.d_out, spec.d_out)
        arrays = []
        for size in sizes:
            end = offset + size * FLOAT.itemsize
            if len(data) < end:
                raise ContractViolationError(
                    f"Checkpoint payload truncated at byte offset {len(data)}"
                )
            arrays.append(np.frombuffer(data, dtype=FLOAT, count=size, offset=offset))
            offset = end
        specs.append(spec)
        params.append(
            LayerParams(
                weights=arrays[0].reshape(spec.d_in, spec.d_out), bias=arrays[1]
            )
        )
    if offset != len(data):
        raise ContractViolationError(
            f"Trailing bytes in checkpoint from byte offset {offset}"
        )
    return Network(
        specs=specs, params=params, loss=LossKind(header["loss"]), seed=header["seed"]
    )


def save_checkpoint(network: Network, path: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(encode_checkpoint(network))


def load_checkpoint(path: str) -> Network:
    return decode_checkpoint(Path(path).read_bytes())


class BinaryCheckpointRepository(CheckpointRepository):
    def save(self, network: Network, path: str) -> None:
        save_checkpoint(network, path)

    def load(self, path: str) -> Network:
        return load_checkpoint(path)
