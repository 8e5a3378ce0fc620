"""
Binary model checkpoints.

Layout, all integers little-endian:

    magic      8 bytes  b"TCLCKPT\\0"
    version    1 byte
    length     uint32   size of the JSON manifest
    manifest   JSON     layer sizes, activation, jitter seed, parameter shapes
    payload    float64  every parameter in Model.parameters() order, C order
    checksum   32 bytes SHA-256 of everything above
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from loguru import logger

from common.file_operations import OutputWriteError, atomic_write_bytes

from .data_definitions import CheckpointIoError, CorruptFile, InvalidModelSpec, LinearLayer, MlpSpec, Model, VersionMismatch

MAGIC = b"TCLCKPT\x00"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<I")
_DIGEST_SIZE = hashlib.sha256().digest_size
_PAYLOAD_DTYPE = np.dtype("<f8")


def encode_checkpoint(model: Model, version: int = FORMAT_VERSION) -> bytes:
    parameters = model.parameters()
    manifest = {
        "encoder_sizes": list(model.spec.encoder_sizes),
        "projector_sizes": list(model.spec.projector_sizes),
        "activation": model.spec.activation,
        "jitter_seed": model.jitter_seed,
        "shapes": [list(p.shape) for p in parameters],
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(p, dtype=_PAYLOAD_DTYPE).tobytes() for p in parameters)
    body = MAGIC + bytes([version]) + _LENGTH.pack(len(manifest_bytes)) + manifest_bytes + payload
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: Model, path: str | Path) -> Path:
    try:
        written = atomic_write_bytes(path, encode_checkpoint(model))
    except OutputWriteError as err:
        raise CheckpointIoError(err.message) from err
    logger.info("Checkpoint written to {}", written)
    return written


def decode_checkpoint(blob: bytes) -> Model:
    header_size = len(MAGIC) + 1 + _LENGTH.size
    if len(blob) < header_size + _DIGEST_SIZE:
        raise CorruptFile(f"checkpoint is truncated ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise CorruptFile("not a checkpoint file (bad magic)")
    version = blob[len(MAGIC)]
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    body, digest = blob[:-_DIGEST_SIZE], blob[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptFile("checkpoint checksum mismatch")

    (manifest_length,) = _LENGTH.unpack_from(body, len(MAGIC) + 1)
    manifest_end = header_size + manifest_length
    try:
        manifest = json.loads(body[header_size:manifest_end].decode("utf-8"))
        spec = MlpSpec(
            encoder_sizes=tuple(manifest["encoder_sizes"]),
            projector_sizes=tuple(manifest["projector_sizes"]),
            activation=manifest["activation"],
        )
        shapes = [tuple(shape) for shape in manifest["shapes"]]
        jitter_seed = int(manifest["jitter_seed"])
    except (ValueError, KeyError, TypeError, InvalidModelSpec) as err:
        raise CorruptFile(f"checkpoint manifest is unreadable: {err}") from err

    payload_bytes = len(body) - manifest_end
    if payload_bytes < 0 or payload_bytes % _PAYLOAD_DTYPE.itemsize:
        raise CorruptFile("checkpoint payload is not a whole number of float64 values")
    payload = np.frombuffer(body, dtype=_PAYLOAD_DTYPE, offset=manifest_end)
    expected = sum(int(np.prod(shape)) for shape in shapes)
    if payload.size != expected:
        raise CorruptFile(f"checkpoint payload holds {payload.size} values, manifest expects {expected}")

    parameters = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        parameters.append(payload[offset : offset + count].astype(np.float64).reshape(shape))
        offset += count
    if len(parameters) % 2:
        raise CorruptFile("checkpoint must hold a weight and a bias per layer")
    layers = [LinearLayer(weight=parameters[k], bias=parameters[k + 1]) for k in range(0, len(parameters), 2)]
    split = len(spec.encoder_sizes) - 1
    if len(layers) != split + len(spec.projector_sizes) - 1:
        raise CorruptFile("checkpoint layer count does not match its manifest")
    sizes = list(zip(spec.encoder_sizes[:-1], spec.encoder_sizes[1:])) + list(zip(spec.projector_sizes[:-1], spec.projector_sizes[1:]))
    if any(layer.weight.shape != size or layer.bias.shape != size[1:] for layer, size in zip(layers, sizes)):
        raise CorruptFile("checkpoint parameter shapes do not match its layer sizes")
    return Model(spec=spec, encoder=tuple(layers[:split]), projector=tuple(layers[split:]), jitter_seed=jitter_seed)


def load_checkpoint(path: str | Path) -> Model:
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointIoError(f"cannot read checkpoint {path}: {err}") from err
    return decode_checkpoint(blob)
