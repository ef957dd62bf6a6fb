"""
Binary checkpoint format for model parameters, vocabulary and run metadata

Layout (little-endian):
    b"QFCK" | u32 version | u32 header length | header JSON (UTF-8)
    u32 tensor count | per tensor: u32 name length, name, u32 rank, u32 dims..., float32 values
"""

import io
import json
import struct
import logging
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Tuple

import numpy as np
import torch

from config import ModelConfig, model_config_from_dict
from services.modeling import RESERVED_TOKENS, QFASTransformer, Vocab

logger = logging.getLogger(__name__)

MAGIC = b'QFCK'
FORMAT_VERSION = 1
_U32 = struct.Struct('<I')


class CheckpointError(ValueError):
    """Corrupt, truncated or incompatible checkpoint"""


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab_tokens: List[str]
    tensors: Dict[str, np.ndarray]
    meta: Dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def vocab(self) -> Vocab:
        return Vocab(self.vocab_tokens)

    def same_tensors(self, other: 'Checkpoint') -> bool:
        """Bitwise equality of every named tensor"""
        if list(self.tensors) != list(other.tensors):
            return False
        return all(
            self.tensors[name].shape == other.tensors[name].shape
            and self.tensors[name].tobytes() == other.tensors[name].tobytes()
            for name in self.tensors
        )


def to_checkpoint(model: QFASTransformer, vocab: Vocab, meta: Dict[str, Any] = None) -> Checkpoint:
    tensors = {
        name: tensor.detach().cpu().to(torch.float32).numpy().copy()
        for name, tensor in model.state_dict().items()
    }
    return Checkpoint(config=model.config, vocab_tokens=vocab.tokens(), tensors=tensors, meta=dict(meta or {}))


def build_model(checkpoint: Checkpoint) -> QFASTransformer:
    """Instantiate a model and load the checkpoint's tensors into it"""
    model = QFASTransformer(checkpoint.config)
    expected = model.state_dict()
    missing = [name for name in expected if name not in checkpoint.tensors]
    extra = [name for name in checkpoint.tensors if name not in expected]
    if missing or extra:
        raise CheckpointError(f"Tensor names do not match the model (missing={missing}, unexpected={extra})")
    state = {}
    for name, reference in expected.items():
        array = checkpoint.tensors[name]
        if tuple(array.shape) != tuple(reference.shape):
            raise CheckpointError(f"Tensor {name!r} has shape {tuple(array.shape)}, "
                                  f"model expects {tuple(reference.shape)}")
        state[name] = torch.from_numpy(np.array(array, dtype=np.float32))
    model.load_state_dict(state)
    return model


def save_checkpoint(checkpoint: Checkpoint, path: str) -> None:
    header = json.dumps({
        'model': asdict(checkpoint.config),
        'vocab': checkpoint.vocab_tokens,
        'meta': checkpoint.meta,
    }).encode('utf-8')

    buffer = io.BytesIO()
    buffer.write(MAGIC)
    buffer.write(_U32.pack(checkpoint.format_version))
    buffer.write(_U32.pack(len(header)))
    buffer.write(header)
    buffer.write(_U32.pack(len(checkpoint.tensors)))
    for name, array in checkpoint.tensors.items():
        encoded = name.encode('utf-8')
        data = np.ascontiguousarray(array, dtype='<f4')
        buffer.write(_U32.pack(len(encoded)))
        buffer.write(encoded)
        buffer.write(_U32.pack(data.ndim))
        for dim in data.shape:
            buffer.write(_U32.pack(dim))
        buffer.write(data.tobytes(order='C'))

    with open(path, 'wb') as f:
        f.write(buffer.getvalue())
    logger.info(f"Saved checkpoint with {len(checkpoint.tensors)} tensors to {path}")


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated while reading {what}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(_U32.size, what))[0]


def load_checkpoint(path: str) -> Checkpoint:
    """
    Read a checkpoint file

    Raises:
        CheckpointError: On bad magic, unsupported version, malformed header or truncated tensor data
    """
    with open(path, 'rb') as f:
        reader = _Reader(f.read(), path)

    if reader.take(len(MAGIC), 'magic') != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    version = reader.u32('version')
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}, expected {FORMAT_VERSION}")

    raw_header = reader.take(reader.u32('header length'), 'header')
    try:
        header = json.loads(raw_header.decode('utf-8'))
        config = model_config_from_dict(header['model'])
        vocab_tokens = list(header['vocab'])
        meta = dict(header.get('meta', {}))
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})")

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(reader.u32('tensor count')):
        name = reader.take(reader.u32('tensor name length'), 'tensor name').decode('utf-8', errors='replace')
        shape: Tuple[int, ...] = tuple(reader.u32(f'shape of {name!r}') for _ in range(reader.u32(f'rank of {name!r}')))
        count = int(np.prod(shape, dtype=np.int64))
        data = reader.take(4 * count, f'values of tensor {name!r}')
        tensors[name] = np.frombuffer(data, dtype='<f4').astype(np.float32).reshape(shape)

    if reader.offset != len(reader.data):
        raise CheckpointError(f"{path}: {len(reader.data) - reader.offset} unexpected trailing bytes")

    if len(vocab_tokens) + len(RESERVED_TOKENS) != config.vocab_size:
        raise CheckpointError(f"{path}: vocabulary has {len(vocab_tokens) + len(RESERVED_TOKENS)} entries, "
                              f"config says {config.vocab_size}")
    logger.info(f"Loaded checkpoint {path} ({len(tensors)} tensors, vocab {config.vocab_size})")
    return Checkpoint(config=config, vocab_tokens=vocab_tokens, tensors=tensors, meta=meta, format_version=version)
