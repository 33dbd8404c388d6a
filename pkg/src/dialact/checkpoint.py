"""Binary checkpoint container.

Layout: magic "DACT" | u16 format version | u32 header length | header JSON
| raw parameter payload | 32-byte SHA-256 of everything before it.

The header carries the config, taxonomy and vocabulary snapshots plus the
ordered (name, rows, cols) manifest for parameters and frozen buffers; the
payload is their row-major little-endian float64 data in manifest order.
Identical models therefore serialize to identical bytes, and the trailing
digest doubles as the model's content hash.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .corpus import Taxonomy, atomic_write_bytes
from .errors import CheckpointError, HashMismatchError, TaxonomyMismatchError, VersionError
from .model import DialogueModel
from .rng import SeededRng
from .vocab import TokenVocab

MAGIC = b"DACT"
FORMAT_VERSION = 1
_DIGEST_SIZE = 32


def _header_dict(model: DialogueModel) -> dict:
    return {
        "config": model.config.to_dict(),
        "taxonomy": model.taxonomy.to_snapshot(),
        "vocab": model.vocab.tokens,
        "params": [[name, t.value.shape[0], t.value.shape[1]]
                   for name, t in model.params.items()],
        "buffers": [[name, arr.shape[0], arr.shape[1]]
                    for name, arr in sorted(model.buffers.items())],
    }


def checkpoint_bytes(model: DialogueModel) -> bytes:
    header = json.dumps(_header_dict(model), sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION), struct.pack("<I", len(header)), header]
    for _, t in model.params.items():
        parts.append(np.ascontiguousarray(t.value, dtype="<f8").tobytes())
    for name in sorted(model.buffers):
        parts.append(np.ascontiguousarray(model.buffers[name], dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def checkpoint_hash(model: DialogueModel) -> str:
    return checkpoint_bytes(model)[-_DIGEST_SIZE:].hex()


def save_checkpoint(model: DialogueModel, path: str | Path) -> str:
    """Write atomically; returns the content hash (hex)."""
    blob = checkpoint_bytes(model)
    atomic_write_bytes(path, blob)
    return blob[-_DIGEST_SIZE:].hex()


def load_checkpoint(path: str | Path, expect_taxonomy: Taxonomy | None = None) -> DialogueModel:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 2 + 4 + _DIGEST_SIZE or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = struct.unpack("<H", blob[4:6])[0]
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, supported: {FORMAT_VERSION}")
    body, digest = blob[:-_DIGEST_SIZE], blob[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise HashMismatchError(f"{path}: content hash mismatch (corrupt file)")
    header_len = struct.unpack("<I", blob[6:10])[0]
    header_end = 10 + header_len
    try:
        header = json.loads(blob[10:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header ({e})") from None

    config = ModelConfig.from_dict(header["config"])
    taxonomy = Taxonomy.from_snapshot(header["taxonomy"])
    if expect_taxonomy is not None and expect_taxonomy.tags() != taxonomy.tags():
        raise TaxonomyMismatchError(
            f"{path}: checkpoint taxonomy ({len(taxonomy)} tags) does not match "
            f"the expected one ({len(expect_taxonomy)} tags)")
    vocab = TokenVocab(header["vocab"])

    model = DialogueModel(config, vocab, taxonomy, SeededRng(0))
    offset = header_end
    state: dict[str, np.ndarray] = {}
    for name, rows, cols in header["params"]:
        n = rows * cols * 8
        state[name] = np.frombuffer(body[offset:offset + n], dtype="<f8").reshape(rows, cols).copy()
        offset += n
    for name, rows, cols in header["buffers"]:
        n = rows * cols * 8
        model.buffers[name] = np.frombuffer(body[offset:offset + n], dtype="<f8").reshape(rows, cols).copy()
        offset += n
    if offset != len(body):
        raise CheckpointError(f"{path}: payload size mismatch")
    model.params.load_state_dict(state)
    return model
