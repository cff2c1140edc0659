"""Model checkpoint serialization.

The published model file (magic ``STA1``) stores float32 embeddings plus the
vocabulary tables, everything little-endian:

* magic ``STA1``
* header: six int32 values (variant code, d, m, |U|, |V|, |R|)
* row-major float32 arrays: user_emb, poi_emb, rel_emb, then rel_proj
  (transR) or rel_normal (transH)
* vocab tables: |U| user keys, |V| POI keys, |R| relation keys, each a
  uint32 byte length followed by UTF-8 bytes

Training keeps float64 state; quantizing through the model file would break
exact checkpoint resume, so trainers also write a ``STAS`` sidecar with the
full-precision arrays and the epoch counter.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Optional, Union

import numpy as np

from .embedding import ModelParams, RelationBlock, check_dims
from .errors import FormatError

MAGIC = b"STA1"
STATE_MAGIC = b"STAS"

VARIANT_CODES = {"transE": 0, "transH": 1, "transR": 2}
CODE_VARIANTS = {v: k for k, v in VARIANT_CODES.items()}


@dataclass
class VocabTables:
    """External keys, index-aligned with the embedding tables."""

    users: list[str]
    pois: list[str]
    relations: list[str]


def _write_array(fh: BinaryIO, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_array(fh: BinaryIO, shape: tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape))
    buf = fh.read(count * 4)
    if len(buf) != count * 4:
        raise FormatError("model file truncated while reading embeddings")
    return np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float64)


def _write_strings(fh: BinaryIO, items: list[str]) -> None:
    for s in items:
        raw = s.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)


def _read_strings(fh: BinaryIO, count: int) -> list[str]:
    out = []
    for _ in range(count):
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise FormatError("model file truncated while reading vocab")
        (n,) = struct.unpack("<I", raw_len)
        raw = fh.read(n)
        if len(raw) != n:
            raise FormatError("model file truncated while reading vocab")
        out.append(raw.decode("utf-8"))
    return out


def save_model(params: ModelParams, vocab: VocabTables, path: Union[str, Path]) -> None:
    """Write the float32 model file."""
    if len(vocab.users) != params.n_users or len(vocab.pois) != params.n_pois or len(vocab.relations) != params.n_relations:
        raise FormatError("vocab tables do not match parameter table sizes")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(
            struct.pack(
                "<6i",
                VARIANT_CODES[params.variant],
                params.d,
                params.m,
                params.n_users,
                params.n_pois,
                params.n_relations,
            )
        )
        _write_array(fh, params.user_emb)
        _write_array(fh, params.poi_emb)
        _write_array(fh, params.rel_emb)
        if params.variant == "transR":
            _write_array(fh, params.rel_proj)
        elif params.variant == "transH":
            _write_array(fh, params.rel_normal)
        _write_strings(fh, vocab.users)
        _write_strings(fh, vocab.pois)
        _write_strings(fh, vocab.relations)


def load_model(path: Union[str, Path]) -> tuple[ModelParams, VocabTables]:
    """Read a model file back; arrays are upcast to float64 for scoring."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise FormatError(f"{path} is not a model file (bad magic)")
        code, d, m, n_users, n_pois, n_relations = struct.unpack("<6i", fh.read(24))
        if code not in CODE_VARIANTS:
            raise FormatError(f"unknown variant code {code}")
        variant = CODE_VARIANTS[code]
        check_dims(variant, d, m)
        user_emb = _read_array(fh, (n_users, d))
        poi_emb = _read_array(fh, (n_pois, d))
        rel_emb = _read_array(fh, (n_relations, m))
        rel_proj = rel_normal = None
        if variant == "transR":
            rel_proj = _read_array(fh, (n_relations, d, m))
        elif variant == "transH":
            rel_normal = _read_array(fh, (n_relations, d))
        tables = VocabTables(
            users=_read_strings(fh, n_users),
            pois=_read_strings(fh, n_pois),
            relations=_read_strings(fh, n_relations),
        )
    params = ModelParams(
        variant=variant, d=d, m=m,
        user_emb=user_emb, poi_emb=poi_emb, rel_emb=rel_emb,
        rel_proj=rel_proj, rel_normal=rel_normal,
    )
    return params, tables


# ---------------------------------------------------------------------------
# full-precision training state (resume sidecar)


def _write_state_array(fh: BinaryIO, arr: Optional[np.ndarray]) -> None:
    if arr is None:
        fh.write(struct.pack("<i", 0))
        return
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<i", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}i", *arr.shape))
    fh.write(arr.tobytes())


def _read_state_array(fh: BinaryIO) -> Optional[np.ndarray]:
    (ndim,) = struct.unpack("<i", fh.read(4))
    if ndim == 0:
        return None
    shape = struct.unpack(f"<{ndim}i", fh.read(4 * ndim))
    count = int(np.prod(shape))
    buf = fh.read(count * 8)
    if len(buf) != count * 8:
        raise FormatError("state file truncated")
    return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()


def save_train_state(
    path: Union[str, Path],
    params: ModelParams,
    epochs_done: int,
    content: Optional[RelationBlock] = None,
) -> None:
    """Write the float64 resume state next to a checkpoint."""
    with open(path, "wb") as fh:
        fh.write(STATE_MAGIC)
        fh.write(struct.pack("<3i", epochs_done, VARIANT_CODES[params.variant], 1 if content is not None else 0))
        fh.write(struct.pack("<2i", params.d, params.m))
        for arr in (params.user_emb, params.poi_emb, params.rel_emb, params.rel_proj, params.rel_normal):
            _write_state_array(fh, arr)
        if content is not None:
            for arr in (content.rel_emb, content.rel_proj, content.rel_normal):
                _write_state_array(fh, arr)


def load_train_state(path: Union[str, Path]) -> tuple[ModelParams, int, Optional[RelationBlock]]:
    with open(path, "rb") as fh:
        if fh.read(4) != STATE_MAGIC:
            raise FormatError(f"{path} is not a training state file (bad magic)")
        epochs_done, code, has_content = struct.unpack("<3i", fh.read(12))
        d, m = struct.unpack("<2i", fh.read(8))
        variant = CODE_VARIANTS[code]
        user_emb = _read_state_array(fh)
        poi_emb = _read_state_array(fh)
        rel_emb = _read_state_array(fh)
        rel_proj = _read_state_array(fh)
        rel_normal = _read_state_array(fh)
        content = None
        if has_content:
            content = RelationBlock(
                rel_emb=_read_state_array(fh),
                rel_proj=_read_state_array(fh),
                rel_normal=_read_state_array(fh),
            )
    params = ModelParams(
        variant=variant, d=d, m=m,
        user_emb=user_emb, poi_emb=poi_emb, rel_emb=rel_emb,
        rel_proj=rel_proj, rel_normal=rel_normal,
    )
    return params, epochs_done, content
