"""Binary model container.

Layout (all integers little-endian):

    magic   4 bytes  b"TBOX"
    version uint32   currently 1
    meta    uint32 length + that many bytes of UTF-8 JSON
    count   uint32   number of tensors
    then per tensor:
        name  uint16 length + that many bytes of UTF-8
        rows  uint32
        cols  uint32
        data  rows*cols float64 values, row-major, little-endian

The meta JSON carries whatever the caller needs to rebuild the object
around the tensors (model config, vocabulary, class count).  Serialization
is exact: float64 payloads are written bit for bit, and the same tensors
and meta always produce the same bytes (JSON keys are sorted).
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TBOX"
VERSION = 1


def save_container(path: str, tensors: dict, meta: dict | None = None) -> None:
    """Write named float64 matrices plus a JSON meta block."""
    blob = json.dumps(meta or {}, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, t in tensors.items():
            arr = np.ascontiguousarray(t, dtype="<f8")
            if arr.ndim != 2:
                raise ValueError(f"tensor {name!r} must be 2-D, got {arr.ndim}-D")
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValueError(f"tensor name too long: {name[:40]!r}...")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"truncated container: expected {n} bytes of {what}")
    return data


def load_container(path: str) -> tuple:
    """Read a container back as (tensors, meta); inverse of save_container."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise ValueError(f"not a model container (bad magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise ValueError(f"unsupported container version {version}")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "meta length"))
        meta = json.loads(_read_exact(fh, meta_len, "meta").decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            rows, cols = struct.unpack("<II", _read_exact(fh, 8, "shape"))
            data = _read_exact(fh, rows * cols * 8, f"data of {name!r}")
            tensors[name] = np.frombuffer(data, dtype="<f8").reshape(rows, cols).copy()
        trailing = fh.read(1)
        if trailing:
            raise ValueError("trailing bytes after last tensor")
    return tensors, meta


def save_model(path: str, model) -> None:
    """Serialize a DocModel: config, vocabulary, and every tensor."""
    meta = {
        "format": "doc-classifier",
        "config": model.config.to_dict(),
        "vocab_tokens": model.vocab.tokens,
        "embedding_trainable": model.embedding.trainable,
    }
    save_container(path, model.named_tensors(), meta)


def load_model(path: str):
    """Rebuild a DocModel from a container written by save_model."""
    from .data import EmbeddingMatrix, Vocab
    from .encoder import ClassifierParams
    from .model import DocModel, ModelConfig

    tensors, meta = load_container(path)
    if meta.get("format") != "doc-classifier":
        raise ValueError(f"container is not a saved model: format={meta.get('format')!r}")
    config = ModelConfig.from_dict(meta["config"])
    vocab = Vocab(meta["vocab_tokens"])
    if "embedding" not in tensors:
        raise ValueError("container is missing the embedding tensor")
    embedding = EmbeddingMatrix(vectors=tensors["embedding"],
                                trainable=bool(meta.get("embedding_trainable", True)))
    if embedding.vectors.shape[0] != len(vocab):
        raise ValueError(
            f"embedding has {embedding.vectors.shape[0]} rows for a "
            f"{len(vocab)}-entry vocabulary"
        )

    def cell_from(prefix):
        from .cells import init_params

        sub = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
        if not sub:
            return None
        proto = init_params(config.kind, config.d, config.H, n_groups=config.K,
                            seed=0, use_bias=config.use_bias)
        import dataclasses

        reps = {}
        for f in dataclasses.fields(proto):
            cur = getattr(proto, f.name)
            if isinstance(cur, np.ndarray):
                if f.name not in sub:
                    raise ValueError(f"container is missing tensor {prefix}{f.name}")
                if sub[f.name].shape != cur.shape:
                    raise ValueError(
                        f"tensor {prefix}{f.name}: shape {sub[f.name].shape} != "
                        f"expected {cur.shape}"
                    )
                reps[f.name] = sub[f.name]
        return dataclasses.replace(proto, **reps)

    cell_fwd = cell_bwd = None
    if config.kind != "cbow":
        cell_fwd = cell_from("fwd.")
        if cell_fwd is None:
            raise ValueError("container is missing the forward cell tensors")
        if config.bidirectional:
            cell_bwd = cell_from("bwd.")
            if cell_bwd is None:
                raise ValueError("container is missing the backward cell tensors")
    for need in ("clf.w", "clf.b"):
        if need not in tensors:
            raise ValueError(f"container is missing tensor {need}")
    clf = ClassifierParams(w=tensors["clf.w"], b=tensors["clf.b"])
    return DocModel(config, vocab, embedding, cell_fwd, cell_bwd, clf)
