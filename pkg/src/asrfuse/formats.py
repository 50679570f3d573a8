"""Bit-exact file formats, all little-endian.

AFM1   feature matrix: magic, u32 rows, u32 cols, f32 frame_period_ms,
       row-major f32 data.
FSS1   frame-score stream: magic, u32 T, u32 |V|, f32 frame_period_ms,
       u32 inventory-blob length, UTF-8 JSON token array, T*|V| f32 scores.
NBEST  JSON Lines, one object per utterance.
TSV    transcripts with a header row: utt_id, text, then metadata columns.
MDL1   model file: magic, u32 header length, JSON header (architecture,
       hyperparameters, seed, parameter manifest), then f64 parameter blobs
       concatenated in manifest order.

All writers are atomic: data goes to a temp file in the target directory and
is renamed into place.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from contextlib import contextmanager

import numpy as np

from .combine import FrameScoreStream, Hypothesis, NBestList
from .features import FeatureSequence

__all__ = [
    "atomic_write",
    "write_afm1",
    "read_afm1",
    "write_fss1",
    "read_fss1",
    "write_nbest",
    "read_nbest",
    "write_transcripts_tsv",
    "read_transcripts_tsv",
    "write_mdl1",
    "read_mdl1",
]


@contextmanager
def atomic_write(path, mode: str = "wb"):
    """Write to a temp file next to `path`, then rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"truncated file while reading {what}")
    return data


def _check_magic(fh, magic: bytes, path):
    got = fh.read(4)
    if got != magic:
        raise ValueError(f"{path}: bad magic {got!r}, expected {magic!r}")


# -- AFM1 ----------------------------------------------------------------------

def write_afm1(path, seq: FeatureSequence):
    rows, cols = seq.frames.shape
    with atomic_write(path) as fh:
        fh.write(b"AFM1")
        fh.write(struct.pack("<IIf", rows, cols, float(seq.frame_period_ms)))
        fh.write(seq.frames.astype("<f4").tobytes())


def read_afm1(path, label: str = "FBK") -> FeatureSequence:
    with open(path, "rb") as fh:
        _check_magic(fh, b"AFM1", path)
        rows, cols, period = struct.unpack("<IIf", _read_exact(fh, 12, "AFM1 header"))
        data = np.frombuffer(
            _read_exact(fh, 4 * rows * cols, "AFM1 data"), dtype="<f4"
        ).reshape(rows, cols)
    return FeatureSequence(data.astype(np.float64), float(period), label=label)


# -- FSS1 ----------------------------------------------------------------------

def write_fss1(path, stream: FrameScoreStream):
    t, v = stream.scores.shape
    blob = json.dumps(stream.tokens, ensure_ascii=False).encode("utf-8")
    with atomic_write(path) as fh:
        fh.write(b"FSS1")
        fh.write(struct.pack("<IIfI", t, v, float(stream.frame_period_ms), len(blob)))
        fh.write(blob)
        fh.write(stream.scores.astype("<f4").tobytes())


def read_fss1(path, utt_id: str | None = None) -> FrameScoreStream:
    with open(path, "rb") as fh:
        _check_magic(fh, b"FSS1", path)
        t, v, period, blob_len = struct.unpack(
            "<IIfI", _read_exact(fh, 16, "FSS1 header")
        )
        tokens = json.loads(_read_exact(fh, blob_len, "FSS1 inventory").decode("utf-8"))
        scores = np.frombuffer(
            _read_exact(fh, 4 * t * v, "FSS1 scores"), dtype="<f4"
        ).reshape(t, v)
    name = utt_id if utt_id is not None else os.path.splitext(os.path.basename(path))[0]
    return FrameScoreStream(name, tokens, scores.astype(np.float64), float(period))


# -- NBEST ----------------------------------------------------------------------

def write_nbest(path, lists: list):
    with atomic_write(path, "w") as fh:
        for nb in lists:
            obj = {
                "utt_id": nb.utt_id,
                "hyps": [
                    {"text": h.text, "tokens": list(h.tokens), "scores": dict(h.scores)}
                    for h in nb.hyps
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def read_nbest(path) -> list:
    lists = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {e}") from None
            hyps = [Hypothesis(h["text"], list(h["tokens"]), dict(h["scores"]))
                    for h in obj["hyps"]]
            lists.append(NBestList(obj["utt_id"], hyps))
    return lists


# -- TSV transcripts --------------------------------------------------------------

def write_transcripts_tsv(path, rows: list, metadata_columns: list | None = None):
    """rows: list of (utt_id, text, metadata dict)."""
    if metadata_columns is None:
        keys = set()
        for _, _, meta in rows:
            keys.update(meta)
        metadata_columns = sorted(keys)
    with atomic_write(path, "w") as fh:
        fh.write("\t".join(["utt_id", "text"] + list(metadata_columns)) + "\n")
        for utt_id, text, meta in rows:
            cells = [utt_id, text] + [str(meta.get(k, "")) for k in metadata_columns]
            fh.write("\t".join(cells) + "\n")


def read_transcripts_tsv(path):
    """Returns (texts: utt_id -> text, metadata: utt_id -> dict)."""
    texts, metadata = {}, {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:2] != ["utt_id", "text"]:
            raise ValueError(f"{path}: TSV header must start with utt_id, text")
        meta_cols = header[2:]
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) != len(header):
                raise ValueError(f"{path}:{line_no}: expected {len(header)} columns")
            utt_id = cells[0]
            if utt_id in texts:
                raise ValueError(f"{path}:{line_no}: duplicate utt_id {utt_id!r}")
            texts[utt_id] = cells[1]
            metadata[utt_id] = dict(zip(meta_cols, cells[2:]))
    return texts, metadata


# -- MDL1 -------------------------------------------------------------------------

def write_mdl1(path, kind: str, hyperparameters: dict, seed: int, named_arrays: list):
    """named_arrays: ordered (name, float64 ndarray) pairs."""
    manifest = [{"name": n, "shape": list(np.asarray(a).shape)} for n, a in named_arrays]
    header = {
        "format": "MDL1",
        "kind": kind,
        "hyperparameters": hyperparameters,
        "seed": seed,
        "params": manifest,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with atomic_write(path) as fh:
        fh.write(b"MDL1")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in named_arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_mdl1(path):
    """Returns (header dict, name -> float64 ndarray)."""
    with open(path, "rb") as fh:
        _check_magic(fh, b"MDL1", path)
        (blob_len,) = struct.unpack("<I", _read_exact(fh, 4, "MDL1 header length"))
        header = json.loads(_read_exact(fh, blob_len, "MDL1 header").decode("utf-8"))
        arrays = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, 8 * count, f"MDL1 blob {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return header, arrays
