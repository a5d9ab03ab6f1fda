"""Binary frame-embedding files and the corpus manifest CSV.

File layout (all little-endian):
    bytes 0-3    magic b"EMB1"
    bytes 4-7    u32 version (1)
    bytes 8-11   u32 T (frame count)
    bytes 12-15  u32 D (embedding dimension)
    bytes 16-19  f32 frame_rate_hz
    then T*D f32 values, frame-major.
"""

import csv
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError, EmbeddingFormatError

MAGIC = b"EMB1"
VERSION = 1
HEADER = struct.Struct("<4sIIIf")

MANIFEST_COLUMNS = [
    "speaker_id",
    "utterance_id",
    "path",
    "intelligibility",
    "severity",
    "corpus_tag",
    "content_tag",
]


@dataclass
class EmbeddingMatrix:
    """T x D frame embeddings for one utterance."""

    data: np.ndarray  # shape (T, D), float32
    frame_rate_hz: float = 50.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise DataValidationError("embedding data must be 2-D (frames x dims)")
        if self.frames < 1 or self.dim < 1:
            raise DataValidationError("embedding matrix needs T >= 1 and D >= 1")
        if self.frame_rate_hz <= 0:
            raise DataValidationError("frame_rate_hz must be > 0")

    @property
    def frames(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]


@dataclass
class UtteranceRecord:
    speaker_id: str
    utterance_id: str
    path: str
    intelligibility: float | None = None
    severity: float | None = None
    corpus_tag: str = ""
    content_tag: str | None = None

    def __post_init__(self):
        if not self.speaker_id or not self.utterance_id:
            raise DataValidationError("speaker_id and utterance_id must be nonempty")
        for name in ("intelligibility", "severity"):
            value = getattr(self, name)
            if value is not None and not (0.0 <= value <= 10.0):
                raise DataValidationError(
                    f"score out of range: {name}={value} for {self.utterance_id}"
                )

    def score(self, task):
        if task not in ("intelligibility", "severity"):
            raise ValueError(f"unknown task {task!r}")
        return getattr(self, task)


@dataclass
class CorpusManifest:
    records: list = field(default_factory=list)
    root: str = "."

    def resolve(self, record):
        return os.path.join(self.root, record.path)

    def speakers(self):
        seen = []
        for r in self.records:
            if r.speaker_id not in seen:
                seen.append(r.speaker_id)
        return seen


@dataclass
class ValidationReport:
    """Per-record pass/fail outcome of validate_corpus."""

    results: list  # list of (UtteranceRecord, bool, reason)

    @property
    def all_ok(self):
        return all(ok for _, ok, _ in self.results)

    def failures(self):
        return [(r, reason) for r, ok, reason in self.results if not ok]


def write_embedding(matrix, path):
    """Write one embedding file; byte-identical output for identical input."""
    if not np.all(np.isfinite(matrix.data)):
        raise DataValidationError("non-finite value in embedding matrix")
    payload = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    header = HEADER.pack(MAGIC, VERSION, matrix.frames, matrix.dim, matrix.frame_rate_hz)
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_embedding_header(path):
    """Return (T, D, frame_rate_hz) without reading the payload."""
    with open(path, "rb") as f:
        raw = f.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise EmbeddingFormatError(f"truncated header in {path}")
    magic, version, t, d, rate = HEADER.unpack(raw)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r} in {path}")
    if version != VERSION:
        raise EmbeddingFormatError(f"unsupported version {version} in {path}")
    if t == 0 or d == 0:
        raise EmbeddingFormatError(f"zero dimension (T={t}, D={d}) in {path}")
    return t, d, rate


def read_embedding(path):
    """Inverse of write_embedding; bitwise-exact payload round trip."""
    t, d, rate = read_embedding_header(path)
    with open(path, "rb") as f:
        f.seek(HEADER.size)
        payload = f.read()
    expected = t * d * 4
    if len(payload) != expected:
        raise EmbeddingFormatError(
            f"truncated payload in {path}: got {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(t, d)
    return EmbeddingMatrix(data=data.copy(), frame_rate_hz=rate)


def _parse_score(text, column, utterance_id):
    if text is None or text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise DataValidationError(f"bad {column} value {text!r} for {utterance_id}")
    return value


def load_manifest(path):
    """Parse a manifest CSV; enforces unique keys and score bounds."""
    root = os.path.dirname(os.path.abspath(path))
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"empty manifest {path} (missing header)")
        if header != MANIFEST_COLUMNS:
            missing = [c for c in MANIFEST_COLUMNS if c not in header]
            raise DataValidationError(
                f"bad manifest header in {path}: missing column(s) {missing or header}"
            )
        records = []
        seen = set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise DataValidationError(f"{path}:{line_no}: wrong field count")
            fields = dict(zip(MANIFEST_COLUMNS, row))
            record = UtteranceRecord(
                speaker_id=fields["speaker_id"],
                utterance_id=fields["utterance_id"],
                path=fields["path"],
                intelligibility=_parse_score(
                    fields["intelligibility"], "intelligibility", fields["utterance_id"]
                ),
                severity=_parse_score(fields["severity"], "severity", fields["utterance_id"]),
                corpus_tag=fields["corpus_tag"],
                content_tag=fields["content_tag"] or None,
            )
            key = (record.speaker_id, record.utterance_id)
            if key in seen:
                raise DataValidationError(f"{path}:{line_no}: duplicate key {key}")
            seen.add(key)
            records.append(record)
    return CorpusManifest(records=records, root=root)


def save_manifest(manifest, path):
    """Write a manifest CSV (deterministic, record order preserved)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_COLUMNS)
        for r in manifest.records:
            writer.writerow(
                [
                    r.speaker_id,
                    r.utterance_id,
                    r.path,
                    "" if r.intelligibility is None else repr(float(r.intelligibility)),
                    "" if r.severity is None else repr(float(r.severity)),
                    r.corpus_tag,
                    r.content_tag or "",
                ]
            )


def validate_corpus(manifest):
    """Check every record's file: exists, valid header, D consistent across the corpus.

    Failures are reported, never raised.
    """
    headers = []
    for record in manifest.records:
        path = manifest.resolve(record)
        if not os.path.isfile(path):
            headers.append((record, None, f"not found: {record.path}"))
            continue
        try:
            t, d, rate = read_embedding_header(path)
        except EmbeddingFormatError as exc:
            headers.append((record, None, str(exc)))
            continue
        headers.append((record, d, ""))
    dims = [d for _, d, _ in headers if d is not None]
    majority = max(set(dims), key=dims.count) if dims else None
    results = []
    for record, d, reason in headers:
        if d is None:
            results.append((record, False, reason))
        elif d != majority:
            results.append((record, False, f"dim mismatch: D={d}, corpus D={majority}"))
        else:
            results.append((record, True, ""))
    return ValidationReport(results=results)
