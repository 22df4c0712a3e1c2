"""Audio decoding, annotation tables and reproducible train/test splits."""

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .errors import (ConfigurationError, DecodeError, DuplicateIdError, EmptyInputError,
                     ParseError, SchemaError, UnknownSongError)

SAMPLE_RATE = 22050

MIDLEVEL_FEATURES = (
    "melodiousness", "articulation", "rhythmic_stability", "rhythmic_complexity",
    "dissonance", "tonal_stability", "minorness",
)
EMOTIONS = ("valence", "energy", "tension", "anger", "fear", "happy", "sad", "tender")

SCHEMAS = {"midlevel": MIDLEVEL_FEATURES, "emotion": EMOTIONS}
# Raw rating ranges before scaling by 0.1.
RAW_RANGES = {"midlevel": (1.0, 10.0), "emotion": (1.0, 7.83)}
SCALE = 0.1

SPLIT_ALGORITHM = "fisher-yates over sorted song ids, numpy PCG64(seed)"

# Resampler: Kaiser-windowed sinc, 16 taps each side at the lower rate.
RESAMPLE_HALF_TAPS = 16
RESAMPLE_KAISER_BETA = 8.6


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        if self.samples.ndim != 1:
            raise ValueError("waveform must be mono")
        if self.samples.size == 0:
            raise EmptyInputError(f"{self.source_id or 'waveform'}: no samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


def resample(x, orig_rate, target_rate):
    """Polyphase windowed-sinc resampling. Equal rates return ``x`` unchanged."""
    if orig_rate == target_rate:
        return np.asarray(x, dtype=np.float64)
    ratio = Fraction(int(target_rate), int(orig_rate))
    up, down = ratio.numerator, ratio.denominator
    factor = max(up, down)
    n_taps = 2 * RESAMPLE_HALF_TAPS * factor + 1
    taps = signal.firwin(n_taps, 1.0 / factor, window=("kaiser", RESAMPLE_KAISER_BETA))
    return signal.resample_poly(np.asarray(x, dtype=np.float64), up, down, window=taps * up)


def peak_normalize(x):
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0.0:
        return x
    return x / peak


def _pcm_to_float(data):
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype.kind == "f":
        return data.astype(np.float64)
    raise DecodeError(f"unsupported sample type {data.dtype}")


def load_audio(path, target_rate=SAMPLE_RATE, source_id=None):
    """Decode a PCM WAV file to a mono, resampled, peak-normalized Waveform."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError, EOFError) as exc:
        raise DecodeError(f"{path}: cannot decode WAV ({exc})") from exc
    x = _pcm_to_float(data)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise EmptyInputError(f"{path}: zero-length audio")
    x = peak_normalize(resample(x, rate, target_rate))
    if source_id is None:
        source_id = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return Waveform(x, int(target_rate), source_id)


def write_wav(path, samples, sample_rate):
    """Write float samples in [-1, 1] as 16-bit PCM."""
    pcm = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, int(sample_rate), pcm)


@dataclass(frozen=True)
class AnnotationTable:
    """Scaled ratings keyed by song id; ``values`` is n x 7 or n x 8."""

    song_ids: tuple
    schema: str
    values: np.ndarray

    def __post_init__(self):
        if self.schema not in SCHEMAS:
            raise SchemaError(f"unknown schema {self.schema!r}")
        if self.values.shape != (len(self.song_ids), len(SCHEMAS[self.schema])):
            raise SchemaError(f"values shape {self.values.shape} does not match schema")
        if len(set(self.song_ids)) != len(self.song_ids):
            raise DuplicateIdError("duplicate song ids in table")
        if not np.all(np.isfinite(self.values)):
            raise SchemaError("non-finite annotation values")
        self.values.setflags(write=False)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.song_ids)})

    @property
    def columns(self):
        return SCHEMAS[self.schema]

    def __len__(self):
        return len(self.song_ids)

    def __contains__(self, song_id):
        return song_id in self._index

    def row(self, song_id):
        try:
            return self.values[self._index[song_id]]
        except KeyError:
            raise UnknownSongError(f"unknown song id {song_id!r}") from None

    def rows(self, song_ids):
        return np.stack([self.row(s) for s in song_ids]) if song_ids else \
            np.empty((0, len(self.columns)))

    def subset(self, song_ids):
        ids = tuple(song_ids)
        return AnnotationTable(ids, self.schema, self.rows(ids).copy())


def load_annotations(path, schema):
    """Read a ``song_id,<columns>`` CSV, validate raw ranges and scale by 0.1."""
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_annotations(fh.read(), schema, source=str(path))


def parse_annotations(text, schema, source="<string>"):
    if schema not in SCHEMAS:
        raise SchemaError(f"unknown schema {schema!r}; expected one of {sorted(SCHEMAS)}")
    expected = SCHEMAS[schema]
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header:
        raise EmptyInputError(f"{source}: empty file")
    header = [h.strip() for h in header]
    if header[0] != "song_id":
        raise SchemaError(f"{source}: first column must be 'song_id', got {header[0]!r}")
    missing = [c for c in expected if c not in header[1:]]
    extra = [c for c in header[1:] if c not in expected]
    if missing or extra:
        raise SchemaError(f"{source}: missing columns {missing}, unexpected columns {extra}")
    if len(set(header)) != len(header):
        raise SchemaError(f"{source}: repeated column names")
    order = [header.index(c) for c in expected]
    lo, hi = RAW_RANGES[schema]

    ids, rows, seen = [], [], {}
    for line_no, record in enumerate(reader, start=2):
        if not record or all(not f.strip() for f in record):
            continue
        if len(record) != len(header):
            raise ParseError(f"{source}:{line_no}: expected {len(header)} cells, got {len(record)}",
                             row=line_no)
        sid = record[0].strip()
        if sid in seen:
            raise DuplicateIdError(f"{source}:{line_no}: song id {sid!r} repeats line {seen[sid]}")
        seen[sid] = line_no
        vals = []
        for col in order:
            cell = record[col].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{source}:{line_no}: column {header[col]!r}: "
                                 f"non-numeric value {cell!r}", row=line_no,
                                 column=header[col]) from None
            if not math.isfinite(v) or v < lo or v > hi:
                raise SchemaError(f"{source}:{line_no}: column {header[col]!r}: raw rating {v} "
                                  f"outside [{lo}, {hi}]")
            vals.append(v * SCALE)
        ids.append(sid)
        rows.append(vals)
    if not rows:
        raise EmptyInputError(f"{source}: no annotation rows")
    return AnnotationTable(tuple(ids), schema, np.array(rows, dtype=np.float64))


def write_annotations(path, table):
    """Write a table as raw ratings (scaled values / 0.1) in the loader's format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("song_id",) + table.columns)
        for sid, row in zip(table.song_ids, table.values):
            w.writerow([sid] + [repr(float(v) / SCALE) for v in row])


@dataclass(frozen=True)
class Split:
    train_ids: tuple
    test_ids: tuple
    seed: int
    ratio: float

    def to_json(self):
        return {"seed": self.seed, "ratio": self.ratio,
                "train_ids": list(self.train_ids), "test_ids": list(self.test_ids)}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(obj["train_ids"]), tuple(obj["test_ids"]), int(obj["seed"]),
                   float(obj["ratio"]))


def fisher_yates(items, seed):
    """Shuffle a copy of ``items`` with the classic descending Fisher-Yates walk."""
    out = list(items)
    rng = np.random.Generator(np.random.PCG64(seed))
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        out[i], out[j] = out[j], out[i]
    return out


def test_size(n, ratio):
    return int(math.floor(ratio * n + 0.5))


def split_once(song_ids, ratio, seed):
    ids = sorted(set(song_ids))
    n = len(ids)
    if not 0.0 < ratio < 1.0:
        raise ConfigurationError(f"split ratio must be in (0, 1), got {ratio}")
    k = test_size(n, ratio)
    if k == 0 or k == n:
        raise ConfigurationError(f"ratio {ratio} with {n} songs leaves one side empty")
    shuffled = fisher_yates(ids, seed)
    return Split(tuple(sorted(shuffled[k:])), tuple(sorted(shuffled[:k])), int(seed), float(ratio))


def make_splits(song_ids, ratio, base_seed, runs):
    """``runs`` independent splits; split k is seeded with ``base_seed + k``."""
    if runs < 1:
        raise ConfigurationError(f"runs must be >= 1, got {runs}")
    if len(set(song_ids)) < 2:
        raise ConfigurationError("need at least two songs to split")
    return [split_once(song_ids, ratio, base_seed + k) for k in range(runs)]


def write_split_manifest(path, splits, extra=None):
    doc = {"algorithm": SPLIT_ALGORITHM, "runs": [s.to_json() for s in splits]}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_split_manifest(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [Split.from_json(r) for r in doc["runs"]]
