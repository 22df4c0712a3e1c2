"""Log-frequency, log-magnitude spectrograms and crop sampling."""

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DataError, RangeError


@dataclass(frozen=True)
class SpectrogramConfig:
    sample_rate: int = 22050
    frame_size: int = 2048
    # 31.25 fps at 22050 Hz would need a 705.6-sample hop; 705 gives 31.28 fps.
    hop: int = 705
    n_bands: int = 149
    n_frames: int = 313
    crop_seconds: float = 10.0
    fmin: float = 30.0
    fmax: float = 11025.0
    # Triangles narrower than this many FFT bins are widened.
    min_band_halfwidth_bins: float = 1.0
    log_floor: float = -100.0
    eps: float = 1e-10
    window: str = "hann"

    def __post_init__(self):
        fs = self.frame_size
        if fs <= 0 or fs & (fs - 1):
            raise ConfigurationError(f"frame_size must be a power of two, got {fs}")
        if not 0 < self.hop < fs:
            raise ConfigurationError(f"hop must be in (0, frame_size), got {self.hop}")
        if not 0 < self.n_bands <= fs // 2 + 1:
            raise ConfigurationError(f"n_bands must be in [1, {fs // 2 + 1}]")
        if not 0 < self.fmin < self.fmax <= self.sample_rate / 2:
            raise ConfigurationError("need 0 < fmin < fmax <= sample_rate / 2")
        if self.window != "hann":
            raise ConfigurationError(f"unsupported window {self.window!r}")

    @property
    def crop_samples(self):
        return int(round(self.crop_seconds * self.sample_rate))

    def to_json(self):
        return asdict(self)

    def hash(self):
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray  # (n_frames, n_bands)
    source_id: str = ""
    crop_offset: int = 0


def band_centers(cfg):
    return np.geomspace(cfg.fmin, cfg.fmax, cfg.n_bands)


_FB_CACHE = {}


def filterbank(cfg):
    """Triangular filters, (n_bands, frame_size // 2 + 1), peak weight 1 at each center.

    Each triangle reaches zero at the neighbouring centers (log spacing is
    extended past both ends), but never narrower than
    ``min_band_halfwidth_bins`` FFT bins on either side.
    """
    key = cfg.hash()
    if key in _FB_CACHE:
        return _FB_CACHE[key]
    freqs = np.fft.rfftfreq(cfg.frame_size, 1.0 / cfg.sample_rate)
    centers = band_centers(cfg)
    if cfg.n_bands > 1:
        step = np.log(centers[1] / centers[0])
    else:
        step = np.log(cfg.fmax / cfg.fmin)
    min_hw = cfg.min_band_halfwidth_bins * cfg.sample_rate / cfg.frame_size
    left = np.maximum(centers - centers * np.exp(-step), min_hw)
    right = np.maximum(centers * np.exp(step) - centers, min_hw)
    d = freqs[None, :] - centers[:, None]
    w = np.where(d <= 0, 1.0 + d / left[:, None], 1.0 - d / right[:, None])
    fb = np.clip(w, 0.0, None)
    fb.setflags(write=False)
    _FB_CACHE[key] = fb
    return fb


def hann(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def power_frames(x, cfg, n_frames=None):
    """Power spectra of a center-padded STFT; returns (frames, frame_size // 2 + 1)."""
    half = cfg.frame_size // 2
    total = 1 + len(x) // cfg.hop
    if n_frames is None:
        n_frames = total
    need = (n_frames - 1) * cfg.hop + cfg.frame_size
    xp = np.zeros(max(need, len(x) + 2 * half), dtype=np.float64)
    xp[half:half + len(x)] = x
    frames = sliding_window_view(xp, cfg.frame_size)[::cfg.hop][:n_frames]
    spec = np.fft.rfft(frames * hann(cfg.frame_size), axis=1)
    return spec.real ** 2 + spec.imag ** 2


def log_bands(power, cfg):
    db = 10.0 * np.log10(power @ filterbank(cfg).T + cfg.eps)
    return np.maximum(db, cfg.log_floor)


def compute_spectrogram(w, cfg=SpectrogramConfig(), crop_offset=0):
    """Spectrogram of the ``crop_seconds`` window starting at ``crop_offset``.

    Short inputs are zero-padded at the tail; output is always
    (n_frames, n_bands).
    """
    x = np.asarray(w.samples, dtype=np.float64)
    if crop_offset < 0 or crop_offset >= max(len(x), 1):
        raise RangeError(f"crop offset {crop_offset} outside signal of {len(x)} samples")
    seg = np.zeros(cfg.crop_samples)
    chunk = x[crop_offset:crop_offset + cfg.crop_samples]
    seg[:len(chunk)] = chunk
    values = log_bands(power_frames(seg, cfg, cfg.n_frames), cfg)
    return Spectrogram(values, w.source_id, int(crop_offset))


def full_spectrogram(w, cfg=SpectrogramConfig()):
    """Spectrogram of the whole waveform, at least ``n_frames`` long (tail zero-padded)."""
    x = np.asarray(w.samples, dtype=np.float64)
    n = max(1 + len(x) // cfg.hop, cfg.n_frames)
    return log_bands(power_frames(x, cfg, n), cfg)


def random_crop_offset(w, cfg, rng):
    """Uniform sample offset in [0, max(0, len - crop_samples)]."""
    hi = max(0, len(w.samples) - cfg.crop_samples)
    return int(rng.integers(0, hi + 1))


def random_frame_offset(n_total, n_frames, rng):
    return int(rng.integers(0, max(0, n_total - n_frames) + 1))


def center_frame_offset(n_total, n_frames):
    return max(0, n_total - n_frames) // 2


def crop_frames(values, start, n_frames):
    out = values[start:start + n_frames]
    if out.shape[0] < n_frames:
        raise RangeError(f"cannot take {n_frames} frames from offset {start} of {len(values)}")
    return out


def standardize(values):
    """Zero mean, unit variance over all cells; constant inputs map to zeros."""
    v = np.asarray(values, dtype=np.float64)
    sd = v.std()
    if sd == 0.0:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


# ---------------------------------------------------------------------------
# cache files
# ---------------------------------------------------------------------------

CACHE_MAGIC = b"MSPC"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sIII")


def write_cache(path, values):
    values = np.ascontiguousarray(values, dtype="<f4")
    rows, cols = values.shape
    payload = values.tobytes()
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, rows, cols))
        fh.write(payload)
    return hashlib.sha256(payload).hexdigest()


def read_cache(path, expect_sha256=None):
    """Load a cache file; raises DataError on any header, size or hash mismatch."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if len(raw) < _CACHE_HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, rows, cols = _CACHE_HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise DataError(f"{path}: bad magic/version")
    payload = raw[_CACHE_HEADER.size:]
    if len(payload) != 4 * rows * cols:
        raise DataError(f"{path}: expected {rows}x{cols} floats, found {len(payload)} bytes")
    if expect_sha256 is not None and hashlib.sha256(payload).hexdigest() != expect_sha256:
        raise DataError(f"{path}: payload hash mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float32)
