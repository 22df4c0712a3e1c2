import numpy as np
import pytest

from midemo.ingest import EMOTIONS, MIDLEVEL_FEATURES, AnnotationTable
from midemo.models import TrunkConfig
from midemo.trainer import SongDataset

TINY_TRUNK = TrunkConfig(widths=(4, 4, 8, 8, 8), embedding_dim=8, dropout=0.0)


def direct_dft_magnitude(x, freqs, sample_rate):
    """|sum_n x[n] exp(-2 pi i f n / sr)| evaluated by explicit summation."""
    n = np.arange(len(x))
    return np.array([abs(np.sum(x * np.exp(-2j * np.pi * f * n / sample_rate))) for f in freqs])


def synthetic_tables(n, seed=0, prefix="s"):
    rng = np.random.default_rng(seed)
    ids = tuple(f"{prefix}{i:03d}" for i in range(n))
    mid = rng.uniform(0.1, 1.0, (n, len(MIDLEVEL_FEATURES)))
    w = rng.normal(0, 0.3, (len(MIDLEVEL_FEATURES), len(EMOTIONS)))
    emo = np.clip(0.4 + (mid - 0.55) @ w + rng.normal(0, 0.02, (n, len(EMOTIONS))), 0.1, 0.783)
    return ids, AnnotationTable(ids, "midlevel", mid), AnnotationTable(ids, "emotion", emo)


def synthetic_dataset(n, frames=40, bands=24, seed=0, prefix="s"):
    """Songs whose spectrogram intensity encodes the first mid-level feature."""
    ids, mid, emo = synthetic_tables(n, seed, prefix)
    rng = np.random.default_rng(seed + 1)
    specs = {}
    for k, s in enumerate(ids):
        base = rng.normal(-60, 5, (frames, bands))
        base[:, : bands // 2] += 40 * mid.values[k, 0]
        base[:, bands // 2:] += 40 * mid.values[k, 1]
        specs[s] = base.astype(np.float32)
    return SongDataset(ids, specs, mid, emo)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, filled in by tests/test_acceptance.py.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
