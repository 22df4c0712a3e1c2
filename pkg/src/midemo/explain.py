"""Linear explanations: OLS fit, effects, boxplot statistics, contrast pairs, song reports."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .errors import (ConfigurationError, DegenerateCorrelationError, DimensionError,
                     SingularityError, UnknownSongError)
from .ingest import EMOTIONS, MIDLEVEL_FEATURES
from .metrics import comment_line, pearson

N_FEATURES = len(MIDLEVEL_FEATURES)
N_EMOTIONS = len(EMOTIONS)

# Singular values below this fraction of the largest count as zero.
RANK_RTOL = 1e-10


@dataclass
class LinearMap:
    """Mid-level -> emotion map: ``emotion = features @ weights + intercepts``."""

    weights: np.ndarray  # (7, 8), rows = features, columns = emotions
    intercepts: np.ndarray  # (8,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.intercepts = np.asarray(self.intercepts, dtype=np.float64)
        if self.weights.shape != (N_FEATURES, N_EMOTIONS) or self.intercepts.shape != (N_EMOTIONS,):
            raise DimensionError(f"linear map must be 7x8 + 8, got {self.weights.shape} + "
                                 f"{self.intercepts.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.intercepts))):
            raise ValueError("linear map has non-finite entries")

    def apply(self, features):
        x = np.asarray(features, dtype=np.float64)
        return x @ self.weights + self.intercepts

    def to_json(self):
        return {"weights": self.weights.tolist(), "intercepts": self.intercepts.tolist(),
                "features": list(MIDLEVEL_FEATURES), "emotions": list(EMOTIONS)}

    @classmethod
    def from_json(cls, obj):
        return cls(np.array(obj["weights"]), np.array(obj["intercepts"]))


def _design(x):
    return np.hstack([x, np.ones((x.shape[0], 1))])


def _dependent_columns(a, names):
    _, s, vt = np.linalg.svd(a, full_matrices=False)
    null = vt[s < RANK_RTOL * s[0]]
    involved = np.any(np.abs(null) > 1e-8, axis=0)
    return [n for n, hit in zip(names, involved) if hit]


def fit_ols(x, y, allow_rank_deficient=False):
    """Least squares with intercept, one column of ``y`` at a time.

    Solved through the normal equations. A design whose singular values fall
    below ``RANK_RTOL`` times the largest is rejected with a
    SingularityError naming the dependent columns, unless
    ``allow_rank_deficient`` selects the truncated pseudo-inverse.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != N_FEATURES:
        raise DimensionError(f"feature matrix must be n x {N_FEATURES}, got {x.shape}")
    if y.ndim != 2 or y.shape != (x.shape[0], N_EMOTIONS):
        raise DimensionError(f"target matrix must be {x.shape[0]} x {N_EMOTIONS}, got {y.shape}")
    if x.shape[0] < N_FEATURES + 2:
        raise ConfigurationError(f"need at least {N_FEATURES + 2} rows, got {x.shape[0]}")
    a = _design(x)
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] < RANK_RTOL * s[0]:
        if not allow_rank_deficient:
            cols = _dependent_columns(a, list(MIDLEVEL_FEATURES) + ["intercept"])
            raise SingularityError(f"rank-deficient design; dependent columns: {', '.join(cols)}",
                                   columns=cols)
        b = np.linalg.pinv(a, rcond=RANK_RTOL) @ y
    else:
        b = np.linalg.solve(a.T @ a, a.T @ y)
    return LinearMap(b[:-1], b[-1])


@dataclass
class EffectsTensor:
    values: np.ndarray  # (n, 7, 8)
    song_ids: tuple
    intercepts: np.ndarray
    provenance: dict = field(default_factory=dict)

    def predictions(self):
        return self.values.sum(axis=1) + self.intercepts

    def index(self, song_id):
        try:
            return self.song_ids.index(song_id)
        except ValueError:
            raise UnknownSongError(f"unknown song id {song_id!r}") from None


def compute_effects(lmap, x, song_ids=None, provenance=None):
    """Effect of feature f on emotion e for song s: ``weights[f, e] * x[s, f]``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != N_FEATURES:
        raise DimensionError(f"feature matrix must be n x {N_FEATURES}, got {x.shape}")
    if song_ids is None:
        song_ids = tuple(str(i) for i in range(x.shape[0]))
    if len(song_ids) != x.shape[0]:
        raise DimensionError(f"{len(song_ids)} song ids for {x.shape[0]} rows")
    values = x[:, :, None] * lmap.weights[None, :, :]
    return EffectsTensor(values, tuple(song_ids), lmap.intercepts.copy(), dict(provenance or {}))


@dataclass
class EffectsDistribution:
    """Tukey boxplot statistics per (feature, emotion) cell, each a 7 x 8 array."""

    median: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    whisker_low: np.ndarray
    whisker_high: np.ndarray
    outliers: dict  # (f, e) -> list of (song_id, value)


def effects_distribution(effects, whisker=1.5):
    v = effects.values
    if v.shape[0] < 1:
        raise ValueError("need at least one song")
    q1, med, q3 = np.percentile(v, [25, 50, 75], axis=0)
    iqr = q3 - q1
    lo_fence = q1 - whisker * iqr
    hi_fence = q3 + whisker * iqr
    inside = (v >= lo_fence) & (v <= hi_fence)
    wlo = np.where(inside, v, np.inf).min(axis=0)
    whi = np.where(inside, v, -np.inf).max(axis=0)
    outliers = {}
    for f in range(v.shape[1]):
        for e in range(v.shape[2]):
            idx = np.flatnonzero(~inside[:, f, e])
            outliers[(f, e)] = [(effects.song_ids[i], float(v[i, f, e])) for i in idx]
    return EffectsDistribution(med, q1, q3, wlo, whi, outliers)


@dataclass
class CorrelationMatrix:
    values: np.ndarray  # (7, 8); NaN where degenerate
    degenerate: np.ndarray  # bool (7, 8)


def correlation_matrix(midlevel, emotion):
    mid = np.asarray(midlevel, dtype=np.float64)
    emo = np.asarray(emotion, dtype=np.float64)
    if mid.shape[0] != emo.shape[0] or mid.shape[0] < 2:
        raise DimensionError(f"need matching row counts >= 2, got {mid.shape} and {emo.shape}")
    vals = np.full((mid.shape[1], emo.shape[1]), np.nan)
    flags = np.zeros(vals.shape, dtype=bool)
    for f in range(mid.shape[1]):
        for e in range(emo.shape[1]):
            try:
                vals[f, e] = pearson(mid[:, f], emo[:, e])
            except DegenerateCorrelationError:
                flags[f, e] = True
    return CorrelationMatrix(vals, flags)


@dataclass
class ContrastPair:
    i: int
    j: int
    song_ids: tuple
    d_e: float
    d_mid: float
    d_e_scaled: float
    d_mid_scaled: float
    d_comb: float
    score: float
    mode: str
    degenerate: bool = False

    def to_json(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _minmax(d):
    lo, hi = d.min(), d.max()
    if hi == lo:
        return np.zeros_like(d), True
    return (d - lo) / (hi - lo), False


def pair_index(k, n):
    """Row-major (i, j), i < j, of position ``k`` in a condensed distance vector."""
    i = int(n - 2 - np.floor(np.sqrt(-8 * k + 4 * n * (n - 1) - 7) / 2.0 - 0.5))
    j = int(k + i + 1 - n * (n - 1) // 2 + (n - i) * ((n - i) - 1) // 2)
    return i, j


def select_contrast_pair(emotion, midlevel, mode="paper", song_ids=None):
    """Pick the song pair with similar emotion but different mid-level profiles.

    ``mode="paper"`` maximizes ``d_E - (1 - d_Mid)`` on min-max scaled
    Euclidean distances; ``mode="intent"`` maximizes ``d_Mid - d_E``. Ties
    go to the lexicographically smallest (i, j).
    """
    emo = np.asarray(emotion, dtype=np.float64)
    mid = np.asarray(midlevel, dtype=np.float64)
    n = emo.shape[0]
    if n < 2:
        raise ConfigurationError("need at least two songs")
    if mid.shape[0] != n:
        raise DimensionError(f"{n} emotion rows but {mid.shape[0]} mid-level rows")
    if mode not in ("paper", "intent"):
        raise ConfigurationError(f"mode must be 'paper' or 'intent', got {mode!r}")
    de, dm = pdist(emo), pdist(mid)
    de_s, deg_e = _minmax(de)
    dm_s, deg_m = _minmax(dm)
    comb = de_s - (1.0 - dm_s)
    score = comb if mode == "paper" else dm_s - de_s
    k = int(np.argmax(score))
    i, j = pair_index(k, n)
    ids = tuple(song_ids) if song_ids is not None else tuple(str(t) for t in range(n))
    return ContrastPair(i, j, (ids[i], ids[j]), float(de[k]), float(dm[k]), float(de_s[k]),
                        float(dm_s[k]), float(comb[k]), float(score[k]), mode, deg_e or deg_m)


def song_report(song_id, effects, lmap, annotations=None, top_k=3):
    """Per-emotion prediction, annotation and additive effect decomposition for one song."""
    s = effects.index(song_id)
    eff = effects.values[s]
    pred = eff.sum(axis=0) + lmap.intercepts
    ann = None
    if annotations is not None:
        ann = annotations.row(song_id) if hasattr(annotations, "row") else \
            np.asarray(annotations)[s]
    emotions = []
    for e, name in enumerate(EMOTIONS):
        col = eff[:, e]
        order = np.argsort(-col, kind="stable")
        pos = [(MIDLEVEL_FEATURES[f], float(col[f])) for f in order if col[f] > 0][:top_k]
        neg = [(MIDLEVEL_FEATURES[f], float(col[f])) for f in order[::-1] if col[f] < 0][:top_k]
        emotions.append({
            "emotion": name,
            "predicted": float(pred[e]),
            "annotated": None if ann is None else float(ann[e]),
            "intercept": float(lmap.intercepts[e]),
            "effects": {MIDLEVEL_FEATURES[f]: float(col[f]) for f in range(N_FEATURES)},
            "top_positive": pos,
            "top_negative": neg,
        })
    return {"song_id": song_id, "provenance": dict(effects.provenance), "emotions": emotions}


def report_text(report):
    lines = [f"song {report['song_id']}",
             f"{'emotion':<10}{'predicted':>10}{'annotated':>10}  drivers"]
    for row in report["emotions"]:
        ann = "" if row["annotated"] is None else f"{row['annotated']:.2f}"
        drivers = ", ".join(f"{n} {v:+.3f}" for n, v in row["top_positive"] + row["top_negative"])
        lines.append(f"{row['emotion']:<10}{row['predicted']:>10.2f}{ann:>10}  {drivers}")
    return "\n".join(lines) + "\n"


def profile_table(reports):
    """Side-by-side predicted/annotated profiles for several songs."""
    ids = [r["song_id"] for r in reports]
    head = f"{'':<10}" + "".join(f"{'pred ' + s:>12}" for s in ids) + \
        "".join(f"{'ann ' + s:>12}" for s in ids)
    lines = [head]
    for e, name in enumerate(EMOTIONS):
        cells = [f"{r['emotions'][e]['predicted']:>12.2f}" for r in reports]
        cells += [f"{'' if r['emotions'][e]['annotated'] is None else format(r['emotions'][e]['annotated'], '.2f'):>12}"
                  for r in reports]
        lines.append(f"{name:<10}" + "".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def _open_csv(path, meta):
    fh = open(path, "w", newline="", encoding="utf-8")
    if meta:
        fh.write(comment_line(meta))
    return fh


def write_effects_csv(path, effects, meta=None):
    with _open_csv(path, meta) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("song_id", "feature", "emotion", "effect"))
        for s, sid in enumerate(effects.song_ids):
            for f, feat in enumerate(MIDLEVEL_FEATURES):
                for e, emo in enumerate(EMOTIONS):
                    w.writerow((sid, feat, emo, repr(float(effects.values[s, f, e]))))


def write_boxplot_csv(path, dist, meta=None):
    with _open_csv(path, meta) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("feature", "emotion", "median", "q1", "q3", "whisker_low", "whisker_high",
                    "n_outliers", "outliers"))
        for f, feat in enumerate(MIDLEVEL_FEATURES):
            for e, emo in enumerate(EMOTIONS):
                out = dist.outliers[(f, e)]
                w.writerow((feat, emo) + tuple(repr(float(a[f, e])) for a in
                           (dist.median, dist.q1, dist.q3, dist.whisker_low, dist.whisker_high))
                           + (len(out), ";".join(f"{s}:{v!r}" for s, v in out)))


def write_matrix_csv(path, matrix, row_names=MIDLEVEL_FEATURES, col_names=EMOTIONS, meta=None):
    with _open_csv(path, meta) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("feature",) + tuple(col_names))
        for name, row in zip(row_names, np.asarray(matrix)):
            w.writerow((name,) + tuple("nan" if np.isnan(v) else repr(float(v)) for v in row))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
