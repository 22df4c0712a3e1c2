"""Training with early stopping, and the multi-run evaluation protocol."""

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dsp
from .errors import ConfigurationError, DataError, JoinError, NumericError
from .explain import LinearMap, fit_ols
from .ingest import EMOTIONS, MIDLEVEL_FEATURES, fisher_yates, make_splits, split_once
from .metrics import aggregate_results, columnwise_pearson
from .models import (A2E, A2MID, A2MID2E, JOINT, SchemeModel, TrunkConfig, build_model,
                     forward_outputs, to_network_input)
from .nn import AdamState, adam_step, load_checkpoint, mse, mse_grad, save_checkpoint

log = logging.getLogger(__name__)

A2MID_PLUS = "A2Mid+"
MID2E = "Mid2E"
PROTOCOL_SCHEMES = (A2E, A2MID2E, JOINT, A2MID, A2MID_PLUS, MID2E)
A2MID_PLUS_TEST_RATIO = 0.08


@dataclass(frozen=True)
class TrainingConfig:
    lr: float = 0.0005
    batch_size: int = 8
    patience: int = 50
    max_epochs: int = 1000
    seed: int = 0
    val_fraction: float = 0.1
    crop_frames: int = 313

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must be in (0, 1)")
        if self.max_epochs < 1:
            raise ConfigurationError("max_epochs must be >= 1")


@dataclass
class SongDataset:
    """Full-length spectrograms (frames x bands) plus optional annotation tables."""

    song_ids: tuple
    spectrograms: dict
    midlevel: object = None
    emotion: object = None

    def __post_init__(self):
        self.song_ids = tuple(self.song_ids)
        missing = [s for s in self.song_ids if s not in self.spectrograms]
        for table in (self.midlevel, self.emotion):
            if table is not None:
                missing += [s for s in self.song_ids if s not in table]
        if missing:
            raise JoinError(f"{len(missing)} song(s) lack spectrogram or annotations: "
                            f"{sorted(set(missing))[:10]}", missing=set(missing))

    def __len__(self):
        return len(self.song_ids)

    def subset(self, ids):
        return SongDataset(tuple(ids), self.spectrograms, self.midlevel, self.emotion)

    def targets(self, kind, ids=None):
        ids = self.song_ids if ids is None else ids
        table = self.midlevel if kind == "midlevel" else self.emotion
        if table is None:
            raise DataError(f"dataset has no {kind} annotations")
        return table.rows(list(ids))

    def batch(self, ids, crop_frames, rng=None):
        """Stacked crops: random offsets when ``rng`` is given, else center crops."""
        out = []
        for s in ids:
            spec = self.spectrograms[s]
            if rng is None:
                start = dsp.center_frame_offset(len(spec), crop_frames)
            else:
                start = dsp.random_frame_offset(len(spec), crop_frames, rng)
            out.append(dsp.crop_frames(spec, start, crop_frames))
        return np.stack(out)


@dataclass
class EarlyStopping:
    """Tracks the best validation loss; signals a stop after ``patience`` stale epochs."""

    patience: int
    best_loss: float = math.inf
    best_epoch: int = 0
    best_state: dict = None

    def update(self, epoch, loss, network):
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = epoch
            self.best_state = network.state_dict()
        return epoch - self.best_epoch >= self.patience


@dataclass
class TrainOutcome:
    epochs: int
    best_epoch: int
    best_val_loss: float
    history: list = field(default_factory=list)
    adam: AdamState = None


TARGETS_FOR = {A2E: "emotion", A2MID: "midlevel", A2MID2E: "midlevel", JOINT: "both"}


def _loss_and_grads(model, x, y_mid, y_emo, targets, rng, where):
    pred, tape = forward_outputs(model, x, train=True, rng=rng)
    net = model.network
    if targets == "emotion":
        loss = mse(pred.emotion, y_emo)
    elif targets == "midlevel":
        loss = mse(pred.midlevel, y_mid)
    else:
        loss = mse(pred.midlevel, y_mid) + mse(pred.emotion, y_emo)
    if not math.isfinite(loss):
        raise NumericError(f"non-finite training loss ({loss}) at {where}")
    if targets == "emotion":
        grads, _ = net.backward(tape, mse_grad(pred.emotion, y_emo))
    elif targets == "midlevel":
        grads, _ = net.backward(tape, mse_grad(pred.midlevel, y_mid))
    else:
        grads, _ = net.backward(tape, mse_grad(pred.emotion, y_emo),
                                inject={model.mid_index: mse_grad(pred.midlevel, y_mid)})
    return loss, grads


def eval_loss(model, dataset, targets, crop_frames, batch_size=32):
    ids = list(dataset.song_ids)
    total, count = 0.0, 0
    for k in range(0, len(ids), batch_size):
        chunk = ids[k:k + batch_size]
        x = to_network_input(dataset.batch(chunk, crop_frames), model.network.dtype)
        pred, _ = forward_outputs(model, x)
        loss = 0.0
        if targets in ("midlevel", "both"):
            loss += mse(pred.midlevel, dataset.targets("midlevel", chunk))
        if targets in ("emotion", "both"):
            loss += mse(pred.emotion, dataset.targets("emotion", chunk))
        total += loss * len(chunk)
        count += len(chunk)
    return total / count


def validation_split(ids, fraction, seed):
    ids = sorted(ids)
    k = max(1, int(math.floor(fraction * len(ids) + 0.5)))
    if k >= len(ids):
        raise ConfigurationError(f"{len(ids)} songs are too few for a validation split")
    shuffled = fisher_yates(ids, seed)
    return tuple(sorted(shuffled[k:])), tuple(sorted(shuffled[:k]))


def train(model, dataset, targets, cfg, validation=None, on_epoch=None):
    """Train in place; restores the best-validation parameters before returning.

    Without an explicit ``validation`` dataset, ``cfg.val_fraction`` of the
    songs (chosen by ``cfg.seed``) is held out for early stopping.
    """
    if targets not in ("midlevel", "emotion", "both"):
        raise ConfigurationError(f"targets must be midlevel, emotion or both, got {targets!r}")
    if TARGETS_FOR[model.scheme] != targets:
        raise ConfigurationError(f"{model.scheme} trains on {TARGETS_FOR[model.scheme]} targets")
    if len(dataset) == 0:
        raise ConfigurationError("empty training set")
    if validation is None:
        train_ids, val_ids = validation_split(dataset.song_ids, cfg.val_fraction, cfg.seed)
        train_set, validation = dataset.subset(train_ids), dataset.subset(val_ids)
    else:
        train_set = dataset
    need_mid = targets in ("midlevel", "both")
    need_emo = targets in ("emotion", "both")

    net = model.network
    params = net.param_arrays()
    adam = AdamState.for_params(params, lr=cfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    stopper = EarlyStopping(cfg.patience)
    history = []
    ids = list(train_set.song_ids)
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(ids))
        running, seen = 0.0, 0
        for k in range(0, len(ids), cfg.batch_size):
            chunk = [ids[i] for i in order[k:k + cfg.batch_size]]
            x = to_network_input(train_set.batch(chunk, cfg.crop_frames, rng), net.dtype)
            y_mid = train_set.targets("midlevel", chunk) if need_mid else None
            y_emo = train_set.targets("emotion", chunk) if need_emo else None
            where = f"epoch {epoch}, batch {k // cfg.batch_size}"
            loss, grads = _loss_and_grads(model, x, y_mid, y_emo, targets, rng, where)
            adam_step(params, grads, adam)
            running += loss * len(chunk)
            seen += len(chunk)
        val = eval_loss(model, validation, targets, cfg.crop_frames)
        if not math.isfinite(val):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        record = {"epoch": epoch, "train_loss": running / seen, "val_loss": val, "lr": cfg.lr}
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if stopper.update(epoch, val, net):
            log.info("early stop at epoch %d (best %d, val %.6f)", epoch, stopper.best_epoch,
                     stopper.best_loss)
            break
    net.load_state_dict(stopper.best_state)
    return model, TrainOutcome(epoch, stopper.best_epoch, stopper.best_loss, history, adam)


@dataclass
class EvalResult:
    song_ids: tuple
    columns: tuple
    predictions: np.ndarray
    targets: np.ndarray
    r: dict
    degenerate: dict


def predict_dataset(model, dataset, crop_frames=313, batch_size=32):
    """Center-crop eval-mode predictions: ``(midlevel or None, emotion or None)``."""
    mids, emos = [], []
    ids = list(dataset.song_ids)
    for k in range(0, len(ids), batch_size):
        x = to_network_input(dataset.batch(ids[k:k + batch_size], crop_frames),
                             model.network.dtype)
        pred, _ = forward_outputs(model, x)
        if pred.midlevel is not None:
            mids.append(np.asarray(pred.midlevel, dtype=np.float64))
        if pred.emotion is not None:
            emos.append(np.asarray(pred.emotion, dtype=np.float64))
    return (np.vstack(mids) if mids else None), (np.vstack(emos) if emos else None)


def evaluate_on_test(model, test, kind="emotion", crop_frames=313):
    """Per-target Pearson r on the test set, using a deterministic center crop."""
    if len(test) < 2:
        raise ConfigurationError("correlation is undefined for fewer than 2 test songs")
    mid, emo = predict_dataset(model, test, crop_frames)
    pred = emo if kind == "emotion" else mid
    if pred is None:
        raise ConfigurationError(f"{model.scheme} does not predict {kind}")
    return score_predictions(test.song_ids, pred, test.targets(kind), kind)


def score_predictions(song_ids, pred, target, kind):
    columns = EMOTIONS if kind == "emotion" else MIDLEVEL_FEATURES
    r, flags = columnwise_pearson(pred, target, columns)
    return EvalResult(tuple(song_ids), columns, pred, target, r, flags)


def train_a2mid2e(midlevel_dataset, soundtracks, train_ids, cfg, trunk_config=TrunkConfig(),
                  exclude_ids=(), seed=0, on_epoch=None):
    """Two-stage A2Mid2E: train the mid-level network, then fit OLS on its predictions.

    Stage 1 trains on the mid-level dataset minus ``exclude_ids`` (the
    Soundtracks test songs). Stage 2 regresses emotion annotations of
    ``train_ids`` on stage-1 predictions for those songs.
    """
    missing = set(soundtracks.song_ids) - set(midlevel_dataset.song_ids)
    if missing:
        raise JoinError(f"{len(missing)} Soundtracks song(s) absent from the mid-level dataset: "
                        f"{sorted(missing)[:10]}", missing=missing)
    excluded = set(exclude_ids)
    stage1_ids = [s for s in midlevel_dataset.song_ids if s not in excluded]
    model = build_model(A2MID2E, trunk_config, seed)
    model, outcome = train(model, midlevel_dataset.subset(stage1_ids), "midlevel", cfg,
                           on_epoch=on_epoch)
    lmap = fit_stage2(model, soundtracks.subset(train_ids), cfg.crop_frames)
    model.linear_map = lmap
    return model, lmap, outcome


def fit_stage2(model, train_set, crop_frames=313):
    mid, _ = predict_dataset(model, train_set, crop_frames)
    return fit_ols(mid, train_set.targets("emotion"))


# ---------------------------------------------------------------------------
# checkpoints for scheme models
# ---------------------------------------------------------------------------

def save_model(path, model, adam=None, meta=None):
    save_checkpoint(path, model.network, adam, {"model": model.descriptor(), **(meta or {})})


def load_model(path):
    ck = load_checkpoint(path)
    desc = ck.meta["model"]
    lmap = LinearMap.from_json(desc["linear_map"]) if "linear_map" in desc else None
    model = SchemeModel(desc["scheme"], TrunkConfig.from_json(desc["trunk_config"]),
                        ck.network, desc["n_trunk_layers"], lmap, ck.meta)
    return model, ck.adam


# ---------------------------------------------------------------------------
# protocol
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    scheme: str
    run: int
    seed: int
    kind: str
    r: dict
    degenerate: dict
    epochs: int = 0
    best_val_loss: float = None
    checkpoint: str = None

    def to_json(self):
        return asdict(self)


@dataclass
class ProtocolResult:
    scheme: str
    runs: list
    mean: object  # metrics.ResultsRow


@dataclass
class Datasets:
    soundtracks: SongDataset = None
    midlevel: SongDataset = None


def protocol_splits(scheme, datasets, runs, base_seed, ratio=0.2):
    if scheme == A2MID_PLUS:
        return [split_once(datasets.midlevel.song_ids, A2MID_PLUS_TEST_RATIO, base_seed)]
    return make_splits(datasets.soundtracks.song_ids, ratio, base_seed, runs)


def _run_one(scheme, datasets, split, k, trunk_config, cfg, out_dir, meta=None):
    run_cfg = replace(cfg, seed=split.seed)
    log_path = None
    history = []

    def on_epoch(rec):
        history.append(rec)
        if log_path:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    if out_dir:
        log_path = os.path.join(out_dir, f"run_{k:02d}.log.jsonl")
        if os.path.exists(log_path):
            os.remove(log_path)

    st = datasets.soundtracks
    ckpt = None
    if scheme == MID2E:
        train_set, test_set = st.subset(split.train_ids), st.subset(split.test_ids)
        lmap = fit_ols(train_set.targets("midlevel"), train_set.targets("emotion"))
        res = score_predictions(split.test_ids, lmap.apply(test_set.targets("midlevel")),
                                test_set.targets("emotion"), "emotion")
        return RunResult(scheme, k, split.seed, "emotion", res.r, res.degenerate)

    if scheme == A2MID2E:
        model, _, outcome = train_a2mid2e(datasets.midlevel, st, split.train_ids, run_cfg,
                                          trunk_config, exclude_ids=split.test_ids,
                                          seed=split.seed, on_epoch=on_epoch)
        test_set, kind = st.subset(split.test_ids), "emotion"
    else:
        source = datasets.midlevel if scheme == A2MID_PLUS else st
        arch = A2MID if scheme == A2MID_PLUS else scheme
        model = build_model(arch, trunk_config, split.seed)
        model, outcome = train(model, source.subset(split.train_ids), TARGETS_FOR[arch],
                               run_cfg, on_epoch=on_epoch)
        test_set = source.subset(split.test_ids)
        kind = "midlevel" if arch == A2MID else "emotion"
    res = evaluate_on_test(model, test_set, kind, cfg.crop_frames)
    if out_dir:
        ckpt = os.path.join(out_dir, f"run_{k:02d}.ckpt")
        save_model(ckpt, model, outcome.adam, {**(meta or {}), "run": k, "seed": split.seed})
    return RunResult(scheme, k, split.seed, kind, res.r, res.degenerate, outcome.epochs,
                     outcome.best_val_loss, ckpt)


def _run_star(args):
    return _run_one(*args)


def run_protocol(scheme, datasets, runs=10, base_seed=0, trunk_config=TrunkConfig(),
                 cfg=TrainingConfig(), out_dir=None, jobs=1, test_ratio=0.2, meta=None):
    """Repeat training/evaluation over seeded splits and average Pearson r per target.

    Run k uses split seed ``base_seed + k``. If any run fails, the finished
    runs are written to ``out_dir/partial.json`` before the error propagates.
    ``meta`` is copied into every checkpoint.
    """
    if scheme not in PROTOCOL_SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; expected one of {PROTOCOL_SCHEMES}")
    if runs < 1:
        raise ConfigurationError("runs must be >= 1")
    splits = protocol_splits(scheme, datasets, runs, base_seed, test_ratio)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    tasks = [(scheme, datasets, s, k, trunk_config, cfg, out_dir, meta)
             for k, s in enumerate(splits)]
    results = []
    try:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for res in pool.map(_run_star, tasks):
                    results.append(res)
        else:
            for t in tasks:
                results.append(_run_one(*t))
    except Exception:
        if out_dir:
            with open(os.path.join(out_dir, "partial.json"), "w", encoding="utf-8") as fh:
                json.dump([r.to_json() for r in results], fh, indent=2, sort_keys=True)
        raise
    columns = EMOTIONS if results[0].kind == "emotion" else MIDLEVEL_FEATURES
    mean = aggregate_results([r.r for r in results], scheme, columns)
    return ProtocolResult(scheme, results, mean)
