"""``midemo`` command line: prepare -> train -> eval / coe / explain / report.

Output directory layout::

    cache/        <song_id>.spec spectrograms + <song_id>.json sidecars, manifest.json
    splits/       soundtracks.json, midlevel_plus.json
    checkpoints/  <scheme>/run_XX.ckpt, run_XX.log.jsonl, run_XX.json
    results/      <scheme>.csv/.json, <scheme>_eval.*, coe_*.*, table.*
    explain/      <scheme>/effects.csv, boxplot.csv, weights.csv, correlation.csv, ...

Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 numeric failure.
"""

import argparse
import glob
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import dsp
from .config import load_config
from .errors import (ConfigurationError, DataError, MidemoError, NumericError,
                     UnsupportedSchemeError)
from .explain import (compute_effects, correlation_matrix, effects_distribution,
                      fit_ols, profile_table, report_text, select_contrast_pair, song_report,
                      write_boxplot_csv, write_effects_csv, write_json, write_matrix_csv)
from .ingest import EMOTIONS, MIDLEVEL_FEATURES, SPLIT_ALGORITHM, load_annotations, load_audio
from .metrics import (aggregate_results, cost_of_explainability, read_results,
                      write_results_csv, write_results_json)
from .models import A2E, A2MID, A2MID2E, JOINT, extract_linear_map
from .trainer import (A2MID_PLUS, MID2E, Datasets, SongDataset, evaluate_on_test, load_model,
                      predict_dataset, protocol_splits, run_protocol)

log = logging.getLogger("midemo")

SCHEMES = {"a2e": A2E, "a2mid2e": A2MID2E, "joint": JOINT, "a2mid": A2MID,
           "a2mid+": A2MID_PLUS, "mid2e": MID2E}
SLUGS = {A2E: "a2e", A2MID2E: "a2mid2e", JOINT: "joint", A2MID: "a2mid",
         A2MID_PLUS: "a2mid_plus", MID2E: "mid2e"}

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# small file helpers
# ---------------------------------------------------------------------------

def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_if_changed(path, text):
    """Write ``text`` unless the file already holds exactly it; returns True if written."""
    data = text.encode("utf-8")
    try:
        with open(path, "rb") as fh:
            if fh.read() == data:
                return False
    except OSError:
        pass
    with open(path, "wb") as fh:
        fh.write(data)
    return True


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _provenance(cfg):
    return {"config_hash": cfg.hash(), "seed": cfg.base_seed}


def _audio_index(directory):
    return {os.path.splitext(os.path.basename(p))[0]: p
            for p in sorted(glob.glob(os.path.join(directory, "*.wav")))}


# ---------------------------------------------------------------------------
# dataset assembly
# ---------------------------------------------------------------------------

def _tables(cfg):
    emo = mid = None
    if cfg.data.get("soundtracks_emotion"):
        emo = load_annotations(cfg.path("soundtracks_emotion"), "emotion")
    if cfg.data.get("midlevel_annotations"):
        mid = load_annotations(cfg.path("midlevel_annotations"), "midlevel")
    if emo is None and mid is None:
        raise DataError("no annotation files configured under [data]")
    return emo, mid


def _sources(cfg):
    """song_id -> audio path; Soundtracks audio wins when an id appears in both folders."""
    out = {}
    for key in ("midlevel_audio", "soundtracks_audio"):
        if cfg.data.get(key):
            out.update(_audio_index(cfg.path(key)))
    return out


def _cache_paths(cfg, song_id):
    d = os.path.join(cfg.output_dir, "cache")
    return os.path.join(d, f"{song_id}.spec"), os.path.join(d, f"{song_id}.json")


def _read_sidecar(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError):
        return None


def _load_spectrogram(cfg, song_id):
    spec_path, side_path = _cache_paths(cfg, song_id)
    side = _read_sidecar(side_path)
    if side is None:
        raise DataError(f"no cached spectrogram for {song_id!r}; run `midemo prepare` first")
    if side.get("spectrogram_hash") != cfg.spectrogram.hash():
        raise DataError(f"cache for {song_id!r} was built with another spectrogram config; "
                        "rerun `midemo prepare`")
    return dsp.read_cache(spec_path, side["payload_sha256"])


def _datasets(cfg, scheme):
    emo, mid = _tables(cfg)
    need_audio = scheme != MID2E
    st = ml = None
    if emo is not None:
        ids = emo.song_ids
        specs = {s: _load_spectrogram(cfg, s) for s in ids} if need_audio else dict.fromkeys(ids)
        mid_st = mid.subset(ids) if mid is not None and all(s in mid for s in ids) else None
        st = SongDataset(ids, specs, mid_st, emo)
    if mid is not None and scheme in (A2MID2E, A2MID_PLUS):
        specs = {s: _load_spectrogram(cfg, s) for s in mid.song_ids}
        ml = SongDataset(mid.song_ids, specs, mid, None)
    if scheme in (A2E, JOINT, A2MID, A2MID2E, MID2E) and st is None:
        raise DataError(f"{scheme} needs [data].soundtracks_emotion")
    if scheme in (JOINT, A2MID, MID2E) and st.midlevel is None:
        raise DataError(f"{scheme} needs mid-level annotations for every Soundtracks song")
    if scheme in (A2MID2E, A2MID_PLUS) and ml is None:
        raise DataError(f"{scheme} needs [data].midlevel_annotations")
    return Datasets(soundtracks=st, midlevel=ml)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_prepare(cfg, args):
    emo, mid = _tables(cfg)
    sources = _sources(cfg)
    problems, notes = [], []
    for key, table in (("soundtracks", emo), ("midlevel", mid)):
        if table is None:
            continue
        if not cfg.data.get(f"{key}_audio"):
            problems.append(f"[data].{key}_audio is not set")
            continue
        present = _audio_index(cfg.path(f"{key}_audio"))
        no_ann = sorted(set(present) - set(table.song_ids))
        no_audio = sorted(s for s in table.song_ids if s not in sources)
        problems += [f"{key}: audio {s}.wav has no annotation" for s in no_ann]
        problems += [f"{key}: annotated song {s} has no audio" for s in no_audio]
    if emo is not None and mid is not None:
        absent = sorted(s for s in emo.song_ids if s not in mid)
        if absent:
            notes.append(f"{len(absent)} Soundtracks song(s) lack mid-level annotations; "
                         "A2Mid2E, joint, a2mid and mid2e will refuse to run")
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_if_changed(os.path.join(cfg.output_dir, "validation_report.json"),
                      _json_text({"problems": problems, "notes": notes, **_provenance(cfg)}))
    if problems:
        for p in problems[:20]:
            print(p, file=sys.stderr)
        raise DataError(f"validation failed with {len(problems)} problem(s); "
                        "see validation_report.json")

    ids = sorted(set(emo.song_ids if emo else ()) | set(mid.song_ids if mid else ()))
    cache_dir = cfg.subdir("cache")
    spec_hash = cfg.spectrogram.hash()
    written = 0
    payloads = {}
    for s in ids:
        spec_path, side_path = _cache_paths(cfg, s)
        source_sha = _sha256_file(sources[s])
        side = _read_sidecar(side_path)
        if side and side.get("spectrogram_hash") == spec_hash and \
                side.get("source_sha256") == source_sha:
            try:
                dsp.read_cache(spec_path, side["payload_sha256"])
                payloads[s] = side["payload_sha256"]
                continue
            except DataError as exc:
                log.warning("re-deriving %s: %s", s, exc)
        wave = load_audio(sources[s], cfg.spectrogram.sample_rate, s)
        values = dsp.full_spectrogram(wave, cfg.spectrogram)
        payloads[s] = dsp.write_cache(spec_path, values)
        _write_if_changed(side_path, _json_text({
            "song_id": s, "source_sha256": source_sha, "spectrogram_hash": spec_hash,
            "payload_sha256": payloads[s], "shape": list(values.shape),
            "units": "dB", "network_input": "per-crop standardization (zero mean, unit variance)"}))
        written += 1
    manifest = {"spectrogram_config": cfg.spectrogram.to_json(), "spectrogram_hash": spec_hash,
                "songs": payloads, **_provenance(cfg)}
    written += _write_if_changed(os.path.join(cache_dir, "manifest.json"), _json_text(manifest))

    split_dir = cfg.subdir("splits")
    extra = {"algorithm": SPLIT_ALGORITHM, **_provenance(cfg)}
    ds = Datasets(soundtracks=SongDataset(emo.song_ids, dict.fromkeys(emo.song_ids))
                  if emo else None,
                  midlevel=SongDataset(mid.song_ids, dict.fromkeys(mid.song_ids)) if mid else None)
    if emo is not None:
        splits = protocol_splits(A2E, ds, cfg.runs, cfg.base_seed, cfg.test_ratio)
        written += _write_if_changed(os.path.join(split_dir, "soundtracks.json"), _json_text(
            {**extra, "runs": [sp.to_json() for sp in splits]}))
    if mid is not None:
        splits = protocol_splits(A2MID_PLUS, ds, 1, cfg.base_seed)
        written += _write_if_changed(os.path.join(split_dir, "midlevel_plus.json"), _json_text(
            {**extra, "runs": [sp.to_json() for sp in splits]}))
    print(f"prepared {len(ids)} song(s); {written} file(s) written")
    return EXIT_OK


def _write_rows(cfg, stem, rows, formats, extra_meta=None):
    meta = {**_provenance(cfg), **(extra_meta or {})}
    res_dir = cfg.subdir("results")
    paths = []
    if "csv" in formats:
        p = os.path.join(res_dir, f"{stem}.csv")
        write_results_csv(p, rows, meta=_provenance(cfg))
        paths.append(p)
    if "json" in formats:
        p = os.path.join(res_dir, f"{stem}.json")
        write_results_json(p, rows, meta)
        paths.append(p)
    return paths


def _print_rows(rows):
    cols = rows[0].columns
    print(f"{'scheme':<16}" + "".join(f"{c[:8]:>9}" for c in cols) + f"{'mean':>9}")
    for r in rows:
        print(f"{r.name:<16}" + "".join(f"{v:>9.3f}" for v in r.values) + f"{r.mean:>9.3f}")


def cmd_train(cfg, args):
    scheme = SCHEMES[cfg.scheme]
    datasets = _datasets(cfg, scheme)
    out_dir = None if scheme == MID2E else cfg.subdir(os.path.join("checkpoints", SLUGS[scheme]))
    res = run_protocol(scheme, datasets, runs=cfg.runs, base_seed=cfg.base_seed,
                       trunk_config=cfg.trunk, cfg=cfg.training, out_dir=out_dir,
                       jobs=cfg.jobs, test_ratio=cfg.test_ratio, meta=_provenance(cfg))
    if out_dir:
        for r in res.runs:
            write_json(os.path.join(out_dir, f"run_{r.run:02d}.json"),
                       {**r.to_json(), "checkpoint": os.path.basename(r.checkpoint or ""),
                        "config_hash": cfg.hash()})
    runs = [{"run": r.run, "seed": r.seed, "epochs": r.epochs, "r": r.r,
             "degenerate": r.degenerate} for r in res.runs]
    _write_rows(cfg, SLUGS[scheme], [res.mean], args.formats, {"runs": runs, "scheme": scheme})
    _print_rows([res.mean])
    return EXIT_OK


def _eval_target(scheme, datasets, split):
    if scheme == A2MID_PLUS:
        return datasets.midlevel.subset(split.test_ids), "midlevel"
    kind = "midlevel" if scheme == A2MID else "emotion"
    return datasets.soundtracks.subset(split.test_ids), kind


def cmd_eval(cfg, args):
    scheme = SCHEMES[cfg.scheme]
    if scheme == MID2E:
        raise ConfigurationError("mid2e has no checkpoints; `midemo train --scheme mid2e` "
                                 "fits and evaluates it directly")
    datasets = _datasets(cfg, scheme)
    ck_dir = os.path.join(cfg.output_dir, "checkpoints", SLUGS[scheme])
    paths = sorted(glob.glob(os.path.join(ck_dir, "run_*.ckpt")))
    if not paths:
        raise DataError(f"no checkpoints under {ck_dir}; run `midemo train` first")
    splits = protocol_splits(scheme, datasets, cfg.runs, cfg.base_seed, cfg.test_ratio)
    runs = []
    for p in paths:
        model, _ = load_model(p)
        k = int(model.meta["run"])
        if k >= len(splits) or model.meta.get("seed") != splits[k].seed:
            raise DataError(f"{p}: run {k} does not match the configured splits")
        test, kind = _eval_target(scheme, datasets, splits[k])
        res = evaluate_on_test(model, test, kind, cfg.training.crop_frames)
        runs.append({"run": k, "seed": splits[k].seed, "r": res.r, "degenerate": res.degenerate})
    cols = EMOTIONS if kind == "emotion" else MIDLEVEL_FEATURES
    mean = aggregate_results([r["r"] for r in runs], scheme, cols)
    _write_rows(cfg, f"{SLUGS[scheme]}_eval", [mean], args.formats, {"runs": runs})
    _print_rows([mean])
    return EXIT_OK


def _pick_row(path, name):
    rows = read_results(path)
    if name is None:
        return rows[0]
    for r in rows:
        if r.name == name:
            return r
    raise DataError(f"{path}: no row named {name!r}; found {[r.name for r in rows]}")


def cmd_coe(cfg, args):
    base = _pick_row(args.baseline, args.baseline_row)
    cand = _pick_row(args.candidate, args.candidate_row)
    report = cost_of_explainability(base, cand)
    row = report.as_row()
    stem = f"coe_{row.name[4:].lower().replace('+', '_plus')}"
    _write_rows(cfg, stem, [row], args.formats, {"baseline": base.name, "candidate": cand.name})
    _print_rows([row])
    return EXIT_OK


def _explain_inputs(cfg, args):
    """(LinearMap, predicted-or-annotated mid-level features, dataset, provenance)."""
    scheme = SCHEMES[cfg.scheme]
    if scheme == MID2E and not args.checkpoint:
        st = _datasets(cfg, MID2E).soundtracks
        x = st.targets("midlevel")
        return fit_ols(x, st.targets("emotion")), x, st, {"features": "annotated",
                                                          "map": "ols on all annotations"}
    path = args.checkpoint or os.path.join(cfg.output_dir, "checkpoints", SLUGS[scheme],
                                           "run_00.ckpt")
    if not os.path.exists(path):
        raise DataError(f"checkpoint {path} not found")
    model, _ = load_model(path)
    if model.scheme == A2E:
        raise UnsupportedSchemeError(
            "A2E maps audio straight to emotions and has no mid-level -> emotion linear layer, "
            "so there are no effects to explain; use an a2mid2e or joint checkpoint")
    lmap = extract_linear_map(model)
    st = _datasets(cfg, A2E).soundtracks
    x, _ = predict_dataset(model, st, cfg.training.crop_frames)
    return lmap, x, st, {"features": "predicted", "checkpoint": os.path.basename(path)}


def _plots(out_dir, lmap, dist, corr):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "midemo"
    meta = {"Date": None}

    fig, axes = plt.subplots(2, 4, figsize=(16, 7), sharey=True)
    for e, ax in enumerate(axes.ravel()):
        stats = [{"med": dist.median[f, e], "q1": dist.q1[f, e], "q3": dist.q3[f, e],
                  "whislo": dist.whisker_low[f, e], "whishi": dist.whisker_high[f, e],
                  "fliers": [v for _, v in dist.outliers[(f, e)]], "label": name[:10]}
                 for f, name in enumerate(MIDLEVEL_FEATURES)]
        ax.bxp(stats, orientation="horizontal")
        ax.axvline(0.0, color="0.6", lw=0.8)
        ax.set_title(EMOTIONS[e])
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "effects.svg"), metadata=meta)
    plt.close(fig)

    for name, matrix, title in (("weights", lmap.weights, "weights"),
                                ("correlation", corr.values, "pearson r")):
        fig, ax = plt.subplots(figsize=(8, 5))
        lim = float(np.nanmax(np.abs(matrix))) or 1.0
        im = ax.imshow(matrix, cmap="RdBu_r", vmin=-lim, vmax=lim)
        ax.set_xticks(range(len(EMOTIONS)), EMOTIONS, rotation=45, ha="right")
        ax.set_yticks(range(len(MIDLEVEL_FEATURES)), MIDLEVEL_FEATURES)
        for (i, j), v in np.ndenumerate(matrix):
            ax.text(j, i, "" if np.isnan(v) else f"{v:.2f}", ha="center", va="center", size=7)
        fig.colorbar(im, ax=ax, label=title)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, f"{name}.svg"), metadata=meta)
        plt.close(fig)


def cmd_explain(cfg, args):
    lmap, x, st, prov = _explain_inputs(cfg, args)
    out_dir = cfg.subdir(os.path.join("explain", SLUGS[SCHEMES[cfg.scheme]]))
    meta = _provenance(cfg)
    effects = compute_effects(lmap, x, st.song_ids, prov)
    dist = effects_distribution(effects)
    ann_mid = st.midlevel.values if st.midlevel is not None else None
    feats = ann_mid if ann_mid is not None else x
    corr = correlation_matrix(feats, st.targets("emotion"))

    reports, pair = [], None
    if args.pair_mode:
        pair = select_contrast_pair(st.targets("emotion"), feats, args.pair_mode, st.song_ids)
        reports += [song_report(s, effects, lmap, st.emotion) for s in pair.song_ids]
    for s in args.songs or ():
        reports.append(song_report(s, effects, lmap, st.emotion))

    if "csv" in args.formats:
        write_effects_csv(os.path.join(out_dir, "effects.csv"), effects, meta)
        write_boxplot_csv(os.path.join(out_dir, "boxplot.csv"), dist, meta)
        write_matrix_csv(os.path.join(out_dir, "weights.csv"),
                         np.vstack([lmap.weights, lmap.intercepts]),
                         MIDLEVEL_FEATURES + ("intercept",), meta=meta)
        write_matrix_csv(os.path.join(out_dir, "correlation.csv"), corr.values, meta=meta)
    if "json" in args.formats:
        write_json(os.path.join(out_dir, "explain.json"), {
            **meta, "provenance": prov, "linear_map": lmap.to_json(),
            "correlation": {"source": "annotated" if ann_mid is not None else "predicted",
                            "values": [[None if np.isnan(v) else float(v) for v in row]
                                       for row in corr.values],
                            "degenerate": corr.degenerate.tolist()},
            "pair": None if pair is None else pair.to_json(),
            "reports": reports})
    if "svg" in args.formats:
        _plots(out_dir, lmap, dist, corr)
    if reports:
        text = "".join(report_text(r) + "\n" for r in reports) + profile_table(reports)
        with open(os.path.join(out_dir, "reports.txt"), "w", encoding="utf-8") as fh:
            fh.write(text)
        print(text, end="")
    if pair is not None:
        print(f"contrast pair ({pair.mode}): {pair.song_ids[0]} vs {pair.song_ids[1]}, "
              f"d_comb={pair.d_comb:.4f}")
    print(f"explanations written to {out_dir}")
    return EXIT_OK


REPORT_ORDER = ("A2E", "A2Mid2E", "A2Mid2E-Joint", "Mid2E", "A2Mid", "A2Mid+")


def cmd_report(cfg, args):
    res_dir = os.path.join(cfg.output_dir, "results")
    rows = {}
    for path in sorted(glob.glob(os.path.join(res_dir, "*.json"))):
        stem = os.path.splitext(os.path.basename(path))[0]
        if stem.startswith("coe_") or stem.endswith("_eval") or stem == "table":
            continue
        for r in read_results(path):
            rows[r.name] = r
    if not rows:
        raise DataError(f"no results under {res_dir}; run `midemo train` first")
    order = [n for n in REPORT_ORDER if n in rows] + sorted(set(rows) - set(REPORT_ORDER))
    emo_rows = [rows[n] for n in order if rows[n].columns == EMOTIONS]
    mid_rows = [rows[n] for n in order if rows[n].columns == MIDLEVEL_FEATURES]
    if emo_rows:
        table = list(emo_rows)
        if "A2E" in rows:
            for n in ("A2Mid2E", "A2Mid2E-Joint"):
                if n in rows:
                    table.append(cost_of_explainability(rows["A2E"], rows[n]).as_row())
        _write_rows(cfg, "table", table, args.formats)
        _print_rows(table)
    if mid_rows:
        _write_rows(cfg, "table_midlevel", mid_rows, args.formats)
        _print_rows(mid_rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override a config value")
    common.add_argument("--format", dest="formats", action="append",
                        choices=("csv", "json", "svg"),
                        help="output formats (repeatable; default csv and json)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="midemo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scheme_opts(p):
        p.add_argument("--scheme", choices=tuple(SCHEMES))
        p.add_argument("--runs", type=int)
        p.add_argument("--seed", type=int, help="base seed; run k uses seed + k")

    sub.add_parser("prepare", parents=[common], help="cache spectrograms and write splits")
    p = sub.add_parser("train", parents=[common], help="run the multi-split protocol")
    scheme_opts(p)
    p.add_argument("--jobs", type=int, help="parallel protocol runs")
    p = sub.add_parser("eval", parents=[common], help="re-evaluate saved checkpoints")
    scheme_opts(p)
    p = sub.add_parser("coe", parents=[common], help="cost of explainability of two results")
    p.add_argument("baseline")
    p.add_argument("candidate")
    p.add_argument("--baseline-row")
    p.add_argument("--candidate-row")
    p = sub.add_parser("explain", parents=[common], help="effects, profiles and contrast pairs")
    scheme_opts(p)
    p.add_argument("--checkpoint")
    p.add_argument("--songs", type=lambda s: [x.strip() for x in s.split(",") if x.strip()])
    p.add_argument("--pair-mode", choices=("paper", "intent"))
    sub.add_parser("report", parents=[common], help="collect results into one table")
    return parser


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "eval": cmd_eval, "coe": cmd_coe,
            "explain": cmd_explain, "report": cmd_report}


def _resolve(args):
    cfg = load_config(args.config, args.overrides)
    changes = {}
    if getattr(args, "scheme", None):
        changes["scheme"] = args.scheme
    if getattr(args, "runs", None) is not None:
        changes["runs"] = args.runs
    if getattr(args, "seed", None) is not None:
        changes["base_seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        changes["jobs"] = args.jobs
    cfg = replace(cfg, **changes)
    if cfg.scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {cfg.scheme!r}; valid: {', '.join(SCHEMES)}")
    if cfg.runs < 1 or cfg.jobs < 1:
        raise ConfigurationError("--runs and --jobs must be >= 1")
    return cfg


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.formats is None:
        args.formats = ["csv", "json"]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigurationError, UnsupportedSchemeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, MidemoError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
