"""Experiment configuration: one TOML file plus ``--set section.key=value`` overrides.

Schema (every section and key is optional; relative paths resolve against the
directory containing the config file)::

    [data]
    soundtracks_audio = "soundtracks/audio"      # <song_id>.wav files
    soundtracks_emotion = "soundtracks/emotion.csv"
    midlevel_audio = "midlevel/audio"
    midlevel_annotations = "midlevel/midlevel.csv"

    [output]
    dir = "out"

    [spectrogram]   # SpectrogramConfig fields
    [trunk]         # TrunkConfig fields
    [training]      # TrainingConfig fields

    [experiment]
    scheme = "a2e"
    runs = 10
    base_seed = 0
    test_ratio = 0.2
    jobs = 1
"""

import hashlib
import json
import os
from dataclasses import dataclass, field, fields

import tomli

from .dsp import SpectrogramConfig
from .errors import ConfigurationError, DataError
from .models import TrunkConfig
from .trainer import TrainingConfig

DATA_KEYS = ("soundtracks_audio", "soundtracks_emotion", "midlevel_audio", "midlevel_annotations")


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict = field(default_factory=dict)
    output_dir: str = "out"
    spectrogram: SpectrogramConfig = SpectrogramConfig()
    trunk: TrunkConfig = TrunkConfig()
    training: TrainingConfig = TrainingConfig()
    scheme: str = "a2e"
    runs: int = 10
    base_seed: int = 0
    test_ratio: float = 0.2
    jobs: int = 1

    def to_json(self):
        return {
            "data": dict(sorted(self.data.items())),
            "spectrogram": self.spectrogram.to_json(),
            "trunk": self.trunk.to_json(),
            "training": _dataclass_dict(self.training),
            "experiment": {"scheme": self.scheme, "runs": self.runs, "base_seed": self.base_seed,
                           "test_ratio": self.test_ratio},
        }

    def hash(self):
        """Digest of everything that affects results (output dir and jobs excluded)."""
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def path(self, key):
        p = self.data.get(key)
        if not p:
            raise DataError(f"config [data].{key} is not set")
        if not os.path.exists(p):
            raise DataError(f"[data].{key}: {p} does not exist")
        return p

    def subdir(self, name):
        d = os.path.join(self.output_dir, name)
        os.makedirs(d, exist_ok=True)
        return d


def _dataclass_dict(obj):
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def parse_value(text):
    """Interpret an override value as a TOML scalar or array, else a bare string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(doc, overrides):
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        section, name = key.strip().split(".", 1)
        doc.setdefault(section, {})[name] = parse_value(value.strip())
    return doc


def _build(cls, values, section):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(f"[{section}] unknown key(s): {', '.join(unknown)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigurationError(f"[{section}]: {exc}") from None


def load_config(path=None, overrides=()):
    doc, base = {}, os.getcwd()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomli.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        base = os.path.dirname(os.path.abspath(path))
    doc = apply_overrides(doc, overrides)
    allowed = {"data", "output", "spectrogram", "trunk", "training", "experiment"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown config section(s): {', '.join(unknown)}")

    data = dict(doc.get("data", {}))
    bad = sorted(set(data) - set(DATA_KEYS))
    if bad:
        raise ConfigurationError(f"[data] unknown key(s): {', '.join(bad)}")
    data = {k: os.path.normpath(os.path.join(base, v)) for k, v in data.items() if v}
    out = doc.get("output", {})
    if set(out) - {"dir"}:
        raise ConfigurationError("[output] only accepts 'dir'")
    output_dir = os.path.normpath(os.path.join(base, out.get("dir", "out")))

    exp = dict(doc.get("experiment", {}))
    bad = sorted(set(exp) - {"scheme", "runs", "base_seed", "test_ratio", "jobs"})
    if bad:
        raise ConfigurationError(f"[experiment] unknown key(s): {', '.join(bad)}")
    cfg = ExperimentConfig(
        data=data,
        output_dir=output_dir,
        spectrogram=_build(SpectrogramConfig, doc.get("spectrogram", {}), "spectrogram"),
        trunk=_build(TrunkConfig, doc.get("trunk", {}), "trunk"),
        training=_build(TrainingConfig, doc.get("training", {}), "training"),
        **exp,
    )
    if cfg.runs < 1:
        raise ConfigurationError("[experiment] runs must be >= 1")
    if cfg.jobs < 1:
        raise ConfigurationError("[experiment] jobs must be >= 1")
    if not 0.0 < cfg.test_ratio < 1.0:
        raise ConfigurationError("[experiment] test_ratio must be in (0, 1)")
    return cfg
