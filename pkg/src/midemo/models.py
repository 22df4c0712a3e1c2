"""VGG-style trunk and the scheme heads (A2E, A2Mid, A2Mid2E, A2Mid2E-Joint)."""

from dataclasses import asdict, dataclass, field

import numpy as np

from .dsp import standardize
from .errors import ConfigurationError, DimensionError, UnsupportedSchemeError
from .explain import LinearMap
from .ingest import EMOTIONS, MIDLEVEL_FEATURES
from .nn import LayerSpec, Network, mse

A2E = "A2E"
A2MID = "A2Mid"
A2MID2E = "A2Mid2E"
JOINT = "A2Mid2E-Joint"
SCHEMES = (A2E, A2MID, A2MID2E, JOINT)

N_MID = len(MIDLEVEL_FEATURES)
N_EMO = len(EMOTIONS)


@dataclass(frozen=True)
class TrunkConfig:
    widths: tuple = (64, 64, 128, 128, 256)
    embedding_dim: int = 256
    dropout: float = 0.3
    pool_after: tuple = (2, 4)
    in_channels: int = 1
    # Input to the first head; must equal embedding_dim.
    head_input_dim: int = None

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "pool_after", tuple(int(p) for p in self.pool_after))
        if not self.widths or any(w <= 0 for w in self.widths):
            raise ConfigurationError(f"conv widths must be positive, got {self.widths}")
        if self.embedding_dim <= 0:
            raise ConfigurationError("embedding_dim must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.head_input_dim is None:
            object.__setattr__(self, "head_input_dim", self.embedding_dim)

    def to_json(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["pool_after"] = list(self.pool_after)
        return d

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


def trunk_specs(cfg):
    specs, c = [], cfg.in_channels
    for i, w in enumerate(cfg.widths, start=1):
        specs += [LayerSpec("conv2d", {"in_channels": c, "out_channels": w, "kernel_size": 3,
                                       "padding": 1}),
                  LayerSpec("batchnorm", {"channels": w}),
                  LayerSpec("relu")]
        if i in cfg.pool_after:
            specs.append(LayerSpec("maxpool", {"pool_size": 2}))
        c = w
    specs += [LayerSpec("conv2d", {"in_channels": c, "out_channels": cfg.embedding_dim,
                                   "kernel_size": 1, "padding": 0}),
              LayerSpec("batchnorm", {"channels": cfg.embedding_dim}),
              LayerSpec("relu"),
              LayerSpec("adaptive_avg_pool")]
    if cfg.dropout > 0:
        specs.append(LayerSpec("dropout", {"rate": cfg.dropout}))
    return specs


def head_specs(scheme, dim):
    dense = lambda i, o: LayerSpec("dense", {"in_features": i, "out_features": o})  # noqa: E731
    if scheme == A2E:
        return [dense(dim, N_EMO)]
    if scheme in (A2MID, A2MID2E):
        return [dense(dim, N_MID)]
    if scheme == JOINT:
        return [dense(dim, N_MID), dense(N_MID, N_EMO)]
    raise UnsupportedSchemeError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


@dataclass
class SchemeModel:
    scheme: str
    trunk_config: TrunkConfig
    network: Network
    n_trunk_layers: int
    linear_map: LinearMap = None
    meta: dict = field(default_factory=dict)

    @property
    def mid_index(self):
        """Layer index whose output is the 7 mid-level predictions, or None."""
        if self.scheme in (A2MID, A2MID2E):
            return len(self.network.layers) - 1
        if self.scheme == JOINT:
            return len(self.network.layers) - 2
        return None

    def descriptor(self):
        d = {"scheme": self.scheme, "trunk_config": self.trunk_config.to_json(),
             "n_trunk_layers": self.n_trunk_layers}
        if self.linear_map is not None:
            d["linear_map"] = self.linear_map.to_json()
        return d


def build_model(scheme, trunk_config=TrunkConfig(), seed=0, dtype=np.float32):
    """Initialize a scheme model. Equal seeds give identical trunks across schemes."""
    if scheme not in SCHEMES:
        raise UnsupportedSchemeError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if trunk_config.head_input_dim != trunk_config.embedding_dim:
        raise ConfigurationError(f"head input dim {trunk_config.head_input_dim} != embedding dim "
                                 f"{trunk_config.embedding_dim}")
    trunk_seed, head_seed = np.random.SeedSequence(seed).spawn(2)
    trunk = Network.from_specs(trunk_specs(trunk_config), np.random.default_rng(trunk_seed), dtype)
    head = Network.from_specs(head_specs(scheme, trunk_config.embedding_dim),
                              np.random.default_rng(head_seed), dtype)
    net = Network(trunk.layers + head.layers, dtype)
    return SchemeModel(scheme, trunk_config, net, len(trunk.layers))


def to_network_input(values, dtype=np.float32):
    """Standardize each (frames, bands) spectrogram and add batch/channel axes."""
    arr = np.asarray(values)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise DimensionError(f"expected (frames, bands) or (N, frames, bands), got {arr.shape}")
    out = np.stack([standardize(a) for a in arr])[:, None]
    return out.astype(dtype)


@dataclass
class Prediction:
    midlevel: np.ndarray = None
    emotion: np.ndarray = None


def forward_outputs(model, x, train=False, rng=None):
    """Run the network on a prepared batch; returns ``(Prediction, tape)``."""
    taps = () if model.mid_index is None else (model.mid_index,)
    out, tape = model.network.forward(x, train=train, rng=rng, taps=taps)
    if model.scheme == A2E:
        return Prediction(emotion=out), tape
    if model.scheme == JOINT:
        return Prediction(midlevel=tape.activations[model.mid_index], emotion=out), tape
    mid = out
    emo = None if model.linear_map is None else model.linear_map.apply(mid)
    return Prediction(midlevel=mid, emotion=emo), tape


def predict(model, spec):
    """Eval-mode outputs for one Spectrogram, a (frames, bands) array or a batch."""
    values = spec.values if hasattr(spec, "values") else spec
    single = np.ndim(values) == 2
    pred, _ = forward_outputs(model, to_network_input(values, model.network.dtype))
    mid = None if pred.midlevel is None else np.asarray(pred.midlevel, dtype=np.float64)
    emo = None if pred.emotion is None else np.asarray(pred.emotion, dtype=np.float64)
    if single:
        mid = None if mid is None else mid[0]
        emo = None if emo is None else emo[0]
    return Prediction(mid, emo)


def joint_loss(mid_pred, mid_target, emo_pred, emo_target):
    """Unweighted sum of the mid-level and emotion mean squared errors."""
    mid_pred, emo_pred = np.asarray(mid_pred), np.asarray(emo_pred)
    if mid_pred.shape[-1] != N_MID or emo_pred.shape[-1] != N_EMO:
        raise DimensionError(f"joint loss expects 7 mid-level and 8 emotion outputs, got "
                             f"{mid_pred.shape} and {emo_pred.shape}")
    return mse(mid_pred, mid_target) + mse(emo_pred, emo_target)


def extract_linear_map(model):
    """The 7 -> 8 linear layer of a joint model (or the fitted map of A2Mid2E)."""
    if model.scheme == JOINT:
        layer = model.network.layers[-1]
        return LinearMap(layer.params["weight"].astype(np.float64),
                         layer.params["bias"].astype(np.float64))
    if model.scheme == A2MID2E and model.linear_map is not None:
        return model.linear_map
    raise UnsupportedSchemeError(
        f"{model.scheme} has no mid-level -> emotion linear layer to explain")
