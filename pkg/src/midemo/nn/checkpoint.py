"""Binary checkpoint: header, JSON architecture descriptor, little-endian f32 tensors.

Layout::

    8 bytes  magic b"MIDEMOCK"
    uint32   format version
    uint32   descriptor length in bytes
    ...      UTF-8 JSON descriptor
    ...      tensors, in descriptor order, as '<f4' row-major

Tensor order: parameters in declaration order, then running batch-norm
statistics, then the Adam first and second moments if present.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .layers import LayerSpec
from .network import Network
from .optim import AdamState

MAGIC = b"MIDEMOCK"
VERSION = 1
_HEADER = struct.Struct("<8sII")


@dataclass
class Checkpoint:
    network: Network
    adam: AdamState = None
    meta: dict = field(default_factory=dict)


def save_checkpoint(path, network, adam=None, meta=None):
    tensors = [("param", n, a) for n, a in network.parameters()]
    tensors += [("buffer", n, a) for n, a in network.buffers()]
    adam_desc = None
    if adam is not None:
        adam_desc = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                     "eps": adam.eps, "t": adam.t}
        names = [n for n, _ in network.parameters()]
        tensors += [("adam_m", n, a) for n, a in zip(names, adam.m)]
        tensors += [("adam_v", n, a) for n, a in zip(names, adam.v)]
    desc = {
        "layers": [s.to_json() for s in network.specs()],
        "tensors": [{"group": g, "name": n, "shape": list(a.shape)} for g, n, a in tensors],
        "adam": adam_desc,
        "meta": meta or {},
    }
    blob = json.dumps(desc, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for _, _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated checkpoint header")
    magic, version, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    desc = json.loads(raw[_HEADER.size:_HEADER.size + n].decode("utf-8"))
    offset = _HEADER.size + n

    specs = [LayerSpec.from_json(s) for s in desc["layers"]]
    net = Network.from_specs(specs, np.random.default_rng(0), dtype)
    arrays = {}
    for entry in desc["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = offset + 4 * count
        if end > len(raw):
            raise DataError(f"{path}: truncated tensor data at {entry['name']}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        arrays[(entry["group"], entry["name"])] = arr.reshape(entry["shape"]).astype(dtype)
        offset = end
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes")

    state = {name: arr for (group, name), arr in arrays.items() if group in ("param", "buffer")}
    net.load_state_dict(state)
    adam = None
    if desc["adam"] is not None:
        names = [n for n, _ in net.parameters()]
        adam = AdamState(**desc["adam"])
        adam.m = [arrays[("adam_m", n)] for n in names]
        adam.v = [arrays[("adam_v", n)] for n in names]
    return Checkpoint(net, adam, desc["meta"])
