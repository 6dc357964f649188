"""Binary checkpoint format for models, optimizer moments, and train state.

Layout (all integers little-endian):

    magic            4s   = b"RDLN"
    format version   u16  = 1
    config           u32 length + canonical UTF-8 key=value block
    parameter count  u32
    per parameter:   u16 name length, name UTF-8, u8 dtype tag
                     (0 = float32, 1 = float64), u8 rank, u32 dims[rank],
                     raw little-endian row-major payload
    zero or more trailing sections, each: 4s tag + u32 length + payload
        b"ADAM"  u64 step count, then first/second moment payloads per
                 parameter in registry order (dtype and shape of the owner)
        b"TRNS"  canonical JSON with training state (epoch, best error, seed)

Round-trips are byte-exact: loading a checkpoint and saving it again
produces identical bytes.
"""

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .networks import NetworkConfig, NetworkModel, build_network
from .util import atomic_write_bytes

MAGIC = b"RDLN"
FORMAT_VERSION = 1

_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}

_CONFIG_FIELDS = ("family", "blocks", "input_bins", "lattice_units",
                  "base_width", "local_residual", "global_dense", "precision")


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint contents."""


def config_to_text(cfg: NetworkConfig) -> str:
    lines = []
    for name in _CONFIG_FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, bool):
            v = int(v)
        lines.append(f"{name}={v}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> NetworkConfig:
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise CheckpointError(f"bad config line {line!r}")
        kv[key] = val
    try:
        return NetworkConfig(
            family=kv["family"],
            blocks=int(kv["blocks"]),
            input_bins=int(kv["input_bins"]),
            lattice_units=int(kv["lattice_units"]),
            base_width=int(kv["base_width"]),
            local_residual=bool(int(kv["local_residual"])),
            global_dense=bool(int(kv["global_dense"])),
            precision=kv["precision"],
        )
    except KeyError as exc:
        raise CheckpointError(f"config block missing field {exc}") from None


@dataclass
class AdamState:
    step_count: int
    m: dict  # name -> ndarray
    v: dict


def _write_array(buf, arr: np.ndarray) -> None:
    buf.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def checkpoint_bytes(model: NetworkModel, adam=None, train_state: dict | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    cfg = config_to_text(model.config).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)

    params = list(model.params.values())
    buf.write(struct.pack("<I", len(params)))
    for p in params:
        name = p.name.encode("utf-8")
        buf.write(struct.pack("<H", len(name)))
        buf.write(name)
        buf.write(struct.pack("<BB", _DTYPE_TAGS[p.data.dtype], p.data.ndim))
        buf.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        _write_array(buf, p.data)

    if adam is not None:
        sect = io.BytesIO()
        sect.write(struct.pack("<Q", adam.step_count))
        for p in params:
            _write_array(sect, np.asarray(adam.m[p.name], dtype=p.data.dtype))
            _write_array(sect, np.asarray(adam.v[p.name], dtype=p.data.dtype))
        payload = sect.getvalue()
        buf.write(b"ADAM")
        buf.write(struct.pack("<I", len(payload)))
        buf.write(payload)

    if train_state is not None:
        payload = json.dumps(train_state, sort_keys=True,
                             separators=(",", ":")).encode("utf-8")
        buf.write(b"TRNS")
        buf.write(struct.pack("<I", len(payload)))
        buf.write(payload)

    return buf.getvalue()


def save_checkpoint(path, model: NetworkModel, adam=None,
                    train_state: dict | None = None) -> None:
    atomic_write_bytes(path, checkpoint_bytes(model, adam, train_state))


@dataclass
class Checkpoint:
    model: NetworkModel
    adam_state: AdamState | None
    train_state: dict | None


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    @property
    def remaining(self) -> int:
        return len(self.data) - self.off


def load_checkpoint_bytes(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic; not a model checkpoint")
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    (cfg_len,) = r.unpack("<I")
    config = config_from_text(r.take(cfg_len).decode("utf-8"))
    model = build_network(config, seed=0)

    (count,) = r.unpack("<I")
    if count != len(model.params):
        raise CheckpointError(
            f"checkpoint has {count} parameters, config implies {len(model.params)}")
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        tag, rank = r.unpack("<BB")
        shape = r.unpack(f"<{rank}I") if rank else ()
        dtype = _TAG_DTYPES.get(tag)
        if dtype is None:
            raise CheckpointError(f"unknown dtype tag {tag}")
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = r.take(n * dtype.itemsize)
        p = model.params.get(name)
        if p is None:
            raise CheckpointError(f"checkpoint parameter {name!r} not in model registry")
        arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
        if arr.shape != p.data.shape:
            raise CheckpointError(f"shape mismatch for {name!r}")
        p.data = arr.astype(model.config.dtype)

    adam_state = None
    train_state = None
    while r.remaining:
        tag = r.take(4)
        (length,) = r.unpack("<I")
        payload = r.take(length)
        if tag == b"ADAM":
            adam_state = _read_adam(payload, model)
        elif tag == b"TRNS":
            train_state = json.loads(payload.decode("utf-8"))
        else:
            raise CheckpointError(f"unknown checkpoint section {tag!r}")
    return Checkpoint(model=model, adam_state=adam_state, train_state=train_state)


def _read_adam(payload: bytes, model: NetworkModel) -> AdamState:
    r = _Reader(payload)
    (step_count,) = r.unpack("<Q")
    dtype = np.dtype(model.config.dtype).newbyteorder("<")
    m, v = {}, {}
    for p in model.params.values():
        n = p.data.size * dtype.itemsize
        m[p.name] = np.frombuffer(r.take(n), dtype=dtype).reshape(p.data.shape).astype(model.config.dtype)
        v[p.name] = np.frombuffer(r.take(n), dtype=dtype).reshape(p.data.shape).astype(model.config.dtype)
    if r.remaining:
        raise CheckpointError("trailing bytes in optimizer section")
    return AdamState(step_count=step_count, m=m, v=v)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        return load_checkpoint_bytes(f.read())
