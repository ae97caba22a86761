"""Residual PAD network: stem conv, residual stages, global average pool, dense, sigmoid."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BadSchema, MissingFile, ShapeMismatch
from .layers import BatchNorm2d, Conv2d, Dense, GlobalAvgPool, ReLU, ResidualBlock

INPUT_SHAPE = (3, 24, 64)
REFERENCE_ARCH = {"stem": 16, "widths": [16, 32, 64], "input": list(INPUT_SHAPE)}

MAGIC = b"SWPADCNN"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Arch:
    stem: int
    widths: tuple
    input: tuple = INPUT_SHAPE

    @property
    def arch_id(self) -> str:
        return json.dumps({"stem": self.stem, "widths": list(self.widths), "input": list(self.input)}, sort_keys=True)

    @classmethod
    def from_id(cls, arch_id: str) -> "Arch":
        d = json.loads(arch_id)
        return cls(int(d["stem"]), tuple(int(w) for w in d["widths"]), tuple(int(v) for v in d["input"]))


class ResidualNet:
    """Residual CNN emitting PAD scores in (0, 100).

    The first residual block keeps the stem width and resolution; every
    later block that widens the channels enters with stride 2.
    """

    def __init__(self, arch: Arch, seed: int = 0, dtype=np.float32):
        self.arch = arch
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.train_mode = False
        rng = np.random.default_rng(seed)
        c_in = arch.input[0]
        self.stem_conv = Conv2d(c_in, arch.stem, 3, 1, rng, dtype)
        self.stem_bn = BatchNorm2d(arch.stem, dtype=dtype)
        self.stem_relu = ReLU()
        self.blocks = []
        ch = arch.stem
        for k, w in enumerate(arch.widths):
            stride = 2 if (k > 0 and w != ch) else 1
            self.blocks.append(ResidualBlock(ch, w, stride, rng, dtype))
            ch = w
        self.pool = GlobalAvgPool()
        self.dense = Dense(ch, 1, rng, dtype)
        self.feature_dim = ch

    # -- structure ------------------------------------------------------------

    def _named_layers(self):
        yield "stem_conv", self.stem_conv
        yield "stem_bn", self.stem_bn
        for k, b in enumerate(self.blocks):
            yield f"block{k}", b
        yield "dense", self.dense

    def params(self):
        return [(f"{ln}.{pn}", p) for ln, layer in self._named_layers() for pn, p in layer.params()]

    def buffers(self):
        return [(f"{ln}.{bn}", b) for ln, layer in self._named_layers() for bn, b in layer.buffers()]

    @property
    def param_count(self) -> int:
        return sum(p.size for _, p in self.params())

    def zero_grad(self):
        for _, p in self.params():
            p.grad[...] = 0

    def train(self, mode: bool = True) -> "ResidualNet":
        self.train_mode = mode
        return self

    def eval(self) -> "ResidualNet":
        return self.train(False)

    # -- passes -------------------------------------------------------------

    def _check(self, batch) -> np.ndarray:
        x = np.asarray(batch)
        if x.ndim != 4 or x.shape[1:] != tuple(self.arch.input):
            raise ShapeMismatch(f"expected input of shape (B, {', '.join(map(str, self.arch.input))}), got {x.shape}")
        return np.ascontiguousarray(x.transpose(1, 0, 2, 3), dtype=self.dtype)

    def _trunk(self, batch):
        train = self.train_mode
        h = self.stem_relu.forward(self.stem_bn.forward(self.stem_conv.forward(self._check(batch), train), train), train)
        for b in self.blocks:
            h = b.forward(h, train)
        return self.pool.forward(h, train)

    def features(self, batch) -> np.ndarray:
        """Global-average-pool output, shape (B, feature_dim)."""
        return self._trunk(batch)

    def logits(self, batch) -> np.ndarray:
        return self.dense.forward(self._trunk(batch), self.train_mode)[:, 0]

    def backward(self, dlogits) -> np.ndarray:
        d = self.dense.backward(np.asarray(dlogits, dtype=self.dtype)[:, None])
        d = self.pool.backward(d)
        for b in reversed(self.blocks):
            d = b.backward(d)
        d = self.stem_conv.backward(self.stem_bn.backward(self.stem_relu.backward(d)))
        return d.transpose(1, 0, 2, 3)

    # -- state --------------------------------------------------------------

    def state(self) -> list[np.ndarray]:
        return [p.value.copy() for _, p in self.params()] + [b.copy() for _, b in self.buffers()]

    def load_state(self, state) -> None:
        targets = [p.value for _, p in self.params()] + [b for _, b in self.buffers()]
        if len(state) != len(targets):
            raise ShapeMismatch("state does not match the network structure")
        for dst, src in zip(targets, state):
            if dst.shape != src.shape:
                raise ShapeMismatch(f"state array of shape {src.shape} where {dst.shape} was expected")
            dst[...] = src


def scores_from_logits(logits) -> np.ndarray:
    """100 * sigmoid(logit), computed in double precision and kept inside (0, 100)."""
    z = np.clip(np.asarray(logits, dtype=np.float64), -30.0, 30.0)
    return 100.0 / (1.0 + np.exp(-z))


def forward(net: ResidualNet, batch) -> np.ndarray:
    return scores_from_logits(net.logits(batch))


def extract_features(net: ResidualNet, batch) -> np.ndarray:
    return np.asarray(net.features(batch), dtype=np.float64)


def build_net(stem: int, widths, seed: int = 0, dtype=np.float32, input_shape=INPUT_SHAPE) -> ResidualNet:
    return ResidualNet(Arch(int(stem), tuple(int(w) for w in widths), tuple(input_shape)), seed, dtype)


def build_reference_net(seed: int = 0, dtype=np.float32) -> ResidualNet:
    return build_net(REFERENCE_ARCH["stem"], REFERENCE_ARCH["widths"], seed, dtype)


# -- persistence ---------------------------------------------------------------

def save_net(net: ResidualNet, path) -> None:
    """Binary container: header, then parameters and BN running stats as LE float32."""
    arch = net.arch.arch_id.encode("utf-8")
    header = MAGIC + struct.pack("<II", FORMAT_VERSION, len(arch)) + arch + struct.pack("<qQ", net.seed, net.param_count)
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in net.state())
    Path(path).write_bytes(header + body)


def load_net(path) -> ResidualNet:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise MissingFile(f"CNN model not found: {path}") from None
    if not data.startswith(MAGIC):
        raise BadSchema(f"{path}: not a swirpad CNN model")
    pos = len(MAGIC)
    try:
        version, n = struct.unpack_from("<II", data, pos)
        pos += 8
        if version != FORMAT_VERSION:
            raise BadSchema(f"{path}: unsupported CNN format_version {version}")
        arch = Arch.from_id(data[pos:pos + n].decode("utf-8"))
        pos += n
        seed, count = struct.unpack_from("<qQ", data, pos)
        pos += 16
    except (struct.error, ValueError, KeyError) as exc:
        raise BadSchema(f"{path}: malformed CNN header: {exc}") from None
    net = ResidualNet(arch, seed, np.float32)
    if net.param_count != count:
        raise BadSchema(f"{path}: header param_count {count} does not match architecture ({net.param_count})")
    state = []
    for a in net.state():
        nbytes = a.size * 4
        if pos + nbytes > len(data):
            raise BadSchema(f"{path}: truncated parameter data")
        state.append(np.frombuffer(data, dtype="<f4", count=a.size, offset=pos).reshape(a.shape))
        pos += nbytes
    if pos != len(data):
        raise BadSchema(f"{path}: {len(data) - pos} trailing bytes")
    net.load_state(state)
    return net
