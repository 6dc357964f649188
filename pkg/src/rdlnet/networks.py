"""Trainable model assembly for the lattice network and its baselines.

A model is a flat netlist of typed nodes (built once, executed per forward
pass) plus a registry of named parameters. The same netlist drives the
forward interpreter here and the static analyser in analysis.py, so
parameter/FLOP accounting can never drift from what forward actually runs.

Families:
  rdl        lattice blocks, optional local residual (length-wise adds) and
             global dense (inter-block concatenation) links
  resnet     residual blocks of 2 causal dilated conv units, width 64, k=3
  densenet   running concatenation of conv units, growth 24, k=3
  densernet  running concatenation of small residual blocks, growth 24, k=3

Every conv unit is layer norm -> ReLU -> causal dilated conv. Baselines
cycle dilation through 1, 2, 4, 8. resnet/densenet enter through a width-64
kernel-1 stem; densernet consumes the raw input bins directly. The output
layer is a per-frame fully connected sigmoid over the final feature map
(with global dense links on, that map is the running concatenation of the
network input with every block output).
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .lattice import BLOCK_INPUT, LatticeSpec, build_block_graph

FAMILIES = ("rdl", "resnet", "densenet", "densernet")

RESNET_WIDTH = 64
RESNET_KERNEL = 3
RESNET_UNITS_PER_BLOCK = 2
DENSENET_GROWTH = 24
DENSENET_KERNEL = 3
DENSENET_UNITS_PER_BLOCK = 4
DENSERNET_GROWTH = 24
DENSERNET_KERNEL = 3
DENSERNET_RES_BLOCKS = 4
STEM_WIDTH = 64
DILATION_CYCLE = (1, 2, 4, 8)

LN_EPS = 1e-5

_DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class NetworkConfig:
    family: str
    blocks: int
    input_bins: int = 257
    lattice_units: int = 16
    base_width: int = 64
    local_residual: bool = True
    global_dense: bool = True
    precision: str = "f64"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.blocks < 1:
            raise ValueError("block count must be >= 1")
        if self.input_bins < 1:
            raise ValueError("input_bins must be >= 1")
        if self.precision not in _DTYPES:
            raise ValueError(f"precision must be one of {tuple(_DTYPES)}")

    @property
    def dtype(self):
        return _DTYPES[self.precision]


@dataclass(frozen=True)
class Node:
    """One netlist entry. srcs are indices of earlier nodes.

    kinds: input | unit (LN+ReLU+conv) | proj (1x1 conv, no bias) |
    stem (1x1 conv with bias) | add | concat | output (dense + sigmoid).
    """
    idx: int
    kind: str
    srcs: tuple
    width: int
    kernel: int = 1
    dilation: int = 1
    pnames: tuple = ()
    label: str = ""


class NetworkModel:
    """Netlist plus parameter registry; single-threaded per instance."""

    def __init__(self, config: NetworkConfig, nodes, params):
        self.config = config
        self.nodes = list(nodes)
        self.params = dict(params)  # name -> Parameter, in registration order

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def in_width(self, node: Node) -> int:
        return self.nodes[node.srcs[0]].width

    def forward(self, magnitude: np.ndarray) -> T.Tensor:
        """Map a (T, input_bins) magnitude spectrogram to (T, input_bins)
        values in (0, 1). Causal over frames."""
        x = np.asarray(magnitude, dtype=self.config.dtype)
        if x.ndim != 2 or x.shape[1] != self.config.input_bins:
            raise T.ShapeError(
                f"expected input of shape (T, {self.config.input_bins}), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise T.NonFiniteError("non-finite values in network input")

        vals = [None] * len(self.nodes)
        p = self.params
        for node in self.nodes:
            if node.kind == "input":
                vals[node.idx] = T.Tensor(x, dtype=self.config.dtype)
            elif node.kind == "unit":
                g_, b_, w_, c_ = node.pnames
                h = T.layer_norm(vals[node.srcs[0]], p[g_], p[b_], eps=LN_EPS)
                h = T.relu(h)
                vals[node.idx] = T.causal_dilated_conv1d(h, p[w_], p[c_], node.dilation)
            elif node.kind == "proj":
                (w_,) = node.pnames
                vals[node.idx] = T.dense_layer_nobias(vals[node.srcs[0]], p[w_])
            elif node.kind == "stem":
                w_, c_ = node.pnames
                vals[node.idx] = T.dense_layer(vals[node.srcs[0]], p[w_], p[c_])
            elif node.kind == "add":
                vals[node.idx] = T.add(vals[node.srcs[0]], vals[node.srcs[1]])
            elif node.kind == "concat":
                vals[node.idx] = T.concat_channels([vals[s] for s in node.srcs])
            elif node.kind == "output":
                w_, c_ = node.pnames
                z = T.dense_layer(vals[node.srcs[0]], p[w_], p[c_])
                vals[node.idx] = T.sigmoid(z)
            else:  # pragma: no cover - builder bug
                raise AssertionError(f"unknown node kind {node.kind}")
        return vals[-1]


class _Builder:
    def __init__(self, config: NetworkConfig, seed: int):
        self.config = config
        self.nodes = []
        self.params = {}
        self.rng = np.random.Generator(np.random.PCG64(seed))

    def _param(self, name: str, shape, fan_in=None) -> str:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name}")
        if fan_in is None:  # zero init (biases)
            data = np.zeros(shape)
        elif fan_in == "ones":
            data = np.ones(shape)
        else:
            bound = 1.0 / np.sqrt(fan_in)
            data = self.rng.uniform(-bound, bound, size=shape)
        self.params[name] = T.Parameter(name, data, dtype=self.config.dtype)
        return name

    def _node(self, kind, srcs, width, **kw) -> int:
        n = Node(idx=len(self.nodes), kind=kind, srcs=tuple(srcs), width=width, **kw)
        self.nodes.append(n)
        return n.idx

    def input(self):
        return self._node("input", (), self.config.input_bins, label="input")

    def unit(self, src, cout, kernel, dilation, label):
        cin = self.nodes[src].width
        g = self._param(f"{label}/ln_gain", (cin,), fan_in="ones")
        b = self._param(f"{label}/ln_shift", (cin,))
        w = self._param(f"{label}/conv_w", (kernel, cin, cout), fan_in=kernel * cin)
        c = self._param(f"{label}/conv_b", (cout,))
        return self._node("unit", (src,), cout, kernel=kernel, dilation=dilation,
                          pnames=(g, b, w, c), label=label)

    def proj(self, src, cout, label):
        cin = self.nodes[src].width
        w = self._param(f"{label}/proj_w", (cin, cout), fan_in=cin)
        return self._node("proj", (src,), cout, pnames=(w,), label=label)

    def stem(self, src, cout, label="stem"):
        cin = self.nodes[src].width
        w = self._param(f"{label}/w", (cin, cout), fan_in=cin)
        c = self._param(f"{label}/b", (cout,))
        return self._node("stem", (src,), cout, pnames=(w, c), label=label)

    def add(self, a, b, label=""):
        if self.nodes[a].width != self.nodes[b].width:
            raise ValueError("add operands must share width")
        return self._node("add", (a, b), self.nodes[a].width, label=label)

    def concat(self, srcs, label=""):
        srcs = list(srcs)
        if len(srcs) == 1:
            return srcs[0]
        return self._node("concat", srcs, sum(self.nodes[s].width for s in srcs),
                          label=label)

    def output(self, src, bins, label="output"):
        cin = self.nodes[src].width
        w = self._param(f"{label}/w", (cin, bins), fan_in=cin)
        c = self._param(f"{label}/b", (bins,))
        return self._node("output", (src,), bins, pnames=(w, c), label=label)

    def finish(self):
        return NetworkModel(self.config, self.nodes, self.params)


def _build_rdl_block(b: _Builder, graph, block_in: int, tag: str) -> int:
    """Wire one lattice block into the netlist; returns the block output node."""
    x_nodes = {}  # aggregated input node per unit coordinate
    y_nodes = {}  # residual output node per unit coordinate
    for u in graph.units:
        srcs = [block_in if s == BLOCK_INPUT else y_nodes[(s[1], s[2])]
                for s in u.dense_sources]
        label = f"{tag}/u{u.h}.{u.l}"
        x_idx = b.concat(srcs, label=f"{label}/in")
        x_nodes[(u.h, u.l)] = x_idx
        out = b.unit(x_idx, u.out_width, u.kernel, u.dilation, label)
        if u.residual is not None:
            res_x = x_nodes[(u.residual[1], u.residual[2])]
            if u.needs_projection:
                res_x = b.proj(res_x, u.out_width, label)
            out = b.add(out, res_x, label=f"{label}/res")
        y_nodes[(u.h, u.l)] = out
    return y_nodes[(1, graph.length)]


def build_rdlnet(config: NetworkConfig, seed: int = 0) -> NetworkModel:
    """Cascade of lattice blocks. With global dense links on, each block's
    input is the concatenation of the previous block's input and output,
    and the output layer reads the final concatenation; with them off the
    blocks chain directly and the output layer reads the last block output.
    """
    if config.family != "rdl":
        raise ValueError("config.family must be 'rdl'")
    b = _Builder(config, seed)
    cur = b.input()
    for blk in range(config.blocks):
        spec = LatticeSpec(n_units=config.lattice_units,
                           base_width=config.base_width,
                           input_width=b.nodes[cur].width,
                           local_residual=config.local_residual)
        graph = build_block_graph(spec)
        y = _build_rdl_block(b, graph, cur, f"block{blk}")
        if config.global_dense:
            cur = b.concat([cur, y], label=f"block{blk}/carry")
        else:
            cur = y
    b.output(cur, config.input_bins)
    return b.finish()


def build_resnet(config: NetworkConfig, seed: int = 0) -> NetworkModel:
    if config.family != "resnet":
        raise ValueError("config.family must be 'resnet'")
    b = _Builder(config, seed)
    cur = b.stem(b.input(), STEM_WIDTH)
    for blk in range(config.blocks):
        d = DILATION_CYCLE[blk % len(DILATION_CYCLE)]
        h = cur
        for i in range(RESNET_UNITS_PER_BLOCK):
            h = b.unit(h, RESNET_WIDTH, RESNET_KERNEL, d, f"block{blk}/u{i}")
        skip = cur
        if b.nodes[skip].width != b.nodes[h].width:
            skip = b.proj(skip, b.nodes[h].width, f"block{blk}/skip")
        cur = b.add(h, skip, label=f"block{blk}/res")
    b.output(cur, config.input_bins)
    return b.finish()


def build_densenet(config: NetworkConfig, seed: int = 0) -> NetworkModel:
    if config.family != "densenet":
        raise ValueError("config.family must be 'densenet'")
    b = _Builder(config, seed)
    cat = b.stem(b.input(), STEM_WIDTH)
    for blk in range(config.blocks):
        for i in range(DENSENET_UNITS_PER_BLOCK):
            d = DILATION_CYCLE[i % len(DILATION_CYCLE)]
            u = b.unit(cat, DENSENET_GROWTH, DENSENET_KERNEL, d, f"block{blk}/u{i}")
            cat = b.concat([cat, u], label=f"block{blk}/cat{i}")
    b.output(cat, config.input_bins)
    return b.finish()


def build_densernet(config: NetworkConfig, seed: int = 0) -> NetworkModel:
    if config.family != "densernet":
        raise ValueError("config.family must be 'densernet'")
    b = _Builder(config, seed)
    cat = b.input()
    for blk in range(config.blocks):
        for r in range(DENSERNET_RES_BLOCKS):
            d = DILATION_CYCLE[r % len(DILATION_CYCLE)]
            tag = f"block{blk}/r{r}"
            u1 = b.unit(cat, DENSERNET_GROWTH, DENSERNET_KERNEL, d, f"{tag}/u0")
            u2_in = b.concat([cat, u1], label=f"{tag}/cat_in")
            u2 = b.unit(u2_in, DENSERNET_GROWTH, DENSERNET_KERNEL, d, f"{tag}/u1")
            skip = b.proj(cat, DENSERNET_GROWTH, f"{tag}/skip")
            out = b.add(u2, skip, label=f"{tag}/res")
            cat = b.concat([cat, out], label=f"{tag}/cat")
    b.output(cat, config.input_bins)
    return b.finish()


_BUILDERS = {
    "rdl": build_rdlnet,
    "resnet": build_resnet,
    "densenet": build_densenet,
    "densernet": build_densernet,
}


def build_network(config: NetworkConfig, seed: int = 0) -> NetworkModel:
    return _BUILDERS[config.family](config, seed)


ABLATION_VARIANTS = ("baseline", "lr", "gd", "lr-gd")


def build_ablation_variant(which: str, blocks: int = 5, lattice_units: int = 16,
                           base_width: int = 64, input_bins: int = 257,
                           precision: str = "f64", seed: int = 0) -> NetworkModel:
    """The four aggregation-study configurations: neither link type, local
    residual only, global dense only, or both."""
    if which not in ABLATION_VARIANTS:
        raise ValueError(f"unknown variant {which!r}, expected one of {ABLATION_VARIANTS}")
    cfg = NetworkConfig(family="rdl", blocks=blocks, input_bins=input_bins,
                        lattice_units=lattice_units, base_width=base_width,
                        local_residual=which in ("lr", "lr-gd"),
                        global_dense=which in ("gd", "lr-gd"),
                        precision=precision)
    return build_rdlnet(cfg, seed=seed)
