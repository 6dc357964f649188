"""Pure construction of the triangular-lattice block dataflow graph.

A block is a lattice of convolutional units indexed by (height h, length l).
Units exist in a left triangle (h <= l <= H) and a right triangle
(h <= 2H - l, H < l <= L). Each unit's input is a height-wise concatenation
of previous-length outputs, and (optionally) a length-wise residual link
adds the previous same-height unit's input to the output. All functions
here are pure; the graph carries everything the network builder and the
analyser need (widths, kernel/dilation schedule, wiring, projection flags).
"""

import enum
import math
from dataclasses import dataclass

BLOCK_INPUT = "in"  # sentinel source id for the block input node


class UnitRole(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    ABSENT = "absent"


def geometry(n_units: int):
    """Lattice height and length for a square unit count: (sqrt(N), 2*sqrt(N)-1)."""
    if n_units < 4:
        raise ValueError(f"unit count must be >= 4, got {n_units}")
    h = math.isqrt(n_units)
    if h * h != n_units:
        raise ValueError(f"unit count must be a square number, got {n_units}")
    return h, 2 * h - 1


def classify(h: int, l: int, height: int) -> UnitRole:
    """Which region of the lattice (h, l) falls in for the given height."""
    if h <= l and l <= height:
        return UnitRole.LEFT
    if h <= 2 * height - l and height < l <= 2 * height - 1:
        return UnitRole.RIGHT
    return UnitRole.ABSENT


def dense_input_sources(h: int, l: int, height: int):
    """Ordered flat list of source node ids feeding unit (h, l).

    Sources are previous-length residual outputs ("y", h', l-1), except the
    first unit which reads the block input. The left triangle aggregates
    heights h down to 1 (h-1 down to 1 on the diagonal); the right triangle
    aggregates heights h upward, capped by what exists at length l-1.
    """
    role = classify(h, l, height)
    if role is UnitRole.ABSENT:
        raise ValueError(f"no unit at (h={h}, l={l}) for height {height}")
    if h == 1 and l == 1:
        return [BLOCK_INPUT]
    if role is UnitRole.LEFT:
        top = h - 1 if l == h else h
        return [("y", hp, l - 1) for hp in range(top, 0, -1)]
    cap = 2 * height - l + 1  # top unit present at length l-1
    return [("y", hp, l - 1) for hp in range(h, cap + 1)]


def residual_source(h: int, l: int, height: int):
    """Residual link source for unit (h, l): the aggregated input of the
    same-height unit at the previous length, present only when l > h."""
    if classify(h, l, height) is UnitRole.ABSENT:
        raise ValueError(f"no unit at (h={h}, l={l}) for height {height}")
    if l > h:
        return ("x", h, l - 1)
    return None


def unit_hyper(h: int, l: int, base_width: int):
    """(kernel size, dilation, output width) for unit (h, l).

    Dilation is 2**(h-1) and the output width halves per height level.
    The kernel alternates along the length: full size 2h-1 on odd lengths,
    1 on even lengths.
    """
    k = 2 * h - 1 if l % 2 == 1 else 1
    d = 2 ** (h - 1)
    m = base_width // 2 ** (h - 1)
    return k, d, m


@dataclass(frozen=True)
class LatticeSpec:
    """Static description of one block: unit count, widths, and link flags."""
    n_units: int
    base_width: int
    input_width: int
    local_residual: bool = True

    def __post_init__(self):
        height, _ = geometry(self.n_units)
        if self.base_width % 2 ** (height - 1) != 0:
            raise ValueError(
                f"base width {self.base_width} not divisible by 2**{height - 1}; "
                "height-wise halving would not be exact")
        if self.input_width < 1:
            raise ValueError("input width must be positive")


@dataclass(frozen=True)
class UnitSpec:
    h: int
    l: int
    role: UnitRole
    kernel: int
    dilation: int
    out_width: int
    in_width: int
    dense_sources: tuple
    residual: tuple | None  # ("x", h, l-1) or None
    residual_width: int | None  # width of the residual source, if any

    @property
    def needs_projection(self) -> bool:
        return self.residual is not None and self.residual_width != self.out_width


@dataclass(frozen=True)
class BlockGraph:
    """Acyclic unit graph of one block, in topological (length-major) order."""
    spec: LatticeSpec
    height: int
    length: int
    units: tuple  # of UnitSpec
    output_width: int

    def unit_at(self, h: int, l: int) -> UnitSpec:
        for u in self.units:
            if u.h == h and u.l == l:
                return u
        raise KeyError((h, l))

    def describe(self) -> str:
        """One line per unit: coord, role, kernel, dilation, widths, wiring."""
        lines = [f"block units={self.spec.n_units} height={self.height} "
                 f"length={self.length} base_width={self.spec.base_width} "
                 f"input_width={self.spec.input_width} "
                 f"local_residual={int(self.spec.local_residual)}"]
        for u in self.units:
            srcs = ",".join("in" if s == BLOCK_INPUT else f"y{s[1]}.{s[2]}"
                            for s in u.dense_sources)
            res = "-"
            if u.residual is not None:
                res = f"x{u.residual[1]}.{u.residual[2]}"
                if u.needs_projection:
                    res += "*"  # weighted link
            lines.append(f"({u.h},{u.l}) {u.role.value:<5} k={u.kernel} d={u.dilation} "
                         f"m={u.out_width} in={u.in_width} dense=[{srcs}] res={res}")
        return "\n".join(lines)


def build_block_graph(spec: LatticeSpec) -> BlockGraph:
    """Materialise the block graph for a lattice spec.

    Deterministic and pure: equal specs produce structurally equal graphs.
    The block output node is the residual output of unit (1, L).
    """
    height, length = geometry(spec.n_units)
    widths = {BLOCK_INPUT: spec.input_width}

    units = []
    x_widths = {}  # aggregated input width per coordinate
    for l in range(1, length + 1):
        for h in range(1, height + 1):
            role = classify(h, l, height)
            if role is UnitRole.ABSENT:
                continue
            srcs = tuple(dense_input_sources(h, l, height))
            in_width = sum(widths[BLOCK_INPUT] if s == BLOCK_INPUT
                           else spec.base_width // 2 ** (s[1] - 1) for s in srcs)
            x_widths[(h, l)] = in_width
            k, d, m = unit_hyper(h, l, spec.base_width)
            res = residual_source(h, l, height) if spec.local_residual else None
            res_width = x_widths[(res[1], res[2])] if res is not None else None
            units.append(UnitSpec(h=h, l=l, role=role, kernel=k, dilation=d,
                                  out_width=m, in_width=in_width,
                                  dense_sources=srcs, residual=res,
                                  residual_width=res_width))
    if len(units) != spec.n_units:
        raise AssertionError("lattice mask does not cover the declared unit count")
    return BlockGraph(spec=spec, height=height, length=length,
                      units=tuple(units), output_width=spec.base_width)
