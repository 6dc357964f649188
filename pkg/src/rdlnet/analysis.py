"""Static accounting over a built model: parameters, per-frame multiply-adds,
and receptive field in frames.

A FLOP here is one multiply-add during inference on a single output frame:
k*Cin*Cout per conv plus Cout for its bias, Cin*Cout for projections and
the output layer, and one per element for normalisation, activation, and
residual adds (those elementwise terms are under 2% of any real config).
"""

import csv
import io
from dataclasses import dataclass

from .networks import NetworkModel


@dataclass(frozen=True)
class AnalysisReport:
    total_params: int
    flops_per_frame: int
    receptive_field_frames: int
    rows: tuple  # (label, params, flops) per parameterised node

    def as_text(self) -> str:
        width = max([len("node")] + [len(r[0]) for r in self.rows])
        lines = [f"{'node':<{width}}  {'params':>10}  {'flops':>12}"]
        for label, params, flops in self.rows:
            lines.append(f"{label:<{width}}  {params:>10}  {flops:>12}")
        lines.append(f"{'total':<{width}}  {self.total_params:>10}  {self.flops_per_frame:>12}")
        lines.append(f"receptive field: {self.receptive_field_frames} frames")
        return "\n".join(lines)

    def as_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["unit", "params", "flops"])
        for label, params, flops in self.rows:
            w.writerow([label, params, flops])
        w.writerow(["total", self.total_params, self.flops_per_frame])
        return buf.getvalue()


def _node_costs(model: NetworkModel, node):
    """(params, flops) for one netlist node."""
    if node.kind == "unit":
        cin = model.in_width(node)
        cout = node.width
        k = node.kernel
        params = 2 * cin + k * cin * cout + cout
        flops = 2 * cin + k * cin * cout + cout  # LN + ReLU elements, kernel, bias
        return params, flops
    if node.kind == "proj":
        cin = model.in_width(node)
        return cin * node.width, cin * node.width
    if node.kind in ("stem", "output"):
        cin = model.in_width(node)
        params = cin * node.width + node.width
        flops = cin * node.width + node.width
        if node.kind == "output":
            flops += node.width  # sigmoid
        return params, flops
    if node.kind == "add":
        return 0, node.width
    return 0, 0  # input, concat


def count_params(model: NetworkModel) -> int:
    """Exact scalar parameter count over the registry."""
    return sum(p.data.size for p in model.params.values())


def count_flops_per_frame(model: NetworkModel) -> int:
    return sum(_node_costs(model, n)[1] for n in model.nodes)


def receptive_field(model: NetworkModel) -> int:
    """Frames (past plus current) that can influence one output frame,
    accumulating (k-1)*dilation along the longest netlist path."""
    lag = [0] * len(model.nodes)
    for node in model.nodes:
        src_lag = max((lag[s] for s in node.srcs), default=0)
        if node.kind == "unit":
            src_lag += (node.kernel - 1) * node.dilation
        lag[node.idx] = src_lag
    return lag[-1] + 1


def analyze_model(model: NetworkModel) -> AnalysisReport:
    rows = []
    total_flops = 0
    for node in model.nodes:
        params, flops = _node_costs(model, node)
        total_flops += flops
        if params:
            rows.append((node.label or node.kind, params, flops))
    report = AnalysisReport(total_params=count_params(model),
                            flops_per_frame=total_flops,
                            receptive_field_frames=receptive_field(model),
                            rows=tuple(rows))
    # accounting rows must agree with the registry they describe
    assert sum(r[1] for r in report.rows) == report.total_params
    return report
