# core/complexity.py
"""
Complexity Accounting
---------------------
Static parameter, MAC and FLOP counts for one cell_forward call (batch 1)
derived from the network layer table.

    conv       MACs = Cout * H_out * W_out * Cin * k * k
    deconv     MACs = Cin * H_in * W_in * Cout * k * k   (its adjoint conv)
    headline   FLOPs = 2 * MACs
    element-wise adds/subs/PReLU are listed per row, never in the headline
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import pandas as pd

from core.errors import GeometryError
from core.network import NetworkConfig, elementwise_table, layer_table, parameter_shapes

logger = logging.getLogger("core.complexity")

BREAKDOWN_COLUMNS = ["layer", "kind", "input", "output", "params", "macs", "elementwise"]


def _layer_params(config: NetworkConfig) -> Dict[str, int]:
    totals: Dict[str, int] = {}
    for name, shape in parameter_shapes(config).items():
        layer = name.rsplit(".", 1)[0]
        count = 1
        for dim in shape:
            count *= dim
        totals[layer] = totals.get(layer, 0) + count
    return totals


def count_params(config: NetworkConfig) -> Tuple[int, pd.DataFrame]:
    """Total parameter count and a (layer, params) breakdown in layer order."""
    per_layer = _layer_params(config)
    frame = pd.DataFrame([{"layer": spec.name, "params": per_layer[spec.name]} for spec in layer_table(config)],
                         columns=["layer", "params"])
    return int(frame["params"].sum()), frame


def _resolution(config: NetworkConfig, which: str, h: int, w: int) -> Tuple[int, int]:
    return (h, w) if which == "lr" else (h * config.scale, w * config.scale)


def count_macs(config: NetworkConfig, input_h: int, input_w: int) -> Tuple[int, pd.DataFrame]:
    """
    Per-step MACs for an ``input_h`` x ``input_w`` LR frame.

    Returns:
        (total MACs, breakdown with one row per layer and per element-wise op)
    """
    if input_h < 1 or input_w < 1:
        raise GeometryError(f"input size must be positive, got {input_h}x{input_w}")
    per_layer = _layer_params(config)
    rows: List[dict] = []
    for spec in layer_table(config):
        in_h, in_w = _resolution(config, spec.resolution, input_h, input_w)
        out_h, out_w = spec.output_size(in_h), spec.output_size(in_w)
        if out_h < 1 or out_w < 1:
            raise GeometryError(f"{spec.name}: input {in_h}x{in_w} gives output {out_h}x{out_w}")
        k2 = spec.kernel * spec.kernel
        if spec.kind == "conv":
            macs = spec.cout * out_h * out_w * spec.cin * k2
        else:
            macs = spec.cin * in_h * in_w * spec.cout * k2
        rows.append({
            "layer": spec.name,
            "kind": spec.kind + ("+prelu" if spec.prelu else ""),
            "input": f"{spec.cin}x{in_h}x{in_w}",
            "output": f"{spec.cout}x{out_h}x{out_w}",
            "params": per_layer[spec.name],
            "macs": macs,
            "elementwise": spec.cout * out_h * out_w if spec.prelu else 0,
        })
    for op in elementwise_table(config):
        h, w = _resolution(config, op.resolution, input_h, input_w)
        shape = f"{op.channels}x{h}x{w}"
        rows.append({"layer": op.name, "kind": op.kind, "input": shape, "output": shape,
                     "params": 0, "macs": 0, "elementwise": op.channels * h * w})
    frame = pd.DataFrame(rows, columns=BREAKDOWN_COLUMNS)
    return int(frame["macs"].sum()), frame


@dataclass
class ComplexityReport:
    config: NetworkConfig
    input_h: int
    input_w: int
    params: int
    macs: int
    flops: int
    breakdown: pd.DataFrame

    @property
    def gmacs(self) -> float:
        return self.macs / 1e9

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    @property
    def elementwise(self) -> int:
        return int(self.breakdown["elementwise"].sum())


def report(config: NetworkConfig, input_h: int, input_w: int) -> ComplexityReport:
    params, _ = count_params(config)
    macs, breakdown = count_macs(config, input_h, input_w)
    result = ComplexityReport(config, input_h, input_w, params, macs, 2 * macs, breakdown)
    logger.debug(f"Complexity {input_h}x{input_w}: {params} params, {macs} MACs")
    return result


def render_report(result: ComplexityReport) -> str:
    """Human-readable table plus headline numbers."""
    table = result.breakdown.to_string(index=False)
    s = result.config.scale
    return "\n".join([
        table,
        "",
        f"Input {result.input_h}x{result.input_w} -> {result.input_h * s}x{result.input_w * s} (x{s}, one time-step)",
        f"Parameters: {result.params:,}",
        f"MACs:       {result.macs:,} ({result.gmacs:.3f} G)",
        f"FLOPs:      {result.flops:,} ({result.gflops:.3f} G)",
        f"Element-wise ops (not in FLOPs): {result.elementwise:,}",
    ])


def save_breakdown(result: ComplexityReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    result.breakdown.to_csv(path, index=False)
    return path
