"""
无知区间可视化

每个对比一行：NUC 点估计、各预算下的因子区间 (细线)、阴性对照区间 (粗线)、
极端界 (方框)，稳健性值标注在区间上方。所有图元只由 report.json 计算。
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

from .config import SVG_HASH_SALT

SVG_RC = {
    "svg.hashsalt": SVG_HASH_SALT,
    "svg.fonttype": "none",
    "font.size": 8,
}
ROW_HEIGHT = 1.0
BUDGET_OFFSET = 0.18
MODE_STYLE = {
    "factor": {"color": "#4a6fa5", "linewidth": 1.2},
    "null_control": {"color": "#c0392b", "linewidth": 3.0},
}


def _format_rv(value: Optional[float]) -> str:
    return "inf" if value is None else f"{value:.2f}"


def annotation(robustness: Dict[str, Any]) -> str:
    """稳健性值标注，例如 RV¹ 0.12  XRV 0.05  RVΓ 0.31"""
    parts = [
        f"RV¹ {_format_rv(robustness.get('rv1'))}",
        f"XRV {_format_rv(robustness.get('xrv'))}",
        f"RVΓ {_format_rv(robustness.get('rv_gamma'))}",
    ]
    if robustness.get("combined_status") is not None:
        parts.append(f"RVΓc {_format_rv(robustness.get('rv_combined'))}")
    return "  ".join(parts)


def glyphs(report: Dict[str, Any]) -> List[Dict[str, Any]]:
    """报告中每个图元的位置 (纯函数，供绘图与测试共用)"""
    items: List[Dict[str, Any]] = []
    budgets = report["r2_budgets"]
    n_rows = len(report["outcomes"])
    for row, outcome in enumerate(report["outcomes"]):
        y = (n_rows - 1 - row) * ROW_HEIGHT
        items.append({"kind": "point", "label": outcome["label"], "x": outcome["nuc_effect"], "y": y})
        for region in outcome["regions"]:
            offset = (budgets.index(region["r2_tu"]) - (len(budgets) - 1) / 2.0) * BUDGET_OFFSET
            kind = "box" if region["mode"] == "extreme" else "interval"
            items.append(
                {
                    "kind": kind,
                    "mode": region["mode"],
                    "label": outcome["label"],
                    "x0": region["lower"],
                    "x1": region["upper"],
                    "y": y + offset,
                }
            )
        items.append(
            {
                "kind": "text",
                "label": outcome["label"],
                "text": annotation(outcome["robustness"]),
                "x": outcome["nuc_effect"],
                "y": y + 0.42,
            }
        )
    return items


def plot_intervals(report: Dict[str, Any], path: Union[str, Path]) -> Path:
    """把报告画成 SVG 区间图

    Args:
        report: report.json 的内容 (已解析的字典)
        path: 输出 SVG 路径

    Returns:
        输出路径
    """
    path = Path(path)
    items = glyphs(report)
    n_rows = max(len(report["outcomes"]), 1)
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(8.0, 0.6 * n_rows + 1.2))
        ax.axvline(0.0, color="#888888", linewidth=0.8, linestyle="--")
        x_values = [0.0]
        for item in items:
            if item["kind"] == "point":
                ax.plot([item["x"]], [item["y"]], marker="o", color="black", markersize=3)
                x_values.append(item["x"])
            elif item["kind"] == "interval":
                ax.plot([item["x0"], item["x1"]], [item["y"], item["y"]], **MODE_STYLE[item["mode"]])
                x_values += [item["x0"], item["x1"]]
            elif item["kind"] == "box":
                ax.add_patch(
                    Rectangle(
                        (item["x0"], item["y"] - 0.12),
                        item["x1"] - item["x0"],
                        0.24,
                        fill=False,
                        edgecolor="#555555",
                        linewidth=0.8,
                    )
                )
                x_values += [item["x0"], item["x1"]]
            else:
                ax.text(item["x"], item["y"], item["text"], ha="center", va="bottom", fontsize=6)
        low, high = min(x_values), max(x_values)
        pad = 0.05 * (high - low) if high > low else 1.0
        ax.set_xlim(low - pad, high + pad)
        ax.set_ylim(-0.7, (n_rows - 1) * ROW_HEIGHT + 0.9)
        ax.set_yticks([(n_rows - 1 - row) * ROW_HEIGHT for row in range(len(report["outcomes"]))])
        ax.set_yticklabels([outcome["label"] for outcome in report["outcomes"]])
        ax.set_xlabel(f"effect of {report['treatment']} (t1 − t2)")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
