"""Render scatter, training-curve and box-plot figures from experiment CSVs.

The input files follow the experiment harness schemas:

- ``scatter.csv``: model, intervention, delta_init, kl_at_eval
- ``runs.csv``: reference_id, intervention, model, gamma, delta_init, step, kl
- ``summary.csv``: step, model, intervention, p05, p50, p95
- ``radius.csv``: prior, r_squared, deviation_sq

Rendering is a pure function of the CSV content and the spec: a fixed
style sheet, fixed ordering and colors, and no timestamps in the image
metadata, so re-rendering the same inputs is byte-stable. Every renderer
also returns the exact dataframe it drew, which is what tests assert on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

#: fixed palette: one color per model, shared by every figure kind
MODEL_COLORS = {
    "causal": "tab:blue",
    "anticausal": "tab:red",
    "joint": "tab:gray",
}

MODEL_ORDER = ("causal", "anticausal", "joint")


@dataclass
class FigureSpec:
    """One figure: what to draw, from which CSV, with which filters."""

    kind: str  # scatter | curves | boxplot
    input_csv: str
    output: str
    intervention: str | None = None
    models: tuple | None = None
    log_x: bool = False
    log_y: bool = False
    center: str = "mean"  # solid curve statistic when drawing from runs.csv

    def __post_init__(self):
        if self.kind not in ("scatter", "curves", "boxplot"):
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if self.center not in ("mean", "median"):
            raise ValueError("center must be mean or median")
        if self.models is not None:
            self.models = tuple(self.models)


@dataclass
class RenderResult:
    """Path of the written image plus the dataframe(s) behind it."""

    path: Path
    data: pd.DataFrame


def load_spec(path) -> FigureSpec:
    """Read a FigureSpec from a JSON file."""
    raw = json.loads(Path(path).read_text())
    return FigureSpec(**raw)


def _read_csv(path, required_cols) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input CSV not found: {path}")
    frame = pd.read_csv(path)
    missing = [c for c in required_cols if c not in frame.columns]
    if missing:
        raise ValueError(f"{path} is missing column(s): {', '.join(missing)}")
    return frame


def _apply_filters(frame: pd.DataFrame, spec: FigureSpec) -> pd.DataFrame:
    out = frame
    if spec.intervention is not None and "intervention" in out.columns:
        out = out[out["intervention"] == spec.intervention]
        if out.empty:
            raise ValueError(f"no rows match intervention={spec.intervention!r}")
    if spec.models is not None and "model" in out.columns:
        out = out[out["model"].isin(spec.models)]
        if out.empty:
            raise ValueError(f"no rows match models={spec.models!r}")
    return out.reset_index(drop=True)


def _model_sequence(frame: pd.DataFrame):
    present = list(frame["model"].unique())
    return [m for m in MODEL_ORDER if m in present] + sorted(
        m for m in present if m not in MODEL_ORDER
    )


def _new_axes():
    fig, ax = plt.subplots(figsize=(5.0, 3.75), dpi=150)
    return fig, ax


def _finish(fig, ax, spec: FigureSpec) -> Path:
    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    # strip the writer tag so identical inputs give identical bytes
    fig.savefig(out, metadata={"Software": None})
    plt.close(fig)
    return out


def _render_scatter(spec: FigureSpec) -> RenderResult:
    frame = _apply_filters(
        _read_csv(spec.input_csv, ["model", "intervention", "delta_init", "kl_at_eval"]),
        spec,
    )
    fig, ax = _new_axes()
    for model in _model_sequence(frame):
        sel = frame[frame["model"] == model]
        ax.scatter(
            sel["delta_init"],
            sel["kl_at_eval"],
            s=12,
            alpha=0.7,
            label=model,
            color=MODEL_COLORS.get(model, "tab:green"),
        )
    ax.set_xlabel("initial parameter distance")
    ax.set_ylabel("KL at eval step")
    title = "adaptation vs initial distance"
    if spec.intervention:
        title += f" ({spec.intervention})"
    ax.set_title(title)
    ax.legend()
    return RenderResult(path=_finish(fig, ax, spec), data=frame)


def _curve_table(spec: FigureSpec) -> pd.DataFrame:
    """Per (model, step) center line and 5/95 band.

    Accepts either a percentile summary (median line, precomputed band) or
    raw per-run rows (center is the mean by default, median on request).
    """
    head = pd.read_csv(spec.input_csv, nrows=0).columns
    if {"p05", "p50", "p95"} <= set(head):
        frame = _apply_filters(
            _read_csv(spec.input_csv, ["step", "model", "intervention", "p05", "p50", "p95"]),
            spec,
        )
        table = frame.rename(columns={"p50": "center"})[
            ["model", "step", "center", "p05", "p95"]
        ]
        return table.sort_values(["model", "step"]).reset_index(drop=True)
    frame = _apply_filters(
        _read_csv(spec.input_csv, ["model", "intervention", "step", "kl"]), spec
    )
    center = "mean" if spec.center == "mean" else "median"
    grouped = frame.groupby(["model", "step"])["kl"]
    table = pd.DataFrame(
        {
            "center": grouped.mean() if center == "mean" else grouped.median(),
            "p05": grouped.quantile(0.05),
            "p95": grouped.quantile(0.95),
        }
    ).reset_index()
    return table.sort_values(["model", "step"]).reset_index(drop=True)


def _render_curves(spec: FigureSpec) -> RenderResult:
    table = _curve_table(spec)
    fig, ax = _new_axes()
    for model in _model_sequence(table):
        sel = table[table["model"] == model]
        color = MODEL_COLORS.get(model, "tab:green")
        ax.plot(sel["step"], sel["center"], label=model, color=color)
        ax.fill_between(sel["step"], sel["p05"], sel["p95"], color=color, alpha=0.2)
    ax.set_xlabel("samples seen")
    ax.set_ylabel("KL to transfer distribution")
    title = "training curves"
    if spec.intervention:
        title += f" ({spec.intervention})"
    ax.set_title(title)
    ax.legend()
    return RenderResult(path=_finish(fig, ax, spec), data=table)


def _render_boxplot(spec: FigureSpec) -> RenderResult:
    frame = _read_csv(spec.input_csv, ["prior", "r_squared", "deviation_sq"])
    if frame.empty:
        raise ValueError(f"{spec.input_csv} holds no rows")
    fig, ax = _new_axes()
    groups, labels = [], []
    for prior in ("dense", "sparse"):
        sel = frame[frame["prior"] == prior]
        if sel.empty:
            raise ValueError(f"no rows match prior={prior!r}")
        for col, tag in (("r_squared", "radius$^2$"), ("deviation_sq", "deviation$^2$")):
            # log-scale boxes cannot show zeros; clip to a tiny floor
            groups.append(np.maximum(sel[col].to_numpy(), 1e-12))
            labels.append(f"{prior}\n{tag}")
    ax.boxplot(groups, tick_labels=labels)
    ax.set_ylabel("squared score distance")
    ax.set_title("advantage sphere: radius vs intervention deviation")
    return RenderResult(path=_finish(fig, ax, spec), data=frame)


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure and return its path plus the plotted data."""
    if spec.kind == "scatter":
        return _render_scatter(spec)
    if spec.kind == "curves":
        return _render_curves(spec)
    return _render_boxplot(spec)


def render_all(in_dir, out_dir) -> list[RenderResult]:
    """Regenerate the standard figure set from a harness output directory.

    Per intervention present in the data: a log-log scatter of initial
    distance vs KL at eval, and mean training curves with 5/95 bands; plus
    the radius box plot when the directory carries a radius study.
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    meta_path = in_dir / "meta.json"
    tag = ""
    if meta_path.exists():
        cfg = json.loads(meta_path.read_text()).get("config", {})
        prior = cfg.get("prior", "")
        tag = f"_{prior}_k{cfg.get('k', '')}" if prior else ""
    results = []
    scatter_csv = in_dir / "scatter.csv"
    runs_csv = in_dir / "runs.csv"
    interventions = sorted(pd.read_csv(scatter_csv)["intervention"].unique())
    for interv in interventions:
        results.append(
            render(
                FigureSpec(
                    kind="scatter",
                    input_csv=str(scatter_csv),
                    output=str(out_dir / f"scatter_{interv}{tag}.png"),
                    intervention=interv,
                    log_x=True,
                    log_y=True,
                )
            )
        )
        results.append(
            render(
                FigureSpec(
                    kind="curves",
                    input_csv=str(runs_csv),
                    output=str(out_dir / f"curves_{interv}{tag}.png"),
                    intervention=interv,
                )
            )
        )
    radius_csv = in_dir / "radius.csv"
    if radius_csv.exists():
        results.append(
            render(
                FigureSpec(
                    kind="boxplot",
                    input_csv=str(radius_csv),
                    output=str(out_dir / f"radius_boxplot{tag}.png"),
                    log_y=True,
                )
            )
        )
    return results
