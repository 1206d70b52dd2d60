"""Render experiment figure CSVs into image panels.

Consumes only the CSV files emitted by ``tiltshift figure-data`` (the
documented external interface; nothing here imports the experiment
package):

  fig1_weights.csv  x, v_lambda, w_lambda, bstar_linear, bstar_quad, bstar_deg6
  fig2a.csv         level, method, mean, q25, q75
  fig2b.csv         lambda, method, mean, q25, q75   (blank lambda: reference)
  fig3.csv          n_over_L, method, mean_mse       (slope_ref rows: guide line)
  appendixE.csv     d_f, d_b, lambda, method, metric, mean, q25, q75

Rendering is read-only over inputs and deterministic: fixed Agg backend,
fixed dpi, PNG output (no embedded timestamps), so identical inputs and
tool versions reproduce identical bytes.  Header-only placeholder CSVs are
skipped with a status message.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

# Styling is fixed here and is not part of any contract.
STYLE = {
    "dpi": 150,
    "band_alpha": 0.25,
    "colors": {
        "TILT": "#1f77b4",
        "SourceERM": "#7f7f7f",
        "ExactIW": "#d62728",
        "ExactRuLSIF": "#2ca02c",
        "KernelRuLSIF": "#9467bd",
        "slope_ref": "#333333",
    },
}

KNOWN_FIGURES = ("fig1_weights", "fig2a", "fig2b", "fig2c_placeholder",
                 "fig3", "appendixE")


class SchemaMismatchError(ValueError):
    """An input CSV is missing a required column."""

    def __init__(self, path: Path, column: str):
        self.column = column
        super().__init__(f"{path}: missing required column {column!r}")


@dataclass(frozen=True)
class FigureSpec:
    """One renderable figure: its id, inputs, scales, and output path."""

    figure: str
    input_paths: tuple[Path, ...]
    output_path: Path
    log_x: bool = False
    log_y: bool = False
    band_style: str = "interquartile"
    # columns each input must carry; validated before any drawing
    required_columns: tuple[str, ...] = field(default_factory=tuple)


def read_rows(path: Path, required: tuple[str, ...]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in required:
            if column not in header:
                raise SchemaMismatchError(path, column)
        return list(reader)


def _color(method: str) -> str:
    return STYLE["colors"].get(method, "#17becf")


def _series(rows: list[dict], method: str, xcol: str, ycol: str):
    pts = [(float(r[xcol]), float(r[ycol])) for r in rows
           if r["method"] == method and r[xcol] != "" and r[ycol] != ""]
    pts.sort()
    return [p[0] for p in pts], [p[1] for p in pts]


def _band(ax, rows, method, xcol):
    xs, q25 = _series(rows, method, xcol, "q25")
    _, q75 = _series(rows, method, xcol, "q75")
    if xs and len(q25) == len(q75):
        ax.fill_between(xs, q25, q75, color=_color(method),
                        alpha=STYLE["band_alpha"], linewidth=0)


def render_fig1(spec: FigureSpec) -> Path:
    rows = read_rows(spec.input_paths[0], spec.required_columns)
    xs = [float(r["x"]) for r in rows]
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.4))
    left.plot(xs, [float(r["w_lambda"]) for r in rows], color="#d62728",
              label="smoothed ratio")
    left.plot(xs, [float(r["v_lambda"]) for r in rows], color="#1f77b4",
              label="bounded weight")
    left.set_xlabel("x")
    left.set_ylabel("weight")
    left.legend(frameon=False)
    for column, label in (("bstar_linear", "linear"), ("bstar_quad", "quadratic"),
                          ("bstar_deg6", "degree six")):
        right.plot(xs, [float(r[column]) for r in rows], label=label)
    right.set_xlabel("x")
    right.set_ylabel("optimal offset")
    right.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=STYLE["dpi"])
    plt.close(fig)
    return spec.output_path


def render_sweep(spec: FigureSpec, xcol: str, xlabel: str) -> Path:
    rows = read_rows(spec.input_paths[0], spec.required_columns)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    methods = sorted({r["method"] for r in rows})
    for method in methods:
        xs, ys = _series(rows, method, xcol, "mean")
        if xs:
            ax.plot(xs, ys, marker="o", markersize=3, color=_color(method), label=method)
            _band(ax, rows, method, xcol)
        else:
            # reference rows carry no x (blank key): a horizontal line
            vals = [float(r["mean"]) for r in rows if r["method"] == method and r["mean"] != ""]
            if vals:
                ax.axhline(vals[0], color=_color(method), linestyle="--", label=method)
    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("target MSE")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=STYLE["dpi"])
    plt.close(fig)
    return spec.output_path


def render_fig3(spec: FigureSpec) -> Path:
    rows = read_rows(spec.input_paths[0], spec.required_columns)
    fig, ax = plt.subplots(figsize=(5, 3.8))
    for method in sorted({r["method"] for r in rows}):
        xs, ys = _series(rows, method, "n_over_L", "mean_mse")
        if method == "slope_ref":
            ax.plot(xs, ys, linestyle=":", color=_color(method), label="reference slope")
        else:
            ax.plot(xs, ys, marker="o", markersize=3, linestyle="none",
                    color=_color(method), label=method)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("effective sample size n/L")
    ax.set_ylabel("target MSE")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=STYLE["dpi"])
    plt.close(fig)
    return spec.output_path


def render_appendix_grid(spec: FigureSpec) -> Path:
    rows = read_rows(spec.input_paths[0], spec.required_columns)
    pairs = sorted({(int(r["d_f"]), int(r["d_b"])) for r in rows})
    metrics = sorted({r["metric"] for r in rows})
    fig, axes = plt.subplots(len(metrics), len(pairs),
                             figsize=(3.2 * len(pairs), 2.8 * len(metrics)),
                             squeeze=False)
    for i, metric in enumerate(metrics):
        for j, (d_f, d_b) in enumerate(pairs):
            ax = axes[i][j]
            cell = [r for r in rows if int(r["d_f"]) == d_f and int(r["d_b"]) == d_b
                    and r["metric"] == metric]
            for method in sorted({r["method"] for r in cell}):
                xs, ys = _series(cell, method, "lambda", "mean")
                if xs:
                    ax.plot(xs, ys, marker="o", markersize=2.5,
                            color=_color(method), label=method)
                else:
                    vals = [float(r["mean"]) for r in cell if r["method"] == method]
                    if vals:
                        ax.axhline(vals[0], color=_color(method), linestyle="--",
                                   label=method)
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_title(f"d_f={d_f}, d_b={d_b}", fontsize=9)
            if i == len(metrics) - 1:
                ax.set_xlabel("penalty strength")
            if j == 0:
                ax.set_ylabel(metric)
            ax.legend(frameon=False, fontsize=6)
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=STYLE["dpi"])
    plt.close(fig)
    return spec.output_path


def build_spec(figure: str, data_dir: Path, out_dir: Path) -> FigureSpec:
    csv_path = Path(data_dir) / f"{figure}.csv"
    out = Path(out_dir) / f"{figure}.png"
    required = {
        "fig1_weights": ("x", "v_lambda", "w_lambda", "bstar_linear",
                         "bstar_quad", "bstar_deg6"),
        "fig2a": ("level", "method", "mean", "q25", "q75"),
        "fig2b": ("lambda", "method", "mean", "q25", "q75"),
        "fig2c_placeholder": (),
        "fig3": ("n_over_L", "method", "mean_mse"),
        "appendixE": ("d_f", "d_b", "lambda", "method", "metric", "mean"),
    }[figure]
    return FigureSpec(
        figure=figure,
        input_paths=(csv_path,),
        output_path=out,
        log_x=figure in ("fig2b", "fig3", "appendixE"),
        log_y=figure in ("fig2a", "fig2b", "fig3", "appendixE"),
        required_columns=required,
    )


def render(spec: FigureSpec) -> Path | None:
    """Render one figure; returns the image path, or None when skipped.

    Placeholder inputs (header-only CSVs) are skipped, not errors.
    """
    rows = read_rows(spec.input_paths[0], spec.required_columns)
    if not rows:
        print(f"{spec.figure}: no data rows, skipped")
        return None
    if spec.figure == "fig1_weights":
        return render_fig1(spec)
    if spec.figure == "fig2a":
        return render_sweep(spec, "level", "corruption level")
    if spec.figure == "fig2b":
        return render_sweep(spec, "lambda", "penalty strength")
    if spec.figure == "fig3":
        return render_fig3(spec)
    if spec.figure == "appendixE":
        return render_appendix_grid(spec)
    print(f"{spec.figure}: nothing to draw, skipped")
    return None


def render_directory(data_dir: Path, out_dir: Path) -> list[Path]:
    """Render every known figure CSV present in ``data_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for figure in KNOWN_FIGURES:
        spec = build_spec(figure, data_dir, out_dir)
        if not spec.input_paths[0].exists():
            continue
        path = render(spec)
        if path is not None:
            written.append(path)
            print(f"{figure}: wrote {path}")
    return written


def main(argv=None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 2:
        print("usage: render_figures <figure_data_dir> <out_dir>", file=sys.stderr)
        return 2
    try:
        render_directory(Path(args[0]), Path(args[1]))
    except SchemaMismatchError as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
