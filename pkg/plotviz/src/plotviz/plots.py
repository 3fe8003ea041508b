"""The three figure kinds rendered from solver CSV artifacts.

Every number drawn or annotated is read from the input files; the only
arithmetic done here is display-side (magnitudes, log-space line fits).
"""

import os
import re
from dataclasses import dataclass, field

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .csvio import PlotDataError, read_columns, to_floats

KINDS = ("field-heatmap", "farfield-polar", "convergence")

FIELD_HEADER = ("x", "y", "re", "im", "accurate")
CLOUD_HEADER = ("x", "y")
FAR2_HEADER = ("phi", "re", "im", "accurate")
FAR3_HEADER = ("theta", "phi", "re", "im", "accurate")
CONV_HEADER = (
    "level", "n", "h", "h_q", "time_s", "rel_err_near", "rel_err_far",
    "inc_err_far", "ratio_rel_far", "ratio_inc_far",
)


@dataclass(frozen=True)
class PlotSpec:
    """One figure request: inputs, kind, reference-slope data, destination."""

    kind: str
    csv_path: str
    output_path: str
    overlay_csv: str | None = None  # scatterer point cloud for heatmaps
    n_maps: int | None = None  # pieces per subdivision, sets reference slopes
    rho: float | None = None  # contraction ratio for the damped reference
    title: str | None = None
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotDataError(f"unknown plot kind {self.kind!r}; pick from {KINDS}")
        for path in (self.csv_path, self.overlay_csv):
            if path is not None and not os.path.exists(path):
                raise PlotDataError(f"input file {path} does not exist")


@dataclass(frozen=True)
class RenderResult:
    path: str
    annotation: str | None = None
    fitted_ratio: float | None = None
    reference_scales: dict = field(default_factory=dict)


def _save(fig, spec: PlotSpec) -> None:
    out_dir = os.path.dirname(spec.output_path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    fig.savefig(spec.output_path, dpi=spec.dpi, bbox_inches="tight")
    plt.close(fig)


def load_field_grid(path: str):
    """Raster axes and complex values of a field CSV written x-major."""
    cols = read_columns(path, FIELD_HEADER)
    xs = to_floats(cols["x"])
    ys = to_floats(cols["y"])
    values = to_floats(cols["re"]) + 1j * to_floats(cols["im"])
    ux, uy = np.unique(xs), np.unique(ys)
    if len(ux) * len(uy) != len(xs):
        raise PlotDataError(f"{path} is not a full rectangular raster")
    order = np.lexsort((ys, xs))
    return ux, uy, values[order].reshape(len(ux), len(uy))


def plot_field(spec: PlotSpec) -> RenderResult:
    """Heatmap of the real part of a total/near field, scatterer overlaid."""
    xs, ys, values = load_field_grid(spec.csv_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    extent = (xs[0], xs[-1], ys[0], ys[-1])
    image = ax.imshow(
        values.real.T,
        origin="lower",
        extent=extent,
        aspect="equal",
        cmap="RdBu_r",
        interpolation="nearest",
    )
    fig.colorbar(image, ax=ax, label="Re u")
    if spec.overlay_csv:
        cloud = read_columns(spec.overlay_csv, CLOUD_HEADER)
        ax.scatter(
            to_floats(cloud["x"]), to_floats(cloud["y"]),
            s=0.3, c="black", marker=".", linewidths=0,
        )
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(spec.title or "total field (real part)")
    _save(fig, spec)
    return RenderResult(path=spec.output_path)


def plot_farfield(spec: PlotSpec) -> RenderResult:
    """Far-field magnitude: polar trace in 2D, lat-long raster in 3D."""
    try:
        cols = read_columns(spec.csv_path, FAR3_HEADER)
        planar = False
    except PlotDataError:
        cols = read_columns(spec.csv_path, FAR2_HEADER)
        planar = True
    magnitude = np.abs(to_floats(cols["re"]) + 1j * to_floats(cols["im"]))
    if planar:
        phi = to_floats(cols["phi"])
        fig, ax = plt.subplots(subplot_kw={"projection": "polar"})
        ax.plot(np.append(phi, phi[0] + 2.0 * np.pi), np.append(magnitude, magnitude[0]))
        if np.max(magnitude) == 0.0:
            ax.set_rmax(1.0)
        ax.set_title(spec.title or "far-field magnitude")
    else:
        theta = to_floats(cols["theta"])
        phi = to_floats(cols["phi"])
        ut, up = np.unique(theta), np.unique(phi)
        if len(ut) * len(up) != len(theta):
            raise PlotDataError(f"{spec.csv_path} is not a full direction grid")
        order = np.lexsort((phi, theta))
        grid = magnitude[order].reshape(len(ut), len(up))
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        image = ax.imshow(
            grid,
            origin="upper",
            extent=(up[0], up[-1], ut[-1], ut[0]),
            aspect="auto",
            cmap="viridis",
            interpolation="nearest",
        )
        fig.colorbar(image, ax=ax, label="|far field|")
        ax.set_xlabel("phi")
        ax.set_ylabel("theta")
        ax.set_title(spec.title or "far-field magnitude")
    _save(fig, spec)
    return RenderResult(path=spec.output_path)


def fitted_ratio_from_csv(path: str) -> float:
    """Per-level reduction factor of rel_err_far, by log-linear fit."""
    cols = read_columns(path, CONV_HEADER)
    levels = to_floats(cols["level"])
    errs = to_floats(cols["rel_err_far"])
    keep = np.isfinite(errs) & (errs > 0)
    if np.count_nonzero(keep) < 2:
        raise PlotDataError(f"{path} has fewer than two usable error rows")
    slope = np.polyfit(levels[keep], np.log(errs[keep]), 1)[0]
    return float(np.exp(-slope))


def _reference_line(levels, errs, ratio):
    """Intercept c making c * ratio^-level the log-space least-squares fit."""
    c = float(np.exp(np.mean(np.log(errs) + levels * np.log(ratio))))
    return c, c * ratio ** -levels


def plot_convergence(spec: PlotSpec) -> RenderResult:
    """Log-scale error-vs-level plot with fitted geometric reference lines."""
    cols = read_columns(spec.csv_path, CONV_HEADER)
    levels = to_floats(cols["level"])
    series = {
        "rel err far": to_floats(cols["rel_err_far"]),
        "rel err near": to_floats(cols["rel_err_near"]),
        "increment far": to_floats(cols["inc_err_far"]),
    }
    keep = np.isfinite(series["rel err far"]) & (series["rel err far"] > 0)
    if np.count_nonzero(keep) < 2:
        raise PlotDataError(
            f"{spec.csv_path} has fewer than two usable error rows"
        )
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for name, vals in series.items():
        mask = np.isfinite(vals) & (vals > 0)
        if np.any(mask):
            ax.semilogy(levels[mask], vals[mask], marker="o", label=name)

    lv, ev = levels[keep], series["rel err far"][keep]
    scales = {}
    if spec.n_maps:
        refs = {f"{spec.n_maps}^-level": float(spec.n_maps)}
        if spec.rho:
            damped = spec.n_maps * spec.rho
            refs[f"({spec.n_maps} rho)^-level"] = float(damped)
        for name, ratio in refs.items():
            c, line = _reference_line(lv, ev, ratio)
            scales[name] = c
            ax.semilogy(lv, line, linestyle="--", label=name)

    fitted = fitted_ratio_from_csv(spec.csv_path)
    annotation = f"fitted ratio {fitted:.2f} per level"
    ax.text(
        0.02, 0.04, annotation, transform=ax.transAxes,
        fontsize=9, bbox={"facecolor": "white", "alpha": 0.8, "edgecolor": "gray"},
    )
    ax.set_xlabel("subdivision level")
    ax.set_ylabel("relative error")
    ax.set_xticks(levels[np.isfinite(levels)])
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title(spec.title or "far-field convergence")
    _save(fig, spec)
    return RenderResult(
        path=spec.output_path,
        annotation=annotation,
        fitted_ratio=fitted,
        reference_scales=scales,
    )


def annotation_value(annotation: str) -> float:
    """The numeric ratio displayed in a convergence annotation string."""
    match = re.search(r"fitted ratio ([0-9.]+)", annotation)
    if match is None:
        raise ValueError(f"no ratio in {annotation!r}")
    return float(match.group(1))


def render(spec: PlotSpec) -> RenderResult:
    if spec.kind == "field-heatmap":
        return plot_field(spec)
    if spec.kind == "farfield-polar":
        return plot_farfield(spec)
    return plot_convergence(spec)
