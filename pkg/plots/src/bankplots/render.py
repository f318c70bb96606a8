"""Figure rendering for the four supported kinds.

paths      one trajectory: mean reserve, total reserve, and bank count,
           with markers at default times
fan        per-size quantile fans with the limit curve overlaid
histogram  distribution of the under-threshold fraction across runs
density    kernel-density snapshots of the particle reserves per time
"""

import math
import os
import tempfile
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .kde import kde_curve
from .schemas import SchemaError, floats, read_table

KINDS = ("paths", "fan", "histogram", "density")

# input schema per figure kind; a second optional table where listed
_INPUTS = {
    "paths": ("grid", "events"),
    "fan": ("fan",),
    "histogram": ("histogram",),
    "density": ("snapshot",),
}


@dataclass(frozen=True)
class PlotJob:
    kind: str
    inputs: tuple
    out: str
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind '{self.kind}', "
                             f"expected one of {', '.join(KINDS)}")
        want = _INPUTS[self.kind]
        n = len(self.inputs)
        if n == 0 or n > len(want):
            raise ValueError(f"kind '{self.kind}' takes "
                             f"{' or '.join(str(k + 1) for k in range(len(want)))}"
                             f" input file(s), got {n}")


def _style(job, key, default):
    return job.style.get(key, default)


def _render_paths(job, fig):
    grid = read_table(job.inputs[0], "grid")
    events = (read_table(job.inputs[1], "events")
              if len(job.inputs) > 1 else None)
    t = floats(grid["t"])
    axes = fig.subplots(3, 1, sharex=True)
    axes[0].plot(t, floats(grid["m"]), lw=1.0)
    axes[0].set_ylabel("mean reserve")
    if events is not None:
        te = floats(events["t"])
        xe = floats(events["reserve"])
        dt = [(a, b) for a, b, k in zip(te, xe, events["kind"])
              if k == "default"]
        if dt:
            axes[0].plot([a for a, _ in dt], [b for _, b in dt], "x",
                         color="tab:red", ms=6, label="default")
            axes[0].legend(loc="best", frameon=False)
    axes[1].plot(t, floats(grid["S"]), lw=1.0, color="tab:green")
    axes[1].set_ylabel("total reserve")
    axes[2].step(t, floats(grid["N"]), where="post", color="tab:orange")
    axes[2].set_ylabel("banks")
    axes[2].set_xlabel("t")


def _render_fan(job, fig):
    fan = read_table(job.inputs[0], "fan")
    t = np.array(floats(fan["t"]))
    sizes = sorted({int(n) for n in fan["N"]})
    mean = np.array(floats(fan["mean"]))
    q05 = np.array(floats(fan["q05"]))
    q95 = np.array(floats(fan["q95"]))
    limit = np.array(floats(fan["limit"]))
    ax = fig.subplots()
    alpha = float(_style(job, "alpha", 0.25))
    for n in sizes:
        sel = np.array([int(v) == n for v in fan["N"]])
        keep = sel & ~np.isnan(mean)
        ax.fill_between(t[keep], q05[keep], q95[keep], alpha=alpha)
        ax.plot(t[keep], mean[keep], lw=1.2, label=f"N = {n}")
    order = np.argsort(t)
    tt, ll = t[order], limit[order]
    ax.plot(tt, ll, "k--", lw=1.5, label="limit")
    ax.set_xlabel("t")
    ax.set_ylabel("mean reserve")
    ax.legend(loc="best", frameon=False)


def _render_histogram(job, fig):
    hist = read_table(job.inputs[0], "histogram")
    sizes = sorted({int(n) for n in hist["N"]})
    bins = int(_style(job, "bins", 20))
    axes = fig.subplots(1, len(sizes), sharey=True, squeeze=False)[0]
    for ax, n in zip(axes, sizes):
        d = [float(v) for v, m in zip(hist["d_N"], hist["N"])
             if int(m) == n and v != ""]
        ax.hist(d, bins=bins, range=(0.0, 1.0), color="tab:blue",
                edgecolor="white")
        ax.set_title(f"N = {n}")
        ax.set_xlabel("fraction under threshold")
    axes[0].set_ylabel("runs")


def _render_density(job, fig):
    snap = read_table(job.inputs[0], "snapshot")
    t = floats(snap["t"])
    x = floats(snap["reserve"])
    times = sorted(set(t))
    bw = _style(job, "bandwidth", None)
    ncol = 2 if len(times) > 1 else 1
    nrow = math.ceil(len(times) / ncol)
    axes = fig.subplots(nrow, ncol, squeeze=False).ravel()
    for ax in axes[len(times):]:
        ax.set_visible(False)
    for ax, tv in zip(axes, times):
        samples = [xi for ti, xi in zip(t, x) if ti == tv]
        grid, dens = kde_curve(samples, bandwidth=bw)
        ax.plot(grid, dens, lw=1.2)
        ax.fill_between(grid, dens, alpha=0.2)
        ax.set_title(f"t = {tv:g}")
        ax.set_xlabel("reserve")
        ax.set_ylabel("density")


_RENDERERS = {
    "paths": _render_paths,
    "fan": _render_fan,
    "histogram": _render_histogram,
    "density": _render_density,
}


def render(job: PlotJob) -> str:
    """Render the job to its output path; returns the path written.

    The figure is written atomically: drawn to a temporary file in the
    destination directory, then renamed over the target, so an
    interrupted run never leaves a truncated image.
    """
    fig = plt.figure(figsize=(8.0, 6.0), dpi=int(_style(job, "dpi", 110)))
    try:
        _RENDERERS[job.kind](job, fig)
        title = _style(job, "title", None)
        if title:
            fig.suptitle(str(title))
        fig.tight_layout()
        out_dir = os.path.dirname(os.path.abspath(job.out)) or "."
        fd, tmp = tempfile.mkstemp(suffix=".png", dir=out_dir)
        try:
            with os.fdopen(fd, "wb") as fh:
                fig.savefig(fh, format="png")
            os.replace(tmp, job.out)
        except BaseException:
            os.unlink(tmp)
            raise
    finally:
        plt.close(fig)
    return job.out
