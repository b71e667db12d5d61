"""SVG figures for evaluation reports and sweeps.

Figures are written with a fixed hash salt and no date stamp so repeated runs
produce byte-identical files.
"""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .channels import STATE_CHANNELS, UNITS  # noqa: E402

_RC = {"svg.hashsalt": "vemo", "svg.fonttype": "none", "figure.dpi": 100}


def _save(fig, path):
    with plt.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": "vemo"})
    plt.close(fig)


def psd_figure(report, path, band=None):
    """Reference vs predicted PSD per channel on log axes."""
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(2, 2, figsize=(9, 6))
        for ax, name in zip(axes.flat, report.channels):
            ref, pred = report.psd[name]
            keep = ref.frequencies > 0
            ax.loglog(ref.frequencies[keep], ref.power[keep], label="reference", lw=1.2)
            ax.loglog(pred.frequencies[keep], pred.power[keep], "--", label="prediction", lw=1.0)
            if band is not None:
                ax.axvspan(*band, color="0.9", zorder=0)
            ax.set_title(name)
            ax.set_xlabel("frequency [Hz]")
            ax.set_ylabel(f"PSD [({UNITS[name]})^2/Hz]")
        axes.flat[0].legend(loc="lower left")
        fig.tight_layout()
    _save(fig, path)


def histogram_figure(report, path):
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(2, 2, figsize=(9, 6))
        for ax, (c, name) in zip(axes.flat, enumerate(report.channels)):
            counts, edges = report.histograms[c]
            ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge")
            ax.set_title(name)
            ax.set_xlabel("relative error [%]")
            ax.set_ylabel("count")
        fig.tight_layout()
    _save(fig, path)


def relative_error_figure(report, path):
    """Relative-error time series with mean and median lines."""
    t = np.arange(report.reference.shape[0]) / report.sample_rate_hz
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(4, 1, figsize=(9, 9), sharex=True)
        for ax, (c, name) in zip(axes, enumerate(report.channels)):
            ax.plot(t, report.rel_error[:, c], lw=0.6)
            ax.axhline(report.mean_rel[c], color="k", lw=1.0, label="mean")
            ax.axhline(report.median_rel[c], color="k", ls="--", lw=1.0, label="median")
            ax.set_ylabel(f"{name} [%]")
        axes[0].legend(loc="upper right")
        axes[-1].set_xlabel("time [s]")
        fig.tight_layout()
    _save(fig, path)


def sweep_figure(sweep, path, metric="mean_rel"):
    x = np.arange(len(sweep.cutoffs))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 4))
        w = 0.8 / len(STATE_CHANNELS)
        for ci, name in enumerate(STATE_CHANNELS):
            ax.bar(x + ci * w, sweep.metrics[metric][:, ci], width=w, label=name)
        ax.set_xticks(x + 0.4 - w / 2, [f"{c:g} Hz" for c in sweep.cutoffs])
        ax.set_xlabel("input cutoff")
        ax.set_ylabel("mean relative error [%]" if metric == "mean_rel" else metric)
        ax.set_title(f"model trained at {sweep.training_cutoff:g} Hz")
        ax.legend()
        fig.tight_layout()
    _save(fig, path)
