import logging
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from driftlab import exceptions, utils  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no timestamp keep the SVG bytes reproducible
matplotlib.rcParams["svg.hashsalt"] = "driftlab"
matplotlib.rcParams["svg.fonttype"] = "none"
SVG_METADATA = {"Date": None, "Creator": None}


def plottable(record):
    """True for completed jobs that carry a per-point table or residual levels"""
    if record.get("status") not in ("passed", "failed"):
        return False
    result = record.get("result") or {}
    return bool(record.get("artifacts", {}).get("table")) or bool(result.get("levels"))


def _find(manifest, job_id):
    for record in manifest.jobs:
        if record.id == job_id:
            return record
    raise exceptions.MissingJob(f"no job {job_id!r} in the manifest of {manifest.scenario}",
                                payload={"jobs": [r.id for r in manifest.jobs]})


def _margin_vs_time(record, directory, path):
    table = utils.read_table(os.path.join(directory, record.artifacts.table))
    times = np.unique(table.t)
    worst = np.array([np.min(table.margin[table.t == t]) for t in times])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(times, worst, marker="o", markersize=3)
    ax.axhline(0.0, color="grey", linewidth=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("min over r of rhs - lhs")
    ax.set_title(f"{record.id}: margin")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


def _residual_vs_spacing(record, path):
    levels = record.result["levels"]
    dr = np.array([level["dr"] for level in levels])
    residual = np.array([max(level["max_residual"], 1e-300) for level in levels])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(dr, residual, marker="o")
    ax.set_xlabel("dr")
    ax.set_ylabel("max |residual|")
    order = record.result.get("order")
    ax.set_title(f"{record.id}: order {order:.2f}" if order is not None else f"{record.id}: residual")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


def emit_plots(manifest, selection, out_dir=None):
    """
    Draw the figures of the selected jobs

    Jobs with a per-point table get the worst margin against t, residual reports get
    the residual against the grid spacing.
    :param manifest: a RunManifest
    :param selection: job ids
    :param out_dir: where the SVG files go, the run directory by default
    :return: the written paths, one per selected job
    :raises MissingJob: for an id not in the manifest or a job without plottable data
    """
    directory = manifest.directory
    out_dir = utils.ensure_dir(out_dir or directory)
    paths = []
    for job_id in selection:
        record = _find(manifest, job_id)
        if not plottable(record):
            raise exceptions.MissingJob(f"job {job_id!r} ({record.status}) has no data to plot")
        path = os.path.join(out_dir, f"{utils.slug(job_id)}.svg")
        if record.artifacts.get("table"):
            _margin_vs_time(record, directory, path)
        else:
            _residual_vs_spacing(record, path)
        logger.debug(f"figure {path}")
        paths.append(path)
    return paths
