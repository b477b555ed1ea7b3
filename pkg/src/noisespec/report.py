"""Run artifacts: delimited output, the run manifest, and rendered figures.

Every table is CSV with a header row and a leading ``# master_seed=...``
comment, so any file found on disk can be traced back to the run that made
it.  Floats are written with full round-trip precision; two runs from the
same seed produce byte-identical files.  Figures are SVG rendered off-screen
with a fixed hash salt and no timestamp, for the same reason.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from importlib import metadata
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from noisespec.reconstruction import LongTimeEstimate, ShortTimeEstimate
from noisespec.sequences import FilterFunctionCurve, OverlapMatrix
from noisespec.simulator import CoherenceEstimate, MeasurementRecord

__all__ = [
    "DataError",
    "read_coherence_csv",
    "read_records_csv",
    "save_filter_figure",
    "save_reconstruction_figure",
    "write_coherence_csv",
    "write_csv",
    "write_filter_csv",
    "write_frequency_csv",
    "write_long_time_csv",
    "write_manifest",
    "write_overlap_csv",
    "write_records_csv",
    "write_short_time_csv",
]

SVG_HASH_SALT = "noisespec"


class DataError(ValueError):
    """Missing, malformed or inconsistent run data on disk."""


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: list[str], rows, seed: int) -> None:
    """Write one table: seed comment, header, then `rows` of cells."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# master_seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _read_rows(path, required: list[str]) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing data file {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        if reader.fieldnames is None:
            raise DataError(f"{path} has no header row")
        missing = set(required) - set(reader.fieldnames)
        if missing:
            raise DataError(f"{path} is missing column(s) {sorted(missing)}")
        return list(reader)


def write_records_csv(records, path, seed: int) -> None:
    write_csv(
        path,
        ["index", "t_start", "spec_id", "basis", "outcome"],
        ((r.index, r.t_start, r.spec_id, r.basis, r.outcome) for r in records),
        seed,
    )


def read_records_csv(path) -> list[MeasurementRecord]:
    records = []
    for i, row in enumerate(_read_rows(path, ["index", "t_start", "spec_id", "basis", "outcome"])):
        try:
            records.append(
                MeasurementRecord(
                    index=int(row["index"]),
                    t_start=float(row["t_start"]),
                    spec_id=row["spec_id"],
                    basis=row["basis"],
                    outcome=int(row["outcome"]),
                )
            )
        except ValueError as exc:
            raise DataError(f"{path} row {i}: {exc}") from exc
    return records


def write_coherence_csv(estimates, path, seed: int) -> None:
    write_csv(
        path,
        ["family", "tau", "coherence", "stderr", "shots"],
        ((e.family, e.duration, e.magnitude, e.stderr, e.shots) for e in estimates),
        seed,
    )


def read_coherence_csv(path) -> list[CoherenceEstimate]:
    estimates = []
    for i, row in enumerate(_read_rows(path, ["family", "tau", "coherence", "stderr", "shots"])):
        try:
            estimates.append(
                CoherenceEstimate(
                    family=row["family"],
                    duration=float(row["tau"]),
                    magnitude=float(row["coherence"]),
                    stderr=float(row["stderr"]),
                    shots=int(row["shots"]),
                )
            )
        except ValueError as exc:
            raise DataError(f"{path} row {i}: {exc}") from exc
    return estimates


def write_long_time_csv(estimates, path, seed: int) -> None:
    write_csv(
        path,
        ["k", "t", "C_est", "stderr"],
        ((e.lag, e.time, e.value, e.stderr) for e in estimates),
        seed,
    )


def write_short_time_csv(short: ShortTimeEstimate, path, seed: int) -> None:
    write_csv(
        path,
        ["u", "C_eta_est", "Q", "reliable"],
        zip(short.u, short.values, short.quality, short.reliable),
        seed,
    )


def write_filter_csv(curve: FilterFunctionCurve, path, seed: int) -> None:
    write_csv(path, ["u", "F"], zip(curve.u, curve.values), seed)


def write_overlap_csv(overlap: OverlapMatrix, path, seed: int) -> None:
    n = len(overlap.names)
    rows = (
        (overlap.names[i], overlap.names[j], overlap.matrix[i, j])
        for i in range(n)
        for j in range(n)
    )
    write_csv(path, ["i", "j", "F_ij"], rows, seed)


def write_frequency_csv(omega: np.ndarray, values: np.ndarray, path, seed: int) -> None:
    write_csv(path, ["omega", "F"], zip(omega, values), seed)


def write_manifest(out_dir, seed: int, config_sha256: str, path_name: str = "manifest.json") -> Path:
    """Hash every artifact in `out_dir` into a manifest (no timestamps)."""
    out_dir = Path(out_dir)
    outputs = {}
    for p in sorted(out_dir.iterdir()):
        if p.is_file() and p.name != path_name:
            outputs[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "seed": seed,
        "config_sha256": config_sha256,
        "versions": {
            "python": platform.python_version(),
            "noisespec": metadata.version("noisespec"),
            "numpy": metadata.version("numpy"),
            "scipy": metadata.version("scipy"),
            "matplotlib": metadata.version("matplotlib"),
        },
        "outputs": outputs,
    }
    path = out_dir / path_name
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _new_figure(nrows: int = 1, **kwargs):
    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    return plt.subplots(nrows, 1, **kwargs)


def _save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def save_filter_figure(
    filters: list[FilterFunctionCurve], path, frequency: dict | None = None
) -> None:
    """Time-domain filter curves, plus frequency-domain panels when given.

    `frequency` maps a curve name to an (omega, values) pair; those panels are
    drawn log-log beneath the time-domain axes.
    """
    nrows = 2 if frequency else 1
    fig, axes = _new_figure(nrows, figsize=(6.4, 3.2 * nrows), squeeze=False)
    ax = axes[0][0]
    for curve in filters:
        ax.plot(curve.u, curve.values, label=curve.name)
    ax.axhline(0.0, color="0.8", lw=0.8, zorder=0)
    ax.set_xlabel("u")
    ax.set_ylabel("F(u)")
    ax.legend(frameon=False, fontsize="small")
    if frequency:
        axf = axes[1][0]
        for name, (omega, values) in frequency.items():
            axf.loglog(omega, np.maximum(values, 1e-300), label=name)
        axf.set_xlabel("omega")
        axf.set_ylabel("F(omega)")
        axf.legend(frameon=False, fontsize="small")
    fig.tight_layout()
    _save(fig, path)


def save_reconstruction_figure(
    short: ShortTimeEstimate | None,
    long_estimates: list[LongTimeEstimate],
    path,
    analytic=None,
    quality_ratio: float | None = None,
) -> None:
    """Reconstruction overview: C(t) on a log time axis, quality panel below.

    The short-time curve is split into its reliable (solid) and unreliable
    (dotted) parts; long-time points carry error bars; `analytic`, when given,
    is a callable drawn on top as the known model correlation.
    """
    nrows = 2 if short is not None else 1
    fig, axes = _new_figure(
        nrows,
        figsize=(6.4, 4.8 if nrows == 2 else 3.2),
        sharex=True,
        squeeze=False,
        gridspec_kw={"height_ratios": [3, 1]} if nrows == 2 else None,
    )
    ax = axes[0][0]
    ax.set_xscale("log")

    spans = []
    if short is not None:
        pos = short.u > 0
        good = pos & short.reliable
        bad = pos & ~short.reliable
        ax.plot(short.u[pos], np.where(short.reliable[pos], short.values[pos], np.nan),
                color="C0", label="reconstruction")
        ax.plot(short.u[bad], short.values[bad], color="C0", ls=":", lw=0.9, alpha=0.6,
                label="unreliable")
        if good.any():
            spans.append(short.values[good])
    if long_estimates:
        t = [e.time for e in long_estimates]
        v = [e.value for e in long_estimates]
        err = [e.stderr for e in long_estimates]
        ax.errorbar(t, v, yerr=err, fmt="o", ms=3, color="C1", label="long-time")
        spans.append(np.asarray(v))
    if analytic is not None:
        lo = float(short.u[short.u > 0].min()) if short is not None else min(e.time for e in long_estimates)
        hi = max(e.time for e in long_estimates) if long_estimates else float(short.u.max())
        grid = np.geomspace(lo, hi, 400)
        model = np.asarray([analytic(t) for t in grid], dtype=float)
        ax.plot(grid, model, color="k", ls="--", lw=1.0, label="model")
        spans.append(model)
    if spans:
        # The unreliable branch can swing by orders of magnitude; pin the view
        # to the trustworthy data instead.
        all_v = np.concatenate(spans)
        lo, hi = float(all_v.min()), float(all_v.max())
        pad = 0.1 * max(hi - lo, 1.0)
        ax.set_ylim(lo - pad, hi + pad)
    ax.axhline(0.0, color="0.8", lw=0.8, zorder=0)
    ax.set_ylabel("C(t)")
    ax.legend(frameon=False, fontsize="small")

    if short is not None:
        axq = axes[1][0]
        pos = short.u > 0
        axq.plot(short.u[pos], short.quality[pos], color="C2")
        axq.set_yscale("log")
        if quality_ratio is not None and short.quality.size:
            axq.axhline(float(short.quality.max()) / quality_ratio, color="0.5", ls=":", lw=0.9)
        axq.set_ylabel("Q(t)")
        axq.set_xlabel("t")
    else:
        ax.set_xlabel("t")
    fig.tight_layout()
    _save(fig, path)
