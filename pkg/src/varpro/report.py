"""Report files: JSON, importance table, plot data, figure, and benchmark summaries."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger(__name__)

FIGURE_DPI = 120


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True)


def config_hash(config: dict) -> str:
    """Short stable digest of a config mapping."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _header_lines(run_config: dict) -> list:
    return [f"# varpro {__version__}",
            "# run_config " + json.dumps(run_config, sort_keys=True, separators=(",", ":"))]


def _write_csv(path: Path, header: list, rows, run_config: dict):
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in _header_lines(run_config):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv_table(path) -> tuple:
    """Inverse of the writers here: (embedded header lines, column names, rows)."""
    meta, body = [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for line in fh:
            (meta if line.startswith("#") else body).append(line)
    rows = list(csv.reader(body))
    return [m.rstrip("\n") for m in meta], rows[0], rows[1:]


def _fmt(x) -> str:
    return repr(float(x))


def report_document(rep, run_config: dict, extra: dict | None = None) -> dict:
    doc = rep.to_dict()
    doc["run_config"] = run_config
    if extra:
        doc.update(extra)
    return doc


def write_json(path, doc: dict):
    Path(path).write_text(_dumps(doc) + "\n", encoding="utf-8")


def importance_rows(rep) -> list:
    sel = rep.selected if rep.selected is not None else np.zeros(rep.p, dtype=bool)
    return [[name, _fmt(rep.standardized[j]), int(bool(sel[j]))] for j, name in enumerate(rep.names)]


def plot_rows(rep) -> list:
    """Variables by standardized importance, largest first (ties by column order)."""
    order = sorted(range(rep.p), key=lambda j: (-rep.standardized[j], j))
    sel = rep.selected if rep.selected is not None else np.zeros(rep.p, dtype=bool)
    return [[rank + 1, rep.names[j], _fmt(rep.standardized[j]), _fmt(rep.mean[j]),
             int(bool(sel[j]))] for rank, j in enumerate(order)]


def render_importance_figure(rep, path, title: str = "", max_vars: int = 40,
                             run_config: dict | None = None):
    """Horizontal bar chart of the top standardized importances, saved to ``path``."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = plot_rows(rep)[:max_vars]
    names = [r[1] for r in rows][::-1]
    vals = [float(r[2]) for r in rows][::-1]
    chosen = [bool(r[4]) for r in rows][::-1]
    height = max(2.5, 0.22 * len(rows) + 1.0)
    fig, ax = plt.subplots(figsize=(6.0, height))
    colors = ["tab:blue" if c else "tab:gray" for c in chosen]
    ax.barh(range(len(vals)), vals, color=colors)
    ax.set_yticks(range(len(vals)))
    ax.set_yticklabels(names, fontsize=8)
    if rep.cutoff is not None:
        ax.axvline(rep.cutoff, color="tab:red", lw=1, ls="--")
    ax.set_xlabel("standardized importance")
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    # fixed metadata keeps the file byte-stable across reruns
    meta = {"Software": f"varpro {__version__}"}
    if run_config is not None:
        meta["Description"] = "run_config " + json.dumps(run_config, sort_keys=True)
    fig.savefig(path, dpi=FIGURE_DPI, metadata=meta)
    plt.close(fig)


def write_selection_outputs(rep, out_dir, run_config: dict, stem: str = "importance",
                            extra: dict | None = None, figure: bool = True) -> dict:
    """Write ``<stem>.json``, ``<stem>.csv``, ``<stem>_plot.csv`` and ``<stem>.png``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / f"{stem}.json",
        "table": out / f"{stem}.csv",
        "plot_data": out / f"{stem}_plot.csv",
    }
    write_json(paths["json"], report_document(rep, run_config, extra))
    _write_csv(paths["table"], ["name", "I", "selected"], importance_rows(rep), run_config)
    _write_csv(paths["plot_data"], ["rank", "name", "standardized", "mean", "selected"],
               plot_rows(rep), run_config)
    if figure:
        paths["figure"] = out / f"{stem}.png"
        render_importance_figure(rep, paths["figure"], title=run_config.get("data", ""),
                                 run_config=run_config)
    return paths


# benchmark ----------------------------------------------------------------------

SUMMARY_COLUMNS = ["model", "rep", "config_hash", "auc_pr", "gmean", "precision", "accuracy",
                   "n_selected", "status"]
METRICS = ("auc_pr", "gmean", "precision", "accuracy")


def aggregate(rows: list) -> list:
    """Mean of each metric per model over successful reps."""
    out = []
    for model in dict.fromkeys(r["model"] for r in rows):
        ok = [r for r in rows if r["model"] == model and r["status"] == "ok"]
        entry = {"model": model, "reps": len(ok)}
        for m in METRICS:
            entry[m] = float(np.mean([r[m] for r in ok])) if ok else float("nan")
        out.append(entry)
    return out


def write_benchmark(out_dir, rows: list, run_config: dict, frequencies: dict | None = None) -> dict:
    """Long-format summary, aggregate table and optional per-variable selection frequencies."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"summary": out / "summary.csv", "aggregate": out / "aggregate.csv"}
    body = []
    for r in rows:
        body.append([r["model"], r["rep"], r["config_hash"]]
                    + [_fmt(r[m]) if r["status"] == "ok" else "" for m in METRICS]
                    + [r.get("n_selected", ""), r["status"]])
    _write_csv(paths["summary"], SUMMARY_COLUMNS, body, run_config)
    agg = aggregate(rows)
    _write_csv(paths["aggregate"], ["model", "reps", *METRICS],
               [[a["model"], a["reps"], *(_fmt(a[m]) for m in METRICS)] for a in agg], run_config)
    if frequencies:
        paths["frequencies"] = out / "selection_frequency.csv"
        freq_rows = []
        for model, (names, freq, mean_i) in frequencies.items():
            freq_rows += [[model, n, _fmt(f), _fmt(i)] for n, f, i in zip(names, freq, mean_i)]
        _write_csv(paths["frequencies"], ["model", "variable", "selection_frequency", "mean_I"],
                   freq_rows, run_config)
    return paths
