"""Static SVG figures of reconstructions with a mean +/- 2 sigma band."""
from __future__ import annotations

import csv
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import DataError

REQUIRED_COLUMNS = ("spectrum", "omega", "cars", "raman_true", "mean", "variance", "nrb_pred")


def read_predictions(path) -> "OrderedDict[str, dict[str, np.ndarray]]":
    """Group a per-channel predictions CSV by spectrum name."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        groups: OrderedDict[str, dict[str, list]] = OrderedDict()
        for row in reader:
            g = groups.setdefault(row["spectrum"], {c: [] for c in REQUIRED_COLUMNS[1:]})
            for c in REQUIRED_COLUMNS[1:]:
                g[c].append(float(row[c]) if row[c] != "" else np.nan)
    return OrderedDict((k, {c: np.array(v) for c, v in g.items()}) for k, g in groups.items())


def plot_spectrum(name: str, d: dict[str, np.ndarray], out_path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "carskit", "svg.fonttype": "none"}):
        fig, (ax_in, ax_out) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
        w = d["omega"]
        ax_in.plot(w, d["cars"], color="0.2", lw=1.0, label="CARS input")
        if np.all(np.isfinite(d["nrb_pred"])):
            ax_in.plot(w, d["nrb_pred"], color="tab:orange", lw=1.0, ls="--", label="predicted NRB")
        ax_in.set_ylabel("intensity (norm.)")
        ax_in.legend(loc="upper right", fontsize=8)
        sd = np.sqrt(np.maximum(d["variance"], 0.0))
        ax_out.fill_between(w, d["mean"] - 2 * sd, d["mean"] + 2 * sd, color="tab:blue", alpha=0.25,
                            lw=0, label="mean ± 2σ")
        ax_out.plot(w, d["mean"], color="tab:blue", lw=1.0, label="predicted Raman")
        if np.all(np.isfinite(d["raman_true"])):
            ax_out.plot(w, d["raman_true"], color="k", lw=0.8, ls=":", label="true Raman")
        ax_out.set_xlabel("normalized Raman shift")
        ax_out.set_ylabel("Raman (norm.)")
        ax_out.legend(loc="upper right", fontsize=8)
        ax_in.set_title(name)
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)


def plot_predictions(csv_path, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, d in read_predictions(csv_path).items():
        safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)
        path = out_dir / f"{safe}.svg"
        plot_spectrum(name, d, path)
        written.append(path)
    return written
