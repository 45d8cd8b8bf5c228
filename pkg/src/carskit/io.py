"""On-disk formats: dataset files, checkpoints and real-spectrum text files.

Dataset file
    One JSON header line (sorted keys, UTF-8, ``\\n``-terminated) followed by
    ``n_pairs`` records of three little-endian float32 spectra each, in the
    order ``cars, raman_true, nrb_true``.

Checkpoint
    A directory holding ``manifest.json`` and ``params.bin``; the manifest
    lists every parameter blob (name, shape, byte offset) stored as
    little-endian float64 in ``params.bin``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError
from .signal_ops import resample_linear
from .spectrum import SpectralPair, WavenumberGrid, minmax_normalize
from .synth import Dataset, SynthConfig

DATASET_FORMAT = "carskit-dataset"
CHECKPOINT_FORMAT = "carskit-checkpoint"
FORMAT_VERSION = 1
RECORD_FIELDS = ("cars", "raman_true", "nrb_true")


def _dump_header(header: dict) -> bytes:
    return (json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n").encode()


# -- datasets -----------------------------------------------------------------------

def write_dataset(path, dataset: Dataset, synth_config: SynthConfig | None = None) -> None:
    n_channels = dataset.pairs[0].n_channels
    header = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "n_pairs": len(dataset),
        "n_channels": n_channels,
        "seed": int(dataset.seed),
        "dtype": "<f4",
        "record": list(RECORD_FIELDS),
        "split": {"train": [int(i) for i in dataset.train_idx], "eval": [int(i) for i in dataset.eval_idx]},
        "synth": synth_config.to_dict() if synth_config is not None else None,
    }
    records = np.stack([np.stack([p.cars, p.raman_true, p.nrb_true]) for p in dataset.pairs])
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(_dump_header(header))
            fh.write(records.astype("<f4").tobytes())
    except OSError as err:
        raise DataError(f"cannot write dataset to {path}: {err}") from None


def read_dataset_header(path) -> dict:
    with open(path, "rb") as fh:
        line = fh.readline()
    try:
        header = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise DataError(f"{path}: missing or malformed JSON header line") from None
    if header.get("format") != DATASET_FORMAT:
        raise DataError(f"{path}: not a {DATASET_FORMAT} file")
    return header


def read_dataset(path) -> tuple[Dataset, dict]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as err:
        raise DataError(f"cannot read dataset {path}: {err}") from None
    newline = raw.find(b"\n")
    if newline < 0:
        raise DataError(f"{path}: missing header line")
    header = read_dataset_header(path)
    n, L = header["n_pairs"], header["n_channels"]
    body = raw[newline + 1 :]
    expected = n * len(RECORD_FIELDS) * L * 4
    if len(body) != expected:
        raise DataError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    records = np.frombuffer(body, dtype="<f4").reshape(n, len(RECORD_FIELDS), L).astype(np.float64)
    pairs = tuple(SpectralPair(r[0].copy(), r[1].copy(), r[2].copy()) for r in records)
    split = header["split"]
    ds = Dataset(pairs, np.array(split["train"], dtype=int), np.array(split["eval"], dtype=int), header["seed"])
    return ds, header


# -- checkpoints ----------------------------------------------------------------------

def write_checkpoint(directory, manifest: dict, tensors: Mapping[str, np.ndarray]) -> None:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise DataError(f"cannot create checkpoint directory {directory}: {err}") from None
    entries, offset, blobs = [], 0, []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        data = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    full = {**manifest, "format": CHECKPOINT_FORMAT, "version": FORMAT_VERSION,
            "blob": "params.bin", "dtype": "<f8", "tensors": entries}
    (directory / "params.bin").write_bytes(b"".join(blobs))
    (directory / "manifest.json").write_text(json.dumps(full, sort_keys=True, indent=2) + "\n")


def read_checkpoint(directory) -> tuple[dict, dict[str, np.ndarray]]:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
        blob = (directory / manifest.get("blob", "params.bin")).read_bytes()
    except (OSError, json.JSONDecodeError) as err:
        raise DataError(f"cannot read checkpoint {directory}: {err}") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{directory}: not a {CHECKPOINT_FORMAT} manifest")
    tensors = {}
    for e in manifest["tensors"]:
        chunk = blob[e["offset"] : e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise DataError(f"{directory}: blob for {e['name']!r} is truncated")
        tensors[e["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(e["shape"]).copy()
    return manifest, tensors


# -- real spectra ---------------------------------------------------------------------

_SPLIT = re.compile(r"[,\s;]+")
REAL_SUFFIXES = {".txt", ".csv", ".dat", ".tsv"}


def read_two_column(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse an (axis, intensity) text file; ``#`` lines and blanks are skipped."""
    axis, values = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = [f for f in _SPLIT.split(text) if f]
            try:
                if len(fields) != 2:
                    raise ValueError
                a, v = float(fields[0]), float(fields[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected two numeric columns, got {text!r}") from None
            axis.append(a)
            values.append(v)
    if len(axis) < 2:
        raise DataError(f"{path}: need at least 2 data rows")
    return np.array(axis), np.array(values)


def load_real_spectrum(path, grid: WavenumberGrid) -> np.ndarray:
    axis, values = read_two_column(path)
    if np.any(np.diff(axis) <= 0):
        raise DataError(f"{path}: axis column is not strictly increasing (monotonicity required)")
    return minmax_normalize(resample_linear(values, axis, grid))


@dataclass(frozen=True)
class RealSample:
    name: str
    cars: np.ndarray
    raman: np.ndarray | None


def load_real_directory(directory, grid: WavenumberGrid) -> list[RealSample]:
    """Collect CARS inputs (and optional ``<name>_raman`` references) from a directory.

    ``foo.txt`` or ``foo_cars.txt`` is an input; ``foo_raman.txt`` is its
    spontaneous-Raman reference.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    files = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in REAL_SUFFIXES)
    refs = {p.stem[: -len("_raman")]: p for p in files if p.stem.endswith("_raman")}
    samples = []
    for p in files:
        if p.stem.endswith("_raman"):
            continue
        name = p.stem[: -len("_cars")] if p.stem.endswith("_cars") else p.stem
        ref = refs.get(name)
        samples.append(RealSample(name, load_real_spectrum(p, grid),
                                  load_real_spectrum(ref, grid) if ref else None))
    if not samples:
        raise DataError(f"no spectra found in {directory}")
    return samples
