"""Reader/writer for the swayscope exchange format.

This is the only coupling to the data producer: a directory with
manifest.json plus two raw little-endian float32 files,

    states.bin  [n_windows, 200, 24]   (training windows)
    panos.bin   [n_windows, 200, 180, 360]

where each 200-tick window is split 150 input / 50 label ticks at 20 Hz.
Prediction sets mirror the layout with 50 label ticks only and carry a
variant name in the manifest.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
WINDOW_TICKS = 200
INPUT_TICKS = 150
LABEL_TICKS = 50
STATE_SIZE = 24
PANO_ROWS = 180
PANO_COLS = 360
TICK_SECONDS = 0.05

# channel indices within the 24-value state layout
POS = slice(0, 3)
QUAT = slice(3, 7)
LINVEL = slice(7, 10)
ANGVEL = slice(10, 13)
SWAY = 13
STEP_FREQ = 14
JOINTS = slice(15, 24)


class ExchangeError(RuntimeError):
    pass


@dataclass(frozen=True)
class WindowSet:
    manifest: dict
    states: np.ndarray      # (n, 200, 24) float32 memmap
    panoramas: np.ndarray   # (n, 200, 180, 360) float32 memmap

    @property
    def n_windows(self) -> int:
        return int(self.manifest["n_windows"])

    def scenario(self, index: int) -> str:
        return self.manifest["windows"][index]["scenario"]


def _map_bin(path: Path, shape: tuple) -> np.ndarray:
    expected = int(np.prod(shape)) * 4
    actual = os.path.getsize(path)
    if actual != expected:
        raise ExchangeError(f"{path}: {actual} bytes, expected {expected} for {shape}")
    if expected == 0:
        return np.zeros(shape, dtype="<f4")
    return np.memmap(path, dtype="<f4", mode="r", shape=shape)


def read_windows(path) -> WindowSet:
    path = Path(path)
    with open(path / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ExchangeError(f"unsupported schema_version {manifest.get('schema_version')}")
    if manifest.get("kind") != "windows":
        raise ExchangeError(f"expected a windows directory, got {manifest.get('kind')!r}")
    if (manifest.get("input_ticks"), manifest.get("label_ticks")) != (INPUT_TICKS, LABEL_TICKS):
        raise ExchangeError("window split must be 150/50 ticks")
    n = int(manifest["n_windows"])
    states = _map_bin(path / "states.bin", (n, WINDOW_TICKS, STATE_SIZE))
    panos = _map_bin(path / "panos.bin", (n, WINDOW_TICKS, PANO_ROWS, PANO_COLS))
    return WindowSet(manifest=manifest, states=states, panoramas=panos)


def write_predictions(path, states: np.ndarray, panoramas: np.ndarray,
                      variant: str, source_manifest: dict) -> None:
    states = np.ascontiguousarray(states, dtype="<f4")
    panoramas = np.ascontiguousarray(panoramas, dtype="<f4")
    if states.shape[1:] != (LABEL_TICKS, STATE_SIZE):
        raise ExchangeError(f"prediction states shape {states.shape}")
    if panoramas.shape != states.shape[:1] + (LABEL_TICKS, PANO_ROWS, PANO_COLS):
        raise ExchangeError(f"prediction panorama shape {panoramas.shape}")
    if not (np.all(np.isfinite(states)) and np.all(np.isfinite(panoramas))):
        raise ExchangeError("refusing to write non-finite predictions")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "predictions",
        "variant": variant,
        "n_windows": int(states.shape[0]),
        "label_ticks": LABEL_TICKS,
        "tick_seconds": TICK_SECONDS,
        "state_channels": source_manifest["state_channels"],
        "pano_rows": PANO_ROWS,
        "pano_cols": PANO_COLS,
        "windows": source_manifest.get("windows"),
    }
    with open(path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    states.tofile(path / "states.bin")
    panoramas.tofile(path / "panos.bin")
