"""Deterministic single-file checkpoint archives.

A checkpoint is a zip with fixed entry timestamps: `meta.json` plus one
``.npy`` member per array, keyed by dotted path.  Writing the same
contents twice yields byte-identical files, and save -> load -> save is
an exact round trip.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("meta.json", date_time=_EPOCH)
        zf.writestr(info, json.dumps(meta, sort_keys=True, indent=1))
        for key in sorted(arrays):
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arrays[key]))
            info = zipfile.ZipInfo(f"arrays/{key}.npy", date_time=_EPOCH)
            zf.writestr(info, buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    arrays: dict[str, np.ndarray] = {}
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        for name in zf.namelist():
            if name.startswith("arrays/") and name.endswith(".npy"):
                key = name[len("arrays/") : -len(".npy")]
                arrays[key] = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
    return arrays, meta
