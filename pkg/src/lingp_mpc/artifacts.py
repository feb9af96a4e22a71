"""JSON/CSV persistence for GP models and run outputs.

JSON is written with sorted keys and full-precision floats so that identical
runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, RunConfig
from .gp import GPModel, Kernel, fit


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n")


def with_provenance(payload: dict, cfg: RunConfig, kind: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": kind, "config": cfg.to_dict(), **payload}


def gp_to_dict(gp: GPModel) -> dict:
    k = gp.kernel
    return {
        "kernel": {"kind": k.kind, "variance": k.variance,
                   "lengthscales": list(k.lengthscales), "alpha": k.alpha},
        "noise_var": gp.noise_var,
        "jitter": gp.jitter,
        "X": gp.X.tolist(),
        "y": gp.y.tolist(),
        "w": gp.w.tolist(),
    }


def gp_from_dict(d: dict) -> GPModel:
    """Refit from the stored data and hyperparameters.

    Refitting is deterministic, so predictions match the saved model; the
    stored weights are checked against the refit as a corruption guard.
    """
    kd = d["kernel"]
    kernel = Kernel(kd["kind"], float(kd["variance"]), tuple(kd["lengthscales"]), float(kd["alpha"]))
    gp = fit(np.array(d["X"], dtype=float).reshape(-1, 3), np.array(d["y"], dtype=float),
             kernel, float(d["noise_var"]))
    w = np.array(d["w"], dtype=float)
    if w.shape != gp.w.shape or not np.allclose(w, gp.w, rtol=1e-8, atol=1e-12 * max(1.0, np.abs(w).max())):
        raise ValueError("GP artifact weights do not match its data; file is corrupt")
    return gp


def save_gp(gp: GPModel, cfg: RunConfig, path) -> None:
    dump_json(with_provenance({"gp": gp_to_dict(gp)}, cfg, "gp"), path)


def load_gp(path) -> GPModel:
    d = json.loads(Path(path).read_text())
    if d.get("schema_version") != SCHEMA_VERSION or "gp" not in d:
        raise ValueError(f"{path}: not a GP artifact of schema {SCHEMA_VERSION}")
    return gp_from_dict(d["gp"])


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in r])
