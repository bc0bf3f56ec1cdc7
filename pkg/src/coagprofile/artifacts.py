"""Reading and writing run artifacts.

CSV numbers use 17 significant digits so a write/read cycle is lossless and
identical inputs give byte-identical files.  JSON is written with sorted
keys.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .kernel import HLambda, KernelSpec
from .profile import LogGrid, Profile, h_to_g, tail_from_dict, tail_to_dict

PROFILE_CSV = "profile.csv"
PROFILE_META = "profile.meta.json"


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        # JSON has no inf/nan; keep them readable as strings
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: str | Path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[float]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


# --------------------------------------------------------------------------
# profiles


def profile_meta(p: Profile) -> dict:
    g = p.grid
    return {
        "grid": {"x_min_log": g.x_min_log, "x_max_log": g.x_max_log, "n": g.n, "dx": g.dx},
        "left_tail": tail_to_dict(p.left_tail),
        "right_tail": tail_to_dict(p.right_tail),
        "kernel": {"alpha": p.kernel.alpha, "beta": p.kernel.beta,
                   "K0": p.kernel.K0, "k0": p.kernel.k0},
        "lambda": p.lam,
        "h_lambda": {"value": p.h_lambda.value, "method": p.h_lambda.method,
                     "estimated_error": p.h_lambda.estimated_error},
        "gauge_offset": p.gauge_offset,
        "flags": list(p.flags),
    }


def save_profile(p: Profile, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    X = p.grid.nodes
    rows = zip(X, np.exp(X), p.values, h_to_g(p))
    write_csv(out / PROFILE_CSV, ("X", "x", "h", "g"), rows)
    write_json(out / PROFILE_META, profile_meta(p))
    return out / PROFILE_CSV, out / PROFILE_META


def load_profile(in_dir: str | Path) -> Profile:
    """Inverse of :func:`save_profile`; values come from the ``h`` column."""
    d = Path(in_dir)
    csv_path, meta_path = d / PROFILE_CSV, d / PROFILE_META
    if not csv_path.is_file() or not meta_path.is_file():
        raise ConfigError(f"no saved profile in {d}", key="profile_dir")
    meta = read_json(meta_path)
    with open(csv_path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        col = header.index("h")
        h = np.array([float(row[col]) for row in r])
    g = meta["grid"]
    grid = LogGrid(float(g["x_min_log"]), float(g["x_max_log"]), int(g["n"]), float(g["dx"]))
    k = meta["kernel"]
    kernel = KernelSpec(alpha=float(k["alpha"]), beta=float(k["beta"]), K0=float(k["K0"]),
                        k0=None if k["k0"] is None else float(k["k0"]))
    hl = meta["h_lambda"]
    return Profile(
        grid=grid,
        values=h,
        left_tail=tail_from_dict(meta["left_tail"]),
        right_tail=tail_from_dict(meta["right_tail"]),
        kernel=kernel,
        h_lambda=HLambda(float(hl["value"]), hl["method"], float(hl["estimated_error"])),
        gauge_offset=float(meta["gauge_offset"]),
        flags=tuple(meta.get("flags", ())),
    )


# --------------------------------------------------------------------------
# dynamics


def write_trajectory(path: str | Path, rows: Iterable[Sequence[float]]) -> None:
    """Columns ``t, cell_center, f, x_rescaled, g_candidate``."""
    write_csv(path, ("t", "cell_center", "f", "x_rescaled", "g_candidate"), rows)
