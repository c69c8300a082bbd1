"""Deterministic file output: versioned CSV, sorted JSON, TOML/JSON config
loading and run manifests."""

import json
import platform
import sys
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
PACKAGE_VERSION = "0.1.0"
MANIFEST_NAME = "manifest.json"


def _plain(obj):
    """Convert numpy/dataclass containers to JSON-ready Python objects."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if x != x:
            return "nan"
        if x in (float("inf"), float("-inf")):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, kind, header, rows):
    """CSV with a leading comment line carrying the schema version and kind."""
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        fh.write(f"# stablelab-csv v{SCHEMA_VERSION} {kind}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_csv(path):
    """(kind, header, float array) from a file written by write_csv."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# stablelab-csv v"):
        raise ValueError(f"{path}: missing schema header")
    kind = lines[0].split()[-1]
    header = lines[1].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]]) if len(lines) > 2 else \
        np.zeros((0, len(header)))
    return kind, header, data


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n")
    return path


def write_table(out_dir, stem, kind, header, rows, fmt_name="csv"):
    """Tabular output as CSV or as JSON {kind, columns, rows}."""
    out_dir = Path(out_dir)
    if fmt_name == "csv":
        return write_csv(out_dir / f"{stem}.csv", kind, header, rows)
    if fmt_name == "json":
        return write_json(out_dir / f"{stem}.json",
                          {"schema": SCHEMA_VERSION, "kind": kind, "columns": list(header),
                           "rows": [list(r) for r in rows]})
    raise ValueError(f"unknown format {fmt_name!r}")


def load_config(path):
    """TOML or JSON by suffix. A run manifest is accepted too: its
    'config' block is returned."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        cfg = tomllib.loads(text)
    elif path.suffix.lower() == ".json":
        cfg = json.loads(text)
    else:
        raise ValueError(f"config must be .toml or .json: {path}")
    if isinstance(cfg, dict) and cfg.get("kind") == "manifest":
        return dict(cfg["config"])
    return cfg


def versions():
    import scipy
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "stablelab": PACKAGE_VERSION}


def write_manifest(out_dir, subcommand, config, outputs, wall_time):
    """Everything needed to rerun: the resolved config (seed included),
    package versions, the list of outputs and the wall time."""
    return write_json(Path(out_dir) / MANIFEST_NAME,
                      {"kind": "manifest", "schema": SCHEMA_VERSION, "subcommand": subcommand,
                       "config": config, "versions": versions(),
                       "outputs": sorted(Path(p).name for p in outputs),
                       "wall_time_s": round(float(wall_time), 3)})


def kernel_grid_rows(grid):
    """(t, x, y, value) rows of a KernelGrid in t-major order."""
    for i, t in enumerate(grid.t_nodes):
        for j, x in enumerate(grid.x_nodes):
            for k, y in enumerate(grid.y_nodes):
                yield (t, x, y, grid.values[i, j, k])


def kernel_grid_sidecar(grid):
    return {"K": grid.K, "tail_ratio": grid.tail_ratio, "converged": grid.converged,
            "term_norms": grid.term_norms, "positive": grid.positive, "meta": grid.meta}
