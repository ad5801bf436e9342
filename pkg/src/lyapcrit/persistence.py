"""Run directories: manifest.json, gridfn/<name>.csv + .meta.json and
results/<name>.csv|.json. Doubles are written with 17 significant digits,
so every value survives a save/load round trip bit for bit."""

from dataclasses import dataclass, field
import csv
import io
import json
import math
import os

import numpy as np

from .gridfn import Affine, Constant, GridFunction, Zero


class ParseError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class IntegrityError(RuntimeError):
    pass


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


@dataclass
class Table:
    columns: list
    rows: list

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def __eq__(self, other):
        return isinstance(other, Table) and self.columns == other.columns and \
            [[fmt(v) for v in r] for r in self.rows] == [[fmt(v) for v in r] for r in other.rows]


@dataclass
class RunManifest:
    config: dict
    seed: int
    version: str
    started: str = ""
    finished: str = ""
    results: dict = field(default_factory=dict)

    def as_dict(self):
        return {"config": self.config, "seed": self.seed, "version": self.version,
                "started": self.started, "finished": self.finished, "results": self.results}


@dataclass
class ResultBundle:
    manifest: RunManifest
    artifacts: dict = field(default_factory=dict)


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_plain(v) for v in o.tolist()]
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    return o


def _ext_to_dict(e):
    if isinstance(e, Zero):
        return {"type": "Zero"}
    if isinstance(e, Constant):
        return {"type": "Constant", "v": e.v}
    return {"type": "Affine", "slope": e.slope, "intercept": e.intercept}


def _ext_from_dict(d):
    t = d.get("type")
    if t == "Zero":
        return Zero()
    if t == "Constant":
        return Constant(float(d["v"]))
    if t == "Affine":
        return Affine(float(d["slope"]), float(d["intercept"]))
    raise ValueError(f"unknown extension type {t!r}")


def write_text(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def gridfunction_csv(F: GridFunction) -> str:
    buf = io.StringIO()
    buf.write("x,value\n")
    for x, v in zip(F.nodes(), F.values):
        buf.write(f"{fmt(x)},{fmt(v)}\n")
    return buf.getvalue()


def save_gridfunction(path_csv, F: GridFunction, extra: dict | None = None):
    meta = {"x0": F.x0, "dx": F.dx, "n": F.n, "role": F.role,
            "left_ext": _ext_to_dict(F.left_ext), "right_ext": _ext_to_dict(F.right_ext)}
    if extra:
        meta["extra"] = extra
    write_text(path_csv, gridfunction_csv(F))
    write_text(_meta_path(path_csv), dumps_json(meta))


def _meta_path(path_csv):
    return path_csv[:-4] + ".meta.json" if path_csv.endswith(".csv") else path_csv + ".meta.json"


def _load_json(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise IntegrityError(f"missing file {path}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(path, e.lineno, e.msg) from None


def load_gridfunction(path_csv):
    """(GridFunction, extra metadata or None)."""
    meta = _load_json(_meta_path(path_csv))
    try:
        x0, dx, n = float(meta["x0"]), float(meta["dx"]), int(meta["n"])
        left, right = _ext_from_dict(meta["left_ext"]), _ext_from_dict(meta["right_ext"])
        role = meta["role"]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(_meta_path(path_csv), 1, f"bad metadata: {e}") from None
    if not os.path.exists(path_csv):
        raise IntegrityError(f"missing file {path_csv}")
    vals = np.empty(n)
    with open(path_csv) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != "x,value":
        raise ParseError(path_csv, 1, "expected header 'x,value'")
    nodes = x0 + dx * np.arange(n)
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        if i >= n:
            raise ParseError(path_csv, lineno, f"more than {n} data rows")
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(path_csv, lineno, f"expected 2 fields, got {len(parts)}")
        try:
            x, v = float(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError(path_csv, lineno, f"non-numeric field in {line!r}") from None
        if abs(x - nodes[i]) > 1e-9 * max(1.0, abs(x)):
            raise ParseError(path_csv, lineno, f"node {x} does not match grid value {nodes[i]}")
        vals[i] = v
    if len(lines) - 1 < n:
        raise ParseError(path_csv, len(lines) + 1, f"truncated: {len(lines) - 1} of {n} data rows")
    F = GridFunction(x0, dx, vals, left, right, role)
    return F, meta.get("extra")


def table_csv(t: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(t.columns)
    for r in t.rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _cell(s):
    if s in ("true", "false"):
        return s == "true"
    try:
        if s.lstrip("-").isdigit():
            return int(s)
        return float(s)
    except ValueError:
        return s


def load_table(path) -> Table:
    if not os.path.exists(path):
        raise IntegrityError(f"missing file {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(path, 1, "empty file")
    cols = rows[0]
    out = []
    for i, r in enumerate(rows[1:]):
        if len(r) != len(cols):
            raise ParseError(path, i + 2, f"expected {len(cols)} fields, got {len(r)}")
        out.append([_cell(s) for s in r])
    return Table(cols, out)


def table_dict(t: Table) -> dict:
    return {"columns": list(t.columns), "rows": [list(r) for r in t.rows]}


def save(bundle: ResultBundle, directory) -> dict:
    """Write every artifact and the manifest; returns name -> path."""
    paths = {}
    for name, obj in bundle.artifacts.items():
        if isinstance(obj, tuple) and isinstance(obj[0], GridFunction):
            rel = os.path.join("gridfn", f"{name}.csv")
            save_gridfunction(os.path.join(directory, rel), obj[0], obj[1])
        elif isinstance(obj, GridFunction):
            rel = os.path.join("gridfn", f"{name}.csv")
            save_gridfunction(os.path.join(directory, rel), obj)
        elif isinstance(obj, Table):
            rel = os.path.join("results", f"{name}.csv")
            write_text(os.path.join(directory, rel), table_csv(obj))
        elif isinstance(obj, dict):
            rel = os.path.join("results", f"{name}.json")
            write_text(os.path.join(directory, rel), dumps_json(obj))
        else:
            raise TypeError(f"cannot store artifact {name!r} of type {type(obj).__name__}")
        paths[name] = os.path.join(directory, rel)
        bundle.manifest.results[name] = rel
    write_text(os.path.join(directory, "manifest.json"), dumps_json(bundle.manifest.as_dict()))
    return paths


def load(directory) -> ResultBundle:
    m = _load_json(os.path.join(directory, "manifest.json"))
    try:
        manifest = RunManifest(m["config"], m["seed"], m["version"], m.get("started", ""),
                               m.get("finished", ""), dict(m.get("results", {})))
    except (KeyError, TypeError) as e:
        raise ParseError(os.path.join(directory, "manifest.json"), 1, f"bad manifest: {e}") from None
    arts = {}
    for name, rel in manifest.results.items():
        path = os.path.join(directory, rel)
        if not os.path.exists(path):
            raise IntegrityError(f"manifest references missing file {rel}")
        if rel.startswith("gridfn"):
            F, extra = load_gridfunction(path)
            arts[name] = F if extra is None else (F, extra)
        elif rel.endswith(".csv"):
            arts[name] = load_table(path)
        else:
            arts[name] = _load_json(path)
    return ResultBundle(manifest, arts)
