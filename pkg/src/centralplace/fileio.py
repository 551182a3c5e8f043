"""Configuration files, elasticity pools, equilibrium files, city tables and reports.

Floats are written in shortest round-trip form (``repr``), so a save/load
cycle reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .citysystem import CitySystem
from .economy import ModelParams
from .ensemble import ElasticityPool, ExperimentConfig
from .solver import SolverConfig

EQUILIBRIUM_HEADER = ("location", "industry", "h")


class InputError(ValueError):
    """Malformed input file; carries the location of the problem."""

    def __init__(self, msg: str, path=None, line: int | None = None, column: int | None = None):
        where = ""
        if path is not None:
            where = str(path)
            if line is not None:
                where += f":{line}"
                if column is not None:
                    where += f":{column}"
            where += ": "
        super().__init__(where + msg)
        self.path, self.line, self.column = path, line, column


# json ------------------------------------------------------------------------


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o):
    # json has no inf/nan; use null so files stay valid for strict readers
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (np.ndarray, np.generic)):
        return _clean(_jsonable(o))
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_jsonable, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


# elasticities ----------------------------------------------------------------


def load_elasticities(path) -> ElasticityPool:
    """One value per line; blank lines and lines starting with ``#`` are skipped."""
    path = Path(path)
    vals = []
    with path.open() as f:
        for n, raw in enumerate(f, start=1):
            s = raw.strip()
            if not s or s.startswith("#"):
                continue
            try:
                x = float(s)
            except ValueError:
                raise InputError(f"cannot parse {s!r} as a number", path, n) from None
            if not x > 1.0 or not math.isfinite(x):
                raise InputError(f"elasticity must be a finite value > 1, got {s}", path, n)
            vals.append(x)
    if not vals:
        raise InputError("no elasticity values found", path)
    return ElasticityPool(values=np.array(vals), source=str(path))


def default_pool_path() -> Path:
    return Path(__file__).with_name("data") / "elasticities_surrogate.txt"


# equilibrium files -----------------------------------------------------------


def write_equilibrium(path, h: np.ndarray, meta: dict | None = None) -> None:
    """CSV of the nonzero cells of ``h``; ``meta`` goes to a ``.json`` sidecar."""
    path = Path(path)
    h = np.asarray(h, dtype=float)
    lines = [",".join(EQUILIBRIUM_HEADER)]
    for r, i in zip(*np.nonzero(h > 0)):
        lines.append(f"{r},{i},{float(h[r, i])!r}")
    path.write_text("\n".join(lines) + "\n")
    if meta is not None:
        write_json(path.with_suffix(".json"), meta)


def read_equilibrium(path, shape: tuple | None = None) -> tuple:
    """Return ``(h, meta)``; the shape comes from ``shape``, the sidecar, or the data."""
    path = Path(path)
    meta = None
    side = path.with_suffix(".json")
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as e:
            raise InputError(f"bad JSON sidecar: {e.msg}", side, e.lineno, e.colno) from None
    rows = []
    with path.open(newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(c.strip() for c in header) != EQUILIBRIUM_HEADER:
            raise InputError(f"expected header {','.join(EQUILIBRIUM_HEADER)}", path, 1)
        for n, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise InputError(f"expected 3 fields, got {len(rec)}", path, n)
            try:
                r, i = int(rec[0]), int(rec[1])
            except ValueError:
                raise InputError("location and industry must be integers", path, n, 1) from None
            try:
                x = float(rec[2])
            except ValueError:
                raise InputError(f"cannot parse {rec[2]!r}", path, n, 3) from None
            if r < 0 or i < 0 or not x >= 0 or not math.isfinite(x):
                raise InputError("negative index or invalid mass", path, n)
            rows.append((r, i, x))
    if shape is None and meta and meta.get("params"):
        shape = (meta["params"]["R"], meta["params"]["I"])
    if shape is None:
        if not rows:
            raise InputError("empty equilibrium file and no shape given", path)
        shape = (max(r for r, _, _ in rows) + 1, max(i for _, i, _ in rows) + 1)
    h = np.zeros(shape)
    for r, i, x in rows:
        if r >= shape[0] or i >= shape[1]:
            raise InputError(f"cell ({r}, {i}) outside shape {shape}", path)
        h[r, i] = x
    return h, meta


# external city tables --------------------------------------------------------


def _read_rows(path):
    path = Path(path)
    with path.open(newline="") as f:
        rows = [(n, rec) for n, rec in enumerate(csv.reader(f), start=1) if rec and not rec[0].lstrip().startswith("#")]
    if not rows:
        raise InputError("file is empty", path)
    return path, rows


def _num(s, path, line, col) -> float:
    try:
        x = float(s)
    except ValueError:
        raise InputError(f"cannot parse {s!r}", path, line, col) from None
    if not math.isfinite(x):
        raise InputError(f"non-finite value {s!r}", path, line, col)
    return x


def read_city_table(path, distances=None, presence=None) -> CitySystem:
    """City table with header ``id,x,y,size`` (planar) or ``id,angle,size`` (ring).

    ``distances`` is an optional square CSV matrix in table row order; it
    overrides the coordinates.  ``presence`` is an optional ``id,industry``
    file listing which industries are in which city.
    """
    path, rows = _read_rows(path)
    header = tuple(c.strip() for c in rows[0][1])
    if header == ("id", "x", "y", "size"):
        kind = "euclidean"
    elif header == ("id", "angle", "size"):
        kind = "ring"
    else:
        raise InputError("header must be id,x,y,size or id,angle,size", path, rows[0][0])
    ncol = len(header)
    ids, coords, sizes = [], [], []
    for n, rec in rows[1:]:
        if len(rec) != ncol:
            raise InputError(f"expected {ncol} fields, got {len(rec)}", path, n)
        ids.append(rec[0].strip())
        coords.append([_num(rec[c], path, n, c + 1) for c in range(1, ncol - 1)])
        s = _num(rec[-1], path, n, ncol)
        if not s > 0:
            raise InputError("city size must be positive", path, n, ncol)
        sizes.append(s)
    if not ids:
        raise InputError("table has no cities", path)
    if len(set(ids)) != len(ids):
        raise InputError("duplicate city id", path)
    # numeric ids sort numerically when sizes tie
    key_ids = np.array([int(i) for i in ids]) if all(i.lstrip("-").isdigit() for i in ids) else np.array(ids)
    coords = np.array(coords)
    kw = {"metric": kind}
    if kind == "euclidean":
        kw["xy"] = coords
    else:
        kw["angles"] = coords[:, 0]
    if distances is not None:
        kw["metric"] = "matrix"
        kw["matrix"] = read_distance_matrix(distances, len(ids))
    if presence is not None:
        kw["presence"] = read_presence(presence, [str(i) for i in ids])
    return CitySystem.from_unsorted(key_ids, np.array(sizes), **kw)


def read_distance_matrix(path, n: int) -> np.ndarray:
    path, rows = _read_rows(path)
    if len(rows) != n:
        raise InputError(f"expected {n} rows, got {len(rows)}", path)
    D = np.array([[_num(x, path, ln, c + 1) for c, x in enumerate(rec)] for ln, rec in rows])
    if D.shape != (n, n):
        raise InputError(f"distance matrix must be {n}x{n}", path)
    if np.any(D < 0) or not np.allclose(D, D.T) or np.any(np.diag(D) != 0):
        raise InputError("distance matrix must be symmetric, nonnegative, with zero diagonal", path)
    return D


def read_presence(path, ids: list) -> np.ndarray:
    path, rows = _read_rows(path)
    if tuple(c.strip() for c in rows[0][1]) != ("id", "industry"):
        raise InputError("header must be id,industry", path, rows[0][0])
    index = {c: k for k, c in enumerate(ids)}
    pairs = []
    for n, rec in rows[1:]:
        if len(rec) != 2:
            raise InputError(f"expected 2 fields, got {len(rec)}", path, n)
        cid = rec[0].strip()
        if cid not in index:
            raise InputError(f"unknown city id {cid!r}", path, n, 1)
        try:
            ind = int(rec[1])
        except ValueError:
            raise InputError(f"industry must be an integer, got {rec[1]!r}", path, n, 2) from None
        if ind < 0:
            raise InputError("industry must be >= 0", path, n, 2)
        pairs.append((index[cid], ind))
    if not pairs:
        raise InputError("presence file lists no entries", path)
    P = np.zeros((len(ids), max(i for _, i in pairs) + 1), dtype=bool)
    for u, i in pairs:
        P[u, i] = True
    return P


def sniff_input(path) -> str:
    """``'equilibrium'`` or ``'table'`` from the header line."""
    with Path(path).open() as f:
        first = f.readline().strip()
    return "equilibrium" if first.replace(" ", "") == ",".join(EQUILIBRIUM_HEADER) else "table"


# run configuration -----------------------------------------------------------

_MODEL_KEYS = {"R": int, "H": float, "L": float, "phi": float, "beta": float}
_SOLVER_KEYS = {"delta": float, "gamma": float, "tol_G": float, "max_iter": int, "k_max": int, "time_limit": float, "certify_rtol": float}


@dataclass
class RunConfig:
    R: int = 1024
    H: float = 1000.0
    L: float = 10000.0
    phi: float = 0.6
    beta: float = 1.0
    industries: tuple = (4, 16, 64, 256)
    samples: int = 1000
    seed: int = 0
    threads: int = 1
    sigma_file: Path | None = None
    out_dir: Path = Path("out")
    solver: dict = field(default_factory=dict)

    def validate(self) -> None:
        ModelParams(R=self.R, sigmas=(2.0,), H=self.H, L=self.L, phi=self.phi, beta=self.beta)
        self.solver_config()
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not self.industries or min(self.industries) < 1:
            raise ValueError("industries must be a list of counts >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            R=self.R,
            H=self.H,
            L=self.L,
            phi=self.phi,
            beta=self.beta,
            industries=self.industries,
            samples=self.samples,
            seed=self.seed,
            solver=self.solver_config(),
            out_dir=self.out_dir,
            threads=self.threads,
        )

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "solver"}
        d["industries"] = list(self.industries)
        d["sigma_file"] = None if self.sigma_file is None else str(self.sigma_file)
        d["out_dir"] = str(self.out_dir)
        d.update(self.solver)
        return d


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in _MODEL_KEYS:
        return _MODEL_KEYS[key](raw)
    if key in _SOLVER_KEYS:
        if key in ("time_limit", "certify_rtol") and raw.lower() in ("", "none"):
            return None
        return _SOLVER_KEYS[key](float(raw)) if _SOLVER_KEYS[key] is int else float(raw)
    if key == "industries":
        return tuple(int(x) for x in raw.replace(",", " ").split())
    if key in ("samples", "seed", "threads"):
        return int(raw)
    if key in ("sigma_file", "out_dir"):
        return Path(raw)
    raise KeyError(key)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Returns converted values."""
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise InputError("expected 'key = value'", source, n)
        key, val = (p.strip() for p in s.split("=", 1))
        try:
            out[key] = _convert(key, val)
        except KeyError:
            raise InputError(f"unknown key {key!r}", source, n) from None
        except ValueError:
            raise InputError(f"bad value for {key}: {val!r}", source, n) from None
    return out


def build_run_config(values: dict, base_dir: Path | None = None) -> RunConfig:
    cfg = RunConfig()
    for k, v in values.items():
        if k in _SOLVER_KEYS:
            cfg.solver[k] = v
        elif hasattr(cfg, k):
            setattr(cfg, k, v)
        else:
            raise InputError(f"unknown key {k!r}")
    # relative sigma_file resolves against the config file's directory
    if base_dir is not None and cfg.sigma_file is not None and not cfg.sigma_file.is_absolute():
        cfg.sigma_file = base_dir / cfg.sigma_file
    cfg.validate()
    return cfg


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    base = None
    if path is not None:
        path = Path(path)
        values.update(parse_config_text(path.read_text(), str(path)))
        base = path.parent
    values.update(overrides or {})
    return build_run_config(values, base)


# reports ---------------------------------------------------------------------


def make_report(test: str, params: dict, observed, p_value, M: int, seed, mean, p99, **extra) -> dict:
    """One entry of the analysis report."""
    rep = {
        "test": test,
        "params": params,
        "observed": observed,
        "p_value": p_value,
        "M": M,
        "seed": seed,
        "counterfactual_summary": {"mean": mean, "p99": p99},
    }
    rep.update(extra)
    return rep
