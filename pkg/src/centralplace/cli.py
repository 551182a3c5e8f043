"""Command-line interface: ``simulate``, ``analyze``, ``partition`` and ``plot``.

Exit codes: 0 success, 2 usage or validation error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .economy import DegenerateIndustryError, NumericError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("centralplace")


class UsageError(ValueError):
    pass


def _parse_set(items) -> dict:
    from .fileio import parse_config_text

    return parse_config_text("\n".join(items), "--set") if items else {}


def _parse_ranks(text: str | None):
    if text is None:
        return None
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def load_system(args):
    """City system from an equilibrium file or an external city table."""
    from .citysystem import extract_cities
    from .fileio import read_city_table, read_equilibrium, sniff_input

    if sniff_input(args.input) == "equilibrium":
        if args.distances or args.presence:
            raise UsageError("--distances and --presence apply to city tables only")
        h, _ = read_equilibrium(args.input)
        eps = None if args.eps_city is None else args.eps_city
        return extract_cities(h, eps_city=eps)
    return read_city_table(args.input, distances=args.distances, presence=args.presence)


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# commands --------------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .ensemble import run_samples
    from .fileio import default_pool_path, dumps, load_elasticities, load_run_config

    overrides = _parse_set(args.set)
    for key in ("seed", "threads"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.out is not None:
        overrides["out_dir"] = Path(args.out)
    cfg = load_run_config(args.config, overrides)
    pool_path = cfg.sigma_file or default_pool_path()
    if not Path(pool_path).is_file():
        raise UsageError(f"sigma_file not found: {pool_path}")
    pool = load_elasticities(pool_path)
    log.info("elasticity pool: %d values in [%g, %g]", pool.count, pool.min, pool.max)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    effective = cfg.to_dict()
    effective["sigma_file"] = str(pool_path)
    (out / "config.json").write_text(dumps({"config": effective, "version": __version__}))
    res = run_samples(cfg.experiment(), pool)
    for I, s in res.summary["by_I"].items():
        log.info("I=%s: %d/%d converged, %d errors", I, s["converged"], s["samples"], s["errors"])
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .analysis import TESTS, analyze
    from .fileio import dumps

    tests = tuple(t.strip() for t in args.tests.split(",") if t.strip())
    bad = set(tests) - set(TESTS)
    if bad:
        raise UsageError(f"unknown tests {sorted(bad)}; choose from {','.join(TESTS)}")
    system = load_system(args)
    report = analyze(system, tests, L=args.L, M=args.M, seed=args.seed, depth=args.depth, rs=_parse_ranks(args.r))
    report["input"] = str(args.input)
    report["version"] = __version__
    _emit(dumps(report), args.out)
    if args.plot:
        _plots(system, report, args, Path(args.plot))
    return EXIT_OK


def _tree_json(system, cell) -> dict:
    ids = system.ids
    return {
        "depth": cell.depth,
        "cities": [ids[m].item() for m in cell.members],
        "centers": [ids[c].item() for c in cell.centers],
        "children": [_tree_json(system, c) for c in cell.children],
    }


def cmd_partition(args) -> int:
    from .citysystem import l_partition
    from .fileio import dumps

    system = load_system(args)
    tree = l_partition(system, args.L, args.depth)
    hint = [
        {"city": system.ids[c.head].item(), "rank": c.head + 1, "depth": c.depth, "size": c.size}
        for c in tree.hinterland_cells()
    ]
    _emit(dumps({"L": args.L, "max_depth": args.depth, "tree": _tree_json(system, tree.root), "hinterlands": hint}), args.out)
    return EXIT_OK


def _plots(system, report, args, outdir: Path) -> list:
    from .analysis import run_cpp
    from .citysystem import l_partition
    from .plots import rank_size_svg, spacing_svg
    from .stats import cpl_cells, cpl_fit

    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    tree = l_partition(system, args.L, args.depth)
    cells = cpl_cells(system, tree)
    if cells:
        paths.append(rank_size_svg(cells, outdir / "rank_size.svg", theta=cpl_fit(cells).theta, title=f"L={args.L}"))
    cpp = [e for e in report.get("tests", []) if e.get("test") == "cpp" and "error" not in e]
    if not cpp and system.U >= 2:
        rs = _parse_ranks(args.r) or list(range(2, min(20, system.U) + 1))
        cpp = run_cpp(system, rs, args.M, args.seed)
    if cpp:
        rs = [e["params"]["r"] for e in cpp]
        obs = [e["observed"] for e in cpp]
        mean = [e["counterfactual_summary"]["mean"] for e in cpp]
        lo = [e.get("p1", np.nan) for e in cpp]
        hi = [e["counterfactual_summary"]["p99"] for e in cpp]
        paths.append(spacing_svg(rs, obs, mean, outdir / "spacing.svg", lo, hi))
    return paths


def cmd_plot(args) -> int:
    system = load_system(args)
    for p in _plots(system, {}, args, Path(args.out or ".")):
        print(p)
    return EXIT_OK


# parser ----------------------------------------------------------------------


def _input_args(p):
    p.add_argument("input", help="equilibrium CSV (location,industry,h) or city table (id,x,y,size | id,angle,size)")
    p.add_argument("--distances", help="square distance matrix CSV in table row order")
    p.add_argument("--presence", help="id,industry file of industry presence")
    p.add_argument("--eps-city", type=float, default=None, help="city mass threshold (default 1e-8*H)")
    p.add_argument("--L", type=int, default=3, help="centers per cell (default 3)")
    p.add_argument("--depth", type=int, default=6, help="maximum partition depth (default 6)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="centralplace", description="Spatial equilibria on a ring and central-place statistics.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="solve an ensemble of equilibria")
    s.add_argument("--config", help="key = value config file")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out", help="output directory")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="run permutation tests on a city system")
    _input_args(a)
    a.add_argument("--tests", default="cpl,cpp,hp,spearman")
    a.add_argument("--M", type=int, default=1000, help="counterfactual draws (default 1000)")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--r", help="CPP rank cutoffs, e.g. '2-20' or '2,5,10' (default 2-20)")
    a.add_argument("--out", help="report path (default stdout)")
    a.add_argument("--plot", metavar="DIR", help="also write SVG plots into DIR")
    a.set_defaults(func=cmd_analyze)

    p = sub.add_parser("partition", help="print the L-partition of a city system")
    _input_args(p)
    p.add_argument("--out", help="output JSON (default stdout)")
    p.set_defaults(func=cmd_partition)

    g = sub.add_parser("plot", help="write rank-size and spacing SVGs")
    _input_args(g)
    g.add_argument("--M", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--r", help="CPP rank cutoffs")
    g.add_argument("--out", help="output directory (default .)")
    g.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    from .fileio import InputError

    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    if getattr(args, "M", 1) < 1 or getattr(args, "L", 2) < 2 or getattr(args, "depth", 1) < 1:
        print("error: need --M >= 1, --L >= 2 and --depth >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (DegenerateIndustryError, NumericError, FloatingPointError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, UsageError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
