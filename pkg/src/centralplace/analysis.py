"""Run the CPL, CPP, HP and Spearman tests on a city system and collect a report."""

from __future__ import annotations

import numpy as np

from .citysystem import CitySystem, PartitionTree, l_partition
from .fileio import make_report
from .stats import cpl_cells, cpl_fit, cpl_test, cpp_test, hp_test, spearman_test

TESTS = ("cpl", "cpp", "hp", "spearman")
CPL_COUNTERFACTUAL = "centers and cell sizes fixed at every node; other cities dealt at random"

_STREAM = {name: k for k, name in enumerate(TESTS)}


def stream(seed: int, test: str, *sub: int) -> np.random.Generator:
    """Independent stream per (seed, test, sub-index)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_STREAM[test], *sub))
    return np.random.Generator(np.random.Philox(ss))


def default_ranks(sys: CitySystem, r_max: int = 20) -> list:
    return list(range(2, min(r_max, sys.U) + 1))


def run_cpl(sys, tree: PartitionTree, M: int, seed: int) -> dict:
    fit = cpl_fit(cpl_cells(sys, tree))
    res = cpl_test(sys, tree, M=M, rng=stream(seed, "cpl"))
    params = {"L": tree.L, "depth": tree.max_depth, "cells": len(cpl_cells(sys, tree)), "counterfactual": CPL_COUNTERFACTUAL}
    return make_report("cpl", params, res.observed, res.p_value, res.M, seed, res.mean, res.percentile(99), theta=fit.theta)


def run_cpp(sys, rs, M: int, seed: int) -> list:
    out = []
    for r in rs:
        res = cpp_test(sys, r, M=M, rng=stream(seed, "cpp", r))
        out.append(make_report("cpp", {"r": r}, res.observed, res.p_value, res.M, seed, res.mean, res.percentile(99), p1=res.percentile(1)))
    return out


def run_hp(sys, M: int, seed: int) -> list:
    res = hp_test(sys, M=M, rng=stream(seed, "hp"))
    out = []
    for i in range(sys.I):
        params = {"industry": i, "choice_cities": int(res.choice_counts[i])}
        if np.isnan(res.shares[i]):
            out.append({"test": "hp", "params": params, "error": "no other industry is at least as ubiquitous"})
            continue
        out.append(make_report("hp", params, float(res.shares[i]), float(res.p_values[i]), M, seed, float(np.nanmean(res.draws[:, i])), float(res.p99[i])))
    return out


def run_spearman(sys, M: int, seed: int) -> dict:
    res = spearman_test(sys.sizes, sys.industrial_diversity(), M=M, rng=stream(seed, "spearman"))
    return make_report("spearman", {"x": "city size", "y": "industrial diversity"}, res.observed, res.p_value, res.M, seed, res.mean, res.percentile(99))


def analyze(sys: CitySystem, tests=TESTS, L: int = 3, M: int = 1000, seed: int = 0, depth: int = 6, rs=None) -> dict:
    """Report dict; a test whose preconditions fail yields an error entry and the rest still run."""
    unknown = set(tests) - set(TESTS)
    if unknown:
        raise ValueError(f"unknown tests: {sorted(unknown)}")
    entries = []
    tree = None
    for name in tests:
        try:
            if name == "cpl":
                tree = tree or l_partition(sys, L, depth)
                entries.append(run_cpl(sys, tree, M, seed))
            elif name == "cpp":
                entries.extend(run_cpp(sys, default_ranks(sys) if rs is None else rs, M, seed))
            elif name == "hp":
                entries.extend(run_hp(sys, M, seed))
            else:
                entries.append(run_spearman(sys, M, seed))
        except ValueError as e:
            entries.append({"test": name, "error": str(e)})
    return {"cities": sys.U, "industries": sys.I, "seed": seed, "M": M, "tests": entries}
