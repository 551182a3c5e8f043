"""Long-run equilibrium via merit-function descent on the projection dynamics.

A long-run equilibrium is a fixed point of ``F(h) = Proj(h + v(h))`` where
``Proj`` is the Euclidean projection onto ``{h >= 0, sum(h) = H}``.  The
regularized gap function

    G(h) = -v(h) . (h - F(h)) - 0.5 * |F(h) - h|^2

is nonnegative on the feasible set and vanishes exactly at equilibria; it is
driven to zero by an Armijo line search along ``F(h) - h`` with a fixed
escape step whenever the search stalls.

Market access is linear in ``h``, so every trial point ``h + t (F - h)`` of a
line search gets its access as ``(1 - t) access(h) + t access(F)``.  Trials
are therefore evaluated in batches with one matmul for the wages.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .economy import DegenerateIndustryError, ModelParams, NumericError, access_all, utility, utility_from_access

log = logging.getLogger(__name__)

DIRECTION_RULE = "F(h) - h"

# line-search trials evaluated per batch: k = 0, then 1..4, then the rest
_CHUNKS = (1, 4)


def _project_rows(X: np.ndarray, H: float) -> np.ndarray:
    """Project every row of ``X`` onto ``{z >= 0, sum(z) = H}``.

    Michelot's active-set iteration: the threshold only grows and the active
    set only shrinks, so it terminates at the exact solution.
    """
    # projection commutes with shifts; centering at the max keeps the
    # threshold exact when some entries are astronomically large
    X = X - X.max(axis=1, keepdims=True)
    active = np.ones(X.shape, dtype=bool)
    n_active = np.full(X.shape[0], X.shape[1])
    while True:
        lam = (np.where(active, X, 0.0).sum(axis=1) - H) / n_active
        # restricting to the current set keeps it shrinking even when
        # rounding nudges lam down
        new = active & (X > lam[:, None])
        new_n = new.sum(axis=1)
        if np.array_equal(new_n, n_active):
            break
        active, n_active = new, new_n
    Z = np.maximum(X - lam[:, None], 0.0)
    # one correction pass on the support removes summation rounding in the mass
    support = Z > 0
    Z += support * ((H - Z.sum(axis=1)) / support.sum(axis=1))[:, None]
    return np.maximum(Z, 0.0, out=Z)


def project_feasible(x: np.ndarray, H: float) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``{z >= 0, sum(z) = H}``.

    The result is ``max(x - lam, 0)`` with ``lam`` chosen so the entries sum
    to ``H``; shape is preserved.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericError("projection input contains non-finite values")
    if not H > 0:
        raise ValueError(f"H must be > 0, got {H}")
    return _project_rows(x.reshape(1, -1), H).reshape(x.shape)


def in_feasible_set(h: np.ndarray, H: float, tol: float = 1e-9) -> bool:
    h = np.asarray(h, dtype=float)
    return bool(np.all(h >= 0) and abs(h.sum() - H) <= tol * H)


@dataclass(frozen=True)
class MeritEval:
    """Merit value at ``h`` together with the pieces that produced it."""

    h: np.ndarray
    delta: np.ndarray
    v: np.ndarray
    F: np.ndarray
    G: float

    @property
    def direction(self) -> np.ndarray:
        return self.F - self.h


def pd_map(h: np.ndarray, params: ModelParams) -> np.ndarray:
    """Projection-dynamics image ``F(h) = Proj(h + v(h))``."""
    h = np.asarray(h, dtype=float)
    return project_feasible(h + utility(h, params), params.H)


def _finish(h: np.ndarray, delta: np.ndarray, params: ModelParams):
    """Utility, image and merit for a batch of points shaped ``(K, R, I)``.

    Points that empty an industry or overflow get ``G = inf``.
    """
    K = h.shape[0]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        _, _, v = utility_from_access(delta, h, params)
        ok = np.all(np.isfinite(v.reshape(K, -1)), axis=1) & np.all(h.sum(axis=1) > 0, axis=1)
    G = np.full(K, np.inf)
    F = np.zeros_like(h)
    if ok.all():
        F = _project_rows((h + v).reshape(K, -1), params.H).reshape(h.shape)
        diff = F - h
        G = np.einsum("kri,kri->k", v, diff) - 0.5 * np.einsum("kri,kri->k", diff, diff)
    elif ok.any():
        sub = _finish(h[ok], delta[ok], params)
        F[ok], G[ok] = sub[1], sub[2]
    return v, F, G


def evaluate(h: np.ndarray, params: ModelParams) -> MeritEval:
    h = np.asarray(h, dtype=float)
    mass = h.sum(axis=0)
    if np.any(mass <= 0):
        i = int(np.flatnonzero(mass <= 0)[0])
        raise DegenerateIndustryError(f"industry {i} has zero total mass")
    delta = access_all(h, params)
    v, F, G = _finish(h[None], delta[None], params)
    if not np.isfinite(G[0]):
        bad = np.argwhere(~np.isfinite(v[0]))
        where = f" at location {bad[0][0]}, industry {bad[0][1]}" if len(bad) else ""
        raise NumericError(f"non-finite utility{where}")
    return MeritEval(h=h, delta=delta, v=v[0], F=F[0], G=float(G[0]))


def merit(h: np.ndarray, params: ModelParams) -> float:
    """Gap function ``G(h)``; zero exactly at long-run equilibria."""
    return evaluate(h, params).G


def default_gamma_min(n: int) -> float:
    return 5.0e-3 * 10.0 ** (-min(5.0, 1e-6 * n))


def default_gamma_bar(G: float) -> float:
    return 5.0e-3 if G > 1e-6 else 2.0e-2


@dataclass
class SolverConfig:
    delta: float = 1e-5
    gamma: float = 0.8
    gamma_min_schedule: Callable[[int], float] = field(default=default_gamma_min, repr=False)
    gamma_bar_rule: Callable[[float], float] = field(default=default_gamma_bar, repr=False)
    tol_G: float = 1e-8
    max_iter: int = 2_000_000
    k_max: int = 60
    time_limit: float | None = None
    # keep iterating after G < tol_G until the long-run conditions hold to
    # certify_rtol * |v*|; None stops on G alone
    certify_rtol: float | None = 1e-6

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.tol_G > 0:
            raise ValueError(f"tol_G must be > 0, got {self.tol_G}")
        if self.max_iter < 0 or self.k_max < 0:
            raise ValueError("max_iter and k_max must be nonnegative")
        if self.certify_rtol is not None and not self.certify_rtol > 0:
            raise ValueError(f"certify_rtol must be > 0 or None, got {self.certify_rtol}")

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "gamma": self.gamma,
            "gamma_min_schedule": getattr(self.gamma_min_schedule, "__name__", repr(self.gamma_min_schedule)),
            "gamma_bar_rule": getattr(self.gamma_bar_rule, "__name__", repr(self.gamma_bar_rule)),
            "tol_G": self.tol_G,
            "max_iter": self.max_iter,
            "k_max": self.k_max,
            "time_limit": self.time_limit,
            "certify_rtol": self.certify_rtol,
            "direction_rule": DIRECTION_RULE,
        }


@dataclass
class StepResult:
    point: MeritEval
    step: float
    k: int
    escaped: bool
    failed: bool = False
    n_trials: int = 0


def _trials(cur: MeritEval, delta_F: np.ndarray, ts: np.ndarray, params: ModelParams):
    t = ts[:, None, None]
    # convex-combination form keeps entries >= 0 for t <= 1
    h = (1.0 - t) * cur.h + t * cur.F
    delta = (1.0 - t) * cur.delta + t * delta_F
    v, F, G = _finish(h, delta, params)
    return h, delta, v, F, G


def armijo_step(cur: MeritEval, params: ModelParams, cfg: SolverConfig, n: int) -> StepResult:
    """One Armijo line search along ``d = F(h) - h`` from the evaluated point ``cur``.

    Accepts the smallest ``k`` with
    ``G(h + g**k d) - G(h) <= -delta * g**k * |d|^2`` provided
    ``g**k > gamma_min(n)``; otherwise takes the escape step
    ``h + gamma_bar(G) * d``.  Trial points that empty an industry or
    overflow are rejected.
    """
    d = cur.direction
    dd = float(np.vdot(d, d))
    if dd == 0.0:
        return StepResult(point=cur, step=1.0, k=0, escaped=False)
    steps = cfg.gamma ** np.arange(cfg.k_max + 1)
    # steps decrease, so the admissible ones form a prefix
    n_adm = int(np.count_nonzero(steps > cfg.gamma_min_schedule(n)))
    delta_F = access_all(cur.F, params)
    lo = n_trials = 0
    for size in (*_CHUNKS, n_adm):
        hi = min(lo + size, n_adm)
        if hi <= lo:
            break
        ts = steps[lo:hi]
        h, delta, v, F, G = _trials(cur, delta_F, ts, params)
        n_trials += hi - lo
        ok = np.flatnonzero(G - cur.G <= -cfg.delta * ts * dd)
        if ok.size:
            j = int(ok[0])
            pt = MeritEval(h=h[j], delta=delta[j], v=v[j], F=F[j], G=float(G[j]))
            return StepResult(point=pt, step=float(ts[j]), k=lo + j, escaped=False, n_trials=n_trials)
        lo = hi
    gbar = float(cfg.gamma_bar_rule(cur.G))
    if not 0 < gbar <= 1:
        raise ValueError(f"escape step must lie in (0, 1], got {gbar}")
    h, delta, v, F, G = _trials(cur, delta_F, np.array([gbar]), params)
    if not np.isfinite(G[0]):
        raise NumericError("escape step produced a non-finite merit value")
    pt = MeritEval(h=h[0], delta=delta[0], v=v[0], F=F[0], G=float(G[0]))
    # failed: k_max exhausted while steps were still above gamma_min
    return StepResult(
        point=pt, step=gbar, k=n_adm, escaped=True, failed=n_adm == steps.size, n_trials=n_trials + 1
    )


@dataclass
class SolveDiagnostics:
    converged: bool
    iterations: int
    G: float
    v_star: float
    n_escapes: int
    n_failed_searches: int
    n_evaluations: int
    mean_k: float
    elapsed: float
    # first iteration with G < tol_G; later ones only certify the equilibrium
    iterations_to_tol: int | None = None
    direction_rule: str = DIRECTION_RULE
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def solve_equilibrium(h0: np.ndarray, params: ModelParams, cfg: SolverConfig | None = None, callback=None):
    """Iterate line-searched projection-dynamics steps until ``G < cfg.tol_G``.

    With ``cfg.certify_rtol`` set, iteration continues past that point until
    the long-run conditions also hold to ``certify_rtol * |v*|``; a small
    ``G`` alone bounds utility gaps only to about ``sqrt(2 G)``.

    Returns ``(h, diagnostics)``.  Hitting ``max_iter`` (or ``time_limit``)
    is reported through ``diagnostics.converged``, not raised.
    """
    cfg = cfg or SolverConfig()
    h0 = np.asarray(h0, dtype=float)
    if h0.shape != (params.R, params.I):
        raise ValueError(f"h0 must have shape {(params.R, params.I)}, got {h0.shape}")
    if not in_feasible_set(h0, params.H):
        raise ValueError("h0 is not in the feasible set")
    start = time.perf_counter()
    cur = evaluate(h0, params)
    n_eval = 1
    n_esc = n_fail = 0
    k_total = 0
    n = 0
    reason = "tolerance"
    n_tol = None

    def done(cur) -> bool:
        nonlocal n_tol
        if cur.G >= cfg.tol_G:
            return False
        if n_tol is None:
            n_tol = n
        return cfg.certify_rtol is None or _report(cur.h, cur.v, params, None, cfg.certify_rtol).passed

    while not done(cur):
        if n >= cfg.max_iter:
            reason = "max_iter"
            break
        if cfg.time_limit is not None and time.perf_counter() - start > cfg.time_limit:
            reason = "time_limit"
            break
        n += 1
        res = armijo_step(cur, params, cfg, n)
        n_eval += res.n_trials
        k_total += res.k
        n_esc += res.escaped
        n_fail += res.failed
        cur = res.point
        if callback is not None:
            callback(n, cur)
        if n % 100_000 == 0:
            log.debug("iter %d G=%.3e escapes=%d", n, cur.G, n_esc)
    h = cur.h
    diag = SolveDiagnostics(
        converged=reason == "tolerance",
        iterations=n,
        iterations_to_tol=n_tol,
        G=cur.G,
        v_star=_v_star(h, cur.v, params),
        n_escapes=n_esc,
        n_failed_searches=n_fail,
        n_evaluations=n_eval,
        mean_k=k_total / n if n else 0.0,
        elapsed=time.perf_counter() - start,
        stop_reason=reason,
    )
    return h, diag


def occupied_threshold(params: ModelParams) -> float:
    return 1e-10 * params.H / (params.R * params.I)


def _v_star(h, v, params) -> float:
    occ = h > occupied_threshold(params)
    if not np.any(occ):
        return float("nan")
    return float(np.sum(h[occ] * v[occ]) / np.sum(h[occ]))


@dataclass(frozen=True)
class EquilibriumReport:
    v_star: float
    occupied_residual: float
    empty_residual: float
    mass_error: float
    passed: bool
    tol: float

    def to_dict(self) -> dict:
        return asdict(self)


def _report(h, v, params: ModelParams, tol: float | None, rtol: float = 1e-6) -> EquilibriumReport:
    occ = h > occupied_threshold(params)
    v_star = _v_star(h, v, params)
    if tol is None:
        tol = rtol * abs(v_star)
    occ_res = float(np.max(np.abs(v[occ] - v_star))) if np.any(occ) else math.inf
    empty = ~occ
    emp_res = float(np.max(v[empty] - v_star)) if np.any(empty) else -math.inf
    mass_err = abs(float(h.sum()) - params.H) / params.H
    passed = occ_res <= tol and emp_res <= tol and mass_err <= 1e-9 and bool(np.all(h >= 0))
    return EquilibriumReport(
        v_star=v_star,
        occupied_residual=occ_res,
        empty_residual=emp_res,
        mass_error=mass_err,
        passed=passed,
        tol=tol,
    )


def check_equilibrium(h: np.ndarray, params: ModelParams, tol: float | None = None) -> EquilibriumReport:
    """Verify the long-run conditions for ``h``.

    ``v*`` is the mass-weighted mean utility over occupied cells.  Passes when
    every occupied cell is within ``tol`` of ``v*``, no empty cell exceeds
    ``v*`` by more than ``tol``, and total mass is ``H``.  The default ``tol``
    is ``1e-6 * |v*|``.
    """
    h = np.asarray(h, dtype=float)
    return _report(h, utility(h, params), params, tol)
