"""Rank-size regressions and permutation tests for CPL, CPP and HP.

Every permutation test compares an observed statistic ``x0`` with ``M``
counterfactual draws and reports ``p = M0 / (M + 1)``, where ``M0`` counts
draws at least as extreme as ``x0`` (ties count as extreme).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .citysystem import CitySystem, PartitionTree, l_partition, random_l_partition


TIE_RTOL = 1e-12


class FitError(ValueError):
    pass


def p_value(M0: int, M: int) -> float:
    """One-sided permutation p-value ``M0 / (M + 1)``."""
    if M < 1:
        raise ValueError("need at least one counterfactual draw")
    if not 0 <= M0 <= M:
        raise ValueError(f"M0 must lie in [0, M], got M0={M0}, M={M}")
    return M0 / (M + 1)


@dataclass
class PermutationResult:
    observed: float
    draws: np.ndarray = field(repr=False)
    M0: int
    p_value: float
    extreme: str

    @property
    def M(self) -> int:
        return int(self.draws.size)

    @property
    def mean(self) -> float:
        return float(np.mean(self.draws))

    def percentile(self, q: float) -> float:
        return float(np.percentile(self.draws, q))


def permutation_result(observed: float, draws, extreme: str) -> PermutationResult:
    draws = np.asarray(draws, dtype=float)
    # summation order can move a tied statistic by a few ulps
    tol = TIE_RTOL * max(1.0, abs(observed))
    if extreme == "small":
        M0 = int(np.count_nonzero(draws <= observed + tol))
    elif extreme == "large":
        M0 = int(np.count_nonzero(draws >= observed - tol))
    else:
        raise ValueError(f"extreme must be 'small' or 'large', got {extreme!r}")
    return PermutationResult(observed=float(observed), draws=draws, M0=M0, p_value=p_value(M0, draws.size), extreme=extreme)


# rank-size regressions -------------------------------------------------------


@dataclass
class RankSizeFit:
    theta: float
    b: float
    residuals: np.ndarray = field(repr=False)
    rmse: float

    @property
    def alpha(self) -> float:
        return 1.0 / self.theta if self.theta > 0 else float("inf")


def _log_sizes(sizes) -> np.ndarray:
    s = np.asarray(sizes, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise FitError("need at least two sizes")
    if np.any(s <= 0):
        raise FitError("sizes must be positive")
    return np.log(np.sort(s)[::-1])


def rank_size_fit(sizes) -> RankSizeFit:
    """OLS of ``ln s`` on ``ln(rank - 0.5)``; returns slope ``theta = 1/alpha``."""
    y = _log_sizes(sizes)
    x = np.log(np.arange(1, y.size + 1) - 0.5)
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return RankSizeFit(theta=float(-coef[1]), b=float(coef[0]), residuals=resid, rmse=float(np.sqrt(np.mean(resid**2))))


@dataclass
class CplFit:
    theta: float
    b1: float
    betas: np.ndarray
    residuals: np.ndarray = field(repr=False)
    rmse: float

    @property
    def intercepts(self) -> np.ndarray:
        """Per-cell intercept ``b_j = b1 + beta_j`` (``beta_1 = 0``)."""
        return self.b1 + self.betas


def cpl_fit(cells) -> CplFit:
    """Common-slope rank-size regression with a fixed effect per cell.

    ``cells`` is a sequence of size lists; the first is the reference cell.
    Ranks are taken within each cell.
    """
    cells = list(cells)
    if not cells:
        raise FitError("need at least one cell")
    ys, xs, groups = [], [], []
    for j, c in enumerate(cells):
        try:
            y = _log_sizes(c)
        except FitError as e:
            raise FitError(f"cell {j}: {e}") from None
        ys.append(y)
        xs.append(np.log(np.arange(1, y.size + 1) - 0.5))
        groups.append(np.full(y.size, j))
    y, x, g = np.concatenate(ys), np.concatenate(xs), np.concatenate(groups)
    J = len(cells)
    X = np.zeros((y.size, J + 1))
    X[:, 0] = 1.0
    X[:, 1] = x
    for j in range(1, J):
        X[g == j, j + 1] = 1.0
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise FitError("singular design in common power-law regression")
    resid = y - X @ coef
    betas = np.concatenate(([0.0], coef[2:]))
    return CplFit(theta=float(-coef[1]), b1=float(coef[0]), betas=betas, residuals=resid, rmse=float(np.sqrt(np.mean(resid**2))))


def cpl_cells(sys: CitySystem, tree: PartitionTree) -> list:
    """Size lists of the hinterland cells with at least two cities, root first."""
    return [sys.sizes[c.members] for c in tree.hinterland_cells(min_size=2)]


def cpl_test(sys: CitySystem, tree: PartitionTree | None = None, M: int = 1000, rng=None, L: int = 3, max_depth: int = 6) -> PermutationResult:
    """RMSE of the common power law on the L-partition vs random L-partitions.

    Small RMSE is extreme.  Counterfactual partitions keep the centers and
    the cell size of every node.
    """
    rng = np.random.default_rng(rng)
    if tree is None:
        tree = l_partition(sys, L, max_depth)
    observed = cpl_fit(cpl_cells(sys, tree)).rmse
    draws = np.empty(M)
    for m in range(M):
        cf = random_l_partition(tree, rng)
        draws[m] = cpl_fit(cpl_cells(sys, cf)).rmse
    return permutation_result(observed, draws, "small")


# central place property ----------------------------------------------------


def _mean_nearest(dist: np.ndarray, subset) -> float:
    return float(dist[:, subset].min(axis=1).mean())


def cpp_statistic(sys: CitySystem, r: int) -> float:
    """Mean distance from every city to the nearest of the ``r`` largest."""
    if not 1 <= r <= sys.U:
        raise ValueError(f"r must lie in [1, {sys.U}], got {r}")
    return _mean_nearest(sys.distances, np.arange(r))


@dataclass
class CppResult(PermutationResult):
    r: int = 0


def cpp_test(sys: CitySystem, r: int, M: int = 1000, rng=None) -> CppResult:
    """Observed ``d_r`` against ``M`` uniformly random ``r``-subsets; small is extreme."""
    rng = np.random.default_rng(rng)
    observed = cpp_statistic(sys, r)
    dist = sys.distances
    draws = np.array([_mean_nearest(dist, rng.choice(sys.U, size=r, replace=False)) for _ in range(M)])
    res = permutation_result(observed, draws, "small")
    return CppResult(**vars(res), r=r)


# hierarchy property ----------------------------------------------------------


def _hierarchy_shares(B: np.ndarray) -> np.ndarray:
    """Hierarchy share of every industry from a presence matrix ``B`` (U x I)."""
    B = B.astype(np.int64)
    counts = B.sum(axis=0)
    overlap = B.T @ B
    I = counts.size
    J = (counts[None, :] >= counts[:, None]) & ~np.eye(I, dtype=bool)
    nJ = J.sum(axis=1)
    out = np.full(I, np.nan)
    ok = (nJ > 0) & (counts > 0)
    out[ok] = (overlap * J).sum(axis=1)[ok] / (nJ[ok] * counts[ok])
    return out


def _presence(sys: CitySystem) -> np.ndarray:
    if sys.presence is None:
        raise ValueError("city system carries no industry presence data")
    return sys.presence


def hierarchy_share(sys: CitySystem, i: int) -> float | None:
    """Mean share of industry ``i``'s choice cities found in each more ubiquitous industry.

    Returns ``None`` when no other industry is at least as ubiquitous.
    """
    U_i = _presence(sys)[:, i]
    if not U_i.any():
        raise ValueError(f"industry {i} has no choice city")
    val = _hierarchy_shares(sys.presence)[i]
    return None if np.isnan(val) else float(val)


def hierarchy_shares(sys: CitySystem) -> np.ndarray:
    """All hierarchy shares; NaN where undefined."""
    return _hierarchy_shares(_presence(sys))


@dataclass
class HpResult:
    shares: np.ndarray
    draws: np.ndarray = field(repr=False)
    M0: np.ndarray
    p_values: np.ndarray
    p99: np.ndarray
    choice_counts: np.ndarray

    @property
    def M(self) -> int:
        return int(self.draws.shape[0])

    def per_industry(self, i: int) -> PermutationResult:
        return PermutationResult(
            observed=float(self.shares[i]), draws=self.draws[:, i], M0=int(self.M0[i]), p_value=float(self.p_values[i]), extreme="large"
        )


def _random_presence(counts: np.ndarray, U: int, rng) -> np.ndarray:
    # each column: a uniform random subset of the cities with the given size
    keys = rng.random((U, counts.size))
    order = np.argsort(keys, axis=0)
    pos = np.empty_like(order)
    np.put_along_axis(pos, order, np.arange(U)[:, None], axis=0)
    return pos < counts[None, :]


def hp_test(sys: CitySystem, M: int = 1000, rng=None) -> HpResult:
    """Hierarchy shares against random choice-city sets of the same sizes.

    Each draw gives every industry an independent uniform random subset of
    the cities, so for each ``i`` the sets of ``i`` and of every ``j`` in
    its comparison group are independent.  Large is extreme.
    """
    rng = np.random.default_rng(rng)
    shares = hierarchy_shares(sys)
    counts = sys.choice_counts()
    draws = np.empty((M, counts.size))
    for m in range(M):
        draws[m] = _hierarchy_shares(_random_presence(counts, sys.U, rng))
    valid = ~np.isnan(shares)
    M0 = np.where(valid, (draws >= shares[None, :] - TIE_RTOL).sum(axis=0), 0)
    p = np.where(valid, M0 / (M + 1), np.nan)
    p99 = np.where(valid, np.percentile(np.nan_to_num(draws, nan=0.0), 99, axis=0), np.nan)
    return HpResult(shares=shares, draws=draws, M0=M0, p_values=p, p99=p99, choice_counts=counts)


# association -----------------------------------------------------------------


def spearman(xs, ys) -> float:
    """Spearman rank correlation with midranks for ties."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-d of equal length")
    if x.size < 2:
        raise ValueError("need at least two observations")
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    den = np.sqrt((rx**2).sum() * (ry**2).sum())
    if den == 0:
        raise ValueError("zero rank variance")
    return float((rx * ry).sum() / den)


def spearman_test(xs, ys, M: int = 1000, rng=None) -> PermutationResult:
    """Spearman correlation with a permutation p-value; large is extreme."""
    rng = np.random.default_rng(rng)
    rho = spearman(xs, ys)
    y = np.asarray(ys, dtype=float)
    draws = np.array([spearman(xs, rng.permutation(y)) for _ in range(M)])
    return permutation_result(rho, draws, "large")
