"""Short-run equilibrium of the multi-industry economy for a fixed worker distribution.

All quantities are closed forms in the market access
``delta[r, i] = sum_s D_i[s, r] * h[s, i]``.  Arrays are laid out with
locations on axis 0 and industries on axis 1, i.e. ``h`` has shape ``(R, I)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import ParameterError, RingGeography, freeness_stack

# floor applied to market access before logs and reciprocals
DELTA_FLOOR = 1e-300


class DegenerateIndustryError(ValueError):
    """An industry has no mass anywhere, or zero access where there is demand."""


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ModelParams:
    R: int
    sigmas: tuple
    H: float = 1000.0
    L: float = 10000.0
    phi: float = 0.6
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in np.ravel(self.sigmas)))
        if self.R < 1:
            raise ParameterError(f"R must be >= 1, got {self.R}")
        if len(self.sigmas) < 1:
            raise ParameterError("need at least one industry")
        if not self.H > 0:
            raise ParameterError(f"H must be > 0, got {self.H}")
        if not self.L >= 0:
            raise ParameterError(f"L must be >= 0, got {self.L}")
        if not 0.0 < self.phi < 1.0:
            raise ParameterError(f"phi must lie in (0, 1), got {self.phi}")
        if not self.beta > 0:
            raise ParameterError(f"beta must be > 0, got {self.beta}")
        bad = [s for s in self.sigmas if not s > 1.0]
        if bad:
            raise ParameterError(f"every sigma must be > 1, got {bad}")

    @property
    def I(self) -> int:
        return len(self.sigmas)

    @property
    def l(self) -> float:
        return self.L / self.R

    @property
    def sigma_array(self) -> np.ndarray:
        return np.asarray(self.sigmas)

    @cached_property
    def geography(self) -> RingGeography:
        return RingGeography(self.R)

    @cached_property
    def D(self) -> np.ndarray:
        """Discounting matrices, shape ``(I, R, R)``."""
        return freeness_stack(self.sigmas, self.phi, self.geography)

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "I": self.I,
            "H": self.H,
            "L": self.L,
            "phi": self.phi,
            "beta": self.beta,
            "sigmas": list(self.sigmas),
        }


@dataclass(frozen=True)
class ShortRunState:
    """Derived fields for one worker distribution, all shaped ``(R, I)``."""

    delta: np.ndarray
    wages: np.ndarray
    S: np.ndarray
    v: np.ndarray
    sigmas: np.ndarray = field(repr=False)
    beta: float = 1.0

    @property
    def prices(self) -> np.ndarray:
        return price(self.sigmas, self.beta)

    @property
    def price_index(self) -> np.ndarray:
        return price_index(self.delta, self.sigmas, self.beta)

    @property
    def aggregate_access(self) -> np.ndarray:
        """Per-location sum of goods access over industries."""
        return self.S.sum(axis=1)


def price(sigma, beta: float = 1.0):
    """Monopolistic price ``sigma * beta / (sigma - 1)``."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 1.0):
        raise ParameterError("sigma must be > 1")
    if not beta > 0:
        raise ParameterError("beta must be > 0")
    p = sigma * beta / (sigma - 1.0)
    return float(p) if p.ndim == 0 else p


def markup(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 1.0):
        raise ParameterError("sigma must be > 1")
    m = 1.0 / (sigma - 1.0)
    return float(m) if m.ndim == 0 else m


def price_index(delta, sigmas, beta: float = 1.0) -> np.ndarray:
    """Price index of each industry composite, diagnostic only."""
    sigmas = np.asarray(sigmas, dtype=float)
    d = np.maximum(np.asarray(delta, dtype=float), DELTA_FLOOR)
    return price(sigmas, beta) * d ** (1.0 / (1.0 - sigmas))


def _floor(delta):
    return np.maximum(delta, DELTA_FLOOR)


def market_access(D_i: np.ndarray, h_i: np.ndarray) -> np.ndarray:
    """Access vector ``D_i^T h_i`` for one industry."""
    D_i = np.asarray(D_i, dtype=float)
    h_i = np.asarray(h_i, dtype=float)
    if D_i.ndim != 2 or D_i.shape[0] != D_i.shape[1] or D_i.shape[1] != h_i.shape[0]:
        raise ValueError(f"dimension mismatch: D {D_i.shape}, h {h_i.shape}")
    # D_i is symmetric, so D_i @ h_i == D_i.T @ h_i
    return D_i @ h_i


def wages(D_i, delta_i, h_row, l: float, sigma: float) -> np.ndarray:
    """Mobile-worker wage in one industry at every location.

    ``w[r] = (1/sigma) * sum_s D_i[r, s] * (h_row[s] + l) / delta_i[s]``.
    """
    demand = np.asarray(h_row, dtype=float) + l
    delta_i = np.asarray(delta_i, dtype=float)
    if np.any((delta_i <= 0) & (demand > 0)):
        s = int(np.flatnonzero((delta_i <= 0) & (demand > 0))[0])
        raise DegenerateIndustryError(f"zero market access at demanded location {s}")
    return np.asarray(D_i) @ (demand / _floor(delta_i)) / sigma


def goods_access(D_i, h_i, sigma: float) -> np.ndarray:
    """``ln(D_i h_i) / (sigma - 1)``, with access floored at ``DELTA_FLOOR``."""
    h_i = np.asarray(h_i, dtype=float)
    if not np.any(h_i > 0):
        raise DegenerateIndustryError("industry has zero total mass")
    delta = market_access(D_i, h_i)
    return np.log(_floor(delta)) / (sigma - 1.0)


def _check_h(h: np.ndarray, params: ModelParams) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape != (params.R, params.I):
        raise ValueError(f"h must have shape {(params.R, params.I)}, got {h.shape}")
    return h


def access_all(h: np.ndarray, params: ModelParams) -> np.ndarray:
    """Market access for every industry at once, shape ``(R, I)``."""
    # (I, R, R) @ (I, R, 1) -> (I, R, 1)
    return np.matmul(params.D, h.T[:, :, None])[:, :, 0].T


def batched_wages(ratio: np.ndarray, params: ModelParams) -> np.ndarray:
    """Apply ``D_i / sigma_i`` to ``ratio[..., r, i]`` over the location axis.

    ``ratio`` has shape ``(K, R, I)``; all K columns go through one matmul.
    """
    # (I, R, R) @ (I, R, K) -> (I, R, K)
    w = np.matmul(params.D, ratio.transpose(2, 1, 0))
    return w.transpose(2, 1, 0) / params.sigma_array


def utility_from_access(delta: np.ndarray, h: np.ndarray, params: ModelParams) -> tuple:
    """Wages, goods access and utility from precomputed access, batched over axis 0.

    ``delta`` and ``h`` have shape ``(K, R, I)``.
    """
    sig = params.sigma_array
    fd = _floor(delta)
    demand = h.sum(axis=2) + params.l
    w = batched_wages(demand[:, :, None] / fd, params)
    S = np.log(fd) / (sig - 1.0)
    v = S.sum(axis=2, keepdims=True) + w - params.I
    return w, S, v


def utility(h: np.ndarray, params: ModelParams) -> np.ndarray:
    """Indirect utility ``v`` only, shape ``(R, I)``; no validation."""
    delta = access_all(h, params)
    return utility_from_access(delta[None], np.asarray(h, dtype=float)[None], params)[2][0]


def indirect_utility(h: np.ndarray, params: ModelParams, check: bool = True) -> ShortRunState:
    """Short-run state for distribution ``h``.

    ``v[r, i] = sum_j S[r, j] + w[r, i] - I`` is defined at every cell,
    occupied or not.
    """
    h = _check_h(h, params)
    mass = h.sum(axis=0)
    if np.any(mass <= 0):
        i = int(np.flatnonzero(mass <= 0)[0])
        raise DegenerateIndustryError(f"industry {i} has zero total mass")
    delta = access_all(h, params)
    with np.errstate(over="ignore", invalid="ignore"):
        w, S, v = (a[0] for a in utility_from_access(delta[None], h[None], params))
    if check and not np.all(np.isfinite(v)):
        r, i = np.argwhere(~np.isfinite(v))[0]
        raise NumericError(f"non-finite utility at location {r}, industry {i}")
    return ShortRunState(delta=delta, wages=w, S=S, v=v, sigmas=params.sigma_array, beta=params.beta)


@dataclass(frozen=True)
class MarketShareField:
    """Trade values ``T[r, s]`` from supplier ``r`` to consumer ``s`` and their shares."""

    industry: int
    T: np.ndarray
    M: np.ndarray

    def dominant_supplier(self) -> np.ndarray:
        """Supplier with the largest share at each consuming location."""
        return np.argmax(self.M, axis=0)


def market_shares(h: np.ndarray, params: ModelParams, i: int) -> MarketShareField:
    h = _check_h(h, params)
    if not 0 <= i < params.I:
        raise IndexError(f"industry {i} out of range")
    h_i = h[:, i]
    if not np.any(h_i > 0):
        raise DegenerateIndustryError(f"industry {i} has zero total mass")
    D_i = params.D[i]
    delta_i = market_access(D_i, h_i)
    if np.any(delta_i <= 0):
        raise DegenerateIndustryError(f"industry {i} has zero access at some location")
    demand = h.sum(axis=1) + params.l
    T = D_i * h_i[:, None] / delta_i[None, :] * demand[None, :]
    M = T / T.sum(axis=0, keepdims=True)
    return MarketShareField(industry=i, T=T, M=M)
