"""Ring geography and industry-specific freeness-of-trade matrices.

Locations are equi-spaced on a circle of unit radius, so the distance between
two locations is the shorter arc length. Freeness between locations at
distance ``d`` for an industry with substitution elasticity ``sigma`` is
``phi ** ((sigma - 1) * d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """A model parameter is outside its admissible range."""


def ring_distance(r: int, s: int, R: int) -> float:
    """Arc length between locations ``r`` and ``s`` on a ring of ``R`` locations."""
    if R < 1:
        raise ParameterError(f"R must be >= 1, got {R}")
    if not (0 <= r < R and 0 <= s < R):
        raise IndexError(f"location index out of range for R={R}: r={r}, s={s}")
    k = abs(r - s)
    return min(k, R - k) * 2.0 * np.pi / R


def _check_freeness_params(sigma: float, phi: float) -> None:
    if not sigma > 1.0:
        raise ParameterError(f"sigma must be > 1, got {sigma}")
    if not 0.0 < phi < 1.0:
        raise ParameterError(f"phi must lie in (0, 1), got {phi}")


def freeness(sigma: float, phi: float, d):
    """Freeness of trade ``phi ** ((sigma - 1) * d)``.

    Accepts scalar or array distances. Very large exponents underflow to an
    exact 0, which is read as "no trade at that distance".
    """
    _check_freeness_params(sigma, phi)
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ParameterError("distance must be nonnegative")
    # exp/log form keeps d == 0 exactly at 1.0
    out = np.exp((sigma - 1.0) * np.log(phi) * d)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RingGeography:
    R: int
    positions: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.R < 1:
            raise ParameterError(f"R must be >= 1, got {self.R}")
        object.__setattr__(self, "positions", 2.0 * np.pi * np.arange(self.R) / self.R)

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.R

    def distance(self, r: int, s: int) -> float:
        return ring_distance(r, s, self.R)

    def distance_matrix(self) -> np.ndarray:
        idx = np.arange(self.R)
        k = np.abs(idx[:, None] - idx[None, :])
        return np.minimum(k, self.R - k) * self.spacing


def freeness_matrix(sigma: float, phi: float, geo: RingGeography) -> np.ndarray:
    """Dense symmetric ``R x R`` discounting matrix for one industry.

    The returned array is read-only.
    """
    _check_freeness_params(sigma, phi)
    D = freeness(sigma, phi, geo.distance_matrix())
    D = np.atleast_2d(D)
    D.setflags(write=False)
    return D


def freeness_stack(sigmas, phi: float, geo: RingGeography) -> np.ndarray:
    """Stack of discounting matrices, shape ``(I, R, R)``, one per industry."""
    dist = geo.distance_matrix()
    sigmas = np.asarray(sigmas, dtype=float)
    for s in sigmas:
        _check_freeness_params(s, phi)
    out = np.exp(((sigmas - 1.0) * np.log(phi))[:, None, None] * dist[None, :, :])
    out.setflags(write=False)
    return out


def circulant_matvec(first_row: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Product of a symmetric circulant matrix with ``x`` (last axis) via FFT.

    Only accurate in absolute terms (about 1e-16 times the largest entry), so
    it is unsuitable where tiny access values feed a logarithm.
    """
    n = first_row.shape[-1]
    return np.fft.irfft(np.fft.rfft(first_row) * np.fft.rfft(x, axis=-1), n=n, axis=-1)
