"""Link-distance statistics for nodes placed uniformly in a rectangle.

Distances are normalised by the short side ``D1``: ``xi = distance / D1``.
The density :func:`link_distance_pdf` is a density in ``xi`` (it integrates
to one over ``xi``); divide by ``D1`` for a density over metres.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

_QUAD_EPSABS = 1e-8
_SAMPLE_CHUNK = 1_000_000


@dataclass(frozen=True)
class RectRegion:
    """Rectangular service area. Orientation is normalised so ``width_d1 <= length_d2``."""

    width_d1: float
    length_d2: float

    def __post_init__(self):
        if not (self.width_d1 > 0 and self.length_d2 > 0):
            raise ValueError(f"region sides must be positive, got {self.width_d1} x {self.length_d2}")
        if self.width_d1 > self.length_d2:
            d1, d2 = self.length_d2, self.width_d1
            object.__setattr__(self, "width_d1", float(d1))
            object.__setattr__(self, "length_d2", float(d2))

    @classmethod
    def from_dims(cls, x_m: float, y_m: float) -> "RectRegion":
        return cls(float(x_m), float(y_m))

    @property
    def zeta(self) -> float:
        """Shape parameter D1/D2 in (0, 1]."""
        return self.width_d1 / self.length_d2

    @property
    def area(self) -> float:
        return self.width_d1 * self.length_d2

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width_d1, self.length_d2)

    @property
    def xi_max(self) -> float:
        """Upper end of the normalised support, sqrt(1 + zeta**-2)."""
        return math.sqrt(1.0 + self.zeta**-2)


@dataclass(frozen=True)
class LinkDistanceStats:
    mean_xi: float
    mean_distance: float
    max_distance: float


def _pdf_scalar(zeta: float, xi: float) -> float:
    inv_zeta = 1.0 / zeta
    xi_max = math.sqrt(1.0 + inv_zeta * inv_zeta)
    if xi < 0.0 or xi >= xi_max:
        return 0.0
    if xi < 1.0:
        return zeta * xi * (2.0 * zeta * xi * xi - 4.0 * xi * (1.0 + zeta) + 2.0 * math.pi)
    root1 = math.sqrt(xi * xi - 1.0)
    asin_term = math.asin(1.0 / xi)
    if xi < inv_zeta:
        return 4.0 * zeta * xi * root1 - 2.0 * zeta * xi * (2.0 * xi + zeta) + 4.0 * zeta * xi * asin_term
    root2 = math.sqrt(max(xi * xi - inv_zeta * inv_zeta, 0.0))
    # clamp: rounding can push 1/(zeta*xi) a hair above 1 at the branch start
    acos_term = math.acos(min(1.0, 1.0 / (zeta * xi)))
    return (
        4.0 * zeta * xi * root1
        + 4.0 * zeta * zeta * xi * root2
        - 2.0 * xi * (zeta * zeta * xi * xi + 1.0 + zeta * zeta)
        + 4.0 * zeta * xi * (asin_term - acos_term)
    )


def link_distance_pdf(region: RectRegion, xi):
    """Density of the normalised distance between two uniform points.

    Accepts a scalar or an array of ``xi`` values. Four branches: ``[0, 1)``,
    ``[1, 1/zeta)``, ``[1/zeta, xi_max)`` and zero elsewhere.
    """
    zeta = region.zeta
    if np.ndim(xi) == 0:
        return _pdf_scalar(zeta, float(xi))
    arr = np.asarray(xi, dtype=float)
    return np.array([_pdf_scalar(zeta, v) for v in arr.ravel()]).reshape(arr.shape)


def _breakpoints(region: RectRegion) -> list[float]:
    pts = [0.0, 1.0, 1.0 / region.zeta, region.xi_max]
    return sorted(set(pts))


def integrate_pdf(region: RectRegion, weight=None) -> float:
    """Integrate ``weight(xi) * pdf(xi)`` over the support, piece by piece."""
    total = 0.0
    pts = _breakpoints(region)
    zeta = region.zeta
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi - lo <= 0.0:
            continue
        if weight is None:
            f = lambda x: _pdf_scalar(zeta, x)  # noqa: E731
        else:
            f = lambda x: weight(x) * _pdf_scalar(zeta, x)  # noqa: E731
        with warnings.catch_warnings():
            # very elongated regions hit roundoff against epsrel; the result is still within epsabs
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(f, lo, hi, epsabs=_QUAD_EPSABS, epsrel=1e-10, limit=200)
        total += val
    return total


def mean_link_distance(region: RectRegion) -> LinkDistanceStats:
    mean_xi = integrate_pdf(region, weight=lambda x: x)
    return LinkDistanceStats(
        mean_xi=mean_xi,
        mean_distance=mean_xi * region.width_d1,
        max_distance=region.diagonal,
    )


def sample_link_distances(region: RectRegion, n_pairs: int, seed: int) -> np.ndarray:
    """Monte Carlo distances ``|A - B|`` for independent uniform points A, B.

    Drawn in fixed-size chunks so the result for a given seed does not
    depend on available memory.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty(n_pairs, dtype=float)
    d1, d2 = region.width_d1, region.length_d2
    start = 0
    while start < n_pairs:
        m = min(_SAMPLE_CHUNK, n_pairs - start)
        dx = (rng.random(m) - rng.random(m)) * d1
        dy = (rng.random(m) - rng.random(m)) * d2
        out[start:start + m] = np.hypot(dx, dy)
        start += m
    return out


def hop_estimate(region: RectRegion, range_r: float) -> int:
    """Expected hop count ``ceil(mean link distance / range)``, at least 1."""
    if range_r <= 0:
        raise ValueError("range_r must be positive")
    mean = mean_link_distance(region).mean_distance
    return max(1, math.ceil(mean / range_r))


def histogram_l1(region: RectRegion, distances: np.ndarray, bins: int = 200) -> float:
    """L1 distance between the analytic pdf and a histogram of sampled distances.

    Both are compared as bin probabilities over ``[0, xi_max]``; the analytic
    side uses the pdf integrated over each bin.
    """
    xi = np.asarray(distances) / region.width_d1
    edges = np.linspace(0.0, region.xi_max, bins + 1)
    counts, _ = np.histogram(xi, bins=edges)
    empirical = counts / xi.size
    # Simpson on each bin; the pdf is smooth within a bin except at the
    # branch points, where it is continuous.
    mids = 0.5 * (edges[:-1] + edges[1:])
    f_lo = link_distance_pdf(region, edges[:-1])
    f_hi = link_distance_pdf(region, edges[1:])
    f_mid = link_distance_pdf(region, mids)
    analytic = (edges[1:] - edges[:-1]) * (f_lo + 4.0 * f_mid + f_hi) / 6.0
    return float(np.abs(empirical - analytic).sum())
