"""Gaussian kernel density models with bounded support and seeded sampling.

A fitted model is a mixture of Gaussian kernels centred on the data points.
Supports may be half-open or closed intervals; the density is renormalized
by the kernel mass falling inside the support and sampling rejects draws
that land outside. All randomness comes from caller-provided numpy
Generators, so sampling is reproducible and safely parallel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import DataError

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_MAX_REJECTION_ATTEMPTS = 1000

UNBOUNDED = (-math.inf, math.inf)


def silverman_bandwidth(samples: np.ndarray) -> float:
    """Rule-of-thumb bandwidth 0.9 * min(sd, IQR/1.34) * n^(-1/5).

    Uses the n-1 sample standard deviation and linear-interpolation
    quantiles. Returns 0 for degenerate data (n < 2 or no spread).
    """
    n = samples.size
    if n < 2:
        return 0.0
    sd = float(samples.std(ddof=1))
    q25, q75 = np.percentile(samples, [25.0, 75.0])
    spread = min(sd, (q75 - q25) / 1.34)
    return 0.9 * spread * n ** (-0.2)


@dataclass
class KdeModel:
    """Gaussian KDE over one feature, truncated to ``support``.

    Attributes:
        samples: the data points (kernel centres), all inside support.
        bandwidth: kernel standard deviation, > 0.
        support: closed interval (lo, hi); either end may be infinite.
    """

    samples: np.ndarray
    bandwidth: float
    support: tuple[float, float] = UNBOUNDED
    _mass: float = field(init=False, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.size == 0:
            raise DataError("KdeModel requires at least one sample")
        if not self.bandwidth > 0:
            raise DataError(f"bandwidth must be positive, got {self.bandwidth}")
        lo, hi = self.support
        if not lo < hi:
            raise DataError(f"empty support interval: {self.support}")
        if self.samples.min() < lo or self.samples.max() > hi:
            raise DataError("sample outside declared support")
        self._mass = self._support_mass()

    def _support_mass(self) -> float:
        lo, hi = self.support
        if math.isinf(lo) and math.isinf(hi):
            return 1.0
        upper = ndtr((hi - self.samples) / self.bandwidth) if math.isfinite(hi) else 1.0
        lower = ndtr((lo - self.samples) / self.bandwidth) if math.isfinite(lo) else 0.0
        return float(np.mean(upper - lower))

    def pdf(self, x):
        """Density at ``x`` (scalar or array); 0 outside the support."""
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.samples) / self.bandwidth
        raw = np.exp(-0.5 * z * z).mean(axis=-1) / (self.bandwidth * _SQRT_2PI)
        lo, hi = self.support
        inside = (x >= lo) & (x <= hi)
        out = np.where(inside, raw / self._mass, 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        """Cumulative distribution of the truncated mixture."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        clipped = np.clip(x, lo, hi)
        upper = ndtr((clipped[..., None] - self.samples) / self.bandwidth).mean(axis=-1)
        lower = (
            float(np.mean(ndtr((lo - self.samples) / self.bandwidth)))
            if math.isfinite(lo) else 0.0
        )
        out = np.clip((upper - lower) / self._mass, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator) -> float:
        """One draw: a uniformly chosen data point plus kernel noise.

        Out-of-support draws are rejected and redrawn; after 1000 failed
        attempts the last draw is clamped to the nearest support bound.
        """
        samples = self.samples
        n = samples.size
        h = self.bandwidth
        lo, hi = self.support
        value = 0.0
        for _ in range(_MAX_REJECTION_ATTEMPTS):
            value = samples[rng.integers(0, n)] + h * rng.standard_normal()
            if lo <= value <= hi:
                return float(value)
        return float(min(max(value, lo), hi))

    def sample_many(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """``count`` sequential draws from the same stream."""
        return np.array([self.sample(rng) for _ in range(count)])

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        lo, hi = self.support
        return {
            "samples": [float(s) for s in self.samples],
            "bandwidth": float(self.bandwidth),
            "support": [
                None if math.isinf(lo) else float(lo),
                None if math.isinf(hi) else float(hi),
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KdeModel":
        lo, hi = data["support"]
        return cls(
            samples=np.asarray(data["samples"], dtype=float),
            bandwidth=float(data["bandwidth"]),
            support=(
                -math.inf if lo is None else float(lo),
                math.inf if hi is None else float(hi),
            ),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str | Path) -> "KdeModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_kde(samples, support: tuple[float, float] = UNBOUNDED) -> KdeModel:
    """Fit a Gaussian KDE with Silverman bandwidth to ``samples``.

    Degenerate data (all points identical, or a single point) falls back to
    a bandwidth of max(1e-6, 0.01 * max(1, largest |sample|)).
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DataError("cannot fit a density to an empty sample array")
    if not np.all(np.isfinite(x)):
        raise DataError("samples must be finite")
    lo, hi = support
    if x.min() < lo or x.max() > hi:
        raise DataError(
            f"sample range [{x.min()}, {x.max()}] exceeds support [{lo}, {hi}]"
        )

    h = silverman_bandwidth(x)
    if not h > 0:
        h = max(1e-6, 0.01 * max(1.0, float(np.max(np.abs(x)))))
    return KdeModel(samples=x, bandwidth=h, support=support)
