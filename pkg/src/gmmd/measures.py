"""Probability-measure representations, seeded samplers, and moment utilities."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RngSeed",
    "EmpiricalMeasure",
    "DistributionSpec",
    "sample",
    "moment",
]

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class RngSeed:
    """Counter-based RNG key. Identical (seed, stream) reproduces draws bit-for-bit.

    Sub-streams (per particle, per replication) are derived by extending the
    spawn key, so parallel consumers never share state.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.stream) < 0:
            raise ValueError("stream id must be nonnegative")

    def generator(self, *subkeys: int) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=(int(self.stream), *map(int, subkeys))
        )
        return np.random.Generator(np.random.Philox(seq))

    def child(self, *subkeys: int) -> "RngSeed":
        """Derive a new stream id deterministically from sub-indices.

        Mixed-radix packing keeps distinct index tuples on distinct streams.
        """
        s = int(self.stream)
        for k in subkeys:
            k = int(k)
            if k < 0:
                raise ValueError("subkeys must be nonnegative")
            s = s * 0x10000 + (k + 1)
        return RngSeed(self.seed, s)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud in R^d; weights sum to one."""

    points: np.ndarray
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "points", pts)
        n = pts.shape[0]
        if n < 1:
            raise ValueError("empirical measure needs at least one point")
        if self.weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (n,):
            raise ValueError("weights must be a length-n vector")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1 within {_WEIGHT_TOL}")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def second_moment(self) -> float:
        """Weighted mean of ||x||^2 (not raised to 1/2)."""
        return float(self.weights @ np.einsum("ij,ij->i", self.points, self.points))

    def to_csv(self) -> str:
        cols = [f"x{j + 1}" for j in range(self.dim)] + ["w"]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for row, w in zip(self.points, self.weights):
            buf.write(",".join(repr(float(v)) for v in row) + f",{repr(float(w))}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EmpiricalMeasure":
        lines = [ln for ln in text.strip().splitlines() if ln]
        header = lines[0].split(",")
        if header[-1] != "w" or not all(h == f"x{j + 1}" for j, h in enumerate(header[:-1])):
            raise ValueError("bad empirical-measure CSV header")
        rows = [list(map(float, ln.split(","))) for ln in lines[1:]]
        arr = np.array(rows, dtype=np.float64)
        return cls(points=arr[:, :-1], weights=arr[:, -1])


@dataclass(frozen=True)
class DistributionSpec:
    """Tagged sampling spec: gaussian (diagonal cov), uniform box, mixture, or dirac."""

    kind: str
    mean: np.ndarray | None = None
    cov_diag: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    point: np.ndarray | None = None
    components: tuple = ()  # (weight, DistributionSpec.gaussian) pairs

    @classmethod
    def gaussian(cls, mean, cov) -> "DistributionSpec":
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.atleast_1d(np.asarray(cov, dtype=np.float64))
        if cov.shape == (1,) and mean.shape[0] > 1:
            cov = np.full(mean.shape, cov[0])
        if cov.shape != mean.shape:
            raise ValueError("diagonal covariance must match mean dimension")
        if np.any(cov <= 0):
            raise ValueError("covariance entries must be positive")
        return cls(kind="gaussian", mean=mean, cov_diag=cov)

    @classmethod
    def uniform_box(cls, lo, hi) -> "DistributionSpec":
        lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("box requires lo < hi componentwise")
        return cls(kind="uniform_box", lo=lo, hi=hi)

    @classmethod
    def dirac(cls, point) -> "DistributionSpec":
        return cls(kind="dirac", point=np.atleast_1d(np.asarray(point, dtype=np.float64)))

    @classmethod
    def mixture(cls, components) -> "DistributionSpec":
        comps = tuple((float(w), c) for w, c in components)
        if abs(sum(w for w, _ in comps) - 1.0) > _WEIGHT_TOL:
            raise ValueError("mixture weights must sum to 1")
        if any(c.kind != "gaussian" for _, c in comps):
            raise ValueError("mixture components must be gaussian")
        return cls(kind="mixture", components=comps)

    @property
    def dim(self) -> int:
        if self.kind == "gaussian":
            return self.mean.shape[0]
        if self.kind == "uniform_box":
            return self.lo.shape[0]
        if self.kind == "dirac":
            return self.point.shape[0]
        return self.components[0][1].dim

    def second_moment(self) -> float:
        """Exact integral of ||x||^2 under the spec."""
        if self.kind == "gaussian":
            return float(self.mean @ self.mean + self.cov_diag.sum())
        if self.kind == "uniform_box":
            lo, hi = self.lo, self.hi
            return float(np.sum((lo * lo + lo * hi + hi * hi) / 3.0))
        if self.kind == "dirac":
            return float(self.point @ self.point)
        return float(sum(w * c.second_moment() for w, c in self.components))


def sample(spec: DistributionSpec, n: int, seed: RngSeed) -> EmpiricalMeasure:
    """Draw n i.i.d. points from the spec with uniform weights; deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed.generator()
    pts = _draw(spec, n, rng)
    return EmpiricalMeasure(points=pts)


def _draw(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    d = spec.dim
    if spec.kind == "gaussian":
        z = rng.standard_normal((n, d))
        return spec.mean + z * np.sqrt(spec.cov_diag)
    if spec.kind == "uniform_box":
        u = rng.random((n, d))
        return spec.lo + u * (spec.hi - spec.lo)
    if spec.kind == "dirac":
        return np.tile(spec.point, (n, 1))
    if spec.kind == "mixture":
        ws = np.array([w for w, _ in spec.components])
        idx = rng.choice(len(ws), size=n, p=ws)
        out = np.empty((n, d))
        for j, (_, comp) in enumerate(spec.components):
            mask = idx == j
            k = int(mask.sum())
            if k:
                out[mask] = comp.mean + rng.standard_normal((k, d)) * np.sqrt(comp.cov_diag)
        return out
    raise ValueError(f"unknown spec kind {spec.kind!r}")


def moment(mu: EmpiricalMeasure, p: float) -> float:
    """(sum_i w_i ||x_i||^p)^(1/p) for p >= 1."""
    if p < 1:
        raise ValueError("p must be >= 1")
    norms = np.linalg.norm(mu.points, axis=1)
    return float((mu.weights @ norms**p) ** (1.0 / p))
