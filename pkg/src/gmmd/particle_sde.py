"""Euler-Maruyama simulation of interacting particle systems and their
decoupled mean-field limit, with rate and path-regularity diagnostics."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._sphere import augment, neuron_inits, sphere_ascent, signed_sliced
from .discrepancy import OptimizerConfig, mmd_rkhs
from .measures import DistributionSpec, EmpiricalMeasure, RngSeed, _draw
from .test_classes import TestClassSpec

__all__ = [
    "SimulationBlowup",
    "LinearMVParams",
    "MeanFieldModel",
    "PathEnsemble",
    "simulate_particles",
    "simulate_reference",
    "pilot_mean_flow",
    "gmmd_time_profile",
    "gmmd_sup_over_time",
    "modulus",
    "modulus_batch",
]

_BLOWUP_LIMIT = 1e6


class SimulationBlowup(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"non-finite or exploding state at step {step}")
        self.step = step


@dataclass(frozen=True)
class LinearMVParams:
    """Scalar model with drift a * mean + b * x, constant diffusion, point start."""

    a: float
    b: float
    sigma: float
    x0: float
    T: float

    def mean_at(self, t):
        return self.x0 * np.exp((self.a + self.b) * np.asarray(t, dtype=np.float64))

    def var_at(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.b == 0.0:
            return self.sigma**2 * t
        return self.sigma**2 * (np.exp(2.0 * self.b * t) - 1.0) / (2.0 * self.b)


@dataclass(frozen=True)
class MeanFieldModel:
    """Interacting drift B(t, x, m1..mK) affine in x and in the functional means
    m_k = mean of f_k over the current empirical measure; constant scalar diffusion."""

    drift: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    features: tuple
    sigma: float
    horizon: float
    init: DistributionSpec
    lipschitz: float

    @classmethod
    def linear(cls, p: LinearMVParams) -> "MeanFieldModel":
        def drift(t, states, means):
            return p.a * means[0] + p.b * states

        return cls(
            drift=drift,
            features=(lambda pts: pts[:, 0],),
            sigma=p.sigma,
            horizon=p.T,
            init=DistributionSpec.dirac([p.x0]),
            lipschitz=math.hypot(p.a, p.b),
        )

    def feature_means(self, states: np.ndarray) -> np.ndarray:
        return np.array([float(np.mean(f(states))) for f in self.features])

    def validate_lipschitz(self, seed: RngSeed, pairs: int = 64, scale: float = 2.0,
                           rtol: float = 1e-9) -> float:
        """Numeric check of the declared bound on random state/mean pairs;
        returns the worst ratio and raises if it exceeds the declared constant."""
        rng = seed.generator(13)
        d = self.init.dim
        K = len(self.features)
        worst = 0.0
        for _ in range(pairs):
            x = scale * rng.standard_normal((4, d))
            x2 = scale * rng.standard_normal((4, d))
            m = scale * rng.standard_normal(K)
            m2 = scale * rng.standard_normal(K)
            t = float(rng.random() * self.horizon)
            db = self.drift(t, x, m) - self.drift(t, x2, m2)
            num = float(np.linalg.norm(db, axis=1).max())
            den = math.sqrt(float(np.linalg.norm(x - x2, axis=1).max() ** 2
                                  + np.linalg.norm(m - m2) ** 2))
            if den > 0:
                worst = max(worst, num / den)
        if worst > self.lipschitz * (1 + rtol) + 1e-12:
            raise ValueError(
                f"drift violates the declared Lipschitz bound: {worst} > {self.lipschitz}")
        return worst


@dataclass(frozen=True)
class PathEnsemble:
    """n sampled paths on a uniform grid; values has shape (n, steps+1, d)."""

    values: np.ndarray
    horizon: float
    seed: RngSeed

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError("values must be (n, steps+1, d)")
        if not np.all(np.isfinite(v)):
            raise ValueError("ensemble contains non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def steps(self) -> int:
        return self.values.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def slice(self, k: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(points=self.values[:, k, :])

    def to_binary(self) -> bytes:
        head = struct.pack("<qqqdQQ", self.n, self.steps, self.dim, self.horizon,
                           int(self.seed.seed), int(self.seed.stream))
        return head + self.values.astype("<f8").tobytes()

    @classmethod
    def from_binary(cls, blob: bytes) -> "PathEnsemble":
        n, steps, d, T, seed, stream = struct.unpack_from("<qqqdQQ", blob, 0)
        vals = np.frombuffer(blob, dtype="<f8", offset=struct.calcsize("<qqqdQQ"))
        vals = vals.reshape(n, steps + 1, d).copy()
        return cls(values=vals, horizon=T, seed=RngSeed(seed, stream))

    def moments_csv(self) -> str:
        lines = ["t," + ",".join(f"m{j + 1}" for j in range(self.dim)) + ",second_moment"]
        for k, t in enumerate(self.times):
            pts = self.values[:, k, :]
            m = pts.mean(axis=0)
            s2 = float(np.einsum("ij,ij->", pts, pts) / pts.shape[0])
            lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in m]
                                  + [repr(s2)]))
        return "\n".join(lines) + "\n"


def _check_blowup(states: np.ndarray, step: int):
    if not np.all(np.isfinite(states)) or np.abs(states).max() > _BLOWUP_LIMIT:
        raise SimulationBlowup(step)


def simulate_particles(model: MeanFieldModel, n: int, steps: int, seed: RngSeed,
                       particle_ids=None) -> PathEnsemble:
    """Explicit Euler-Maruyama for the interacting system.

    Functional means are computed once per step from the current empirical
    measure, then all particles advance. Each particle draws its initial point
    and Brownian increments from its own stream keyed by particle id, so a
    permutation of ids relabels paths without changing the ensemble.
    """
    if n < 1 or steps < 1:
        raise ValueError("need n >= 1 and steps >= 1")
    model.validate_lipschitz(seed)
    d = model.init.dim
    ids = np.arange(n) if particle_ids is None else np.asarray(particle_ids)
    if ids.shape != (n,):
        raise ValueError("particle_ids must be length n")
    dt = model.horizon / steps
    sq = math.sqrt(dt)
    states = np.empty((n, d))
    incr = np.empty((n, steps, d))
    for i, pid in enumerate(ids):
        gen = seed.generator(int(pid))
        states[i] = _draw(model.init, 1, gen)[0]
        incr[i] = gen.standard_normal((steps, d))
    values = np.empty((n, steps + 1, d))
    values[:, 0, :] = states
    t = 0.0
    for k in range(steps):
        means = model.feature_means(states)
        states = states + model.drift(t, states, means) * dt + model.sigma * sq * incr[:, k, :]
        _check_blowup(states, k + 1)
        values[:, k + 1, :] = states
        t += dt
    return PathEnsemble(values=values, horizon=model.horizon, seed=seed)


def simulate_reference(model: MeanFieldModel, mean_flow: np.ndarray, n: int, steps: int,
                       seed: RngSeed) -> PathEnsemble:
    """n independent copies of the decoupled dynamics driven by frozen
    functional-mean curves (shape (K, steps+1)) instead of the empirical measure."""
    mean_flow = np.atleast_2d(np.asarray(mean_flow, dtype=np.float64))
    if mean_flow.shape != (len(model.features), steps + 1):
        raise ValueError("mean_flow must have shape (K, steps+1) on the simulation grid")
    d = model.init.dim
    dt = model.horizon / steps
    sq = math.sqrt(dt)
    gen = seed.generator(917)
    states = _draw(model.init, n, gen)
    values = np.empty((n, steps + 1, d))
    values[:, 0, :] = states
    t = 0.0
    for k in range(steps):
        states = (states + model.drift(t, states, mean_flow[:, k]) * dt
                  + model.sigma * sq * gen.standard_normal((n, d)))
        _check_blowup(states, k + 1)
        values[:, k + 1, :] = states
        t += dt
    return PathEnsemble(values=values, horizon=model.horizon, seed=seed)


def pilot_mean_flow(model: MeanFieldModel, n_pilot: int, steps: int, seed: RngSeed) -> np.ndarray:
    """Functional-mean curves from a large interacting pilot run."""
    ens = simulate_particles(model, n_pilot, steps, seed)
    K = len(model.features)
    out = np.empty((K, steps + 1))
    for k in range(steps + 1):
        pts = ens.values[:, k, :]
        for j, f in enumerate(model.features):
            out[j, k] = float(np.mean(f(pts)))
    return out


def _slice_indices(steps: int, stride: int) -> np.ndarray:
    idx = list(range(0, steps + 1, max(stride, 1)))
    if idx[-1] != steps:
        idx.append(steps)
    return np.array(idx)


def gmmd_time_profile(A: PathEnsemble, B: PathEnsemble, cls: TestClassSpec,
                      cfg: OptimizerConfig, stride: int = 1) -> np.ndarray:
    """Class discrepancy between matching time slices of two ensembles.

    The second ensemble acts as the limit-law proxy. Returns one value per
    evaluated slice (every `stride`-th grid time, terminal always included).
    """
    if A.steps != B.steps or A.dim != B.dim or A.horizon != B.horizon:
        raise ValueError("ensembles must share the time grid and dimension")
    idx = _slice_indices(A.steps, stride)
    if cls.tag == "rkhs":
        return np.array([
            mmd_rkhs(A.slice(k), B.slice(k), cls.kernel).value for k in idx
        ])
    if cls.tag != "barron_ball":
        raise ValueError("time profiles support the rkhs and barron classes")
    nA, nB = A.n, B.n
    xi = np.concatenate([np.full(nA, 1.0 / nA), np.full(nB, -1.0 / nB)])
    rng = cfg.seed.generator(29)
    restarts = min(cfg.restarts, 8)
    steps_opt = min(cfg.steps, 120)
    out = np.empty(idx.size)
    chunk = max(1, int(6_000_000 // ((nA + nB) * max(restarts, 1))))
    pooled_terminal = np.vstack([A.values[:, -1, :], B.values[:, -1, :]])
    base_inits = neuron_inits(pooled_terminal, restarts, rng)
    R = base_inits.shape[0]
    for lo in range(0, idx.size, chunk):
        sel = idx[lo:lo + chunk]
        P = sel.size
        Zs = np.empty((P, nA + nB, A.dim + 1))
        for j, k in enumerate(sel):
            Zs[j] = augment(np.vstack([A.values[:, k, :], B.values[:, k, :]]))
        xis = np.broadcast_to(xi, (P, nA + nB))
        vg = signed_sliced(Zs, xis, R)

        def abs_vg(theta):
            val, grad = vg(theta)
            sgn = np.where(val >= 0, 1.0, -1.0)
            return np.abs(val), sgn[:, None] * grad

        inits = np.tile(base_inits, (P, 1))
        best, _ = sphere_ascent(abs_vg, inits, steps_opt, cfg.step_size)
        out[lo:lo + chunk] = best.reshape(P, R).max(axis=1)
    return out


def gmmd_sup_over_time(A: PathEnsemble, B: PathEnsemble, cls: TestClassSpec,
                       cfg: OptimizerConfig, stride: int = 1) -> float:
    """Max over grid times of the slice discrepancy."""
    return float(gmmd_time_profile(A, B, cls, cfg, stride).max())


def modulus_batch(values: np.ndarray, dt: float, h: float) -> np.ndarray:
    """Exact grid modulus of continuity per path: max over all grid pairs within
    window h of the state increment norm. values has shape (n, steps+1, d)."""
    if h < dt:
        raise ValueError("window must be at least one grid step")
    values = np.asarray(values, dtype=np.float64)
    n, _, d = values.shape
    max_lag = int(math.floor(h / dt + 1e-9))
    out = np.zeros(n)
    for lag in range(1, max_lag + 1):
        diff = values[:, lag:, :] - values[:, :-lag, :]
        if d == 1:
            m = np.abs(diff[:, :, 0]).max(axis=1)
        else:
            m = np.sqrt(np.einsum("nkd,nkd->nk", diff, diff)).max(axis=1)
        out = np.maximum(out, m)
    return out


def modulus(path: np.ndarray, dt: float, h: float) -> float:
    """Grid modulus of continuity of a single path (steps+1, d) or (steps+1,)."""
    path = np.asarray(path, dtype=np.float64)
    if path.ndim == 1:
        path = path[:, None]
    return float(modulus_batch(path[None, :, :], dt, h)[0])
