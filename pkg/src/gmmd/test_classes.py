"""Test-function classes (RKHS kernels, single neurons, flow networks) and their constants."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LipschitzConstants",
    "KernelSpec",
    "NeuronParams",
    "FlowLayer",
    "FlowRep",
    "TestClassSpec",
    "kernel_eval",
    "kernel_gram",
    "kernel_constants",
    "neuron_eval",
    "flow_forward",
    "flow_norm_bound",
]

SPHERE_TOL = 1e-12


@dataclass(frozen=True)
class LipschitzConstants:
    """(a1, a2, a3): uniform Lipschitz bound, bound at origin, Rademacher constant."""

    a1: float
    a2: float
    a3: float

    def __post_init__(self):
        if self.a1 <= 0 or self.a3 <= 0 or self.a2 < 0:
            raise ValueError("need a1 > 0, a2 >= 0, a3 > 0")
        if self.a2 > self.a3 + 1e-15:
            raise ValueError("a2 <= a3 must hold")


@dataclass(frozen=True)
class KernelSpec:
    """Positive kernel: gaussian(lengthscale), inverse_multiquadric(c, beta), or linear_plus_one."""

    tag: str
    lengthscale: float = 1.0
    c: float = 1.0
    beta: float = 0.5

    @classmethod
    def gaussian(cls, lengthscale: float) -> "KernelSpec":
        if lengthscale <= 0:
            raise ValueError("lengthscale must be positive")
        return cls(tag="gaussian", lengthscale=float(lengthscale))

    @classmethod
    def inverse_multiquadric(cls, c: float, beta: float) -> "KernelSpec":
        if c <= 0 or not 0 < beta < 1:
            raise ValueError("need c > 0 and beta in (0, 1)")
        return cls(tag="inverse_multiquadric", c=float(c), beta=float(beta))

    @classmethod
    def linear_plus_one(cls) -> "KernelSpec":
        return cls(tag="linear_plus_one")


def _sqdist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    xx = np.einsum("ij,ij->i", x, x)[:, None]
    yy = np.einsum("ij,ij->i", y, y)[None, :]
    return np.maximum(xx + yy - 2.0 * (x @ y.T), 0.0)


def kernel_gram(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gram matrix k(x_i, y_j) for row-stacked inputs."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise ValueError("kernel inputs must share dimension")
    if spec.tag == "gaussian":
        return np.exp(-_sqdist(x, y) / (2.0 * spec.lengthscale**2))
    if spec.tag == "inverse_multiquadric":
        return (spec.c**2 + _sqdist(x, y)) ** (-spec.beta)
    if spec.tag == "linear_plus_one":
        return x @ y.T + 1.0
    raise ValueError(f"unsupported kernel tag {spec.tag!r}")


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ValueError("kernel inputs must share dimension")
    return float(kernel_gram(spec, x[None, :], y[None, :])[0, 0])


def kernel_constants(spec: KernelSpec) -> LipschitzConstants:
    """(K1, K2, sqrt(2) max{K1, K2}) with the tightest analytic K1 per tag."""
    if spec.tag == "gaussian":
        # 2(1 - exp(-t^2/(2 l^2))) <= t^2 / l^2, so K1 = 1/l is valid and tight as t -> 0.
        k1 = 1.0 / spec.lengthscale
        k2 = 1.0
    elif spec.tag == "linear_plus_one":
        # k(x,x) + k(y,y) - 2k(x,y) = ||x - y||^2 exactly.
        k1 = 1.0
        k2 = 1.0
    elif spec.tag == "inverse_multiquadric":
        # No closed form: maximize the distortion ratio over separations, 1% headroom.
        t = np.logspace(-6, 6, 20001)
        ratio = 2.0 * (spec.c ** (-2 * spec.beta) - (spec.c**2 + t**2) ** (-spec.beta)) / t**2
        k1 = math.sqrt(float(ratio.max())) * 1.01
        k2 = spec.c ** (-spec.beta)
    else:
        raise ValueError(f"unsupported kernel tag {spec.tag!r}")
    return LipschitzConstants(a1=k1, a2=k2, a3=math.sqrt(2.0) * max(k1, k2))


@dataclass(frozen=True)
class NeuronParams:
    """ReLU neuron x -> max(omega . x + b, 0) with (omega, b) on the unit sphere."""

    omega: np.ndarray
    b: float

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=np.float64))
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "b", float(self.b))
        r = float(omega @ omega + self.b**2)
        if abs(r - 1.0) > 1e-9:
            raise ValueError(f"(omega, b) must lie on the unit sphere, got norm^2 {r!r}")

    @classmethod
    def project(cls, omega, b) -> "NeuronParams":
        omega = np.atleast_1d(np.asarray(omega, dtype=np.float64))
        nrm = math.sqrt(float(omega @ omega + float(b) ** 2))
        if nrm == 0:
            raise ValueError("cannot project the zero vector to the sphere")
        return cls(omega=omega / nrm, b=float(b) / nrm)


def neuron_eval(p: NeuronParams, x) -> float | np.ndarray:
    """ReLU neuron output; 1-Lipschitz in x."""
    x = np.asarray(x, dtype=np.float64)
    pre = x @ p.omega + p.b
    return np.maximum(pre, 0.0) if pre.ndim else float(max(pre, 0.0))


@dataclass(frozen=True)
class FlowLayer:
    """One Euler layer: finite signed neuron sum with coefficients c_i and unit directions w_i."""

    coeffs: np.ndarray  # (m, D)
    dirs: np.ndarray  # (m, D), unit rows

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=np.float64))
        w = np.atleast_2d(np.asarray(self.dirs, dtype=np.float64))
        if c.shape != w.shape:
            raise ValueError("coeffs and dirs must have matching (m, D) shapes")
        nrm = np.linalg.norm(w, axis=1)
        if c.shape[0] and np.any(np.abs(nrm - 1.0) > 1e-9):
            raise ValueError("layer directions must be unit vectors")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "dirs", w)

    def tv_norm(self) -> float:
        """l2 norm across output coordinates of the per-coordinate total variation."""
        if self.coeffs.shape[0] == 0:
            return 0.0
        per_coord = np.abs(self.coeffs).sum(axis=0)
        return float(np.linalg.norm(per_coord))


@dataclass(frozen=True)
class FlowRep:
    """Finite Euler discretization of a neuron-measure-driven flow with linear readout."""

    embed_dim: int
    layers: tuple
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        if alpha.shape != (self.embed_dim,):
            raise ValueError("readout must live in the embedding space")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "layers", tuple(self.layers))
        for layer in self.layers:
            if layer.coeffs.shape[0] and layer.coeffs.shape[1] != self.embed_dim:
                raise ValueError("layer width must equal embed_dim")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def lift(self, x: np.ndarray) -> np.ndarray:
        """z0 = (x, 1, 0, ...) in R^D."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = x.shape[1]
        if self.embed_dim < d + 1:
            raise ValueError("embed_dim must be at least d + 1")
        z = np.zeros((x.shape[0], self.embed_dim))
        z[:, :d] = x
        z[:, d] = 1.0
        return z

    def to_json(self) -> str:
        return json.dumps(
            {
                "embed_dim": self.embed_dim,
                "alpha": self.alpha.tolist(),
                "layers": [
                    [[c.tolist(), w.tolist()] for c, w in zip(layer.coeffs, layer.dirs)]
                    for layer in self.layers
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "FlowRep":
        doc = json.loads(text)
        layers = []
        for pairs in doc["layers"]:
            if pairs:
                c = np.array([p[0] for p in pairs])
                w = np.array([p[1] for p in pairs])
            else:
                c = np.zeros((0, doc["embed_dim"]))
                w = np.zeros((0, doc["embed_dim"]))
            layers.append(FlowLayer(coeffs=c, dirs=w))
        return cls(embed_dim=doc["embed_dim"], layers=tuple(layers), alpha=np.array(doc["alpha"]))


def flow_forward(rep: FlowRep, x) -> float | np.ndarray:
    """Explicit-Euler forward pass; returns alpha . z_L."""
    x_arr = np.asarray(x, dtype=np.float64)
    single = x_arr.ndim == 1
    z = rep.lift(x_arr)
    L = rep.n_layers
    if L:
        dtau = 1.0 / L
        for layer in rep.layers:
            if layer.coeffs.shape[0]:
                pre = z @ layer.dirs.T
                z = z + dtau * np.maximum(pre, 0.0) @ layer.coeffs
    out = z @ rep.alpha
    return float(out[0]) if single else out


def flow_norm_bound(rep: FlowRep) -> float:
    """Declared class-norm bound ||alpha|| exp(sum_l Lambda_l dtau)."""
    a = float(np.linalg.norm(rep.alpha))
    if rep.n_layers == 0:
        return a
    dtau = 1.0 / rep.n_layers
    return a * math.exp(sum(layer.tv_norm() for layer in rep.layers) * dtau)


@dataclass(frozen=True)
class TestClassSpec:
    """Tagged test-function class with its (a1, a2, a3) constants."""

    tag: str
    constants: LipschitzConstants
    kernel: KernelSpec | None = None
    embed_dim: int = 0
    n_layers: int = 0

    @classmethod
    def rkhs(cls, kernel: KernelSpec) -> "TestClassSpec":
        return cls(tag="rkhs", constants=kernel_constants(kernel), kernel=kernel)

    @classmethod
    def barron_ball(cls) -> "TestClassSpec":
        return cls(tag="barron_ball", constants=LipschitzConstants(1.0, 1.0, 2.0))

    @classmethod
    def flow_ball(cls, embed_dim: int, n_layers: int) -> "TestClassSpec":
        if n_layers < 0 or embed_dim < 2:
            raise ValueError("flow ball needs embed_dim >= 2 and n_layers >= 0")
        return cls(
            tag="flow_ball",
            constants=LipschitzConstants(1.0, 1.0, math.e**2),
            embed_dim=embed_dim,
            n_layers=n_layers,
        )

    @classmethod
    def parse(cls, text: str, *, lengthscale: float = 1.0, dim: int = 1) -> "TestClassSpec":
        """Parse a class name from experiment config ('rkhs', 'barron', 'flow')."""
        name = text.strip().lower()
        if name in ("rkhs", "rkhs_gaussian"):
            return cls.rkhs(KernelSpec.gaussian(lengthscale))
        if name in ("barron", "barron_ball"):
            return cls.barron_ball()
        if name in ("flow", "flow_ball"):
            return cls.flow_ball(embed_dim=dim + 2, n_layers=4)
        raise ValueError(f"unknown test class {text!r}")
