"""Batched projected-gradient ascent on unit spheres (shared by the neuron-class estimators)."""

from __future__ import annotations

import numpy as np


def normalize_rows(theta: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(theta, axis=-1, keepdims=True)
    nrm = np.where(nrm == 0, 1.0, nrm)
    return theta / nrm


def sphere_ascent(val_grad, inits: np.ndarray, steps: int, step_size: float,
                  decay_every: int = 50, decay: float = 0.5):
    """Maximize a batch of objectives over the unit sphere.

    val_grad maps Theta (B, a) to (values (B,), grads (B, a)). Each row ascends
    with a fixed step that decays by `decay` every `decay_every` steps and is
    re-projected to the sphere after every update. Returns the best value and
    argument seen along the trajectory, per row.
    """
    theta = normalize_rows(np.array(inits, dtype=np.float64))
    best_val = np.full(theta.shape[0], -np.inf)
    best_theta = theta.copy()
    eta = step_size
    for it in range(steps):
        if it and decay_every and it % decay_every == 0:
            eta *= decay
        val, grad = val_grad(theta)
        improved = val > best_val
        if np.any(improved):
            best_val[improved] = val[improved]
            best_theta[improved] = theta[improved]
        theta = normalize_rows(theta + eta * grad)
    val, _ = val_grad(theta)
    improved = val > best_val
    if np.any(improved):
        best_val[improved] = val[improved]
        best_theta[improved] = theta[improved]
    return best_val, best_theta


def augment(points: np.ndarray) -> np.ndarray:
    """Append the constant-1 bias coordinate: (n, d) -> (n, d+1)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return np.hstack([points, np.ones((points.shape[0], 1))])


def neuron_inits(points: np.ndarray, restarts: int, rng: np.random.Generator) -> np.ndarray:
    """Initial (omega, b) sphere points: the bias poles, the top principal
    direction of the pooled points paired with intercepts spanning the data
    radius, and uniform draws to fill the requested count."""
    points = np.atleast_2d(points)
    n, d = points.shape
    a = d + 1
    out = [np.eye(a)[-1:], -np.eye(a)[-1:]]  # constant neurons, sigma(+/- b)
    centered = points - points.mean(axis=0, keepdims=True)
    if n > 1 and np.any(centered):
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        u = vt[0]
        radius = float(np.linalg.norm(points, axis=1).max())
        bs = np.linspace(-radius, radius, 5) if radius > 0 else np.zeros(1)
        for s in (1.0, -1.0):
            out.append(np.hstack([np.tile(s * u, (bs.size, 1)), bs[:, None]]))
    k = sum(b.shape[0] for b in out)
    if restarts > k:
        out.append(rng.standard_normal((restarts - k, a)))
    return normalize_rows(np.vstack(out))


def signed_two_sample(Z: np.ndarray, xi: np.ndarray):
    """Closure computing g(theta) = sum_i xi_i relu(z_i . theta) and its subgradient."""

    def val_grad(theta: np.ndarray):
        pre = Z @ theta.T  # (n, B)
        val = xi @ np.maximum(pre, 0.0)
        grad = ((pre > 0) * xi[:, None]).T @ Z
        return val, grad

    return val_grad


def signed_sliced(Zs: np.ndarray, xis: np.ndarray, restarts: int):
    """Per-problem variant: Zs (P, n, a), xis (P, n); Theta rows grouped as P
    consecutive blocks of `restarts` rows."""
    P = Zs.shape[0]

    def val_grad(theta: np.ndarray):
        th = theta.reshape(P, restarts, -1)
        pre = Zs @ th.transpose(0, 2, 1)  # (P, n, R)
        val = (xis[:, None, :] @ np.maximum(pre, 0.0))[:, 0, :]  # (P, R)
        mxi = (pre > 0) * xis[:, :, None]  # (P, n, R)
        grad = mxi.transpose(0, 2, 1) @ Zs  # (P, R, a)
        return val.reshape(-1), grad.reshape(theta.shape)

    return val_grad
