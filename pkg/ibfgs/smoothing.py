"""Smoothing functions for max{0, t} (phi) and |t| (psi).

Two flavors are available. ``piecewise`` agrees with the nonsmooth function once
|t| >= mu/2 and is a quadratic inside that band; ``sqrt`` is the square-root smoothing, which
is twice continuously differentiable but never exact. All functions accept scalars or arrays
for ``t`` and ``mu``.
"""
import numpy as np

from .models import SmoothingFlavor


def phi(t, mu, flavor: SmoothingFlavor = SmoothingFlavor.PIECEWISE):
    t = np.asarray(t, dtype=float)
    if flavor == SmoothingFlavor.SQRT:
        return 0.5 * (t + np.sqrt(t * t + 4.0 * mu * mu))
    inside = np.abs(t) < 0.5 * mu
    return np.where(inside, t * t / (2.0 * mu) + 0.5 * t + mu / 8.0, np.maximum(t, 0.0))


def phi_prime(t, mu, flavor: SmoothingFlavor = SmoothingFlavor.PIECEWISE):
    t = np.asarray(t, dtype=float)
    if flavor == SmoothingFlavor.SQRT:
        return 0.5 * (1.0 + t / np.sqrt(t * t + 4.0 * mu * mu))
    inside = np.abs(t) < 0.5 * mu
    return np.where(inside, t / mu + 0.5, np.where(t > 0.0, 1.0, 0.0))


def psi(t, mu, flavor: SmoothingFlavor = SmoothingFlavor.PIECEWISE):
    t = np.asarray(t, dtype=float)
    if flavor == SmoothingFlavor.SQRT:
        return np.sqrt(t * t + 4.0 * mu * mu)
    inside = np.abs(t) < 0.5 * mu
    return np.where(inside, t * t / mu + mu / 4.0, np.abs(t))


def psi_prime(t, mu, flavor: SmoothingFlavor = SmoothingFlavor.PIECEWISE):
    t = np.asarray(t, dtype=float)
    if flavor == SmoothingFlavor.SQRT:
        return t / np.sqrt(t * t + 4.0 * mu * mu)
    inside = np.abs(t) < 0.5 * mu
    return np.where(inside, 2.0 * t / mu, np.sign(t))
