"""Seeded random states, unitaries and density matrices for tests and sweeps."""

from __future__ import annotations

import numpy as np

from .registry import SystemRegistry
from .tensor import DensityMatrix, StateVector


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def random_vector(dim: int, rng=None) -> np.ndarray:
    """Unit vector, uniformly distributed on the complex sphere."""
    rng = _rng(rng)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_state(registry: SystemRegistry, rng=None) -> StateVector:
    return StateVector(registry, random_vector(registry.composite_dim, rng))


def random_unitary(dim: int, rng=None) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix with phase correction."""
    rng = _rng(rng)
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(registry: SystemRegistry, rank: int | None = None, rng=None) -> DensityMatrix:
    rng = _rng(rng)
    d = registry.composite_dim
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = g @ g.conj().T
    return DensityMatrix(registry, rho / np.trace(rho).real)
