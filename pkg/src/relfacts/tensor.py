"""Dense complex linear algebra over labeled tensor factors.

Operators are plain ``numpy`` arrays of dtype ``complex128``. States carry the
registry that fixes their tensor ordering (first registered system is the most
significant index). All permutation logic for placing a local operator inside
the composite space lives in :func:`embed` and :func:`apply_local`.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ValidationError, ZeroBranchError
from .registry import SystemRegistry
from .settings import dim_cap, tolerances

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
KET_0 = np.array([1, 0], dtype=complex)
KET_1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / math.sqrt(2)
KET_MINUS = np.array([1, -1], dtype=complex) / math.sqrt(2)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


def check_capacity(dim: int, what: str = "composite dimension") -> None:
    cap = dim_cap()
    if dim > cap:
        raise CapacityError(f"{what} {dim} exceeds the dense cap {cap}")


def as_operator(matrix, name: str = "operator") -> np.ndarray:
    op = np.asarray(matrix, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1] or op.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {op.shape}")
    return op


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


def is_hermitian(op: np.ndarray, tol: float | None = None) -> bool:
    tol = tolerances().validation if tol is None else tol
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) <= tol)


def is_unitary(op: np.ndarray, tol: float | None = None) -> bool:
    tol = tolerances().validation if tol is None else tol
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        return False
    eye = np.eye(op.shape[0])
    return bool(np.max(np.abs(op.conj().T @ op - eye), initial=0.0) <= tol)


def is_projector(op: np.ndarray, tol: float | None = None) -> bool:
    tol = tolerances().validation if tol is None else tol
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        return False
    return is_hermitian(op, tol) and bool(np.max(np.abs(op @ op - op), initial=0.0) <= tol)


def validate_unitary(op, name: str = "unitary") -> np.ndarray:
    op = as_operator(op, name)
    if not is_unitary(op):
        raise ValidationError(f"{name} is not unitary within {tolerances().validation:g}")
    return op


def validate_projector(op, name: str = "projector") -> np.ndarray:
    op = as_operator(op, name)
    if not is_projector(op):
        raise ValidationError(f"{name} is not a projector within {tolerances().validation:g}")
    return op


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product of two vectors or two matrices, ordered ``(a, b)``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != b.ndim or a.ndim not in (1, 2):
        raise ValidationError(
            f"tensor_product needs two vectors or two matrices, got ndim {a.ndim} and {b.ndim}"
        )
    check_capacity(a.shape[0] * b.shape[0])
    if a.ndim == 2:
        check_capacity(a.shape[1] * b.shape[1])
    return np.kron(a, b)


def kron_all(factors: Iterable) -> np.ndarray:
    out = None
    for f in factors:
        out = np.asarray(f, dtype=complex) if out is None else tensor_product(out, f)
    if out is None:
        return np.ones(1, dtype=complex)
    return out


def apply_local(psi: np.ndarray, op: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply ``op`` to the given axes of a state tensor of shape ``dims``.

    ``op`` acts on the product of ``axes`` in the listed order. Returns a new
    tensor of the same shape.
    """
    k = len(axes)
    sub = [psi.shape[a] for a in axes]
    op_t = op.reshape(sub + sub)
    out = np.tensordot(op_t, psi, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def embed(op, targets: Sequence[str], registry: SystemRegistry) -> np.ndarray:
    """Full-space operator acting as ``op`` on ``targets`` and identity elsewhere."""
    op = as_operator(op)
    targets = registry.check_targets(targets)
    sub_dim = math.prod(registry.dims_of(targets))
    if op.shape[0] != sub_dim:
        raise ValidationError(
            f"operator dim {op.shape[0]} does not match targets {targets} (dim {sub_dim})"
        )
    dims = registry.dims
    n = len(dims)
    check_capacity(registry.composite_dim)
    idx = [registry.index(t) for t in targets]
    order = idx + [i for i in range(n) if i not in idx]
    rest = math.prod(dims[i] for i in order[len(idx):])
    full = np.kron(op, np.eye(rest, dtype=complex))
    perm_dims = [dims[i] for i in order]
    inv = list(np.argsort(order))
    t = full.reshape(perm_dims + perm_dims).transpose(inv + [n + i for i in inv])
    return np.ascontiguousarray(t).reshape(registry.composite_dim, registry.composite_dim)


@dataclass(frozen=True, eq=False)
class StateVector:
    registry: SystemRegistry
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        check_capacity(self.registry.composite_dim)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.registry.composite_dim:
            raise ValidationError(
                f"state has {amps.shape[0]} amplitudes, registry needs {self.registry.composite_dim}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > tolerances().validation:
            raise ValidationError(f"state norm {norm!r} differs from 1")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def basis(cls, registry: SystemRegistry, indices: Sequence[int] | None = None) -> StateVector:
        """Computational basis state; ``indices`` defaults to all zeros."""
        indices = [0] * len(registry) if indices is None else list(indices)
        flat = int(np.ravel_multi_index(indices, registry.dims)) if len(registry) else 0
        amps = np.zeros(registry.composite_dim, dtype=complex)
        amps[flat] = 1.0
        return cls(registry, amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def as_tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.registry.dims)

    def density(self) -> DensityMatrix:
        return DensityMatrix(self.registry, np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: StateVector) -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    registry: SystemRegistry
    entries: np.ndarray

    def __post_init__(self) -> None:
        check_capacity(self.registry.composite_dim)
        rho = as_operator(self.entries, "density matrix")
        if rho.shape[0] != self.registry.composite_dim:
            raise ValidationError(
                f"density matrix dim {rho.shape[0]} != registry dim {self.registry.composite_dim}"
            )
        tol = tolerances().validation
        if not is_hermitian(rho, tol):
            raise ValidationError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > tol:
            raise ValidationError(f"density matrix trace {tr!r} differs from 1")
        if np.linalg.eigvalsh(rho).min(initial=0.0) < -tol:
            raise ValidationError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", _frozen(rho))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def purity(self) -> float:
        return float(np.real(np.vdot(self.entries, self.entries)))


def partial_trace(rho: DensityMatrix | StateVector, keep: Iterable[str]) -> DensityMatrix:
    """Reduced state on ``keep`` (result ordered as in the registry)."""
    keep = set(keep)
    registry = rho.registry
    if not keep:
        raise ValidationError("partial_trace needs a non-empty keep set")
    for x in keep:
        registry.index(x)
    kept = [i for i, s in enumerate(registry.systems) if s.label in keep]
    n = len(registry)
    dims = registry.dims
    sub = registry.subset(keep)
    rows = list(range(n))
    cols = [n + i if i in kept else i for i in range(n)]
    out = kept + [n + i for i in kept]
    if isinstance(rho, StateVector):
        psi = rho.as_tensor()
        red = np.einsum(psi, rows, psi.conj(), cols, out)
    else:
        red = np.einsum(rho.entries.reshape(dims + dims), rows + cols, out)
    d = sub.composite_dim
    return DensityMatrix(sub, red.reshape(d, d))


def born_probability(state: StateVector, projector) -> float:
    """``<psi|P|psi>`` for a projector on the full space."""
    p_op = validate_projector(projector)
    if p_op.shape[0] != state.dim:
        raise ValidationError(f"projector dim {p_op.shape[0]} != state dim {state.dim}")
    value = np.vdot(state.amplitudes, p_op @ state.amplitudes)
    if abs(value.imag) > tolerances().validation:
        raise ValidationError(f"Born probability has imaginary part {value.imag:.3e}")
    return float(min(1.0, max(0.0, value.real)))


def luders_update(state: StateVector, projector, threshold: float | None = None) -> tuple[float, StateVector]:
    """Selective projection: returns ``(p, P|psi>/sqrt(p))``.

    Raises :class:`ZeroBranchError` when ``p`` is at or below ``threshold``.
    """
    threshold = tolerances().zero_branch if threshold is None else threshold
    p_op = validate_projector(projector)
    if p_op.shape[0] != state.dim:
        raise ValidationError(f"projector dim {p_op.shape[0]} != state dim {state.dim}")
    projected = p_op @ state.amplitudes
    p = float(np.vdot(projected, projected).real)
    if p <= threshold:
        raise ZeroBranchError(p, threshold)
    return min(p, 1.0), StateVector(state.registry, projected / math.sqrt(p))


def trace_distance(rho: DensityMatrix | np.ndarray, sigma: DensityMatrix | np.ndarray) -> float:
    """Half the sum of singular values of ``rho - sigma``."""
    a = rho.entries if isinstance(rho, DensityMatrix) else as_operator(rho)
    b = sigma.entries if isinstance(sigma, DensityMatrix) else as_operator(sigma)
    if a.shape != b.shape:
        raise ValidationError(f"trace_distance dim mismatch: {a.shape} vs {b.shape}")
    # LAPACK SVD is deterministic for a given input
    return 0.5 * float(np.linalg.svd(a - b, compute_uv=False).sum())


def to_pairs(array) -> list[list[float]]:
    """Row-major flat list of ``[re, im]`` pairs."""
    flat = np.asarray(array, dtype=complex).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def from_pairs(pairs, shape: int | tuple[int, ...] | None = None) -> np.ndarray:
    try:
        arr = np.asarray(pairs, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("expected a list of [re, im] pairs") from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"expected a list of [re, im] pairs, got shape {arr.shape}")
    out = arr[:, 0] + 1j * arr[:, 1]
    if shape is not None:
        if math.prod(np.atleast_1d(shape)) != out.shape[0]:
            raise ValidationError(f"{out.shape[0]} entries cannot fill shape {shape}")
        out = out.reshape(shape)
    return out
