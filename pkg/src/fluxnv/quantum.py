"""Dense linear-algebra primitives for small open quantum systems.

Conventions used throughout the package:

* Hamiltonians are ordinary frequencies in GHz with h = 1.
* Times are in ns, so a propagator is ``exp(-2j * pi * H * t)``.
* Lindblad rates multiply the dissipator directly and are in 1/ns.

Everything here is dense ``numpy``; the largest matrix the package builds is
2 * 3**6 = 1458 on a side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import TraceDriftError

TWO_PI = 2.0 * np.pi
HERMITIAN_RTOL = 1e-12

ComplexMatrix = NDArray[np.complex128]


@dataclass(frozen=True, eq=False)
class Operator:
    """A square complex matrix with subsystem bookkeeping.

    ``dims`` lists the dimension of each tensor factor and ``labels`` names
    them; ``kron`` concatenates both. Instances convert to ``ndarray`` via
    ``np.asarray``.
    """

    matrix: ComplexMatrix
    labels: Tuple[str, ...] = ()
    dims: Tuple[int, ...] = ()

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        dims = tuple(int(d) for d in self.dims) or (m.shape[0],)
        labels = tuple(self.labels) or ("",) * len(dims)
        if prod(dims) != m.shape[0]:
            raise ValueError(f"subsystem dims {dims} do not multiply to {m.shape[0]}")
        if len(labels) != len(dims):
            raise ValueError("need one label per subsystem")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.matrix
        return self.matrix.astype(dtype)

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.labels, self.dims)

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        return hermiticity_error(self.matrix) <= rtol

    def __add__(self, other):
        return Operator(self.matrix + np.asarray(other), self.labels, self.dims)

    __radd__ = __add__

    def __sub__(self, other):
        return Operator(self.matrix - np.asarray(other), self.labels, self.dims)

    def __mul__(self, scalar):
        return Operator(self.matrix * scalar, self.labels, self.dims)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Operator):
            return Operator(self.matrix @ other.matrix, self.labels, self.dims)
        return self.matrix @ np.asarray(other)

    def __repr__(self):
        return f"Operator(dim={self.dim}, labels={self.labels}, dims={self.dims})"


OperatorLike = Union[Operator, ArrayLike]


def as_matrix(op: OperatorLike) -> ComplexMatrix:
    return np.asarray(op, dtype=np.complex128)


def hermiticity_error(m: ArrayLike) -> float:
    """Relative Frobenius norm of the anti-Hermitian part."""
    m = np.asarray(m)
    norm = np.linalg.norm(m)
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(m - m.conj().T) / norm)


def identity(dim: int, label: str = "") -> Operator:
    return Operator(np.eye(dim), (label,), (dim,))


def kron(a: OperatorLike, b: OperatorLike) -> Operator:
    """Tensor product; subsystem labels and dims are concatenated."""
    a = a if isinstance(a, Operator) else Operator(a)
    b = b if isinstance(b, Operator) else Operator(b)
    return Operator(np.kron(a.matrix, b.matrix), a.labels + b.labels, a.dims + b.dims)


def kron_all(ops: Iterable[OperatorLike]) -> Operator:
    ops = list(ops)
    out = ops[0] if isinstance(ops[0], Operator) else Operator(ops[0])
    for op in ops[1:]:
        out = kron(out, op)
    return out


def embed(op: OperatorLike, position: int, dims: Sequence[int], labels: Sequence[str] = ()) -> Operator:
    """Place a single-subsystem operator at ``position`` of a tensor product."""
    labels = tuple(labels) or ("",) * len(dims)
    factors = [
        Operator(as_matrix(op), (labels[k],)) if k == position else identity(d, labels[k])
        for k, d in enumerate(dims)
    ]
    return kron_all(factors)


# Pauli spin-1/2 matrices.
SIGMA_X = Operator(np.array([[0, 1], [1, 0]]), ("qubit",))
SIGMA_Y = Operator(np.array([[0, -1j], [1j, 0]]), ("qubit",))
SIGMA_Z = Operator(np.array([[1, 0], [0, -1]]), ("qubit",))


def spin1_operators() -> dict:
    """Standard spin-1 matrices in the ordered basis (|0>, |+1>, |-1>).

    |0> comes first so that index 0 is the NV ground state.
    """
    m = np.array([0.0, 1.0, -1.0])
    sp = np.zeros((3, 3), dtype=np.complex128)
    # S+|m> = sqrt(2 - m(m+1)) |m+1> for S = 1
    index = {0: 0, 1: 1, -1: 2}
    for mm in (-1, 0):
        sp[index[mm + 1], index[mm]] = np.sqrt(2.0 - mm * (mm + 1))
    sm = sp.conj().T
    sx = (sp + sm) / 2
    sy = (sp - sm) / 2j
    sz = np.diag(m).astype(np.complex128)
    return {"x": Operator(sx, ("nv",)), "y": Operator(sy, ("nv",)), "z": Operator(sz, ("nv",))}


def eigh(h: OperatorLike, check: bool = True) -> Tuple[NDArray[np.float64], ComplexMatrix]:
    """Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix."""
    m = as_matrix(h)
    if check and hermiticity_error(m) > HERMITIAN_RTOL:
        raise ValueError(f"matrix is not Hermitian (relative error {hermiticity_error(m):.2e})")
    # symmetrize so round-off in the input never leaks into the spectrum
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return w, v


def unitary(h: OperatorLike, t: float) -> ComplexMatrix:
    """exp(-2 pi i H t) through the eigendecomposition of H."""
    if t < 0:
        raise ValueError(f"evolution time must be non-negative, got {t}")
    w, v = eigh(h)
    return (v * np.exp(-1j * TWO_PI * w * t)) @ v.conj().T


@dataclass(frozen=True, eq=False)
class QuantumState:
    """State vector or density matrix over a labelled tensor-product basis."""

    data: NDArray[np.complex128]
    kind: str = "vector"
    labels: Tuple[str, ...] = ()
    dims: Tuple[int, ...] = ()
    basis: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("vector", "density"):
            raise ValueError(f"kind must be 'vector' or 'density', got {self.kind!r}")
        d = np.array(self.data, dtype=np.complex128)
        if self.kind == "vector" and d.ndim != 1:
            raise ValueError("a state vector must be one-dimensional")
        if self.kind == "density" and (d.ndim != 2 or d.shape[0] != d.shape[1]):
            raise ValueError("a density matrix must be square")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)
        dims = tuple(self.dims) or (d.shape[0],)
        if prod(dims) != d.shape[0]:
            raise ValueError(f"subsystem dims {dims} do not multiply to {d.shape[0]}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", tuple(self.labels) or ("",) * len(dims))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def density_matrix(self) -> ComplexMatrix:
        if self.kind == "density":
            return self.data
        return np.outer(self.data, self.data.conj())

    def populations(self) -> NDArray[np.float64]:
        if self.kind == "vector":
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).copy()

    def validate(self, tol: float = 1e-9) -> None:
        """Raise ``ValueError`` if normalization, Hermiticity or positivity fail."""
        if self.kind == "vector":
            norm = np.linalg.norm(self.data)
            if abs(norm - 1.0) > tol:
                raise ValueError(f"state vector norm {norm!r} differs from 1")
            return
        rho = self.data
        tr = np.trace(rho)
        if abs(tr - 1.0) > tol:
            raise ValueError(f"density matrix trace {tr!r} differs from 1")
        if hermiticity_error(rho) > HERMITIAN_RTOL:
            raise ValueError("density matrix is not Hermitian")
        lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
        if lam[0] < -tol:
            raise ValueError(f"density matrix has negative eigenvalue {lam[0]:.3e}")

    def with_data(self, data) -> "QuantumState":
        return QuantumState(data, self.kind, self.labels, self.dims, self.basis)


def basis_state(index: int, dim: int, kind: str = "vector") -> QuantumState:
    psi = np.zeros(dim, dtype=np.complex128)
    psi[index] = 1.0
    if kind == "density":
        return QuantumState(np.outer(psi, psi), "density")
    return QuantumState(psi)


def propagate(h: OperatorLike, state, t: float):
    """Evolve a vector or density matrix for time ``t`` under a constant H.

    Accepts a ``QuantumState`` or a bare array (1-D vector, 2-D density
    matrix) and returns the same kind of object.
    """
    u = unitary(h, t)
    if isinstance(state, QuantumState):
        return state.with_data(_apply_unitary(u, state.data))
    return _apply_unitary(u, np.asarray(state, dtype=np.complex128))


def _apply_unitary(u, data):
    if data.ndim == 1:
        return u @ data
    return u @ data @ u.conj().T


Collapse = Tuple[OperatorLike, float]


def _check_collapses(collapses: Sequence[Collapse]):
    out = []
    for op, rate in collapses:
        if rate < 0:
            raise ValueError(f"collapse rates must be non-negative, got {rate}")
        out.append((as_matrix(op), float(rate)))
    return out


def lindblad_rhs(h: OperatorLike, collapses: Sequence[Collapse], rho: ArrayLike) -> ComplexMatrix:
    """-2 pi i [H, rho] + sum_k rate_k (L rho L^+ - {L^+ L, rho} / 2)."""
    h = as_matrix(h)
    rho = np.asarray(rho, dtype=np.complex128)
    out = -1j * TWO_PI * (h @ rho - rho @ h)
    for op, rate in _check_collapses(collapses):
        if rate == 0.0:
            continue
        ld = op.conj().T
        ldl = ld @ op
        out += rate * (op @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def lindblad_step(
    h: OperatorLike,
    collapses: Sequence[Collapse],
    rho: ArrayLike,
    dt: float,
    drift_tol: float = 1e-6,
) -> ComplexMatrix:
    """Advance ``rho`` by one classical fourth-order Runge-Kutta step."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    h = as_matrix(h)
    collapses = _check_collapses(collapses)
    rho = np.asarray(rho, dtype=np.complex128)
    k1 = lindblad_rhs(h, collapses, rho)
    k2 = lindblad_rhs(h, collapses, rho + 0.5 * dt * k1)
    k3 = lindblad_rhs(h, collapses, rho + 0.5 * dt * k2)
    k4 = lindblad_rhs(h, collapses, rho + dt * k3)
    new = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    _guard_trace(rho, new, drift_tol)
    return new


def _guard_trace(old, new, tol):
    drift = abs(np.trace(new) - np.trace(old))
    if not np.isfinite(drift) or drift > tol:
        raise TraceDriftError(f"trace drift {drift:.3e} exceeds {tol:.1e}; reduce dt")


def liouvillian(h: OperatorLike, collapses: Sequence[Collapse]) -> ComplexMatrix:
    """Superoperator acting on row-major ``rho.reshape(-1)``.

    Uses vec(A rho B) = (A kron B^T) vec(rho) for row-major flattening.
    """
    h = as_matrix(h)
    n = h.shape[0]
    eye = np.eye(n)
    sup = -1j * TWO_PI * (np.kron(h, eye) - np.kron(eye, h.T))
    for op, rate in _check_collapses(collapses):
        if rate == 0.0:
            continue
        ldl = op.conj().T @ op
        sup += rate * (np.kron(op, op.conj()) - 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T)))
    return sup


class LindbladPropagator:
    """Fixed-step RK4 for a time-independent Lindbladian, in superoperator form.

    For a linear generator the RK4 update is the matrix polynomial
    ``1 + z + z^2/2 + z^3/6 + z^4/24`` with ``z = dt * L``, so one step is a
    single matrix-vector product. Numerically this is the same scheme as
    :func:`lindblad_step`.
    """

    def __init__(self, h: OperatorLike, collapses: Sequence[Collapse], dt: float, drift_tol: float = 1e-6):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.dim = as_matrix(h).shape[0]
        self.dt = float(dt)
        self.drift_tol = drift_tol
        z = self.dt * liouvillian(h, collapses)
        step = np.eye(z.shape[0], dtype=np.complex128)
        term = step.copy()
        for k in range(1, 5):
            term = term @ z / k
            step = step + term
        self.step_matrix = step
        self._powers = {1: step}

    def _power(self, n: int):
        if n not in self._powers:
            self._powers[n] = np.linalg.matrix_power(self.step_matrix, n)
        return self._powers[n]

    def advance(self, rho: ArrayLike, n_steps: int = 1) -> ComplexMatrix:
        rho = np.asarray(rho, dtype=np.complex128)
        if n_steps == 0:
            return rho
        new = (self._power(n_steps) @ rho.reshape(-1)).reshape(self.dim, self.dim)
        _guard_trace(rho, new, self.drift_tol * n_steps)
        return new

    def trajectory(self, rho: ArrayLike, n_samples: int, steps_per_sample: int) -> NDArray[np.complex128]:
        """Density matrices at ``n_samples`` equally spaced times, first one = ``rho``."""
        rho = np.asarray(rho, dtype=np.complex128)
        out = np.empty((n_samples, self.dim, self.dim), dtype=np.complex128)
        out[0] = rho
        for k in range(1, n_samples):
            out[k] = self.advance(out[k - 1], steps_per_sample)
        return out


def transition_spectrum(h: OperatorLike, drive: OperatorLike):
    """Transitions out of the ground state of ``h`` and their drive weights.

    Returns ``(frequencies, weights, static)`` where ``frequencies[k]`` is
    E_{k+1} - E_0, ``weights[k] = |<k+1|drive|0>|^2`` and ``static`` is
    ``|<0|drive|0>|^2``.
    """
    w, v = eigh(h)
    amp = v.conj().T @ (as_matrix(drive) @ v[:, 0])
    weights = np.abs(amp) ** 2
    return w[1:] - w[0], weights[1:], float(weights[0])
