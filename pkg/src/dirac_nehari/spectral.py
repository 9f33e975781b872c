"""Spectral calculus for a self-adjoint operator on a finite truncation.

A :class:`SpectralModel` holds the (generalized) eigendecomposition
``S x = lam G x`` of a symmetric/hermitian matrix ``S`` with respect to an
SPD Gram matrix ``G``.  Vectors are handled in eigen-coordinates ``a``
(``x = basis @ a``), where the W-inner product becomes the Euclidean one and
``|L|^{1/2}`` acts diagonally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import DimensionError, NotPositiveDefiniteError, SymmetryError

SYMMETRY_RTOL = 1e-10
KERNEL_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class SpectralModel:
    eigenvalues: np.ndarray
    basis: np.ndarray
    index_plus: np.ndarray
    index_minus: np.ndarray
    index_zero: np.ndarray
    kernel_tolerance: float
    operator: np.ndarray
    gram: np.ndarray | None = None
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.abs(self.eigenvalues).copy()
        w[self.index_zero] = 1.0
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def index_nonpositive(self) -> np.ndarray:
        """Indices of V^- together with the kernel (the complement of V^+)."""
        return np.sort(np.concatenate([self.index_minus, self.index_zero]))

    def coords(self, x) -> np.ndarray:
        """Eigen-coordinates of an ambient vector ``x``."""
        x = np.asarray(x)
        gx = x if self.gram is None else self.gram @ x
        return self.basis.conj().T @ gx

    def ambient(self, a) -> np.ndarray:
        return self.basis @ np.asarray(a)

    def dual_coords(self, grad_x) -> np.ndarray:
        """Map a covector (Euclidean partials in x) to eigen-coordinates."""
        return self.basis.conj().T @ np.asarray(grad_x)

    def reconstruction_residuals(self) -> np.ndarray:
        """``||S phi_i - lam_i G phi_i||`` for every eigenpair."""
        g = np.eye(self.dim) if self.gram is None else self.gram
        r = self.operator @ self.basis - (g @ self.basis) * self.eigenvalues
        return np.linalg.norm(r, axis=0)

    def orthonormality_defect(self) -> float:
        g = np.eye(self.dim) if self.gram is None else self.gram
        q = self.basis.conj().T @ g @ self.basis
        return float(np.linalg.norm(q - np.eye(self.dim)))


@dataclass(frozen=True, eq=False)
class SplitVector:
    """Coefficients in the eigenbasis of ``model``."""

    coefficients: np.ndarray
    model: SpectralModel

    def __post_init__(self):
        c = np.asarray(self.coefficients)
        if c.shape != (self.model.dim,):
            raise DimensionError(f"expected {self.model.dim} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coefficients", c)

    def __add__(self, other):
        return SplitVector(self.coefficients + other.coefficients, self.model)

    def __sub__(self, other):
        return SplitVector(self.coefficients - other.coefficients, self.model)

    def __neg__(self):
        return SplitVector(-self.coefficients, self.model)

    def __mul__(self, scalar):
        return SplitVector(scalar * self.coefficients, self.model)

    __rmul__ = __mul__

    def ambient(self) -> np.ndarray:
        return self.model.ambient(self.coefficients)

    @property
    def plus(self):
        return _keep(self, self.model.index_plus)

    @property
    def minus(self):
        return _keep(self, self.model.index_minus)

    @property
    def zero(self):
        return _keep(self, self.model.index_zero)


def _keep(v: SplitVector, idx) -> SplitVector:
    c = np.zeros_like(v.coefficients)
    c[idx] = v.coefficients[idx]
    return SplitVector(c, v.model)


def _check_symmetric(mat, name="operator"):
    scale = max(np.abs(mat).max(), 1.0)
    defect = float(np.abs(mat - mat.conj().T).max())
    if defect > SYMMETRY_RTOL * scale:
        raise SymmetryError(defect, SYMMETRY_RTOL * scale)


def _cholesky_pivot(gram) -> int | None:
    potrf = lapack.get_lapack_funcs("potrf", (gram,))
    _, info = potrf(gram, lower=True)
    if info > 0:
        return int(info) - 1
    return None


def build_spectral_model(operator_matrix, gram=None, kernel_tolerance=None) -> SpectralModel:
    """Eigendecompose ``operator_matrix`` (generalized when ``gram`` is given).

    ``kernel_tolerance`` defaults to ``1e-8 * max|lam|``; eigenvalues with
    ``|lam| <= kernel_tolerance`` are classified as kernel modes.
    """
    s = np.asarray(operator_matrix)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] == 0:
        raise DimensionError(f"operator must be a nonempty square matrix, got {s.shape}")
    _check_symmetric(s)
    if gram is not None:
        gram = np.asarray(gram)
        if gram.shape != s.shape:
            raise DimensionError(f"gram shape {gram.shape} does not match operator {s.shape}")
        _check_symmetric(gram, "gram")
        pivot = _cholesky_pivot(gram)
        if pivot is not None:
            raise NotPositiveDefiniteError(pivot)
        lam, basis = scipy.linalg.eigh(s, gram)
    else:
        lam, basis = np.linalg.eigh(s)
    if kernel_tolerance is None:
        kernel_tolerance = KERNEL_RTOL * float(np.abs(lam).max())
    zero = np.abs(lam) <= kernel_tolerance
    idx = np.arange(lam.shape[0])
    return SpectralModel(
        eigenvalues=lam,
        basis=basis,
        index_plus=idx[(lam > 0) & ~zero],
        index_minus=idx[(lam < 0) & ~zero],
        index_zero=idx[zero],
        kernel_tolerance=float(kernel_tolerance),
        operator=s,
        gram=gram,
    )


def as_split(v, model: SpectralModel) -> SplitVector:
    if isinstance(v, SplitVector):
        if v.model is not model:
            raise DimensionError("vector belongs to a different model")
        return v
    return SplitVector(np.asarray(v), model)


def split(v, model: SpectralModel):
    """Return ``(v_plus, v_minus, v_zero)``; the parts sum to ``v`` exactly."""
    v = as_split(v, model)
    return v.plus, v.minus, v.zero


def v_inner(v1: SplitVector, v2: SplitVector) -> float:
    w = v1.model.weights
    return float(np.real(np.sum(w * np.conj(v1.coefficients) * v2.coefficients)))


def v_norm(v: SplitVector) -> float:
    """``|||L|^{1/2} v|||``, with kernel modes weighted by one."""
    c = v.coefficients
    return float(np.sqrt(np.sum(v.model.weights * (c.real**2 + c.imag**2))))


def quadratic_form(v: SplitVector) -> float:
    """``<L v, v>`` in the W-pairing."""
    c = v.coefficients
    return float(np.sum(v.model.eigenvalues * (c.real**2 + c.imag**2)))


def apply_inverse_precond(v: SplitVector, shift: float = 1.0) -> SplitVector:
    if shift <= 0:
        raise ValueError(f"shift must be positive, got {shift}")
    return SplitVector(v.coefficients / (shift + np.abs(v.model.eigenvalues)), v.model)
