"""Dense matrix primitives: norms, SVD, mask projections, proximal operators.

Everything here is a pure function on validated float64 arrays.  Off-mask
entries produced by projections are exact ``0.0`` (never merely tiny), because
downstream attack detection relies on exact-zero tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, NumericalError, ParameterError

# Reconstruction contract for svd(): residual <= SVD_TOL * max(1, ||A||_F).
SVD_TOL = 1e-10


def as_matrix(values, *, name: str = "matrix") -> np.ndarray:
    """Coerce ``values`` to a validated 2-d float64 array.

    Raises
    ------
    DimensionMismatchError
        If the input is not a non-empty 2-d array.
    NumericalError
        If any entry is NaN or infinite.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatchError(
            f"{name} must be a non-empty 2-d array, got shape {arr.shape}"
        )
    if not np.isfinite(arr).all():
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def _require_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"{what}: shapes {a.shape} and {b.shape} do not match"
        )


class ObservationMask:
    """The set of observed (row, col) cells of an m x n matrix.

    Invariants: every cell index is in range, there are no duplicates, and at
    least one cell is observed.
    """

    def __init__(self, rows: int, cols: int, observed) -> None:
        if rows < 1 or cols < 1:
            raise ParameterError(f"mask shape must be positive, got {rows}x{cols}")
        flags = np.zeros((rows, cols), dtype=bool)
        seen = 0
        for i, j in observed:
            i = int(i)
            j = int(j)
            if not (0 <= i < rows and 0 <= j < cols):
                raise ParameterError(f"mask cell ({i}, {j}) outside {rows}x{cols}")
            if flags[i, j]:
                raise ParameterError(f"duplicate mask cell ({i}, {j})")
            flags[i, j] = True
            seen += 1
        if seen == 0:
            raise ParameterError("mask must observe at least one cell")
        flags.setflags(write=False)
        self._flags = flags

    @classmethod
    def full(cls, rows: int, cols: int) -> "ObservationMask":
        flags = np.ones((rows, cols), dtype=bool)
        return cls.from_bool(flags)

    @classmethod
    def from_bool(cls, flags) -> "ObservationMask":
        arr = np.asarray(flags, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatchError(f"mask must be 2-d, got shape {arr.shape}")
        if not arr.any():
            raise ParameterError("mask must observe at least one cell")
        mask = cls.__new__(cls)
        out = arr.copy()
        out.setflags(write=False)
        mask._flags = out
        return mask

    @property
    def rows(self) -> int:
        return self._flags.shape[0]

    @property
    def cols(self) -> int:
        return self._flags.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._flags.shape

    @property
    def count(self) -> int:
        return int(self._flags.sum())

    @property
    def array(self) -> np.ndarray:
        """Read-only boolean array view of the mask."""
        return self._flags

    def pairs(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in np.argwhere(self._flags)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationMask):
            return NotImplemented
        return self._flags.shape == other._flags.shape and bool(
            (self._flags == other._flags).all()
        )

    def __repr__(self) -> str:
        return f"ObservationMask({self.rows}x{self.cols}, observed={self.count})"


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD factors: ``left @ diag(singular_values) @ right.T``."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def frobenius_norm(a) -> float:
    """Frobenius norm: sqrt of the sum of squared entries."""
    return float(np.linalg.norm(as_matrix(a)))


def inner_product(a, b) -> float:
    """Euclidean matrix inner product trace(A B^T) = sum(A * B)."""
    a = as_matrix(a, name="first operand")
    b = as_matrix(b, name="second operand")
    _require_same_shape(a, b, "inner_product")
    return float(np.vdot(a, b))


def l1_norm(a) -> float:
    """Entrywise l1 norm (matrix seen as a long vector)."""
    return float(np.abs(as_matrix(a)).sum())


def inf_norm(a) -> float:
    """Entrywise max-abs norm (matrix seen as a long vector)."""
    return float(np.abs(as_matrix(a)).max())


def operator_norm(a) -> float:
    """Largest singular value."""
    return float(svd(a).singular_values[0])


def nuclear_norm(a) -> float:
    """Sum of singular values."""
    return float(svd(a).singular_values.sum())


def svd(a, *, check: bool = True) -> SvdFactors:
    """Thin singular value decomposition with a verified reconstruction.

    Parameters
    ----------
    a : array_like
        Matrix to factor, m x n with min(m, n) >= 1.
    check : bool
        When true (default), verify the reconstruction residual against
        ``SVD_TOL`` and raise ``NumericalError`` carrying the residual if it
        is exceeded.  The solver's inner loop disables the check for speed;
        the factor contract is covered by the operator's own tests.
    """
    a = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but sturdier.
        try:
            u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover - needs a pathological input
            raise NumericalError(f"SVD failed to converge on {a.shape} input") from exc
    factors = SvdFactors(left=u, singular_values=s, right=vt.T)
    if check:
        residual = float(np.linalg.norm(factors.reconstruct() - a))
        limit = SVD_TOL * max(1.0, float(np.linalg.norm(a)))
        if not residual <= limit:
            raise NumericalError(
                f"SVD reconstruction residual {residual:.3e} exceeds {limit:.3e}",
                residual=residual,
            )
    return factors


def project_omega(a, mask: ObservationMask) -> np.ndarray:
    """Keep entries on the mask, zero (exactly) everywhere else."""
    a = as_matrix(a)
    if a.shape != mask.shape:
        raise DimensionMismatchError(
            f"project_omega: matrix {a.shape} vs mask {mask.shape}"
        )
    return np.where(mask.array, a, 0.0)


def soft_threshold(t, tau: float) -> np.ndarray:
    """Entrywise shrinkage max(|t| - tau, 0) * sgn(t).

    Entries with ``|t| <= tau`` come out exactly zero.
    """
    t = as_matrix(t)
    if tau < 0:
        raise ParameterError(f"shrinkage threshold must be >= 0, got {tau}")
    return np.sign(t) * np.maximum(np.abs(t) - tau, 0.0)


def svt(y, mu: float, *, check: bool = True) -> np.ndarray:
    """Singular value thresholding: prox of ``mu * ||.||_*``.

    Returns the minimizer of ``mu ||X||_* + ||X - Y||_F^2 / 2``; the rank of
    the result never exceeds the rank of ``y``.
    """
    out, _ = svt_with_values(y, mu, check=check)
    return out


def svt_with_values(y, mu: float, *, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Like ``svt`` but also returns the thresholded singular values.

    The values give the nuclear norm of the result for free, which the solver
    uses to record objective history without a second SVD.
    """
    y = as_matrix(y)
    if mu < 0:
        raise ParameterError(f"singular value threshold must be >= 0, got {mu}")
    factors = svd(y, check=check)
    shrunk = np.maximum(factors.singular_values - mu, 0.0)
    keep = shrunk > 0.0
    if not keep.any():
        return np.zeros_like(y), shrunk[:0]
    out = (factors.left[:, keep] * shrunk[keep]) @ factors.right[:, keep].T
    return out, shrunk[keep]


def ball_project_z(n, mask: ObservationMask, delta: float) -> np.ndarray:
    """Project onto ``{Z : ||P_omega(Z)||_F <= delta}``.

    On the mask, entries are scaled by ``min(1, delta / ||P_omega(N)||_F)``;
    off the mask they pass through unchanged.
    """
    n = as_matrix(n)
    if delta <= 0:
        raise ParameterError(f"noise ball radius must be > 0, got {delta}")
    if n.shape != mask.shape:
        raise DimensionMismatchError(
            f"ball_project_z: matrix {n.shape} vs mask {mask.shape}"
        )
    masked_norm = float(np.linalg.norm(n[mask.array]))
    if masked_norm <= delta:
        return n.copy()
    scale = delta / masked_norm
    return np.where(mask.array, scale * n, n)
