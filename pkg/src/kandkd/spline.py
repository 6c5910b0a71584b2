"""B-spline basis on a uniform, extended knot grid.

Every evaluation clamps its input to ``[domain_lo, domain_hi]`` and works in
the local coordinate of the knot cell that contains it, so only the ``K + 1``
non-zero basis functions are ever computed.  The batched helpers
(:func:`local_basis`) are what the KAN layers use; :func:`basis_values` and
:func:`basis_derivatives` expand the result into dense ``G + K`` vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SplineDomainError(ValueError):
    """Raised for non-finite inputs or an invalid grid specification."""


@dataclass(frozen=True)
class SplineGrid:
    domain_lo: float = -3.0
    domain_hi: float = 3.0
    grid_size: int = 5
    order: int = 3
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.domain_lo) and np.isfinite(self.domain_hi)):
            raise SplineDomainError("domain bounds must be finite")
        if not self.domain_lo < self.domain_hi:
            raise SplineDomainError(
                f"domain_lo ({self.domain_lo}) must be < domain_hi ({self.domain_hi})"
            )
        if int(self.grid_size) != self.grid_size or self.grid_size < 1:
            raise SplineDomainError(f"grid_size must be a positive integer, got {self.grid_size}")
        if int(self.order) != self.order or self.order < 0:
            raise SplineDomainError(f"order must be a non-negative integer, got {self.order}")
        object.__setattr__(self, "grid_size", int(self.grid_size))
        object.__setattr__(self, "order", int(self.order))
        m = np.arange(-self.order, self.grid_size + self.order + 1, dtype=np.float64)
        knots = self.domain_lo + m * self.spacing
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def spacing(self) -> float:
        return (self.domain_hi - self.domain_lo) / self.grid_size

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.order


def _check_finite(x):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise SplineDomainError("spline input contains NaN or infinite values")
    return x


def _cell(grid: SplineGrid, x):
    """Clamp ``x`` and return (cell index, local coordinate in [0, 1], inside mask)."""
    inside = (x >= grid.domain_lo) & (x <= grid.domain_hi)
    u = (np.clip(x, grid.domain_lo, grid.domain_hi) - grid.domain_lo) / grid.spacing
    cell = np.minimum(np.floor(u), grid.grid_size - 1).astype(np.intp)
    return cell, u - cell, inside


def _triangle(t, degree):
    """Cox-de Boor triangle on unit-spaced knots.

    Returns the ``degree + 1`` non-zero basis values of the given degree on
    the cell whose local coordinate is ``t``; last axis indexes them.
    With unit spacing every denominator of the recursion equals ``j``.
    """
    out = np.zeros(t.shape + (degree + 1,))
    out[..., 0] = 1.0
    for j in range(1, degree + 1):
        saved = np.zeros(t.shape)
        for r in range(j):
            # left[j - r] = t + j - r - 1, right[r + 1] = r + 1 - t
            temp = out[..., r] / j
            out[..., r] = saved + (r + 1 - t) * temp
            saved = (t + j - r - 1) * temp
        out[..., j] = saved
    return out


def local_basis(grid: SplineGrid, x, derivatives: bool = False):
    """Non-zero basis values for an array of inputs.

    Returns ``(first, values)`` or ``(first, values, derivs, inside)`` where
    ``first`` holds the index of the first non-zero basis function and the
    trailing axis of ``values`` runs over the ``K + 1`` active functions.
    Derivatives are taken w.r.t. the unclamped input, so they vanish outside
    the domain.
    """
    x = np.asarray(x, dtype=np.float64)
    cell, t, inside = _cell(grid, x)
    k = grid.order
    values = _triangle(t, k)
    if not derivatives:
        return cell, values
    if k == 0:
        return cell, values, np.zeros_like(values), inside
    lower = _triangle(t, k - 1)
    derivs = np.zeros_like(values)
    derivs[..., :k] -= lower
    derivs[..., 1:] += lower
    derivs /= grid.spacing
    derivs *= inside[..., None]
    return cell, values, derivs, inside


def _scatter(grid: SplineGrid, cell, local):
    dense = np.zeros(grid.n_basis)
    dense[cell : cell + grid.order + 1] = local
    return dense


def basis_values(grid: SplineGrid, x: float) -> np.ndarray:
    """Dense vector of all ``G + K`` basis functions at a scalar ``x``."""
    x = _check_finite(x)
    if x.ndim:
        raise SplineDomainError("basis_values takes a scalar; use local_basis for arrays")
    cell, vals = local_basis(grid, x)
    return _scatter(grid, int(cell), vals)


def basis_derivatives(grid: SplineGrid, x: float) -> np.ndarray:
    """Dense vector of ``dB_i/dx`` at a scalar ``x`` (all zeros for ``K = 0``)."""
    x = _check_finite(x)
    if x.ndim:
        raise SplineDomainError("basis_derivatives takes a scalar; use local_basis for arrays")
    cell, _, derivs, _ = local_basis(grid, x, derivatives=True)
    return _scatter(grid, int(cell), derivs)
