"""Torus lattice, time mesh, discrete differential operators, and mixed norms.

The lattice has ``N`` points per axis on the unit torus, spacing ``h = 1/N``,
and the time mesh has ``T`` steps of length ``dt = 1/T``.  Lattice points are
addressed by integer multi-index; physical coordinates ``x = (i_1, ..., i_d) h``
are computed on demand.

Array conventions used throughout the package:

* scalar slice: shape ``(N,) * d``
* vector slice: shape ``(N,) * d + (d,)`` (components on the last axis)
* time-indexed curves are stored time-major with a flattened spatial axis,
  e.g. ``(T + 1, N**d)`` for a distribution curve; slices are reshaped to the
  lattice shape (a view, no copy) before stencils are applied.

All stencils wrap periodically.  Summation order is the C (lexicographic)
order of the arrays, which keeps every reduction deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class Grid:
    """Uniform spatial lattice on the d-torus together with a time mesh."""

    d: int
    N: int
    T: int

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"spatial dimension must be >= 1, got {self.d}")
        if self.N < 1:
            raise ValueError(f"points per axis must be >= 1, got {self.N}")
        if self.T < 1:
            raise ValueError(f"time steps must be >= 1, got {self.T}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def dt(self) -> float:
        return 1.0 / self.T

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def n_points(self) -> int:
        return self.N**self.d

    def points(self) -> Array:
        """All lattice coordinates, shape ``(n_points, d)``, lexicographic order."""
        axes = [np.arange(self.N) * self.h for _ in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def axis_coordinates(self) -> Array:
        """Coordinates along one axis, shape ``(N,)``."""
        return np.arange(self.N) * self.h

    def offset_norm(self, offset: tuple[int, ...]) -> float:
        """Euclidean length of a lattice offset under the minimum-image metric."""
        comps = [min(k % self.N, self.N - k % self.N) * self.h for k in offset]
        return float(np.sqrt(sum(c * c for c in comps)))

    def as_slice(self, flat: Array) -> Array:
        """View a flattened spatial array as a shaped lattice slice."""
        return flat.reshape(flat.shape[:-1] + self.shape)

    def as_vector_slice(self, flat: Array) -> Array:
        """View a flattened vector array ``(..., n_points, d)`` as a shaped slice."""
        return flat.reshape(flat.shape[:-2] + self.shape + (self.d,))


def _spatial_axis(g: Grid, i: int, vector: bool) -> int:
    # axis of lattice direction i, counting from the end of the array so the
    # operators accept arbitrary leading batch axes
    return -(g.d - i) - (1 if vector else 0)


def laplacian_h(mu: Array, g: Grid) -> Array:
    """Centered discrete Laplacian with periodic wraparound.

    ``(laplacian_h mu)(x) = sum_i (mu(x+h e_i) + mu(x-h e_i) - 2 mu(x)) / h^2``
    """
    out = np.zeros_like(mu, dtype=float)
    for i in range(g.d):
        ax = _spatial_axis(g, i, vector=False)
        out += np.roll(mu, -1, axis=ax) + np.roll(mu, 1, axis=ax) - 2.0 * mu
    return out / (g.h * g.h)


def gradient_h(mu: Array, g: Grid) -> Array:
    """Centered discrete gradient; components stacked on a new last axis."""
    comps = []
    for i in range(g.d):
        ax = _spatial_axis(g, i, vector=False)
        comps.append((np.roll(mu, -1, axis=ax) - np.roll(mu, 1, axis=ax)) / (2.0 * g.h))
    return np.stack(comps, axis=-1)


def forward_gradient_h(mu: Array, g: Grid) -> Array:
    """Forward discrete gradient ``(mu(x+h e_i) - mu(x)) / h``."""
    comps = []
    for i in range(g.d):
        ax = _spatial_axis(g, i, vector=False)
        comps.append((np.roll(mu, -1, axis=ax) - mu) / g.h)
    return np.stack(comps, axis=-1)


def divergence_h(w: Array, g: Grid) -> Array:
    """Centered discrete divergence of a vector slice (components on last axis)."""
    out = np.zeros(w.shape[:-1], dtype=float)
    for i in range(g.d):
        wi = w[..., i]  # slicing drops the component axis
        ax = _spatial_axis(g, i, vector=False)
        out += np.roll(wi, -1, axis=ax) - np.roll(wi, 1, axis=ax)
    return out / (2.0 * g.h)


def _check_exponent(p: float, name: str) -> None:
    if not (p >= 1.0):  # rejects NaN as well
        raise ValueError(f"{name} must be in [1, inf], got {p}")


def mixed_norm(field: Array, p1: float, p2: float, vector: bool = False) -> float:
    """Mixed norm: outer l^p1 over axis 0 of inner l^p2 norms over the rest.

    Pointwise values are reduced with the Euclidean norm over the last axis
    when ``vector`` is set, otherwise with the absolute value.  ``p = inf``
    selects the maximum at that level.
    """
    _check_exponent(p1, "p1")
    _check_exponent(p2, "p2")
    a = np.asarray(field, dtype=float)
    if vector:
        mags = np.sqrt(np.sum(a * a, axis=-1))
    else:
        mags = np.abs(a)
    mags = mags.reshape(mags.shape[0], -1)
    if np.isinf(p2):
        inner = np.max(mags, axis=1) if mags.shape[1] else np.zeros(mags.shape[0])
    else:
        inner = np.sum(mags**p2, axis=1) ** (1.0 / p2)
    if np.isinf(p1):
        return float(np.max(inner))
    return float(np.sum(inner**p1) ** (1.0 / p1))


def lipschitz_constant(mu: Array, g: Grid) -> Array:
    """Largest discrete difference quotient ``(mu(x+y) - mu(x)) / |y|``, y != 0.

    Offsets are measured with the minimum-image metric.  Accepts leading batch
    axes; the reduction runs over the trailing ``d`` lattice axes.
    """
    batch_shape = mu.shape[: mu.ndim - g.d]
    best = np.full(batch_shape, -np.inf)
    spatial_axes = tuple(range(mu.ndim - g.d, mu.ndim))
    for offset in np.ndindex(*g.shape):
        if all(k == 0 for k in offset):
            continue
        shifted = np.roll(mu, tuple(-k for k in offset), axis=spatial_axes)
        quot = (shifted - mu) / g.offset_norm(offset)
        best = np.maximum(best, np.max(quot, axis=spatial_axes))
    return best if batch_shape else float(best)


def semiconcavity_constant(mu: Array, g: Grid) -> Array:
    """Largest ratio ``(mu(x+y) + mu(x-y) - 2 mu(x)) / |y|^2``, y != 0.

    A slice is L-semi-concave in the quadratic sense exactly when this
    functional is at most ``2 L``.  Batch axes as in :func:`lipschitz_constant`.
    """
    batch_shape = mu.shape[: mu.ndim - g.d]
    best = np.full(batch_shape, -np.inf)
    spatial_axes = tuple(range(mu.ndim - g.d, mu.ndim))
    for offset in np.ndindex(*g.shape):
        if all(k == 0 for k in offset):
            continue
        fwd = np.roll(mu, tuple(-k for k in offset), axis=spatial_axes)
        bwd = np.roll(mu, tuple(k for k in offset), axis=spatial_axes)
        norm2 = g.offset_norm(offset) ** 2
        quot = (fwd + bwd - 2.0 * mu) / norm2
        best = np.maximum(best, np.max(quot, axis=spatial_axes))
    return best if batch_shape else float(best)
