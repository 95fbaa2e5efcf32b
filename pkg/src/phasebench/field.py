"""Grid-based complex-field and phase arithmetic.

Grids are plain 2-D numpy arrays in row-major order: element ``[y, x]`` is
the pixel at column x, row y. Complex fields are complex128 with values in
sqrt(expected photon counts per exposure); intensity maps are float64 in
expected counts; phase maps are float64 radians restricted to (-pi, pi].
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionError, DomainError

TWO_PI = 2.0 * np.pi


class GridShape(NamedTuple):
    """Rectangular detector grid, ``width`` columns by ``height`` rows."""

    width: int
    height: int

    @property
    def size(self) -> int:
        return self.width * self.height

    def validate(self) -> "GridShape":
        if self.width < 1 or self.height < 1:
            raise DomainError(f"grid dimensions must be >= 1, got {self}")
        return self


def shape_of(a: np.ndarray) -> GridShape:
    """GridShape of a 2-D array (numpy shape is (rows, cols) = (height, width))."""
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D grid, got ndim={a.ndim}")
    return GridShape(width=a.shape[1], height=a.shape[0])


def ensure_same_shape(*arrays: np.ndarray) -> None:
    first = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != first:
            raise DimensionError(f"grid shapes differ: {first} vs {a.shape}")


def ensure_finite(a: np.ndarray, what: str = "grid") -> None:
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{what} contains non-finite values")


def wrap_phase(x):
    """Reduce phase(s) modulo 2*pi into the interval (-pi, pi].

    The identity ``pi - mod(pi - x, 2*pi)`` maps the lower boundary to +pi,
    so wrapped values are never exactly -pi.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("wrap_phase requires finite input")
    wrapped = np.pi - np.mod(np.pi - x, TWO_PI)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def phase_of(field: np.ndarray) -> np.ndarray:
    """Pixelwise argument of a complex field in (-pi, pi]; arg(0) is 0.

    np.angle already returns +pi for the negative real axis; the explicit
    fixup below only guards values that arrive as exactly -pi (e.g. through
    a -0.0 imaginary part).
    """
    field = np.asarray(field)
    phase = np.angle(field).astype(float, copy=False)
    phase[phase == -np.pi] = np.pi
    return phase


def interfere(r: np.ndarray, o: np.ndarray) -> np.ndarray:
    """Two-beam interference intensity |r + o|^2.

    Equivalent to |r|^2 + |o|^2 + conj(r)*o + r*conj(o); computing the
    squared modulus of the sum keeps the result exactly nonnegative.
    """
    r = np.asarray(r)
    o = np.asarray(o)
    ensure_same_shape(r, o)
    s = r + o
    return s.real ** 2 + s.imag ** 2
