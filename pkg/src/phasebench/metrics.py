"""Wrapped phase errors, noise gain, and log-log power-law fits."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DimensionError, DomainError
from .field import ensure_same_shape, wrap_phase
from .photon import SeedSpec


def wrapped_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pixelwise wrap(a - b) in (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ensure_same_shape(a, b)
    return wrap_phase(a - b)


def rms_wrapped_error(a, b, remove_piston: bool = False, border_crop: int = 0) -> float:
    """RMS of the wrapped difference between two phase maps.

    remove_piston first subtracts the circular mean of the difference
    (arg of the mean phasor), so a global offset between the maps does not
    count as error. border_crop drops that many pixels on every edge
    before averaging.
    """
    d = wrapped_difference(a, b)
    if border_crop:
        if 2 * border_crop >= min(d.shape):
            raise DimensionError(
                f"border_crop {border_crop} leaves no pixels on grid {d.shape}"
            )
        d = d[border_crop:-border_crop, border_crop:-border_crop]
    if remove_piston:
        piston = np.angle(np.mean(np.exp(1j * d)))
        d = wrap_phase(d - piston)
    return float(np.sqrt(np.mean(d * d)))


def noise_gain(e_ps: float, e_co: float) -> float:
    """Error ratio of phase shifting to constrained optimization."""
    if e_co == 0:
        raise DomainError("noise gain undefined for zero optimization error")
    return e_ps / e_co


@dataclass(frozen=True)
class PowerLawFit:
    """y ~ prefactor * x^exponent, fitted by least squares on logs."""

    exponent: float
    exponent_ci95: float
    prefactor: float
    r_squared: float


def fit_power_law(points) -> PowerLawFit:
    """OLS fit of log y on log x with a t-based 95% CI on the slope.

    Needs at least 3 strictly positive (x, y) pairs. A perfect fit
    (including a constant y) reports ci95 = 0 and r_squared = 1.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise DomainError(f"power-law fit needs >= 3 points, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise DomainError("power-law fit needs strictly positive x and y")

    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    n = len(pts)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    if sxx == 0:
        raise DomainError("power-law fit needs at least two distinct x values")
    slope = float(np.sum((lx - lx.mean()) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * lx.mean())

    resid = ly - (intercept + slope * lx)
    ssr = float(np.sum(resid ** 2))
    syy = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if syy == 0 else max(0.0, 1.0 - ssr / syy)

    dof = n - 2
    se = np.sqrt(ssr / dof / sxx)
    ci95 = float(stats.t.ppf(0.975, dof) * se)
    return PowerLawFit(exponent=slope, exponent_ci95=ci95,
                       prefactor=float(np.exp(intercept)), r_squared=r2)


@dataclass(frozen=True)
class SweepRecord:
    """One (budget, seed) outcome of the PSM vs. optimization comparison."""

    n0: float
    seed: SeedSpec
    e_ps: float
    e_co: float
    gain: float
    iters_co: int
    converged: bool = True


SWEEP_CSV_HEADER = ["n0", "seed", "e_ps", "e_co", "gain", "iters_co"]
FITS_CSV_HEADER = ["series", "exponent", "ci95", "prefactor", "r2"]


def write_sweep_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_HEADER)
        for r in records:
            writer.writerow([
                repr(float(r.n0)), r.seed.stream_index, repr(r.e_ps),
                repr(r.e_co), repr(r.gain), r.iters_co,
            ])


def read_sweep_csv(path):
    """(n0, seed_stream, e_ps, e_co, gain, iters_co) tuples from sweep.csv."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SWEEP_CSV_HEADER:
            raise DomainError(f"unexpected sweep CSV header {header}")
        for row in reader:
            rows.append((float(row[0]), int(row[1]), float(row[2]),
                         float(row[3]), float(row[4]), int(row[5])))
    return rows


def write_fits_csv(path, fits: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FITS_CSV_HEADER)
        for series, fit in fits.items():
            writer.writerow([
                series, repr(fit.exponent), repr(fit.exponent_ci95),
                repr(fit.prefactor), repr(fit.r_squared),
            ])
