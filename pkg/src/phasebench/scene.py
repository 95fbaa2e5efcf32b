"""Reference/object wavefront synthesis and fringe-carrier calibration.

The reference arm is a tilted plane wave; the object arm is a constant-
modulus quadratic (thin lens) phase front. A calibration interferogram of
the tilted reference against an untilted plane beam produces straight
fringes whose spectral peak locates the tilt.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import CalibrationError, DomainError
from .field import GridShape, TWO_PI, ensure_finite, interfere, shape_of, wrap_phase


@dataclass(frozen=True)
class TiltSpec:
    """Plane-wave reference: kx/ky in cycles per grid width/height."""

    kx: float
    ky: float
    amplitude: float = 1.0
    phase0: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise DomainError(f"tilt amplitude must be > 0, got {self.amplitude}")
        if not (np.isfinite(self.kx) and np.isfinite(self.ky)):
            raise DomainError("tilt frequencies must be finite")

    def check_nyquist(self, shape: GridShape) -> None:
        if abs(self.kx) >= shape.width / 2 or abs(self.ky) >= shape.height / 2:
            raise DomainError(
                f"tilt ({self.kx}, {self.ky}) is at or above Nyquist for {shape}"
            )


@dataclass(frozen=True)
class LensSpec:
    """Thin-lens quadratic front; lengths in meters, center in pixels."""

    focal_length: float = 0.10
    wavelength: float = 632.8e-9
    pixel_pitch: float = 5.0e-6
    center_x: float = 63.5
    center_y: float = 63.5
    amplitude: float = 1.0

    def __post_init__(self):
        for name in ("focal_length", "wavelength", "pixel_pitch", "amplitude"):
            if not getattr(self, name) > 0:
                raise DomainError(f"lens {name} must be > 0")


@dataclass(frozen=True)
class Scene:
    """One experiment geometry: grid, reference tilt, object lens."""

    shape: GridShape = GridShape(128, 128)
    tilt: TiltSpec = dc_field(default_factory=lambda: TiltSpec(kx=14.0, ky=10.0))
    lens: LensSpec = dc_field(default_factory=LensSpec)

    def reference(self) -> np.ndarray:
        return make_tilted_plane(self.shape, self.tilt)

    def object_field(self) -> np.ndarray:
        return make_quadratic_front(self.shape, self.lens)

    def reference_phase(self) -> np.ndarray:
        return tilt_phase_map(self.shape, self.tilt)


def _pixel_grids(shape: GridShape):
    shape = GridShape(*shape).validate()
    x = np.arange(shape.width, dtype=float)
    y = np.arange(shape.height, dtype=float)
    return np.meshgrid(x, y)


def tilt_phase_map(shape: GridShape, t: TiltSpec) -> np.ndarray:
    """Wrapped phase ramp 2*pi*(kx*x/W + ky*y/H) + phase0 of the tilted plane."""
    xg, yg = _pixel_grids(shape)
    shape = GridShape(*shape)
    ramp = TWO_PI * (t.kx * xg / shape.width + t.ky * yg / shape.height) + t.phase0
    return wrap_phase(ramp)


def make_tilted_plane(shape: GridShape, t: TiltSpec) -> np.ndarray:
    """amplitude * exp(i*(2*pi*(kx*x/W + ky*y/H) + phase0)), flat modulus."""
    shape = GridShape(*shape)
    t.check_nyquist(shape)
    xg, yg = _pixel_grids(shape)
    ramp = TWO_PI * (t.kx * xg / shape.width + t.ky * yg / shape.height) + t.phase0
    return t.amplitude * np.exp(1j * ramp)


def make_quadratic_front(shape: GridShape, lens: LensSpec) -> np.ndarray:
    """Constant-modulus field with thin-lens phase -pi*pitch^2*r^2/(lambda*f).

    r^2 is the squared pixel distance from (center_x, center_y).
    """
    xg, yg = _pixel_grids(shape)
    r2 = (xg - lens.center_x) ** 2 + (yg - lens.center_y) ** 2
    phase = -np.pi * lens.pixel_pitch ** 2 * r2 / (lens.wavelength * lens.focal_length)
    return lens.amplitude * np.exp(1j * wrap_phase(phase))


def apply_phase_shift(r: np.ndarray, theta: float) -> np.ndarray:
    """Shift the reference by theta: r * exp(-i*theta).

    With this sign the cross terms become 2|R||O|cos(phi_O - phi_R + theta)
    and the four-frame arctangent returns +(phi_O - phi_R).
    """
    if not np.isfinite(theta):
        raise DomainError("phase shift must be finite")
    return np.asarray(r) * np.exp(-1j * theta)


def scale_to_budget(i: np.ndarray, n0: float) -> np.ndarray:
    """Rescale an intensity map so its mean is exactly n0 counts/pixel."""
    i = np.asarray(i, dtype=float)
    if not n0 > 0:
        raise DomainError(f"photon budget must be > 0, got {n0}")
    m = i.mean()
    if not m > 0:
        raise DomainError("cannot scale an all-zero intensity map")
    return i * (n0 / m)


def _parabolic_offset(lm1: float, l0: float, lp1: float) -> float:
    """Sub-bin vertex of a parabola through three log-magnitudes.

    Returns 0 when the neighborhood is not concave (degenerate peaks).
    """
    denom = lm1 - 2.0 * l0 + lp1
    if denom >= 0:
        return 0.0
    delta = 0.5 * (lm1 - lp1) / denom
    return float(np.clip(delta, -0.5, 0.5))


def _refine_peak(mag: np.ndarray, iy: int, ix: int) -> tuple[float, float]:
    """Parabolic sub-bin refinement of a spectral peak, per axis.

    Neighbors below 1e-9 of the peak are floating-point noise (exact
    single-bin peaks); refinement is skipped there.
    """
    h, w = mag.shape
    peak = mag[iy, ix]
    floor = 1e-9 * peak
    tiny = 1e-300

    mx_m, mx_p = mag[iy, (ix - 1) % w], mag[iy, (ix + 1) % w]
    dx = 0.0
    if max(mx_m, mx_p) > floor:
        dx = _parabolic_offset(
            np.log(mx_m + tiny), np.log(peak + tiny), np.log(mx_p + tiny)
        )

    my_m, my_p = mag[(iy - 1) % h, ix], mag[(iy + 1) % h, ix]
    dy = 0.0
    if max(my_m, my_p) > floor:
        dy = _parabolic_offset(
            np.log(my_m + tiny), np.log(peak + tiny), np.log(my_p + tiny)
        )
    return dx, dy


def _signed_bin(index: int, n: int) -> int:
    return index - n if index >= (n + 1) // 2 else index


def estimate_tilt(calibration: np.ndarray) -> TiltSpec:
    """Recover the reference tilt from a straight-fringe calibration frame.

    Finds the dominant off-DC peak of the 2-D DFT, refines it to sub-bin
    accuracy by per-axis parabolic interpolation on log magnitude, and
    reads amplitude and phase0 off the peak's complex value. The fringe
    cannot distinguish (k, phase0) from (-k, -phase0); the returned spec is
    canonicalized to kx > 0 (or kx == 0, ky > 0). Amplitude assumes
    balanced arms: sqrt(|peak| / Npix) is the geometric mean of the two
    beam amplitudes.
    """
    calibration = np.asarray(calibration, dtype=float)
    ensure_finite(calibration, "calibration frame")
    shape = shape_of(calibration)
    spectrum = np.fft.fft2(calibration)
    mag = np.abs(spectrum)

    dc = mag[0, 0]
    off_dc = mag.copy()
    off_dc[0, 0] = 0.0
    iy, ix = np.unravel_index(int(np.argmax(off_dc)), off_dc.shape)
    peak = off_dc[iy, ix]

    flat = np.delete(mag.ravel(), 0)  # median over off-DC bins
    median = float(np.median(flat))
    if not (peak > 3.0 * median and peak > 1e-6 * dc):
        raise CalibrationError(
            "no off-DC spectral peak above 3x median; frame has no usable fringes"
        )

    dx, dy = _refine_peak(mag, iy, ix)
    kx = _signed_bin(ix, shape.width) + dx
    ky = _signed_bin(iy, shape.height) + dy
    peak_value = spectrum[iy, ix]

    if kx < 0 or (kx == 0 and ky < 0):
        kx, ky = -kx, -ky
        peak_value = np.conj(peak_value)

    amplitude = float(np.sqrt(peak / shape.size))
    phase0 = float(np.angle(peak_value))
    return TiltSpec(kx=float(kx), ky=float(ky), amplitude=amplitude, phase0=phase0)


def carrier_frequency(reference: np.ndarray) -> tuple[float, float]:
    """Dominant spatial frequency (kx, ky) of a complex reference field.

    A tilted plane wave has a single spectral spike, so no DC/conjugate
    exclusion is needed; the peak is refined like in estimate_tilt.
    """
    reference = np.asarray(reference)
    shape = shape_of(reference)
    mag = np.abs(np.fft.fft2(reference))
    iy, ix = np.unravel_index(int(np.argmax(mag)), mag.shape)
    dx, dy = _refine_peak(mag, iy, ix)
    return (_signed_bin(ix, shape.width) + dx, _signed_bin(iy, shape.height) + dy)


def calibration_frame(scene: Scene) -> np.ndarray:
    """Noiseless interferogram of the tilted reference against a plane beam.

    Mirrors the calibration exposure taken with the object removed from
    its arm: same beam amplitudes, no lens phase.
    """
    plane = TiltSpec(kx=0.0, ky=0.0, amplitude=scene.lens.amplitude, phase0=0.0)
    return interfere(scene.reference(), make_tilted_plane(scene.shape, plane))
