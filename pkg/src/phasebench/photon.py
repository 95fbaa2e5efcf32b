"""Reproducible Poisson photon-count sampling on counter-based streams.

Every uniform deviate is addressed by (master_seed, stream_index, round,
pixel): round r of an n-pixel frame occupies 64-bit Philox words
[r*R, r*R + n) where R = n rounded up to a whole 4-word Philox block.
Draws therefore do not depend on evaluation order, which makes sampling
bit-reproducible under any pixel- or frame-level parallel schedule.

Per-pixel Poisson draws use inversion by sequential search below mean 10
(exactly one uniform per pixel, from round 0) and Hormann's transformed
rejection with squeeze (PTRS) at mean >= 10 (one uniform pair per attempt;
attempt a uses rounds 1+2a and 2+2a).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .field import ensure_finite

INVERSION_MEAN_LIMIT = 10.0
_INVERSION_MAX_STEPS = 200
_PTRS_MAX_ATTEMPTS = 128


@dataclass(frozen=True)
class SeedSpec:
    """Addressable random stream: one master seed, one stream per use."""

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2 ** 64:
            raise DomainError("master_seed must fit in 64 bits")
        if not 0 <= self.stream_index < 2 ** 64:
            raise DomainError("stream_index must fit in 64 bits")

    def substream(self, offset: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.stream_index + offset)


def _uniform_round(seed: SeedSpec, round_index: int, n: int) -> np.ndarray:
    """n uniforms in [0, 1), one per pixel slot, for the given round."""
    words_per_round = 4 * ((n + 3) // 4)  # whole Philox blocks
    start_block = round_index * (words_per_round // 4)
    bitgen = np.random.Philox(
        key=[seed.master_seed, seed.stream_index],
        counter=[start_block, 0, 0, 0],
    )
    return np.random.Generator(bitgen).random(n)


def _poisson_inversion(mu: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Sequential-search inversion; consumes exactly the supplied uniforms."""
    k = np.zeros(mu.shape, dtype=np.int64)
    p = np.exp(-mu)
    s = p.copy()
    active = u >= s
    step = 0
    while np.any(active) and step < _INVERSION_MAX_STEPS:
        step += 1
        k[active] += 1
        p[active] *= mu[active] / step
        s[active] += p[active]
        active &= u >= s
    # Residual actives are beyond the float-representable CDF tail.
    return k


def _poisson_ptrs(mu: np.ndarray, seed: SeedSpec, slots: np.ndarray, n: int) -> np.ndarray:
    """Hormann's transformed rejection with squeeze for mu >= 10.

    `slots` are the pixel indices within the frame's uniform rounds, so
    each pixel reads only its own columns of rounds 1, 2, 3, ...
    """
    b = 0.931 + 2.53 * np.sqrt(mu)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_mu = np.log(mu)

    out = np.zeros(mu.shape, dtype=np.int64)
    pending = np.arange(mu.shape[0])
    for attempt in range(_PTRS_MAX_ATTEMPTS):
        if pending.size == 0:
            break
        u_round = _uniform_round(seed, 1 + 2 * attempt, n)
        v_round = _uniform_round(seed, 2 + 2 * attempt, n)
        u = u_round[slots[pending]] - 0.5
        v = v_round[slots[pending]]
        us = 0.5 - np.abs(u)

        ai, bi = a[pending], b[pending]
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.floor((2.0 * ai / us + bi) * u + mu[pending] + 0.43)

        valid = us > 0
        accept = valid & (us >= 0.07) & (v <= v_r[pending])
        reject = (~valid) | (k < 0) | ((us < 0.013) & (v > us))

        need_log = valid & ~accept & ~reject
        if np.any(need_log):
            kk = k[need_log]
            lhs = np.log(
                v[need_log] * inv_alpha[pending][need_log]
                / (ai[need_log] / us[need_log] ** 2 + bi[need_log])
            )
            rhs = (
                kk * log_mu[pending][need_log]
                - mu[pending][need_log]
                - gammaln(kk + 1.0)
            )
            ok = lhs <= rhs
            sub = np.where(need_log)[0]
            accept[sub[ok]] = True

        done = pending[accept]
        out[done] = k[accept].astype(np.int64)
        pending = pending[~accept]
    if pending.size:
        # Unreachable in practice (acceptance ~0.94/attempt); pin to the mode.
        out[pending] = np.floor(mu[pending]).astype(np.int64)
    return out


def sample_poisson_frame(mean: np.ndarray, seed: SeedSpec) -> np.ndarray:
    """Poisson photon counts for a map of expected counts, as uint32.

    Identical (mean, seed) inputs yield bit-identical frames.
    """
    mean = np.asarray(mean, dtype=float)
    ensure_finite(mean, "mean intensity")
    if np.any(mean < 0):
        raise DomainError("Poisson means must be nonnegative")

    flat = mean.ravel()
    n = flat.size
    counts = np.zeros(n, dtype=np.int64)

    small = flat < INVERSION_MEAN_LIMIT
    if np.any(small):
        u0 = _uniform_round(seed, 0, n)
        counts[small] = _poisson_inversion(flat[small], u0[small])
    big = ~small
    if np.any(big):
        slots = np.where(big)[0]
        counts[big] = _poisson_ptrs(flat[big], seed, slots, n)
    return counts.reshape(mean.shape).astype(np.uint32)


def split_budget_psm(frame_means, n0: float) -> list[np.ndarray]:
    """Quarter-exposure expected intensities for the four phase-shift frames.

    `frame_means` are the four full-exposure interferograms (theta = 0,
    pi/2, pi, 3*pi/2). One common factor scales all four so their summed
    expected counts per pixel average exactly n0 — the same total budget
    the single optimization frame receives. A shared factor (rather than
    per-frame normalization) preserves the frame intensity ratios that the
    four-frame arctangent relies on; each frame mean comes out ~ n0/4.
    """
    frames = [np.asarray(m, dtype=float) for m in frame_means]
    if len(frames) != 4:
        raise DomainError(f"expected 4 frame means, got {len(frames)}")
    if not n0 > 0:
        raise DomainError(f"photon budget must be > 0, got {n0}")
    total = sum(m.mean() for m in frames)
    if not total > 0:
        raise DomainError("cannot budget all-zero frames")
    factor = n0 / total
    return [m * factor for m in frames]
