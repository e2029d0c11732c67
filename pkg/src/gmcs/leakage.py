"""Local-oscillator leakage noise.

The leakage (LE) is treated as a classical field with the same Gaussian
envelope as the local oscillator (LO). Only the part overlapping the LO mode
interferes with it, so the effective leakage is ``alpha * n_le`` where
``alpha`` is the mode-overlap factor. Two multiplexing routes are covered:

* time multiplexing, where the LE is delayed by ``delta_t`` and the phase
  between LO and LE is uniformly random, giving ``N_leak = 2 * n_le_eff``;
* polarization-frequency multiplexing, where the per-frame DC offsets of
  Bob's data give ``n_le_eff`` directly and ``N_leak = gamma * n_le_eff``.

Noise quantities are in shot-noise units referred to Bob's output.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .keyrate import DomainError

#: Group velocity used to convert a delay into a fiber length difference (m/s).
FIBER_GROUP_VELOCITY = 2.0e8

_TWO_SQRT_LN2 = 2.0 * math.sqrt(math.log(2.0))

# numerical overlap grid requirements
MIN_GRID_POINTS = 10_000
MIN_GRID_HALF_SPAN_SIGMAS = 8.0


class GridError(DomainError):
    """Integration grid too coarse or too narrow for the requested precision."""


def _positive(name: str, v: float) -> None:
    if not math.isfinite(v) or v <= 0:
        raise DomainError(f"{name} must be finite and > 0, got {v!r}")


def _nonneg(name: str, v: float) -> None:
    if not math.isfinite(v) or v < 0:
        raise DomainError(f"{name} must be finite and >= 0, got {v!r}")


def sigma_from_fwhm(fwhm: float) -> float:
    """Gaussian standard width from its full width at half maximum."""
    _positive("fwhm", fwhm)
    return fwhm / _TWO_SQRT_LN2


def transform_limited_fwhm_freq(fwhm_time: float) -> float:
    """Spectral FWHM (Hz) of a transform-limited Gaussian pulse."""
    _positive("fwhm_time", fwhm_time)
    return (2.0 * math.log(2.0) / math.pi) / fwhm_time


def transform_limited_sigma_freq(fwhm_time: float) -> float:
    """Spectral width sigma_nu (Hz) of a transform-limited Gaussian pulse."""
    return transform_limited_fwhm_freq(fwhm_time) / _TWO_SQRT_LN2


@dataclass(frozen=True)
class PulseShape:
    """Gaussian pulse widths in time (s) and frequency (Hz)."""

    fwhm_time: float
    sigma_time: float
    sigma_freq: float

    @classmethod
    def transform_limited(cls, fwhm_time: float) -> "PulseShape":
        return cls(
            fwhm_time=fwhm_time,
            sigma_time=sigma_from_fwhm(fwhm_time),
            sigma_freq=transform_limited_sigma_freq(fwhm_time),
        )


def overlap_factor(delta: float, sigma: float) -> float:
    """Mode overlap ``exp(-delta**2 / (2*sigma**2))`` of two shifted Gaussians.

    Works in either domain: pass a delay and sigma_t, or a frequency offset
    and sigma_nu. Underflows to 0.0 for very large offsets; use
    :func:`log10_overlap_factor` when the magnitude matters.
    """
    _positive("sigma", sigma)
    if not math.isfinite(delta):
        raise DomainError(f"delta must be finite, got {delta!r}")
    return math.exp(-(delta * delta) / (2.0 * sigma * sigma))


def log10_overlap_factor(delta: float, sigma: float) -> float:
    _positive("sigma", sigma)
    return -(delta * delta) / (2.0 * sigma * sigma) / math.log(10.0)


def overlap_oracle_numeric(
    delta_t: float,
    sigma_t: float,
    n_points: int = 20_001,
    half_span_sigmas: float = 10.0,
    phi_le: float = 0.0,
) -> float:
    """Overlap factor by direct quadrature of ``|int E_lo^* E_le dt|**2``.

    The two normalized envelopes are centred at ``+delta_t/2`` (LO) and
    ``-delta_t/2`` (LE). The common optical carrier cancels in the product and
    only the constant phase ``phi_le`` remains, which the modulus removes.
    The grid extends ``half_span_sigmas * sigma_t`` beyond both pulse centres.
    """
    _positive("sigma_t", sigma_t)
    if n_points < MIN_GRID_POINTS:
        raise GridError(f"need at least {MIN_GRID_POINTS} grid points, got {n_points}")
    if half_span_sigmas < MIN_GRID_HALF_SPAN_SIGMAS:
        raise GridError(
            f"grid must span at least +-{MIN_GRID_HALF_SPAN_SIGMAS} sigma, "
            f"got {half_span_sigmas}"
        )
    # work in units of sigma_t so the grid is scale free
    d = abs(delta_t) / sigma_t
    half = d / 2.0 + half_span_sigmas
    t = np.linspace(-half, half, n_points)
    e0 = 1.0 / math.sqrt(math.sqrt(math.pi))  # E0**2 = 1/(sqrt(pi) sigma_t)
    e_lo = e0 * np.exp(-((t - d / 2.0) ** 2) / 2.0)
    e_le = e0 * np.exp(-((t + d / 2.0) ** 2) / 2.0) * np.exp(-1j * phi_le)
    amp = np.trapezoid(np.conj(e_lo) * e_le, t)
    return float(abs(amp) ** 2)


def envelope_normalization(sigma_t: float, n_points: int = 20_001) -> float:
    """``E0**2 * int exp(-t**2/sigma_t**2) dt``, which should equal 1."""
    _positive("sigma_t", sigma_t)
    t = np.linspace(-12.0 * sigma_t, 12.0 * sigma_t, n_points)
    e0_sq = 1.0 / (math.sqrt(math.pi) * sigma_t)
    return float(e0_sq * np.trapezoid(np.exp(-(t**2) / sigma_t**2), t))


def n_leak_time_mux(n_le: float, delta_t: float, sigma_t: float) -> float:
    """Leakage noise of a time-multiplexed scheme with random LO-LE phase."""
    _nonneg("n_le", n_le)
    return 2.0 * n_le * overlap_factor(delta_t, sigma_t)


class DelayRequirement(NamedTuple):
    delay: float
    fiber_length: float
    no_delay_needed: bool


def required_delay(
    n_le: float,
    n_leak_target: float,
    sigma_t: float,
    group_velocity: float = FIBER_GROUP_VELOCITY,
) -> DelayRequirement:
    """LO-LE delay that brings time-multiplexed leakage noise down to a target.

    Returns the delay (s) and the matching fiber length difference (m). When
    the target is already met without any delay (``target >= 2*n_le``) the
    result is zero with ``no_delay_needed`` set, and a warning is issued if
    the target strictly exceeds ``2*n_le``.
    """
    _nonneg("n_le", n_le)
    _positive("n_leak_target", n_leak_target)
    _positive("sigma_t", sigma_t)
    ratio = 2.0 * n_le / n_leak_target
    if ratio <= 1.0:
        if ratio < 1.0:
            warnings.warn(
                f"N_leak target {n_leak_target} exceeds 2*n_le={2 * n_le}; no delay needed",
                stacklevel=2,
            )
        return DelayRequirement(0.0, 0.0, True)
    delay = math.sqrt(2.0 * math.log(ratio)) * sigma_t
    return DelayRequirement(delay, delay * group_velocity, False)


class DCLeakage(NamedTuple):
    n_le_eff: float
    phi_le_0: float
    phase_defined: bool


def effective_leakage_from_dc(x0: float, p0: float) -> DCLeakage:
    """Effective leakage photon number and mean LO-LE phase from DC offsets.

    ``x0`` and ``p0`` are the per-frame DC components of Bob's X and P
    measurements. The phase uses the two-argument arctangent so the full
    circle is resolved; for ``x0 == p0 == 0`` it is reported as 0 and
    ``phase_defined`` is False.
    """
    if not (math.isfinite(x0) and math.isfinite(p0)):
        raise DomainError(f"DC offsets must be finite, got ({x0!r}, {p0!r})")
    n = x0 * x0 + p0 * p0
    if n == 0.0:
        return DCLeakage(0.0, 0.0, False)
    return DCLeakage(n, math.atan2(p0, x0), True)


def dc_from_effective_leakage(n_le_eff: float, phi_le_0: float) -> tuple[float, float]:
    """Inverse of :func:`effective_leakage_from_dc`."""
    _nonneg("n_le_eff", n_le_eff)
    a = math.sqrt(n_le_eff)
    return a * math.cos(phi_le_0), a * math.sin(phi_le_0)


def n_leak_from_gamma(n_le_eff: float, gamma: float) -> float:
    _nonneg("n_le_eff", n_le_eff)
    _nonneg("gamma", gamma)
    return n_le_eff * gamma


def gamma_from_noise_split(N_Bob: float, N_el: float, n_le_eff: float) -> float:
    """Output noise per effective leakage photon, ``(N_Bob - N_el) / n_le_eff``."""
    _nonneg("N_el", N_el)
    _positive("n_le_eff", n_le_eff)
    if not math.isfinite(N_Bob) or N_Bob < N_el:
        raise DomainError(f"N_Bob={N_Bob!r} must be >= N_el={N_el!r}")
    return (N_Bob - N_el) / n_le_eff


def electrical_noise_from_db(db_below_shot: float) -> float:
    """Electrical noise variance given its level in dB below shot noise."""
    if not math.isfinite(db_below_shot):
        raise DomainError(f"dB value must be finite, got {db_below_shot!r}")
    return 10.0 ** (-db_below_shot / 10.0)


def extinction_ratio_db(n_lo: float, n_le_eff: float) -> float:
    """LO-to-effective-leakage ratio in dB."""
    _positive("n_lo", n_lo)
    _positive("n_le_eff", n_le_eff)
    return 10.0 * math.log10(n_lo / n_le_eff)


@dataclass(frozen=True)
class LeakageEstimate:
    """Leakage quantities for one scheme.

    ``n_le`` and ``alpha`` are None on the DC route, where only the effective
    leakage is observable.
    """

    n_le: float | None
    n_le_eff: float
    alpha: float | None
    phi_le_0: float
    gamma: float
    N_leak: float

    def __post_init__(self) -> None:
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0,1], got {self.alpha!r}")
        if self.n_le is not None and self.alpha is not None:
            if not math.isclose(self.n_le_eff, self.alpha * self.n_le, rel_tol=1e-12, abs_tol=0.0):
                raise DomainError("n_le_eff must equal alpha * n_le")


def time_mux_leakage(n_le: float, delta_t: float, sigma_t: float) -> LeakageEstimate:
    """Leakage estimate for a time-multiplexed scheme (random LO-LE phase)."""
    _nonneg("n_le", n_le)
    alpha = overlap_factor(delta_t, sigma_t)
    n_eff = alpha * n_le
    return LeakageEstimate(
        n_le=n_le, n_le_eff=n_eff, alpha=alpha, phi_le_0=0.0, gamma=2.0, N_leak=2.0 * n_eff
    )


def dc_leakage(x0: float, p0: float, gamma: float) -> LeakageEstimate:
    """Leakage estimate for a phase-stable scheme from measured DC offsets."""
    dc = effective_leakage_from_dc(x0, p0)
    return LeakageEstimate(
        n_le=None,
        n_le_eff=dc.n_le_eff,
        alpha=None,
        phi_le_0=dc.phi_le_0,
        gamma=gamma,
        N_leak=n_leak_from_gamma(dc.n_le_eff, gamma),
    )
