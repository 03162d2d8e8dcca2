"""Damped-cosine fitting and ensemble-size estimates."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import hilbert

from .device import COUPLING_CONVENTION
from .errors import FitError

TAU_BOUNDS = (0.1, 1e5)
MIN_PERIODS = 4
MIN_POINTS_PER_PERIOD = 8

# Vacuum Rabi splitting read off the measured spectrum (GHz).
MEASURED_G_ENS = 0.070


@dataclass(frozen=True)
class DampedCosineFit:
    """Parameters of ``A exp(-t/tau) cos(2 pi f t + phi) + B``.

    ``amplitude`` is kept non-negative and ``phase`` in (-pi, pi].
    """

    amplitude: float
    tau: float
    frequency: float
    phase: float
    offset: float
    residual_rms: float
    gradient_norm: float = 0.0
    iterations: int = 0

    def model(self, t):
        return damped_cosine(np.asarray(t, dtype=float), self.amplitude, self.tau, self.frequency, self.phase, self.offset)

    @property
    def contrast(self) -> float:
        """Peak-to-peak swing of the oscillation at t = 0."""
        return 2.0 * self.amplitude

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DampedCosineFit":
        return cls(**d)


def damped_cosine(t, amplitude, tau, frequency, phase, offset):
    return amplitude * np.exp(-t / tau) * np.cos(2 * np.pi * frequency * t + phase) + offset


def _fourier_peak(t: np.ndarray, y: np.ndarray) -> float:
    n = len(y)
    dt = t[1] - t[0]
    pad = 16 * n
    spec = np.abs(np.fft.rfft(y * np.hanning(n), pad))
    freqs = np.fft.rfftfreq(pad, dt)
    # anything below one period per record is indistinguishable from drift
    cutoff = 1.0 / (t[-1] - t[0])
    spec[freqs < cutoff] = 0.0
    k = int(np.argmax(spec))
    if k == 0 or spec[k] == 0.0:
        return 0.0
    if 0 < k < len(spec) - 1:
        a, b, c = np.log(spec[k - 1 : k + 2] + 1e-300)
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
        return float(freqs[k] + shift * (freqs[1] - freqs[0]))
    return float(freqs[k])


def _envelope_tau(t: np.ndarray, y: np.ndarray) -> float:
    """Decay time from a weighted linear fit to the log of the analytic-signal envelope."""
    env = np.abs(hilbert(y))
    n = len(t)
    sl = slice(n // 10, n - n // 10)
    tt, ee = t[sl], env[sl]
    keep = ee > 1e-6 * ee.max()
    if keep.sum() < 3:
        return TAU_BOUNDS[1]
    slope, _ = np.polyfit(tt[keep], np.log(ee[keep]), 1, w=ee[keep])
    if slope >= 0:
        return TAU_BOUNDS[1]
    return float(np.clip(-1.0 / slope, *TAU_BOUNDS))


def _linear_seed(t, y, tau, f):
    env = np.exp(-t / tau)
    basis = np.column_stack([env * np.cos(2 * np.pi * f * t), env * np.sin(2 * np.pi * f * t), np.ones_like(t)])
    (c, s, b), *_ = np.linalg.lstsq(basis, y, rcond=None)
    return float(np.hypot(c, s)), float(np.arctan2(-s, c)), float(b)


def fit_damped_cosine(times, values, max_nfev: int = 2000) -> DampedCosineFit:
    """Least-squares fit of a single exponentially damped cosine.

    Seeds: frequency from the zero-padded DFT peak, offset from the mean,
    decay from the log-envelope slope, amplitude and phase from a linear
    solve. Refinement is a bounded trust-region Gauss-Newton
    (``scipy.optimize.least_squares``) over (A, 1/tau, f, phi, B) with
    tau in [0.1, 1e5] ns.

    Raises FitError for a flat trace, fewer than 4 periods, fewer than 8
    samples per period, or when the optimizer runs out of evaluations.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != y.shape:
        raise FitError("times and values must be 1-D arrays of equal length")
    if len(t) < 2 * MIN_POINTS_PER_PERIOD:
        raise FitError(f"insufficient samples: {len(t)} points")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise FitError("trace contains non-finite values")
    steps = np.diff(t)
    dt = steps.mean()
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise FitError("times must be uniformly spaced and increasing")

    b0 = float(y.mean())
    yc = y - b0
    if np.ptp(y) <= 1e-12 * max(1.0, abs(b0)):
        raise FitError("no oscillation detected: trace is constant")
    f0 = _fourier_peak(t, yc)
    if f0 <= 0:
        raise FitError("no oscillation detected: Fourier peak at zero frequency")
    span = t[-1] - t[0]
    if f0 * span < MIN_PERIODS:
        raise FitError(f"insufficient samples: {f0 * span:.2f} periods recorded, need {MIN_PERIODS}")
    if 1.0 / (f0 * dt) < MIN_POINTS_PER_PERIOD:
        raise FitError(f"insufficient samples: {1 / (f0 * dt):.1f} points per period, need {MIN_POINTS_PER_PERIOD}")
    tau0 = _envelope_tau(t, yc)
    a0, phi0, b0 = _linear_seed(t, y, tau0, f0)

    def unpack(p):
        a, rate, f, phi, b = p
        return a, rate, f, phi, b

    def residual(p):
        a, rate, f, phi, b = unpack(p)
        return a * np.exp(-rate * t) * np.cos(2 * np.pi * f * t + phi) + b - y

    def jacobian(p):
        a, rate, f, phi, _ = unpack(p)
        env = np.exp(-rate * t)
        arg = 2 * np.pi * f * t + phi
        c, s = np.cos(arg), np.sin(arg)
        return np.column_stack([env * c, -a * t * env * c, -a * env * s * 2 * np.pi * t, -a * env * s, np.ones_like(t)])

    rate_lo, rate_hi = 1.0 / TAU_BOUNDS[1], 1.0 / TAU_BOUNDS[0]
    p0 = np.array([a0, np.clip(1.0 / tau0, rate_lo, rate_hi), f0, phi0, b0])
    lower = [-np.inf, rate_lo, 0.0, -np.inf, -np.inf]
    upper = [np.inf, rate_hi, np.inf, np.inf, np.inf]
    res = least_squares(
        residual,
        p0,
        jac=jacobian,
        bounds=(lower, upper),
        method="trf",
        x_scale="jac",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=max_nfev,
    )
    if res.status == 0:
        raise FitError(f"fit did not converge within {max_nfev} evaluations")
    a, rate, f, phi, b = unpack(res.x)
    if a < 0:
        a, phi = -a, phi + np.pi
    phi = float(np.angle(np.exp(1j * phi)))
    # gradient of 0.5*|r|^2 with respect to the free (non-clamped) parameters
    grad = res.jac.T @ res.fun
    free = res.active_mask == 0
    return DampedCosineFit(
        amplitude=float(a),
        tau=float(1.0 / rate),
        frequency=float(f),
        phase=phi,
        offset=float(b),
        residual_rms=float(np.sqrt(np.mean(res.fun**2))),
        gradient_norm=float(np.linalg.norm(grad[free])),
        iterations=int(res.nfev),
    )


def fit_time_trace(trace, column: str = "p_qubit_excited") -> DampedCosineFit:
    """Fit one column of a :class:`~fluxnv.dynamics.TimeTrace`."""
    return fit_damped_cosine(trace.times, trace.columns()[column])


def estimate_ensemble_size(g_ens: float, g_single: float) -> float:
    """N = g_ens**2 / (2 g**2); inverse of :func:`fluxnv.device.collective_coupling`."""
    if not g_single > 0:
        raise ValueError("single-spin coupling must be positive")
    return g_ens**2 / (2.0 * (COUPLING_CONVENTION * g_single) ** 2)


def density_cross_check(density_cm3: float, area_um2: float, thickness_um: float) -> float:
    """Number of spins in a slab: density times area times thickness (1 um^3 = 1e-12 cm^3)."""
    if min(density_cm3, area_um2, thickness_um) < 0:
        raise ValueError("density, area and thickness must be non-negative")
    return density_cm3 * area_um2 * thickness_um * 1e-12


def relative_discrepancy(value: float, reference: float) -> float:
    return abs(value - reference) / abs(reference)


@dataclass(frozen=True)
class ConsistencyReport:
    g_ens_model: float
    g_ens_spectroscopy: Optional[float]
    rabi_frequency: Optional[float]
    rabi_decay: Optional[float]
    n_config: float
    n_from_gap: Optional[float]
    n_from_measured_gap: float
    n_from_density: float
    gap_vs_rabi: Optional[float]
    measured_vs_density: float
    coupled: bool
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ConsistencyReport":
        return cls(**d)


def consistency_report(
    spectro_gap: Optional[float],
    rabi_fit: Optional[DampedCosineFit],
    config,
    measured_g_ens: float = MEASURED_G_ENS,
    damped_fit: Optional[DampedCosineFit] = None,
) -> ConsistencyReport:
    """Cross-check the coupling seen in spectroscopy, dynamics and sample density.

    ``spectro_gap`` is ``None`` when no avoided crossing was found.
    """
    ep = config.ensemble_params()
    s = config.sample
    notes = []
    coupled = spectro_gap is not None and spectro_gap > 0 and ep.g_single > 0
    if not coupled:
        notes.append("no coupling: spectrum shows no avoided crossing")
    n_gap = estimate_ensemble_size(spectro_gap, ep.g_single) if coupled else None
    gap_vs_rabi = None
    if coupled and rabi_fit is not None:
        gap_vs_rabi = relative_discrepancy(rabi_fit.frequency, spectro_gap)
    n_measured = estimate_ensemble_size(measured_g_ens, ep.g_single) if ep.g_single > 0 else float("nan")
    n_density = density_cross_check(s.density_cm3, s.area_um2, s.thickness_um)
    measured_vs_density = relative_discrepancy(n_density, n_measured) if n_measured > 0 else float("nan")
    return ConsistencyReport(
        g_ens_model=ep.g_ens,
        g_ens_spectroscopy=spectro_gap if coupled else None,
        rabi_frequency=rabi_fit.frequency if rabi_fit is not None else None,
        rabi_decay=damped_fit.tau if damped_fit is not None else None,
        n_config=ep.n_spins,
        n_from_gap=n_gap,
        n_from_measured_gap=n_measured,
        n_from_density=n_density,
        gap_vs_rabi=gap_vs_rabi,
        measured_vs_density=measured_vs_density,
        coupled=coupled,
        notes=notes,
    )
