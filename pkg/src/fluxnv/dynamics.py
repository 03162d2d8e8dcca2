"""Vacuum Rabi protocol in the single-excitation collective model.

The protocol: relax to |g,0>, flip the qubit with an ideal pi pulse, jump the
qubit frequency to a chosen detuning from the bright line, hold, read out.
Holds are integrated with the fixed-step RK4 Lindblad scheme of
:mod:`fluxnv.quantum`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .device import BRIGHT, COLLECTIVE_LAYOUT, DARK, EXCITED, GROUND, coupled_hamiltonian_collective
from .errors import CalibrationError, FitError
from .parallel import parallel_map
from .quantum import LindbladPropagator, as_matrix, eigh

logger = logging.getLogger(__name__)

DEFAULT_DT = 0.005
DT_PHASE_LIMIT = 0.02


# --- schedule events -------------------------------------------------------


@dataclass(frozen=True)
class PrepareGround:
    pass


@dataclass(frozen=True)
class PiPulse:
    pass


@dataclass(frozen=True)
class SetDetuning:
    detuning: float


@dataclass(frozen=True)
class Hold:
    duration: float


@dataclass(frozen=True)
class Readout:
    pass


Event = Union[PrepareGround, PiPulse, SetDetuning, Hold, Readout]


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered protocol events. Exactly one ``Readout``, and it comes last.

    Holds before the first ``SetDetuning`` run at ``idle_detuning``.
    """

    events: Tuple[Event, ...]
    idle_detuning: float = 1.0

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        readouts = [i for i, ev in enumerate(events) if isinstance(ev, Readout)]
        if len(readouts) != 1 or readouts[0] != len(events) - 1:
            raise ValueError("schedule needs exactly one readout, as its last event")
        for ev in events:
            if isinstance(ev, Hold) and not ev.duration >= 0:
                raise ValueError(f"hold duration must be >= 0, got {ev.duration}")
            if not isinstance(ev, (PrepareGround, PiPulse, SetDetuning, Hold, Readout)):
                raise ValueError(f"unknown schedule event {ev!r}")

    @classmethod
    def vacuum_rabi(cls, hold: float, detuning: float = 0.0) -> "PulseSchedule":
        return cls((PrepareGround(), PiPulse(), SetDetuning(detuning), Hold(hold), Readout()))


# --- dissipation and readout -------------------------------------------------


@dataclass(frozen=True)
class DissipationSpec:
    """Qubit T1/T2echo plus a dephasing rate for the bright mode.

    Rates follow from the times: relaxation 1/T1 and pure dephasing
    1/T2echo - 1/(2 T1). ``math.inf`` disables a channel. The ensemble
    itself does not relax.
    """

    t1: float = math.inf
    t2echo: float = math.inf
    gamma_ens: float = 0.0

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2echo > 0):
            raise ValueError("t1 and t2echo must be positive")
        if self.gamma_ens < 0:
            raise ValueError("gamma_ens must be non-negative")
        if self.dephasing_rate < -1e-15:
            raise ValueError(f"t2echo={self.t2echo} exceeds 2*t1={2 * self.t1}")

    @classmethod
    def none(cls) -> "DissipationSpec":
        return cls()

    @property
    def relaxation_rate(self) -> float:
        return 1.0 / self.t1

    @property
    def dephasing_rate(self) -> float:
        return 1.0 / self.t2echo - 0.5 / self.t1

    def collapse_operators(self):
        """(operator, rate) pairs on the collective basis.

        sigma_z dephasing at rate r damps qubit coherences at 2r, so it is
        applied at half the pure-dephasing rate.
        """
        lower = np.zeros((4, 4))
        lower[GROUND, EXCITED] = 1.0
        sz = np.diag([-1.0, 1.0, -1.0, -1.0])
        bright = np.zeros((4, 4))
        bright[BRIGHT, BRIGHT] = 1.0
        return [
            (lower, self.relaxation_rate),
            (sz, max(self.dephasing_rate, 0.0) / 2),
            (bright, self.gamma_ens),
        ]


@dataclass(frozen=True)
class ReadoutParams:
    """Affine SQUID readout P_sw = offset + contrast * P(qubit excited)."""

    contrast: float = 0.4
    offset: float = 0.3

    def __post_init__(self):
        if self.contrast < 0 or self.offset < 0 or self.contrast + self.offset > 1:
            raise ValueError(f"need 0 <= offset, 0 <= contrast, offset + contrast <= 1; got {self}")


def readout_map(p_excited, contrast: float = 0.4, offset: float = 0.3):
    ReadoutParams(contrast, offset)
    return offset + contrast * np.asarray(p_excited, dtype=float)


# --- results ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Basis-state populations over the final hold of a schedule."""

    times: np.ndarray
    populations: np.ndarray
    switching_probability: np.ndarray
    detuning: float = 0.0
    final_state: Optional[np.ndarray] = field(default=None, repr=False)
    labels: Tuple[str, ...] = COLLECTIVE_LAYOUT.states

    def __post_init__(self):
        if self.populations.shape != (len(self.times), len(self.labels)):
            raise ValueError("populations must have shape (n_times, n_states)")
        if len(self.switching_probability) != len(self.times):
            raise ValueError("switching probability length must match times")

    @property
    def p_ground(self):
        return self.populations[:, GROUND]

    @property
    def p_excited(self):
        return self.populations[:, EXCITED]

    @property
    def p_bright(self):
        return self.populations[:, BRIGHT]

    @property
    def p_dark(self):
        return self.populations[:, DARK]

    def columns(self) -> dict:
        return {
            "time_ns": self.times,
            "p_ground": self.p_ground,
            "p_qubit_excited": self.p_excited,
            "p_bright": self.p_bright,
            "p_dark": self.p_dark,
            "p_switch": self.switching_probability,
        }

    def to_dict(self) -> dict:
        out = {k: np.asarray(v).tolist() for k, v in self.columns().items()}
        out["detuning_ghz"] = self.detuning
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TimeTrace":
        pops = np.column_stack([d["p_ground"], d["p_qubit_excited"], d["p_bright"], d["p_dark"]])
        return cls(
            np.asarray(d["time_ns"], dtype=float),
            pops.astype(float),
            np.asarray(d["p_switch"], dtype=float),
            float(d.get("detuning_ghz", 0.0)),
        )


@dataclass(frozen=True, eq=False)
class ChevronGrid:
    """Switching probability versus detuning (rows) and hold time (columns)."""

    detunings: np.ndarray
    times: np.ndarray
    values: np.ndarray
    excited: Optional[np.ndarray] = None

    def __post_init__(self):
        shape = (len(self.detunings), len(self.times))
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match axes {shape}")
        if self.excited is not None and self.excited.shape != shape:
            raise ValueError("excited-population matrix does not match axes")

    def to_dict(self) -> dict:
        out = {
            "detuning_ghz": self.detunings.tolist(),
            "time_ns": self.times.tolist(),
            "p_switch": self.values.tolist(),
        }
        if self.excited is not None:
            out["p_qubit_excited"] = self.excited.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ChevronGrid":
        excited = d.get("p_qubit_excited")
        return cls(
            np.asarray(d["detuning_ghz"], dtype=float),
            np.asarray(d["time_ns"], dtype=float),
            np.asarray(d["p_switch"], dtype=float),
            None if excited is None else np.asarray(excited, dtype=float),
        )


# --- protocol execution ----------------------------------------------------


def _pi_pulse(rho: np.ndarray) -> np.ndarray:
    outside = np.real(rho[BRIGHT, BRIGHT] + rho[DARK, DARK])
    if outside > 1e-9:
        raise ValueError("pi pulse with spin excitations present leaves the single-excitation model")
    perm = [EXCITED, GROUND, BRIGHT, DARK]
    return rho[np.ix_(perm, perm)]


def _substeps(duration: float, dt: float) -> Tuple[int, float]:
    n = max(1, math.ceil(duration / dt - 1e-9))
    return n, duration / n


def run_schedule(
    model: Callable[[float], object],
    schedule: PulseSchedule,
    dissipation: DissipationSpec,
    dt: float = DEFAULT_DT,
    samples: int = 401,
    readout: ReadoutParams = ReadoutParams(),
) -> TimeTrace:
    """Execute ``schedule`` and sample ``samples`` points over the final hold.

    ``model`` maps a detuning (GHz) to the 4x4 collective Hamiltonian.
    Detuning changes are sudden: the state is carried over unchanged.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if samples < 1:
        raise ValueError("need at least one sample")
    collapses = dissipation.collapse_operators()
    holds = [i for i, ev in enumerate(schedule.events) if isinstance(ev, Hold)]
    final_hold = holds[-1] if holds else None
    cache = {}

    def propagator(detuning: float, step: float) -> LindbladPropagator:
        key = (detuning, step)
        if key not in cache:
            h = as_matrix(model(detuning))
            w, _ = eigh(h)
            spread = w[-1] - w[0]
            if spread > 0 and step > DT_PHASE_LIMIT / spread * (1 + 1e-9):
                raise ValueError(f"dt={step} ns too coarse for {spread:.3f} GHz; need dt <= {DT_PHASE_LIMIT / spread:.4g}")
            cache[key] = LindbladPropagator(h, collapses, step)
        return cache[key]

    rho = np.zeros((4, 4), dtype=np.complex128)
    rho[GROUND, GROUND] = 1.0
    detuning = schedule.idle_detuning
    times = np.zeros(1)
    history = rho[None]
    for i, ev in enumerate(schedule.events):
        if isinstance(ev, PrepareGround):
            rho = np.zeros_like(rho)
            rho[GROUND, GROUND] = 1.0
        elif isinstance(ev, PiPulse):
            rho = _pi_pulse(rho)
        elif isinstance(ev, SetDetuning):
            detuning = float(ev.detuning)
        elif isinstance(ev, Hold):
            if i == final_hold and samples > 1:
                if ev.duration == 0:
                    times = np.zeros(samples)
                    history = np.repeat(rho[None], samples, axis=0)
                else:
                    interval = ev.duration / (samples - 1)
                    n_sub, step = _substeps(interval, dt)
                    history = propagator(detuning, step).trajectory(rho, samples, n_sub)
                    times = np.linspace(0.0, ev.duration, samples)
                rho = history[-1]
            else:
                if ev.duration > 0:
                    n_sub, step = _substeps(ev.duration, dt)
                    rho = propagator(detuning, step).advance(rho, n_sub)
                if i == final_hold:
                    times, history = np.array([float(ev.duration)]), rho[None]
    if final_hold is None:
        times, history = np.zeros(1), rho[None]
    pops = np.real(np.einsum("tii->ti", history))
    p_sw = readout_map(pops[:, EXCITED], readout.contrast, readout.offset)
    return TimeTrace(times, pops, p_sw, detuning=detuning, final_state=rho)


def _collective_model(config):
    qp, ep = config.qubit_params(), config.ensemble_params()
    return lambda detuning: coupled_hamiltonian_collective(qp, ep, detuning=detuning)


def vacuum_rabi_trace(
    config,
    t_max: Optional[float] = None,
    dt: Optional[float] = None,
    samples: Optional[int] = None,
    detuning: float = 0.0,
    dissipation: Optional[DissipationSpec] = None,
) -> TimeTrace:
    """Qubit excited, then held at ``detuning`` from the bright line for ``t_max`` ns.

    Unset arguments come from ``config.grid``; ``dissipation`` defaults to
    the config's T1, T2echo and gamma_ens.
    """
    grid = config.grid
    t_max = grid.t_max_ns if t_max is None else t_max
    dt = grid.dt_ns if dt is None else dt
    samples = grid.time_points if samples is None else samples
    if dissipation is None:
        dissipation = config.dissipation()
    schedule = PulseSchedule.vacuum_rabi(t_max, detuning)
    return run_schedule(_collective_model(config), schedule, dissipation, dt, samples, config.readout_params())


def chevron_scan(
    config,
    detunings: Optional[Sequence[float]] = None,
    t_max: Optional[float] = None,
    dt: Optional[float] = None,
    samples: Optional[int] = None,
    dissipation: Optional[DissipationSpec] = None,
    threads: int = 1,
) -> ChevronGrid:
    """One vacuum Rabi trace per detuning, merged in grid order."""
    detunings = config.grid.detuning_axis() if detunings is None else np.asarray(detunings, dtype=float)
    if detunings.size == 0:
        raise ValueError("detuning grid is empty")

    def row(d):
        return vacuum_rabi_trace(config, t_max, dt, samples, float(d), dissipation)

    traces = parallel_map(row, list(detunings), threads)
    return ChevronGrid(
        np.array(detunings, dtype=float),
        traces[0].times,
        np.vstack([tr.switching_probability for tr in traces]),
        np.vstack([tr.p_excited for tr in traces]),
    )


# --- phenomenological decay calibration ------------------------------------


@dataclass(frozen=True)
class GammaCalibration:
    gamma_ens: float
    fitted_decay: float
    target_decay: float
    evaluations: int
    note: str = ""


def _fitted_decay(config, gamma: float, t_max, dt, samples) -> float:
    from .inference import fit_damped_cosine

    cfg = config.with_gamma(gamma)
    trace = vacuum_rabi_trace(cfg, t_max, dt, samples)
    try:
        return fit_damped_cosine(trace.times, trace.p_excited).tau
    except FitError:
        # overdamped: no oscillation left to fit
        return 0.0


def calibrate_gamma(
    target_decay: float,
    config,
    t_max: Optional[float] = None,
    dt: Optional[float] = None,
    samples: Optional[int] = None,
    rtol: float = 0.005,
    gamma_max: float = 1.0,
    max_iter: int = 80,
) -> GammaCalibration:
    """Bright-mode dephasing rate whose resonant trace decays in ``target_decay`` ns.

    Bisection on gamma_ens. The upper end of the bracket grows from 0.01
    until the fitted decay drops below the target, which keeps the search on
    the underdamped side. If gamma_ens = 0 already decays faster than the
    target, 0 is returned with a note.
    """
    if not target_decay > 0:
        raise ValueError("target decay must be positive")
    evals = 0

    def tau(g):
        nonlocal evals
        evals += 1
        return _fitted_decay(config, g, t_max, dt, samples)

    tau0 = tau(0.0)
    if tau0 <= target_decay * (1 + rtol):
        note = f"decay without ensemble dephasing ({tau0:.4g} ns) is already at or below the target"
        logger.warning(note)
        return GammaCalibration(0.0, tau0, target_decay, evals, note)
    lo, hi = 0.0, 0.01
    tau_hi = tau(hi)
    while tau_hi > target_decay:
        lo = hi
        if hi >= gamma_max:
            raise CalibrationError(f"no bracket for a {target_decay} ns decay with gamma_ens in [0, {gamma_max}]")
        hi = min(2 * hi, gamma_max)
        tau_hi = tau(hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        t_mid = tau(mid)
        if abs(t_mid - target_decay) <= rtol * target_decay:
            return GammaCalibration(mid, t_mid, target_decay, evals)
        if t_mid > target_decay:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"bisection did not reach {rtol:.1%} of {target_decay} ns")


__all__ = [
    "ChevronGrid",
    "DissipationSpec",
    "GammaCalibration",
    "Hold",
    "PiPulse",
    "PrepareGround",
    "PulseSchedule",
    "Readout",
    "ReadoutParams",
    "SetDetuning",
    "TimeTrace",
    "calibrate_gamma",
    "chevron_scan",
    "readout_map",
    "run_schedule",
    "vacuum_rabi_trace",
]
