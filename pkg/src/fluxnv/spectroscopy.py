"""Flux-bias spectroscopy: transition frequencies, drive weights, splitting."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .device import (
    BRIGHT,
    DARK,
    EXCITED,
    EnsembleParams,
    QubitParams,
    collective_drive,
    coupled_hamiltonian_collective,
    coupled_hamiltonian_exact,
    epsilon_to_flux,
    exact_drive,
    flux_to_epsilon,
    qubit_hamiltonian,
)
from .errors import NoAvoidedCrossingError
from .parallel import parallel_map
from .quantum import as_matrix, eigh, transition_spectrum

# Transitions weaker than this fraction of the total drive weight are treated
# as invisible.
WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Transitions out of the ground state at each flux bias.

    ``frequencies`` and ``weights`` have shape (n_bias, n_transitions),
    sorted by frequency within each row.
    """

    flux_offsets: np.ndarray  # mPhi0 from 3/2 Phi0
    epsilons: np.ndarray  # GHz
    frequencies: np.ndarray
    weights: np.ndarray
    static_weights: np.ndarray
    model: str = "collective"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.flux_offsets)
        if self.frequencies.shape != self.weights.shape or self.frequencies.shape[0] != n:
            raise ValueError("frequency/weight arrays do not match the bias axis")

    def branches(self, count: int = 2):
        """Frequencies of the ``count`` most strongly driven transitions per bias.

        Rows are sorted by frequency; weaker-than-floor entries are nan.
        """
        out = np.full((len(self.flux_offsets), count), np.nan)
        for i, (f, w) in enumerate(zip(self.frequencies, self.weights)):
            total = w.sum() + self.static_weights[i]
            top = np.argsort(w)[::-1][:count]
            picked = sorted(f[k] for k in top if w[k] > WEIGHT_FLOOR * total)
            out[i, : len(picked)] = picked
        return out

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "flux_offset_mphi0": self.flux_offsets.tolist(),
            "epsilon_ghz": self.epsilons.tolist(),
            "frequency_ghz": self.frequencies.tolist(),
            "weight": self.weights.tolist(),
            "static_weight": self.static_weights.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumResult":
        return cls(
            np.asarray(d["flux_offset_mphi0"], dtype=float),
            np.asarray(d["epsilon_ghz"], dtype=float),
            np.asarray(d["frequency_ghz"], dtype=float),
            np.asarray(d["weight"], dtype=float),
            np.asarray(d["static_weight"], dtype=float),
            d.get("model", "collective"),
            d.get("metadata", {}),
        )


def _hamiltonian_and_drive(qp: QubitParams, ep: EnsembleParams, model: str, n_exact: Optional[int]):
    if model == "collective":
        return coupled_hamiltonian_collective(qp, ep), collective_drive(qp)
    if model == "exact":
        n = int(ep.n_spins) if n_exact is None else n_exact
        return coupled_hamiltonian_exact(qp, ep, n), exact_drive(n)
    raise ValueError(f"unknown model {model!r}; expected 'collective' or 'exact'")


def sweep_spectrum(
    config,
    bias_grid: Optional[Sequence[float]] = None,
    model: str = "collective",
    n_exact: Optional[int] = None,
    threads: int = 1,
) -> SpectrumResult:
    """Diagonalize the coupled Hamiltonian along a flux-bias axis (mPhi0).

    The drive is sigma_z of the qubit current basis; each transition from
    the ground state is weighted by |<k|drive|0>|^2.
    """
    qp, ep = config.qubit_params(), config.ensemble_params()
    bias = config.grid.bias_axis() if bias_grid is None else np.asarray(bias_grid, dtype=float)
    if bias.size == 0:
        raise ValueError("bias grid is empty")
    eps = qp.epsilon + flux_to_epsilon(bias * 1e-3, qp.ip_na)

    def point(e):
        h, d = _hamiltonian_and_drive(replace(qp, epsilon=float(e)), ep, model, n_exact)
        return transition_spectrum(h, d)

    rows = parallel_map(point, list(eps), threads)
    meta = {
        "delta_ghz": qp.delta,
        "ip_na": qp.ip_na,
        "d_ghz": ep.d,
        "e_ghz": ep.e,
        "g_ens_ghz": ep.g_ens,
        "n_spins": ep.n_spins if model == "collective" else (n_exact or int(ep.n_spins)),
    }
    return SpectrumResult(
        bias,
        np.asarray(eps, dtype=float),
        np.array([r[0] for r in rows]),
        np.array([r[1] for r in rows]),
        np.array([r[2] for r in rows]),
        model,
        meta,
    )


def _parabola_vertex(x, y):
    """Vertex of the parabola through three points, or the middle point if degenerate."""
    (x0, x1, x2), (y0, y1, y2) = x, y
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    c = y0 - a * x0**2 - b * x0
    if a <= 0:
        return x1, y1
    xv = -b / (2 * a)
    xv = min(max(xv, x0), x2)
    return xv, min(a * xv**2 + b * xv + c, y1)


def extract_splitting(s: SpectrumResult):
    """Minimum separation of the two driven branches, refined by a parabola.

    Returns ``(gap_ghz, bias_mphi0)``. Raises NoAvoidedCrossingError when
    the minimum is missing, sits on the grid edge, or only one branch is
    ever visible.
    """
    br = s.branches(2)
    sep = br[:, 1] - br[:, 0]
    if not np.any(np.isfinite(sep)):
        raise NoAvoidedCrossingError("only one driven branch: no avoided crossing")
    masked = np.where(np.isfinite(sep), sep, np.inf)
    i = int(np.argmin(masked))
    if i == 0 or i == len(sep) - 1 or not (np.isfinite(sep[i - 1]) and np.isfinite(sep[i + 1])):
        raise NoAvoidedCrossingError("branch separation has no interior minimum on this bias grid")
    x = s.flux_offsets[i - 1 : i + 2]
    xv, gap = _parabola_vertex(x, sep[i - 1 : i + 2])
    return float(gap), float(xv)


class Visibility(NamedTuple):
    bright: float
    dark: float


def _resonant_qubit(qp: QubitParams, ep: EnsembleParams) -> QubitParams:
    target = ep.bright_frequency
    if qp.delta > target:
        raise ValueError(f"qubit gap {qp.delta} GHz exceeds the bright line {target} GHz; no resonance")
    return replace(qp, epsilon=float(np.sqrt(target**2 - qp.delta**2)))


def dark_state_visibility(config, e: Optional[float] = None, n_exact: Optional[int] = None) -> Visibility:
    """Drive weight into the coupled (bright) and antisymmetric (dark) states at resonance.

    The collective model is used by default; ``n_exact`` switches to the
    full model with that many spins. Weights are projected, so eigenstates
    mixing the qubit with the bright mode count toward ``bright``.
    """
    qp, ep = config.qubit_params(), config.ensemble_params()
    if e is not None:
        ep = replace(ep, e=e)
    qp = _resonant_qubit(qp, ep)
    if n_exact is None:
        h, d = coupled_hamiltonian_collective(qp, ep), collective_drive(qp)
        coupled = np.zeros((4, 2))
        coupled[EXCITED, 0] = coupled[BRIGHT, 1] = 1.0
        dark = np.zeros(4)
        dark[DARK] = 1.0
    else:
        h, d = coupled_hamiltonian_exact(qp, ep, n_exact), exact_drive(n_exact)
        coupled, dark = _exact_reference_states(qp, n_exact)
    w, v = eigh(h)
    amp = v.conj().T @ (as_matrix(d) @ v[:, 0])
    weights = np.abs(amp[1:]) ** 2
    states = v[:, 1:]
    p_coupled = np.sum(np.abs(coupled.conj().T @ states) ** 2, axis=0)
    p_dark = np.abs(dark.conj() @ states) ** 2
    return Visibility(float(weights @ p_coupled), float(weights @ p_dark))


def _exact_reference_states(qp: QubitParams, n: int):
    """|e,0...0>, |g,S> and |g,A> in the exact basis.

    S and A are the symmetric and antisymmetric sums over spins of
    (|+1> +- |-1>)/sqrt(2), normalized over the ensemble.
    """
    _, vq = np.linalg.eigh(as_matrix(qubit_hamiltonian(qp)))
    g_vec, e_vec = vq[:, 0], vq[:, 1]
    zero = np.array([1.0, 0.0, 0.0])
    plus, minus = np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])

    def ensemble(single):
        total = 0
        for i in range(n):
            vec = np.ones(1)
            for j in range(n):
                vec = np.kron(vec, single if j == i else zero)
            total = total + vec
        return total / np.sqrt(n)

    sym = ensemble((plus + minus) / np.sqrt(2))
    anti = ensemble((plus - minus) / np.sqrt(2))
    vac = ensemble(zero) / np.sqrt(n)
    coupled = np.column_stack([np.kron(e_vec, vac), np.kron(g_vec, sym)])
    return coupled, np.kron(g_vec, anti)


def flux_axis_for_epsilon(epsilons, ip_na: float = 300.0):
    """Inverse of the bias conversion, in mPhi0."""
    return epsilon_to_flux(epsilons, ip_na) * 1e3
