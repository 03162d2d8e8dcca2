"""Hamiltonians of a gap-tunable flux qubit coupled to NV spins.

Units: GHz for energies, ns for times, nA for currents, mT for fields.

Two descriptions of the coupled system are provided:

* ``coupled_hamiltonian_exact`` builds the full 2 * 3**n space for a handful
  of identical spins, qubit written in its persistent-current basis.
* ``coupled_hamiltonian_collective`` keeps only the single-excitation
  manifold in the qubit energy basis: {|g,0>, |e,0>, |g,B>, |g,D>} with B the
  symmetric ("bright") and D the antisymmetric ("dark") superposition of the
  |+1> and |-1> spin excitations.

The exact model couples each spin through ``g/2 * sigma_z (x) T``, where
``T = |+1><0| + |-1><0| + h.c.`` carries unit matrix elements on both
transitions. With that convention a single spin opens a gap of sqrt(2) * g,
which is the factor the collective model writes as
``g_ens = sqrt(2 N) * g``. :func:`normalization_calibration` recomputes the
ratio from exact diagonalization.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
from scipy.constants import e as ELEMENTARY_CHARGE
from scipy.optimize import minimize_scalar

from .quantum import (
    SIGMA_X,
    SIGMA_Z,
    Operator,
    as_matrix,
    embed,
    spin1_operators,
    transition_spectrum,
)

MAX_EXACT_SPINS = 6

# Gap of the exact single-spin model divided by sqrt(2) * g. Frozen here and
# checked against exact diagonalization in the test suite.
COUPLING_CONVENTION = 1.0


@dataclass(frozen=True)
class QubitParams:
    """Flux-qubit parameters (GHz, nA, ns)."""

    delta: float = 2.878
    epsilon: float = 0.0
    ip_na: float = 300.0
    t1: float = 150.0
    t2echo: float = 250.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"tunnel splitting delta must be positive, got {self.delta}")
        if not self.t1 > 0 or not self.t2echo > 0:
            raise ValueError("t1 and t2echo must be positive")
        if self.t2echo > 2 * self.t1:
            raise ValueError(f"t2echo={self.t2echo} ns exceeds 2*t1={2 * self.t1} ns")

    @property
    def splitting(self) -> float:
        return float(np.hypot(self.epsilon, self.delta))

    def at_flux(self, phi_offset: float) -> "QubitParams":
        """Copy with epsilon set from a flux offset (units of the flux quantum)."""
        return replace(self, epsilon=flux_to_epsilon(phi_offset, self.ip_na))


@dataclass(frozen=True)
class EnsembleParams:
    """NV ensemble parameters.

    ``g_single`` is the single-spin coupling and ``gamma_ens`` the
    phenomenological dephasing rate of the bright mode (1/ns).
    ``n_spins`` may be fractional for the collective model.
    """

    d: float = 2.878
    e: float = 0.0
    g_single: float = 8.8e-6
    n_spins: float = 3.2e7
    b_parallel: float = 0.0
    gamma_ens: float = 0.0
    g_nv: float = 2.0
    mu_b: float = 0.014

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"zero-field splitting must be positive, got {self.d}")
        if self.e < 0:
            raise ValueError(f"strain splitting must be non-negative, got {self.e}")
        if self.g_single < 0:
            raise ValueError(f"single-spin coupling must be non-negative, got {self.g_single}")
        if not self.n_spins >= 1:
            raise ValueError(f"n_spins must be >= 1, got {self.n_spins}")
        if self.gamma_ens < 0:
            raise ValueError(f"gamma_ens must be non-negative, got {self.gamma_ens}")

    @property
    def zeeman(self) -> float:
        return self.g_nv * self.mu_b * self.b_parallel

    @property
    def g_ens(self) -> float:
        return collective_coupling(self.g_single, self.n_spins)

    @property
    def bright_frequency(self) -> float:
        return self.d + self.e


@dataclass(frozen=True)
class BasisLayout:
    kind: str
    dims: Tuple[int, ...]
    labels: Tuple[str, ...]
    states: Tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))


COLLECTIVE_LAYOUT = BasisLayout("collective", (4,), ("qubit+ensemble",), ("g,0", "e,0", "g,B", "g,D"))
GROUND, EXCITED, BRIGHT, DARK = range(4)


def exact_layout(n: int, levels: int = 3) -> BasisLayout:
    return BasisLayout("exact-N", (2,) + (levels,) * n, ("qubit",) + tuple(f"nv{i}" for i in range(1, n + 1)))


def flux_to_epsilon(phi_offset, ip_na: float = 300.0):
    """Energy bias in GHz for a flux offset from 3/2 flux quanta.

    h * eps = 2 I_p * dPhi and Phi_0 = h / 2e, so eps = I_p * dPhi / e with
    dPhi in units of Phi_0.
    """
    return ip_na * 1e-9 * np.asarray(phi_offset, dtype=float) / ELEMENTARY_CHARGE * 1e-9


def epsilon_to_flux(epsilon, ip_na: float = 300.0):
    return np.asarray(epsilon, dtype=float) * 1e9 * ELEMENTARY_CHARGE / (ip_na * 1e-9)


def collective_coupling(g_single: float, n_spins: float) -> float:
    """g_ens = sqrt(2 N) g; the 2 counts both |0> -> |+-1> transitions."""
    return COUPLING_CONVENTION * float(np.sqrt(2.0 * n_spins)) * g_single


def qubit_hamiltonian(p: QubitParams) -> Operator:
    return Operator(0.5 * (p.delta * SIGMA_X.matrix + p.epsilon * SIGMA_Z.matrix), ("qubit",))


def nv_hamiltonian(p: EnsembleParams) -> Operator:
    s = spin1_operators()
    sx, sy, sz = (s[k].matrix for k in "xyz")
    h = p.d * sz @ sz + p.e * (sx @ sx - sy @ sy) + p.zeeman * sz
    return Operator(h, ("nv",))


def transition_operator(levels: int = 3) -> Operator:
    """|+1><0| + |-1><0| + h.c. in the (|0>, |+1>, |-1>) ordering.

    With ``levels=2`` the spin is truncated to {|0>, |+1>}.
    """
    t = np.zeros((levels, levels))
    t[0, 1:] = 1.0
    t[1:, 0] = 1.0
    return Operator(t, ("nv",))


def _nv_block(p: EnsembleParams, levels: int) -> np.ndarray:
    return as_matrix(nv_hamiltonian(p))[:levels, :levels]


def coupled_hamiltonian_exact(qp: QubitParams, ep: EnsembleParams, n: int, truncated: bool = False) -> Operator:
    """Qubit plus ``n`` identical spins, dimension 2 * 3**n.

    ``truncated=True`` keeps only {|0>, |+1>} of every spin (2 * 2**n).
    """
    n = int(n)
    if not 1 <= n <= MAX_EXACT_SPINS:
        raise ValueError(f"exact model supports 1..{MAX_EXACT_SPINS} spins, got {n}")
    levels = 2 if truncated else 3
    layout = exact_layout(n, levels)
    dims, labels = layout.dims, layout.labels
    h_nv = _nv_block(ep, levels)
    t = transition_operator(levels).matrix
    h = embed(qubit_hamiltonian(qp), 0, dims, labels).matrix.copy()
    sz_q = embed(SIGMA_Z, 0, dims, labels).matrix
    for i in range(1, n + 1):
        h += embed(h_nv, i, dims, labels).matrix
        h += 0.5 * ep.g_single * sz_q @ embed(t, i, dims, labels).matrix
    return Operator(h, labels, dims)


def exact_drive(n: int, truncated: bool = False) -> Operator:
    """Flux drive sigma_z (x) 1 on the exact-model space."""
    layout = exact_layout(n, 2 if truncated else 3)
    return embed(SIGMA_Z, 0, layout.dims, layout.labels)


def coupled_hamiltonian_collective(qp: QubitParams, ep: EnsembleParams, detuning: float | None = None) -> Operator:
    """4x4 single-excitation Hamiltonian in the basis {|g,0>, |e,0>, |g,B>, |g,D>}.

    If ``detuning`` is given the qubit splitting is set to D + E + detuning
    (detuning from the bright line) instead of being computed from ``qp``.
    A non-zero ``b_parallel`` mixes B and D through the Zeeman term.
    """
    f = qp.splitting if detuning is None else ep.bright_frequency + detuning
    h = np.diag([-f / 2, f / 2, -f / 2 + ep.d + ep.e, -f / 2 + ep.d - ep.e]).astype(np.complex128)
    h[EXCITED, BRIGHT] = h[BRIGHT, EXCITED] = ep.g_ens / 2
    h[BRIGHT, DARK] = h[DARK, BRIGHT] = ep.zeeman
    return Operator(h, COLLECTIVE_LAYOUT.labels)


def collective_drive(qp: QubitParams) -> Operator:
    """sigma_z of the current basis, rewritten in the qubit energy basis and
    restricted to the single-excitation manifold."""
    f = qp.splitting
    c, s = qp.epsilon / f, qp.delta / f
    d = np.diag([-c, c, -c, -c]).astype(np.complex128)
    d[GROUND, EXCITED] = d[EXCITED, GROUND] = -s
    return Operator(d, COLLECTIVE_LAYOUT.labels)


def branch_separation(h, drive, floor: float = 1e-12) -> float:
    """Frequency distance between the two most strongly driven transitions.

    Returns nan when fewer than two transitions carry weight above
    ``floor`` times the total.
    """
    freqs, weights, _ = transition_spectrum(h, drive)
    total = weights.sum()
    order = np.argsort(weights)[::-1][:2]
    if len(order) < 2 or total <= 0 or weights[order[1]] <= floor * total:
        return float("nan")
    return float(abs(freqs[order[0]] - freqs[order[1]]))


def exact_gap(qp: QubitParams, ep: EnsembleParams, n: int, truncated: bool = False) -> float:
    """Minimum over energy bias of the exact-model branch separation."""
    drive = exact_drive(n, truncated)

    def sep(eps):
        return branch_separation(coupled_hamiltonian_exact(replace(qp, epsilon=float(eps)), ep, n, truncated), drive)

    target = ep.bright_frequency if not truncated else ep.d + ep.zeeman
    eps_res = float(np.sqrt(max(target**2 - qp.delta**2, 0.0)))
    g_scale = max(np.sqrt(2.0 * n) * ep.g_single, 1e-15)
    width = np.sqrt(8.0 * target * g_scale)
    if eps_res > 0:
        width = max(width, 8.0 * g_scale * target / eps_res)
    lo, hi = max(eps_res - width, 0.0), eps_res + width
    best = sep(eps_res)
    res = minimize_scalar(sep, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * max(hi, 1.0)})
    if np.isfinite(res.fun):
        best = min(best, float(res.fun)) if np.isfinite(best) else float(res.fun)
    return best


def collective_gap(ep: EnsembleParams) -> float:
    """Resonant branch separation of the collective model."""
    h = coupled_hamiltonian_collective(QubitParams(), ep, detuning=0.0)
    return branch_separation(h, collective_drive(QubitParams(delta=ep.bright_frequency)))


def normalization_calibration(g: float = 1e-5, d: float = 2.878) -> float:
    """Exact single-spin gap divided by sqrt(2) * g."""
    ep = EnsembleParams(d=d, e=0.0, g_single=g, n_spins=1)
    qp = QubitParams(delta=d)
    return exact_gap(qp, ep, 1) / (np.sqrt(2.0) * g)


__all__ = [
    "BasisLayout",
    "COLLECTIVE_LAYOUT",
    "COUPLING_CONVENTION",
    "EnsembleParams",
    "QubitParams",
    "branch_separation",
    "collective_coupling",
    "collective_drive",
    "collective_gap",
    "coupled_hamiltonian_collective",
    "coupled_hamiltonian_exact",
    "epsilon_to_flux",
    "exact_drive",
    "exact_gap",
    "exact_layout",
    "flux_to_epsilon",
    "normalization_calibration",
    "nv_hamiltonian",
    "qubit_hamiltonian",
    "transition_operator",
]
