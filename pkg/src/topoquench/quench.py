"""Linear-ramp dynamics of the transverse-field Ising chain in Bogoliubov modes.

Each momentum mode (u_k, v_k) obeys

    i du/dt = +2 (g(t) - cos k) u + 2 sin k v
    i dv/dt = -2 (g(t) - cos k) v + 2 sin k u

with the ramp g(t) = -t / tau_q, starting at t_start = -g_start * tau_q in
the instantaneous ground state and running to t_end <= 0.  Units: hbar = 1.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError, NumericalFailure
from .lattice import LatticeSpec

#: |k -+ pi| below this is outside the validity of the end-of-ramp closed form
EDGE_BAND = 0.1


@dataclass(frozen=True)
class QuenchConfig:
    tau_q: float
    g_start: float = 10.0
    t_end: float = 0.0
    nk: int = 1024
    t_samples: int = 2000
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    k_grid: str = "thermodynamic"
    n_sites: int | None = None
    max_steps: int = 50_000_000

    def __post_init__(self):
        if not (np.isfinite(self.tau_q) and self.tau_q > 0):
            raise ConfigError(f"tau_q must be > 0, got {self.tau_q}")
        if not (np.isfinite(self.g_start) and self.g_start > 1):
            raise ConfigError(f"g_start must be > 1, got {self.g_start}")
        if not (self.t_start <= self.t_end <= 0):
            raise ConfigError(f"t_end must lie in [t_start, 0] = [{self.t_start}, 0], got {self.t_end}")
        if self.t_samples < 1:
            raise ConfigError("t_samples must be >= 1")
        if not (0 < self.rel_tol < 1 and 0 < self.abs_tol < 1):
            raise ConfigError("integrator tolerances must lie in (0, 1)")
        if self.k_grid == "thermodynamic":
            if self.nk < 2 or self.nk % 2:
                raise ConfigError(f"nk must be even and >= 2, got {self.nk}")
        elif self.k_grid == "antiperiodic":
            if self.n_sites is None or self.n_sites < 2 or self.n_sites % 2:
                raise ConfigError(f"antiperiodic grid needs an even n_sites >= 2, got {self.n_sites}")
        else:
            raise ConfigError(f"unknown k_grid {self.k_grid!r}")

    @property
    def t_start(self) -> float:
        return -self.g_start * self.tau_q

    def coupling(self, t):
        return -np.asarray(t, dtype=float) / self.tau_q

    def momenta(self) -> np.ndarray:
        return momentum_grid(self.k_grid, self.nk if self.k_grid == "thermodynamic" else self.n_sites)

    def sample_times(self) -> np.ndarray:
        if self.t_end == self.t_start or self.t_samples == 1:
            return np.array([self.t_end], dtype=float)
        return np.linspace(self.t_start, self.t_end, self.t_samples)


def momentum_grid(kind: str, n: int) -> np.ndarray:
    """Sorted momenta: uniform midpoints on (-pi, pi), or k = +-(2m-1) pi / N."""
    if kind == "thermodynamic":
        return -np.pi + (np.arange(n) + 0.5) * (2 * np.pi / n)
    if kind == "antiperiodic":
        m = np.arange(1, n // 2 + 1)
        pos = (2 * m - 1) * np.pi / n
        return np.concatenate([-pos[::-1], pos])
    raise ConfigError(f"unknown k_grid {kind!r}")


@dataclass(frozen=True)
class BogoliubovMode:
    k: float
    u: complex
    v: complex

    @property
    def norm_sq(self) -> float:
        return abs(self.u) ** 2 + abs(self.v) ** 2


@dataclass
class Trajectory:
    config: QuenchConfig
    times: np.ndarray
    ks: np.ndarray
    u: np.ndarray  # (n_times, n_k)
    v: np.ndarray
    steps: np.ndarray | None = None
    expectation_F: np.ndarray = field(init=False)
    defect_density: np.ndarray = field(init=False)

    def __post_init__(self):
        v_sq = np.abs(self.v) ** 2
        self.expectation_F = expectation_f(v_sq)
        self.defect_density = defect_density(v_sq)

    @property
    def g(self) -> np.ndarray:
        return self.config.coupling(self.times)

    @property
    def v_sq(self) -> np.ndarray:
        return np.abs(self.v) ** 2

    def norm_drift(self) -> float:
        return float(np.max(np.abs(np.abs(self.u) ** 2 + np.abs(self.v) ** 2 - 1.0)))

    def mode(self, i: int, j: int) -> BogoliubovMode:
        return BogoliubovMode(float(self.ks[j]), complex(self.u[i, j]), complex(self.v[i, j]))

    def at(self, t: float) -> int:
        """Index of the sample time equal to ``t`` (to 1e-9 relative)."""
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"t={t} is not a sample time")
        return idx


def bdg_rhs(g, k, u, v):
    """Time derivatives (du/dt, dv/dt) of the Bogoliubov-de Gennes equations."""
    d = 2.0 * (g - np.cos(k))
    s = 2.0 * np.sin(k)
    return -1j * (d * u + s * v), -1j * (-d * v + s * u)


def mode_angle(k, g):
    """Bogoliubov angle theta_k with tan theta = sin k / (g - cos k), u = cos(theta/2)."""
    return np.arctan2(np.sin(k), g - np.cos(k))


def stationary_modes(k, g):
    """Positive-energy eigenvector (u, v) of the mode Hamiltonian at coupling g."""
    th = mode_angle(k, g)
    return np.cos(th / 2) + 0j, np.sin(th / 2) + 0j


def initial_modes(config: QuenchConfig) -> tuple[np.ndarray, np.ndarray]:
    if config.g_start <= 1:
        raise ConfigError("g_start must be > 1")
    return stationary_modes(config.momenta(), config.g_start)


def excitation_probability(k, u, v, g):
    """Weight of (u, v) on the negative-energy eigenvector at coupling g."""
    th = mode_angle(k, g)
    return np.abs(-np.sin(th / 2) * u + np.cos(th / 2) * v) ** 2


def _apply_thread_cap() -> None:
    raw = os.environ.get("TOPOQUENCH_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"TOPOQUENCH_THREADS must be an integer, got {raw!r}")
    if n > 0:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def evolve_modes(ks, config: QuenchConfig, times=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate arbitrary momenta through the ramp of ``config``.

    Returns ``(u, v, steps)`` with ``u, v`` of shape ``(len(times), len(ks))``.
    Integration runs in the instantaneous eigenbasis with the dynamical
    phase removed in closed form; the embedded 5(4) pair then only has to
    resolve the non-adiabatic coupling, and the error is controlled
    against the (conserved) mode norm.
    """
    from . import _kernels

    ks = np.ascontiguousarray(ks, dtype=float)
    times = config.sample_times() if times is None else np.asarray(times, dtype=float)
    if times.size == 0 or np.any(np.diff(times) < 0):
        raise ConfigError("sample times must be non-empty and sorted")
    if times[0] < config.t_start or times[-1] > 0:
        raise ConfigError("sample times must lie in [t_start, 0]")
    _apply_thread_cap()
    u0, v0 = stationary_modes(ks, config.g_start)
    if np.all(times == config.t_start):
        return np.tile(u0, (times.size, 1)), np.tile(v0, (times.size, 1)), np.zeros(ks.size, np.int64)
    U, V, status, steps = _kernels.integrate_modes(
        ks, float(config.tau_q), float(config.t_start), np.ascontiguousarray(times),
        float(config.rel_tol), float(config.abs_tol), np.ascontiguousarray(u0, dtype=complex),
        np.ascontiguousarray(v0, dtype=complex), int(config.max_steps),
    )
    bad = np.flatnonzero(status)
    if bad.size:
        j = bad[0]
        reason = "step-size underflow" if status[j] == _kernels.STATUS_UNDERFLOW else "step budget exhausted"
        raise NumericalFailure(f"mode integration failed ({reason}) at k={ks[j]:.17g}")
    drift = np.max(np.abs(np.abs(U) ** 2 + np.abs(V) ** 2 - 1.0), initial=0.0)
    if drift >= 10 * config.rel_tol:
        raise NumericalFailure(f"norm drift {drift:.3e} exceeds 10*rel_tol")
    return U, V, steps


def evolve_modes_lab(ks, config: QuenchConfig, times=None) -> tuple[np.ndarray, np.ndarray]:
    """Reference route: integrate the lab-frame equations directly with scipy's RK45.

    Much slower than :func:`evolve_modes`; meant for cross-checks on a few modes.
    """
    from scipy.integrate import solve_ivp

    ks = np.asarray(ks, dtype=float)
    times = config.sample_times() if times is None else np.asarray(times, dtype=float)
    u0, v0 = stationary_modes(ks, config.g_start)
    n = ks.size

    def rhs(t, y):
        du, dv = bdg_rhs(-t / config.tau_q, ks, y[:n], y[n:])
        return np.concatenate([du, dv])

    if times[-1] == config.t_start:
        return np.tile(u0, (times.size, 1)), np.tile(v0, (times.size, 1))
    sol = solve_ivp(rhs, (config.t_start, times[-1]), np.concatenate([u0, v0]), method="RK45",
                    t_eval=times, rtol=config.rel_tol, atol=config.abs_tol)
    if not sol.success:
        raise NumericalFailure(sol.message)
    return sol.y[:n].T, sol.y[n:].T


def integrate(config: QuenchConfig, times=None, frame: str = "adiabatic") -> Trajectory:
    """Full trajectory of every mode on the configured momentum grid."""
    ks = config.momenta()
    times = config.sample_times() if times is None else np.asarray(times, dtype=float)
    if frame == "adiabatic":
        u, v, steps = evolve_modes(ks, config, times)
    elif frame == "lab":
        u, v = evolve_modes_lab(ks, config, times)
        steps = None
    else:
        raise ConfigError(f"unknown frame {frame!r}")
    return Trajectory(config, times, ks, u, v, steps)


@dataclass(frozen=True)
class LZParams:
    """Landau-Zener variables of one mode: rescaled time tau and level spacing delta."""

    k: float
    delta: float
    tau: float

    @classmethod
    def at(cls, k: float, t: float, tau_q: float) -> "LZParams":
        s = np.sin(k)
        return cls(k, 1.0 / (4 * tau_q * s * s), 4 * tau_q * s * (t / tau_q + np.cos(k)))

    def rhs(self, u, v):
        """(du/dtau, dv/dtau) of the Landau-Zener form."""
        x = self.tau * self.delta
        return -1j * (-0.5 * x * u + 0.5 * v), -1j * (0.5 * x * v + 0.5 * u)


@dataclass(frozen=True)
class LZCoherence:
    """u v* at the end of the ramp: ``real_part + amplitude * exp(i phi)``.

    The phase phi is not determined by the closed form and stays symbolic.
    """

    real_part: np.ndarray
    amplitude: np.ndarray
    phase: str = "unspecified"

    def evaluate(self, phi):
        return self.real_part + self.amplitude * np.exp(1j * np.asarray(phi))

    def magnitude_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Range of |u v*| over all values of the unspecified phase."""
        lo = np.maximum(np.abs(np.abs(self.real_part) - np.abs(self.amplitude)), 0.0)
        return lo, np.abs(self.real_part) + np.abs(self.amplitude)


class LZFinal(NamedTuple):
    u_sq: np.ndarray
    v_sq: np.ndarray
    coherence: LZCoherence
    in_validity_band: np.ndarray
    physical: np.ndarray


def _lz_exponent(k, tau_q):
    s = np.sin(k)
    return np.exp(-2 * np.pi * tau_q * s * s)


def lz_final(k, tau_q: float) -> LZFinal:
    """End-of-ramp (t = 0) mode populations in the slow-quench limit."""
    if np.any(np.asarray(tau_q) < 1):
        warnings.warn(f"tau_q={tau_q} < 1 is outside the slow-quench regime", stacklevel=2)
    k = np.asarray(k, dtype=float)
    c = np.cos(k)
    e = _lz_exponent(k, tau_q)
    u_sq = (1.0 - c) / 2 + e
    v_sq = 0.5 * (1.0 + c) - e
    half = np.exp(-np.pi * tau_q * np.sin(k) ** 2)
    coh = LZCoherence(0.5 * np.sin(k), np.sign(k) * half * np.sqrt(1 - half))
    band = np.abs(np.abs(k) - np.pi) >= EDGE_BAND
    physical = (u_sq >= 0) & (u_sq <= 1)
    return LZFinal(u_sq, v_sq, coh, band, physical)


def lz_modes(k, tau_q: float) -> np.ndarray:
    """|v_k|^2 of the closed form restricted to the physical range [0, 1]."""
    return np.clip(lz_final(k, tau_q).v_sq, 0.0, 1.0)


def approx_vk2(k, t, tau_q: float, clamp: bool = True):
    """Approximate time-dependent |v_k(t)|^2 during the ramp.

    The adiabatic ground-state population minus the Landau-Zener
    excitation term; negative parts are cut to 0 when ``clamp``.  Where the
    gap closes exactly (k = 0 at t = -tau_q) the adiabatic ratio is replaced
    by its limit along k, which is 0.
    """
    k = np.asarray(k, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t > 0):
        raise DomainError("approx_vk2 needs t <= 0")
    r = t / tau_q
    c = np.cos(k)
    den = np.sqrt(1 + 2 * r * c + r * r)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, (c + r) / den, 0.0)
    val = 0.5 * (1 + ratio) - _lz_exponent(k, tau_q)
    return np.clip(val, 0.0, 1.0) if clamp else val


def approx_expectation_f(t, tau_q: float, nk: int = 4096, clamp: bool = True) -> np.ndarray:
    """<F>(t) from the approximate mode function on the thermodynamic grid."""
    ks = momentum_grid("thermodynamic", nk)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.array([expectation_f(approx_vk2(ks, ti, tau_q, clamp)) for ti in t])


def expectation_f(v_sq) -> np.ndarray | float:
    """<F> = <sigma^x> = 1 - (1/pi) int |v_k|^2 dk over the last axis.

    On both grids (uniform midpoints or the N antiperiodic momenta) this is
    1 - 2 * mean(|v_k|^2).
    """
    out = 1.0 - 2.0 * np.mean(np.asarray(v_sq, dtype=float), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def defect_density(v_sq) -> np.ndarray | float:
    """Fraction of plaquettes with F = -1."""
    out = (1.0 - np.asarray(expectation_f(v_sq))) / 2
    return float(out) if np.ndim(out) == 0 else out


def quasiparticle_counts(v_sq, lattice: LatticeSpec) -> tuple[float, float]:
    """(N_c, N_v): expected Z2 charges and vortices, spread evenly over even/odd plaquettes.

    Uniform split is a modelling assumption: the mapped chain does not
    distinguish the two plaquette sublattices.
    """
    if lattice.lx % 2 or lattice.ly % 2:
        raise DomainError(f"even/odd plaquettes need an even-by-even lattice, got {lattice.lx}x{lattice.ly}")
    n = defect_density(v_sq)
    half = lattice.n_sites / 2
    return n * half, n * half
