"""Dense exact-diagonalization oracle for small chains and plaquette lattices.

Basis convention: site ``s`` is bit ``s`` of the basis index (site 0 is the
least significant bit); ``Z|0> = |0>``, ``Z|1> = -|1>``, ``X`` flips the bit.
On a plaquette lattice, site ``(x, y)`` is bit ``x + lx*y``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from . import _kernels
from .errors import ConfigError, NumericalFailure, SizeLimitError
from .lattice import LatticeSpec, PauliString, chain_decomposition, plaquette, tau_x

MAX_SITES = 14
DENSE_DIM = 1024  # ground states above this use Lanczos
SPECTRUM_DIM = 4096
NORM_TOL = 1e-10


@dataclass(frozen=True)
class HamiltonianSpec:
    """``ising_chain``: H = -sum(g X_n + J Z_n Z_{n+1}).  ``wen_plaquette``: H = -g sum F_i - J sum tau^x_i."""

    kind: str
    g: float
    J: float = 1.0
    n: int | None = None
    pbc: bool = True
    lx: int | None = None
    ly: int | None = None
    convention: str = "yxyx"

    def __post_init__(self):
        if self.kind == "ising_chain":
            if self.n is None or self.n < 2:
                raise ConfigError("ising_chain needs n >= 2")
        elif self.kind == "wen_plaquette":
            if self.lx is None or self.ly is None:
                raise ConfigError("wen_plaquette needs lx and ly")
            LatticeSpec(self.lx, self.ly)
        else:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.n_sites > MAX_SITES:
            raise SizeLimitError(f"{self.n_sites} sites exceeds the dense-ED cap of {MAX_SITES}")

    @property
    def n_sites(self) -> int:
        return self.n if self.kind == "ising_chain" else self.lx * self.ly

    @property
    def lattice(self) -> LatticeSpec:
        if self.kind != "wen_plaquette":
            raise ConfigError("ising_chain has no 2D lattice")
        return LatticeSpec(self.lx, self.ly)


def ising_chain(n: int, g: float, J: float = 1.0, pbc: bool = True) -> HamiltonianSpec:
    return HamiltonianSpec("ising_chain", g, J, n=n, pbc=pbc)


def wen_plaquette(lx: int, ly: int, g: float, J: float = 1.0, convention: str = "yxyx") -> HamiltonianSpec:
    return HamiltonianSpec("wen_plaquette", g, J, lx=lx, ly=ly, convention=convention)


@dataclass
class DenseState:
    n_sites: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2 ** self.n_sites,):
            raise ValueError("amplitude vector has the wrong length")
        if abs(np.linalg.norm(self.amplitudes) - 1.0) > NORM_TOL:
            raise NumericalFailure(f"state norm {np.linalg.norm(self.amplitudes):.15f} is not 1")


def pauli_operator(n_sites: int, letters: dict[int, str], phase: int = 0) -> sp.csr_matrix:
    """Sparse matrix of ``i**phase * prod_s P_s`` with P_s acting on bit s."""
    dim = 2 ** n_sites
    b = np.arange(dim)
    mask = 0
    amp = np.full(dim, 1j ** phase, dtype=complex)
    for s, letter in letters.items():
        bit = (b >> s) & 1
        if letter == "X":
            mask |= 1 << s
        elif letter == "Y":
            mask |= 1 << s
            amp *= np.where(bit == 0, 1j, -1j)
        elif letter == "Z":
            amp *= np.where(bit == 0, 1.0, -1.0)
        elif letter != "I":
            raise ValueError(f"unknown Pauli letter {letter!r}")
    return sp.csr_matrix((amp, (b ^ mask, b)), shape=(dim, dim))


def lattice_operator(p: PauliString) -> sp.csr_matrix:
    lat = p.lattice
    return pauli_operator(lat.n_sites, {lat.index(s): l for s, l in p.letters}, p.phase)


@dataclass
class Hamiltonian:
    """H = g * field_part + J * coupling_part, both stored as CSR matrices."""

    spec: HamiltonianSpec
    field_part: sp.csr_matrix
    coupling_part: sp.csr_matrix
    n_field_terms: int

    @property
    def n_sites(self) -> int:
        return self.spec.n_sites

    def matrix(self, g: float | None = None) -> sp.csr_matrix:
        g = self.spec.g if g is None else g
        return (g * self.field_part + self.spec.J * self.coupling_part).tocsr()

    def apply(self, psi: np.ndarray, g: float | None = None) -> np.ndarray:
        return self.matrix(g) @ psi


def _chain_bonds(n: int, pbc: bool) -> list[tuple[int, int]]:
    bonds = [(i, i + 1) for i in range(n - 1)]
    if pbc and n > 2:
        bonds.append((n - 1, 0))
    return bonds


def build(spec: HamiltonianSpec) -> Hamiltonian:
    """Sparse Hamiltonian; on a periodic 2-site chain the bond is counted once."""
    n = spec.n_sites
    dim = 2 ** n
    field = sp.csr_matrix((dim, dim), dtype=complex)
    coupling = sp.csr_matrix((dim, dim), dtype=complex)
    if spec.kind == "ising_chain":
        for s in range(n):
            field = field - pauli_operator(n, {s: "X"})
        for a, b in _chain_bonds(n, spec.pbc):
            coupling = coupling - pauli_operator(n, {a: "Z", b: "Z"})
        n_field = n
    else:
        lat = spec.lattice
        for site in lat.sites():
            field = field - lattice_operator(plaquette(site, lat, spec.convention))
            coupling = coupling - lattice_operator(tau_x(site, lat))
        n_field = lat.n_sites
    h = Hamiltonian(spec, field.tocsr(), coupling.tocsr(), n_field)
    m = h.matrix()
    if m.nnz and abs(m - m.conj().T).max() > 1e-12:
        raise NumericalFailure("Hamiltonian is not Hermitian")
    return h


def ground_state(spec: HamiltonianSpec) -> tuple[float, DenseState]:
    h = build(spec)
    m = h.matrix()
    dim = m.shape[0]
    if dim <= DENSE_DIM:
        w, v = np.linalg.eigh(m.toarray())
        e0, vec = w[0], v[:, 0]
    else:
        try:
            w, v = eigsh(m, k=1, which="SA", tol=1e-13)
        except Exception as exc:  # ArpackNoConvergence and friends
            raise NumericalFailure(f"ground-state solve failed: {exc}") from exc
        e0, vec = w[0], v[:, 0]
    vec = vec / np.linalg.norm(vec)
    # fix the global phase so the largest amplitude is real positive
    j = int(np.argmax(np.abs(vec)))
    vec = vec * (abs(vec[j]) / vec[j])
    return float(e0), DenseState(spec.n_sites, vec)


def spectrum(spec: HamiltonianSpec) -> np.ndarray:
    h = build(spec)
    if h.matrix().shape[0] > SPECTRUM_DIM:
        raise SizeLimitError("full spectrum is limited to 12 sites")
    return np.linalg.eigvalsh(h.matrix().toarray())


def _expect(op: sp.spmatrix, psi: np.ndarray) -> float:
    val = np.vdot(psi, op @ psi)
    if abs(val.imag) > 1e-10:
        raise NumericalFailure(f"expectation value has imaginary part {val.imag:.3e}")
    return float(val.real)


def measure(state: DenseState, spec: HamiltonianSpec, observable) -> float:
    """Expectation of a named observable.

    ``"sx_avg"`` (chain), ``("zz", r)`` averaged over all sites (chain),
    ``"parity"`` = prod X (chain), ``("F", site)``, ``("plaquette_set", sites)``
    = <prod F_i>, ``"F_avg"``, ``"tau_x_avg"`` (plaquette lattice), or a
    :class:`PauliString` on the plaquette lattice.
    """
    psi = state.amplitudes
    n = spec.n_sites
    if state.n_sites != n:
        raise ConfigError("state and Hamiltonian have different sizes")
    name, arg = (observable, None) if isinstance(observable, (str, PauliString)) else observable
    if isinstance(name, PauliString):
        if spec.kind != "wen_plaquette" or name.lattice != spec.lattice:
            raise ConfigError("Pauli string does not live on this model's lattice")
        return _expect(lattice_operator(name), psi)
    chain_obs = {"sx_avg", "zz", "parity"}
    lattice_obs = {"F", "plaquette_set", "F_avg", "tau_x_avg"}
    if name in chain_obs and spec.kind != "ising_chain":
        raise ConfigError(f"observable {name!r} is defined on ising_chain only")
    if name in lattice_obs and spec.kind != "wen_plaquette":
        raise ConfigError(f"observable {name!r} is defined on wen_plaquette only")
    if name == "sx_avg":
        return float(np.mean([_expect(pauli_operator(n, {s: "X"}), psi) for s in range(n)]))
    if name == "zz":
        r = int(arg)
        if r % n == 0:
            return 1.0
        vals = [_expect(pauli_operator(n, {s: "Z", (s + r) % n: "Z"}), psi) for s in range(n)]
        return float(np.mean(vals))
    if name == "parity":
        return _expect(pauli_operator(n, {s: "X" for s in range(n)}), psi)
    lat = spec.lattice
    if name == "F":
        return _expect(lattice_operator(plaquette(tuple(arg), lat, spec.convention)), psi)
    if name == "plaquette_set":
        prod = PauliString.identity(lat)
        for s in arg:
            prod = prod * plaquette(tuple(s), lat, spec.convention)
        return _expect(lattice_operator(prod), psi)
    if name == "F_avg":
        return float(np.mean([measure(state, spec, ("F", s)) for s in lat.sites()]))
    if name == "tau_x_avg":
        return float(np.mean([_expect(lattice_operator(tau_x(s, lat)), psi) for s in lat.sites()]))
    raise ConfigError(f"unknown observable {observable!r}")


@dataclass
class EvolutionResult:
    state: DenseState
    times: np.ndarray
    states: list[DenseState]
    richardson_error: float | None
    dt: float


def _csr_arrays(m: sp.csr_matrix):
    m = m.tocsr()
    m.sort_indices()
    return (np.ascontiguousarray(m.data, dtype=complex), np.ascontiguousarray(m.indices, dtype=np.int64),
            np.ascontiguousarray(m.indptr, dtype=np.int64))


def _rk4_run(h: Hamiltonian, psi0, t0, sample_times, dt, g0, g_rate):
    A = _csr_arrays(h.field_part)
    B = _csr_arrays((h.spec.J * h.coupling_part).tocsr())
    # scalar offset -n_field*g(t) tracks the fully field-polarized energy
    shift_a = -float(h.n_field_terms)
    psi = np.ascontiguousarray(psi0, dtype=complex)
    t = t0
    out = []
    for ts in sample_times:
        if ts > t:
            psi = _kernels.rk4_segment(*A, *B, g0, g_rate, shift_a, 0.0, psi, t, ts, dt)
            t = ts
        offset = shift_a * (g0 * (t - t0) + 0.5 * g_rate * (t * t - t0 * t0))
        out.append(psi * np.exp(-1j * offset))
    return out


def evolve(h: Hamiltonian, psi0: DenseState, t0: float, sample_times, g0: float, g_rate: float,
           dt: float, richardson: bool = True, richardson_tol: float = 1e-6) -> EvolutionResult:
    """Fixed-step RK4 under H(t) = g(t) field + J coupling with g(t) = g0 + g_rate*t.

    With ``richardson`` the run is repeated at dt/2; the returned states are
    the dt/2 ones and ``richardson_error`` is ||psi_dt - psi_dt/2|| / 15.
    """
    sample_times = np.atleast_1d(np.asarray(sample_times, dtype=float))
    if np.any(np.diff(sample_times) < 0) or sample_times[0] < t0:
        raise ConfigError("sample times must be sorted and >= t0")
    if dt <= 0:
        raise ConfigError("dt must be > 0")
    fine = _rk4_run(h, psi0.amplitudes, t0, sample_times, dt / 2 if richardson else dt, g0, g_rate)
    err = None
    if richardson:
        coarse = _rk4_run(h, psi0.amplitudes, t0, sample_times, dt, g0, g_rate)
        err = max(float(np.linalg.norm(c - f)) / 15 for c, f in zip(coarse, fine))
        if err > richardson_tol:
            raise NumericalFailure(f"Richardson error estimate {err:.3e} exceeds {richardson_tol:.1e}")
    states = []
    for vec in fine:
        drift = abs(np.linalg.norm(vec) - 1.0)
        if drift > NORM_TOL:
            raise NumericalFailure(f"norm drift {drift:.3e} during evolution")
        states.append(DenseState(h.n_sites, vec))
    return EvolutionResult(states[-1], sample_times, states, err, dt / 2 if richardson else dt)


def evolve_quench(spec: HamiltonianSpec, tau_q: float, g_start: float = 10.0, dt_max: float = 0.01,
                  t_end: float = 0.0, sample_times=None, richardson: bool = True) -> EvolutionResult:
    """Start in the ground state at g_start and ramp g(t) = -t/tau_q up to t_end.

    ``spec.g`` is ignored; ``spec.J`` is kept.
    """
    if spec.kind != "ising_chain":
        raise ConfigError("evolve_quench is defined for ising_chain")
    if tau_q <= 0 or g_start <= 0:
        raise ConfigError("tau_q and g_start must be > 0")
    t0 = -g_start * tau_q
    if not t0 <= t_end <= 0:
        raise ConfigError("t_end must lie in [t_start, 0]")
    start_spec = HamiltonianSpec("ising_chain", g_start, spec.J, n=spec.n, pbc=spec.pbc)
    _, psi0 = ground_state(start_spec)
    times = np.array([t_end]) if sample_times is None else np.asarray(sample_times, dtype=float)
    dt = min(dt_max, tau_q / 1e4)
    return evolve(build(start_spec), psi0, t0, times, 0.0, -1.0 / tau_q, dt, richardson=richardson)


def distinct_levels(values, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Cluster sorted eigenvalues; returns (level values, multiplicities)."""
    vals = np.sort(np.asarray(values, dtype=float))
    levels, counts = [], []
    for x in vals:
        if levels and x - levels[-1][-1] <= tol:
            levels[-1].append(x)
            counts[-1] += 1
        else:
            levels.append([x])
            counts.append(1)
    return np.array([np.mean(l) for l in levels]), np.array(counts)


def _chain_sector_spectrum(length: int, g: float, J: float, twist: int) -> np.ndarray:
    """Even-parity spectrum of a periodic chain of ``length`` bonds, last bond multiplied by ``twist``."""
    h = sp.csr_matrix((2 ** length, 2 ** length), dtype=complex)
    for s in range(length):
        h = h - g * pauli_operator(length, {s: "X"})
    for b in range(length):
        a, c = b, (b + 1) % length
        sign = twist if b == length - 1 else 1
        h = h - J * sign * pauli_operator(length, {a: "Z", c: "Z"})
    # prod X is diagonal in the X basis; project onto its +1 eigenspace
    dim = 2 ** length
    parity = np.array([(-1) ** bin(x).count("1") for x in range(dim)])
    hadamard = np.array([[1.0]])
    for _ in range(length):
        hadamard = np.kron(hadamard, np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    hx = hadamard @ h.toarray() @ hadamard
    keep = parity == 1
    return np.linalg.eigvalsh(hx[np.ix_(keep, keep)])


@dataclass
class SpectrumReport:
    lattice: LatticeSpec
    g: float
    J: float
    chain_lengths: list[int]
    wen_levels: np.ndarray
    wen_counts: np.ndarray
    chain_levels: np.ndarray
    chain_counts: np.ndarray
    tol: float
    matched: bool = field(init=False)
    max_deviation: float = field(init=False)
    degeneracy_ratio: np.ndarray | None = field(init=False)

    def __post_init__(self):
        same = len(self.wen_levels) == len(self.chain_levels)
        self.max_deviation = float(np.max(np.abs(self.wen_levels - self.chain_levels))) if same else float("inf")
        self.matched = same and self.max_deviation <= self.tol
        self.degeneracy_ratio = self.wen_counts / self.chain_counts if self.matched else None


def spectrum_match(lattice: LatticeSpec, g: float, J: float, convention: str = "yxyx",
                   tol: float = 1e-8) -> SpectrumReport:
    """Compare the plaquette-model spectrum with its decoupled Ising chains.

    Chains come from :func:`chain_decomposition`.  Each chain contributes its
    even-parity (prod X = +1) spectrum in both boundary sectors: periodic
    and with the closing bond flipped, since the product of tau^x around a
    chain is conserved and takes either sign.  Chains combine independently.
    """
    if lattice.lx % 2 or lattice.ly % 2:
        raise ConfigError("spectrum_match needs even lattice dimensions")
    if lattice.n_sites > 12:
        raise SizeLimitError("spectrum_match is limited to lx*ly <= 12")
    wen = spectrum(wen_plaquette(lattice.lx, lattice.ly, g, J, convention))
    chains = chain_decomposition(lattice, convention)
    lengths = [len(c) for c in chains]
    per_length = {
        L: np.concatenate([_chain_sector_spectrum(L, g, J, tw) for tw in (1, -1)]) for L in set(lengths)
    }
    total = np.array([0.0])
    for L in lengths:
        total = np.add.outer(total, per_length[L]).ravel()
    wl, wc = distinct_levels(wen, tol / 10)
    cl, cc = distinct_levels(total, tol / 10)
    return SpectrumReport(lattice, g, J, lengths, wl, wc, cl, cc, tol)
