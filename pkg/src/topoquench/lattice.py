"""Exact Pauli-string algebra on periodic square lattices.

Phases are kept as integer powers of ``i`` so every operation here is exact.
Sites are ``(x, y)`` tuples, always reduced modulo the lattice extent.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .errors import LatticeMismatchError, SizeLimitError

Site = tuple[int, int]

# (a, b) -> (phase exponent, letter) for the single-site product a·b
_PRODUCT: dict[tuple[str, str], tuple[int, str]] = {}
for _p in "IXYZ":
    _PRODUCT[("I", _p)] = (0, _p)
    _PRODUCT[(_p, "I")] = (0, _p)
    _PRODUCT[(_p, _p)] = (0, "I")
for _a, _b, _c in (("X", "Y", "Z"), ("Y", "Z", "X"), ("Z", "X", "Y")):
    _PRODUCT[(_a, _b)] = (1, _c)
    _PRODUCT[(_b, _a)] = (3, _c)

#: Letter patterns for the plaquette operator, listed for the corners
#: i, i+x, i+x+y, i+y in that order.
CONVENTIONS: dict[str, str] = {
    "yxyx": "YXYX",  # canonical
    "xyxy": "XYXY",  # ordering used in the commutator derivations
}

#: Offsets j - i for which [F_i, tau_j^x] is non-zero, per convention.
ANTICOMMUTING_OFFSETS: dict[str, tuple[Site, Site]] = {
    "yxyx": ((0, 0), (1, 1)),
    "xyxy": ((1, 0), (0, 1)),
}


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic ``lx`` by ``ly`` square lattice."""

    lx: int
    ly: int

    def __post_init__(self):
        if int(self.lx) != self.lx or int(self.ly) != self.ly:
            raise ValueError("lattice extents must be integers")
        if self.lx < 2 or self.ly < 2:
            raise ValueError(f"lattice must be at least 2x2, got {self.lx}x{self.ly}")

    @property
    def n_sites(self) -> int:
        return self.lx * self.ly

    def wrap(self, site: Site) -> Site:
        return (site[0] % self.lx, site[1] % self.ly)

    def shift(self, site: Site, dx: int, dy: int) -> Site:
        return ((site[0] + dx) % self.lx, (site[1] + dy) % self.ly)

    def sites(self) -> list[Site]:
        """All sites in row-major order (x fastest)."""
        return [(x, y) for y in range(self.ly) for x in range(self.lx)]

    def index(self, site: Site) -> int:
        """Linear index ``x + lx*y``; also the bit position in dense states."""
        x, y = self.wrap(site)
        return x + self.lx * y


@dataclass(frozen=True)
class PauliString:
    """``i**phase`` times a tensor product of single-site Pauli letters."""

    lattice: LatticeSpec
    letters: tuple[tuple[Site, str], ...] = ()
    phase: int = 0

    def __init__(self, lattice: LatticeSpec, letters: Mapping[Site, str] | Iterable = (), phase: int = 0):
        items = letters.items() if isinstance(letters, Mapping) else letters
        clean: dict[Site, str] = {}
        for site, letter in items:
            letter = letter.upper()
            if letter not in "IXYZ" or len(letter) != 1:
                raise ValueError(f"unknown Pauli letter {letter!r}")
            s = lattice.wrap(site)
            if s in clean:
                raise ValueError(f"site {s} given twice; use from_factors for products")
            if letter != "I":
                clean[s] = letter
        object.__setattr__(self, "lattice", lattice)
        object.__setattr__(self, "letters", tuple(sorted(clean.items())))
        object.__setattr__(self, "phase", phase % 4)

    @classmethod
    def identity(cls, lattice: LatticeSpec) -> "PauliString":
        return cls(lattice)

    @classmethod
    def single(cls, lattice: LatticeSpec, site: Site, letter: str) -> "PauliString":
        return cls(lattice, {site: letter})

    @classmethod
    def from_factors(cls, lattice: LatticeSpec, factors: Iterable[tuple[Site, str]]) -> "PauliString":
        """Ordered product of single-site factors (sites may repeat)."""
        out = cls.identity(lattice)
        for site, letter in factors:
            out = multiply(out, cls.single(lattice, site, letter))
        return out

    def letter_map(self) -> dict[Site, str]:
        return dict(self.letters)

    def letter(self, site: Site) -> str:
        return self.letter_map().get(self.lattice.wrap(site), "I")

    @property
    def support(self) -> frozenset[Site]:
        return frozenset(s for s, _ in self.letters)

    def is_identity(self) -> bool:
        return not self.letters

    def with_phase(self, phase: int) -> "PauliString":
        return PauliString(self.lattice, self.letters, phase)

    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)

    def __str__(self) -> str:
        pre = ("", "i", "-", "-i")[self.phase]
        body = " ".join(f"{l}{s}" for s, l in self.letters) or "I"
        return pre + body


def _check_same(a: PauliString, b: PauliString) -> None:
    if a.lattice != b.lattice:
        raise LatticeMismatchError(f"lattices differ: {a.lattice} vs {b.lattice}")


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Product ``a·b`` with the accumulated phase."""
    _check_same(a, b)
    letters = a.letter_map()
    phase = a.phase + b.phase
    for site, lb in b.letters:
        p, l = _PRODUCT[(letters.get(site, "I"), lb)]
        phase += p
        letters[site] = l
    return PauliString(a.lattice, letters, phase)


def anticommuting_sites(a: PauliString, b: PauliString) -> int:
    """Number of shared sites carrying different non-identity letters."""
    _check_same(a, b)
    la = a.letter_map()
    return sum(1 for s, l in b.letters if la.get(s, l) != l)


class CommutatorKind(enum.Enum):
    ZERO = "zero"
    NONZERO = "nonzero"


@dataclass(frozen=True)
class CommutatorResult:
    """``[a, b]`` is either zero or ``factor * value``."""

    kind: CommutatorKind
    value: PauliString | None = None
    factor: int = 2

    @property
    def is_zero(self) -> bool:
        return self.kind is CommutatorKind.ZERO


def commutator(a: PauliString, b: PauliString) -> CommutatorResult:
    ab = multiply(a, b)
    ba = multiply(b, a)
    if ab == ba:
        return CommutatorResult(CommutatorKind.ZERO)
    # Pauli strings either commute or anticommute
    assert ab.letters == ba.letters and (ab.phase - ba.phase) % 4 == 2
    return CommutatorResult(CommutatorKind.NONZERO, ab)


def plaquette(site: Site, lattice: LatticeSpec, convention: str = "yxyx") -> PauliString:
    """Plaquette operator F_i with corners i, i+x, i+x+y, i+y."""
    pattern = CONVENTIONS[convention]
    corners = [site, lattice.shift(site, 1, 0), lattice.shift(site, 1, 1), lattice.shift(site, 0, 1)]
    return PauliString.from_factors(lattice, zip(corners, pattern))


def tau_x(site: Site, lattice: LatticeSpec) -> PauliString:
    return PauliString.single(lattice, site, "X")


@dataclass
class RelationFamily:
    name: str
    checked: int = 0
    counterexamples: list[tuple[Site, Site]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples


@dataclass
class VerificationReport:
    lattice: LatticeSpec
    convention: str
    families: list[RelationFamily]

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.families)

    @property
    def n_counterexamples(self) -> int:
        return sum(len(f.counterexamples) for f in self.families)

    def transcript(self) -> str:
        lat = self.lattice
        lines = [f"lattice {lat.lx}x{lat.ly}  convention {self.convention}"]
        for f in self.families:
            status = "ok" if f.passed else "FAIL"
            lines.append(f"  {f.name:<32} checked {f.checked:>6}  counterexamples {len(f.counterexamples):>4}  {status}")
            for i, j in f.counterexamples[:5]:
                lines.append(f"    i={i} j={j}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def verify_mapping(
    lattice: LatticeSpec,
    convention: str = "yxyx",
    max_sites: int = 144,
    plaquette_factory: Callable[[Site, LatticeSpec], PauliString] | None = None,
) -> VerificationReport:
    """Exhaustively check the plaquette / transverse-field commutation algebra.

    For every ordered site pair (i, j) checks ``[F_i, F_j] = 0``,
    ``[tau_i^x, tau_j^x] = 0`` and that ``[F_i, tau_j^x]`` equals
    ``2 F_i tau_j^x`` exactly when ``j - i`` is one of the two anticommuting
    offsets of the convention, and vanishes otherwise.

    Parameters
    ----------
    lattice : LatticeSpec
    convention : {"yxyx", "xyxy"}
        Letter ordering of the plaquette operator.
    max_sites : int
        Exhaustiveness bound; larger lattices are refused, never sampled.
    plaquette_factory : callable, optional
        Replacement plaquette constructor (used for mutation testing).
    """
    if lattice.n_sites > max_sites:
        raise SizeLimitError(
            f"{lattice.lx}x{lattice.ly} has {lattice.n_sites} sites, above the exhaustive bound {max_sites}"
        )
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    make = plaquette_factory or (lambda s, lat: plaquette(s, lat, convention))
    sites = lattice.sites()
    F = {s: make(s, lattice) for s in sites}
    T = {s: tau_x(s, lattice) for s in sites}
    offsets = ANTICOMMUTING_OFFSETS[convention]

    ff = RelationFamily("[F_i, F_j] = 0")
    tt = RelationFamily("[tau_i^x, tau_j^x] = 0")
    ft = RelationFamily("[F_i, tau_j^x] = 2 F_i tau_j^x")
    for i in sites:
        partners = {lattice.shift(i, dx, dy) for dx, dy in offsets}
        for j in sites:
            ff.checked += 1
            if not commutator(F[i], F[j]).is_zero:
                ff.counterexamples.append((i, j))
            tt.checked += 1
            if not commutator(T[i], T[j]).is_zero:
                tt.counterexamples.append((i, j))
            ft.checked += 1
            c = commutator(F[i], T[j])
            if j in partners:
                ok = not c.is_zero and c.value == multiply(F[i], T[j]) and c.factor == 2
            else:
                ok = c.is_zero
            if not ok:
                ft.counterexamples.append((i, j))
    return VerificationReport(lattice, convention, [ff, tt, ft])


def chain_decomposition(lattice: LatticeSpec, convention: str = "yxyx") -> list[list[tuple[Site, Site]]]:
    """Split plaquettes into the decoupled Ising chains of the mapping.

    Every ``tau_j^x`` anticommutes with exactly two plaquettes and so acts as
    a bond between them.  Following bonds from plaquette to plaquette traces
    closed cycles.  Each chain is returned as an ordered list of
    ``(plaquette_site, bond_site)`` where ``bond_site`` links the plaquette to
    the next one along the cycle.
    """
    sites = lattice.sites()
    F = {s: plaquette(s, lattice, convention) for s in sites}
    touching: dict[Site, list[Site]] = {}
    for j in sites:
        t = tau_x(j, lattice)
        touching[j] = [i for i in sites if anticommuting_sites(F[i], t) % 2 == 1]
        if len(touching[j]) != 2:
            raise ValueError(f"tau^x at {j} anticommutes with {len(touching[j])} plaquettes")
    bonds_of: dict[Site, list[Site]] = {s: [] for s in sites}
    for j, (p, q) in touching.items():
        bonds_of[p].append(j)
        bonds_of[q].append(j)

    chains = []
    used_bonds: set[Site] = set()
    for start in sites:
        if any(start == p for ch in chains for p, _ in ch):
            continue
        chain = []
        cur = start
        while True:
            bond = next(b for b in sorted(bonds_of[cur]) if b not in used_bonds)
            used_bonds.add(bond)
            p, q = touching[bond]
            nxt = q if p == cur else p
            chain.append((cur, bond))
            cur = nxt
            if cur == start:
                break
        chains.append(chain)
    return chains
