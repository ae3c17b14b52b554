from functools import reduce

import numpy as np
import pytest

from topoquench import ed, quench
from topoquench.errors import ConfigError, NumericalFailure, SizeLimitError
from topoquench.lattice import LatticeSpec, PauliString, plaquette
from topoquench.quench import QuenchConfig

_MATS = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]),
}


def kron_operator(n, letters):
    return reduce(np.kron, [_MATS[letters.get(s, "I")] for s in reversed(range(n))])


def free_fermion_energy(n, g):
    ks = quench.momentum_grid("antiperiodic", n)
    return -np.sum(np.hypot(g - np.cos(ks), np.sin(ks)))


class TestOperators:
    @pytest.mark.parametrize("letters", [{0: "X"}, {1: "Y", 2: "Z"}, {0: "Y", 1: "X", 2: "Y", 3: "X"}, {}])
    def test_matches_kronecker(self, letters):
        np.testing.assert_allclose(ed.pauli_operator(4, letters).toarray(), kron_operator(4, letters), atol=1e-15)

    def test_phase(self):
        np.testing.assert_allclose(ed.pauli_operator(2, {0: "Z"}, phase=1).toarray(),
                                   1j * kron_operator(2, {0: "Z"}))

    def test_lattice_operator_bit_order(self):
        lat = LatticeSpec(2, 3)
        p = PauliString(lat, {(1, 2): "X"})
        # site (1, 2) is bit 1 + 2*2 = 5
        np.testing.assert_allclose(ed.lattice_operator(p).toarray(), kron_operator(6, {5: "X"}))


class TestBuild:
    def test_two_site_ring_counts_bond_once(self):
        h = ed.build(ed.ising_chain(2, 0.0))
        w = np.linalg.eigvalsh(h.matrix().toarray())
        np.testing.assert_allclose(w, [-1, -1, 1, 1], atol=1e-14)

    def test_open_chain(self):
        h = ed.build(ed.ising_chain(4, 0.0, pbc=False))
        assert np.linalg.eigvalsh(h.matrix().toarray())[0] == pytest.approx(-3.0)

    def test_ising_matches_kronecker_sum(self):
        n, g, J = 4, 0.7, 1.3
        ref = sum(-g * kron_operator(n, {s: "X"}) - J * kron_operator(n, {s: "Z", (s + 1) % n: "Z"})
                  for s in range(n))
        np.testing.assert_allclose(ed.build(ed.ising_chain(n, g, J)).matrix().toarray(), ref, atol=1e-14)

    @pytest.mark.parametrize("make", [lambda: ed.ising_chain(15, 1.0), lambda: ed.wen_plaquette(3, 5, 1.0)])
    def test_size_cap(self, make):
        with pytest.raises(SizeLimitError):
            make()

    def test_bad_kind(self):
        with pytest.raises(ConfigError):
            ed.HamiltonianSpec("kitaev", 1.0, n=4)


class TestGroundState:
    @pytest.mark.parametrize("n", [4, 8, 10])
    @pytest.mark.parametrize("g", [0.3, 1.0, 2.5])
    def test_free_fermion_energy(self, n, g):
        e, _ = ed.ground_state(ed.ising_chain(n, g))
        assert e == pytest.approx(free_fermion_energy(n, g), abs=1e-10)

    def test_lanczos_path(self):
        e, psi = ed.ground_state(ed.ising_chain(12, 0.8))
        assert e == pytest.approx(free_fermion_energy(12, 0.8), abs=1e-9)
        assert ed.measure(psi, ed.ising_chain(12, 0.8), "parity") == pytest.approx(1.0, abs=1e-9)

    def test_polarized_limits(self):
        spec = ed.ising_chain(6, 1e6)
        _, psi = ed.ground_state(spec)
        assert ed.measure(psi, spec, "sx_avg") == pytest.approx(1.0, abs=1e-10)
        spec = ed.ising_chain(6, 0.0)
        _, psi = ed.ground_state(spec)
        assert ed.measure(psi, spec, ("zz", 3)) == pytest.approx(1.0, abs=1e-12)

    def test_plaquettes_at_zero_coupling(self):
        spec = ed.wen_plaquette(2, 2, 1.0, 0.0)
        e, psi = ed.ground_state(spec)
        assert e == pytest.approx(-4.0)
        for s in spec.lattice.sites():
            assert ed.measure(psi, spec, ("F", s)) == pytest.approx(1.0, abs=1e-10)
        assert ed.measure(psi, spec, ("plaquette_set", [(0, 0), (1, 0), (0, 1)])) == pytest.approx(1.0, abs=1e-10)

    def test_plaquette_model_field_limit(self):
        spec = ed.wen_plaquette(2, 3, 0.0, 1.0)
        e, psi = ed.ground_state(spec)
        assert e == pytest.approx(-6.0)
        assert ed.measure(psi, spec, "tau_x_avg") == pytest.approx(1.0, abs=1e-10)

    def test_state_norm_checked(self):
        with pytest.raises(NumericalFailure):
            ed.DenseState(2, np.array([1.0, 1.0, 0.0, 0.0]))


class TestMeasure:
    def test_model_mismatch(self):
        chain = ed.ising_chain(4, 1.0)
        _, psi = ed.ground_state(chain)
        with pytest.raises(ConfigError):
            ed.measure(psi, chain, ("F", (0, 0)))
        wen = ed.wen_plaquette(2, 2, 1.0)
        _, psi = ed.ground_state(wen)
        with pytest.raises(ConfigError):
            ed.measure(psi, wen, "sx_avg")

    def test_pauli_string_observable(self):
        wen = ed.wen_plaquette(2, 2, 1.0, 0.5)
        _, psi = ed.ground_state(wen)
        f = plaquette((1, 0), wen.lattice)
        assert ed.measure(psi, wen, f) == pytest.approx(ed.measure(psi, wen, ("F", (1, 0))))

    def test_imaginary_expectation_rejected(self):
        # <Y_0> = 1 in this state, so i*Y_0 has a purely imaginary expectation
        psi = ed.DenseState(2, np.array([1, 1j, 0, 0]) / np.sqrt(2))
        with pytest.raises(NumericalFailure):
            ed._expect(ed.pauli_operator(2, {0: "Y"}, phase=1), psi.amplitudes)


class TestEvolution:
    def test_eigenstate_picks_up_energy_phase(self):
        spec = ed.ising_chain(6, 0.7)
        e, psi = ed.ground_state(spec)
        h = ed.build(spec)
        res = ed.evolve(h, psi, 0.0, [1.0, 3.0], g0=0.7, g_rate=0.0, dt=1e-3)
        for t, st in zip(res.times, res.states):
            np.testing.assert_allclose(st.amplitudes, np.exp(-1j * e * t) * psi.amplitudes, atol=1e-9)

    def test_energy_conserved_at_frozen_coupling(self):
        spec = ed.ising_chain(8, 1.1)
        h = ed.build(spec)
        rng = np.random.default_rng(3)
        vec = rng.normal(size=256) + 1j * rng.normal(size=256)
        psi = ed.DenseState(8, vec / np.linalg.norm(vec))
        m = h.matrix()
        e0 = np.vdot(psi.amplitudes, m @ psi.amplitudes).real
        res = ed.evolve(h, psi, 0.0, [2.0, 5.0], g0=1.1, g_rate=0.0, dt=1e-3)
        for st in res.states:
            assert np.vdot(st.amplitudes, m @ st.amplitudes).real == pytest.approx(e0, abs=1e-9)

    def test_small_ring_matches_free_fermions(self):
        res = ed.evolve_quench(ed.ising_chain(4, 0.0), tau_q=1.0, g_start=5.0)
        sx = ed.measure(res.state, ed.ising_chain(4, 0.0), "sx_avg")
        traj = quench.integrate(QuenchConfig(tau_q=1.0, g_start=5.0, k_grid="antiperiodic", n_sites=4), times=[0.0])
        assert sx == pytest.approx(traj.expectation_F[-1], abs=1e-8)
        assert res.richardson_error < 1e-8

    def test_richardson_guard(self):
        spec = ed.ising_chain(4, 1.0)
        _, psi = ed.ground_state(spec)
        with pytest.raises(NumericalFailure):
            ed.evolve(ed.build(spec), psi, 0.0, [4.0], g0=3.0, g_rate=-0.5, dt=0.2, richardson_tol=1e-14)

    def test_quench_validation(self):
        with pytest.raises(ConfigError):
            ed.evolve_quench(ed.wen_plaquette(2, 2, 1.0), 1.0)
        with pytest.raises(ConfigError):
            ed.evolve_quench(ed.ising_chain(4, 1.0), -1.0)
        with pytest.raises(ConfigError):
            ed.evolve_quench(ed.ising_chain(4, 1.0), 1.0, t_end=1.0)


class TestSpectrumMatch:
    @pytest.mark.parametrize("lx,ly", [(2, 2), (2, 4)])
    @pytest.mark.parametrize("g,J", [(1.0, 1.0), (0.7, 1.0), (1.9, 0.4)])
    def test_levels_match(self, lx, ly, g, J):
        rep = ed.spectrum_match(LatticeSpec(lx, ly), g, J)
        assert rep.matched and rep.max_deviation < 1e-8
        # ratio is reported, not asserted by the mapping; with both boundary
        # sectors per chain the counts coincide on these lattices
        assert np.all(rep.degeneracy_ratio == 1.0)
        assert sum(rep.wen_counts) == 2 ** (lx * ly)

    def test_needs_even_lattice(self):
        with pytest.raises(ConfigError):
            ed.spectrum_match(LatticeSpec(3, 2), 1.0, 1.0)

    def test_distinct_levels(self):
        lv, cnt = ed.distinct_levels([1.0, 1.0 + 1e-12, 2.0, 0.5])
        np.testing.assert_allclose(lv, [0.5, 1.0, 2.0])
        assert list(cnt) == [1, 2, 1]
