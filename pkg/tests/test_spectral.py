import numpy as np
import pytest
from hypothesis import given, strategies as st

from optical_ratchet import model, spectral
from optical_ratchet.model import RingSpec
from optical_ratchet.spectral import (KSet, analytic_spectrum, classify_states, k_sets,
                                      momentum_state, numeric_diagonalize,
                                      ring_classification, ring_eigensystem,
                                      transition_rate_analytic, transition_table)


def _numeric(ring):
    return numeric_diagonalize(model.build_ring_hamiltonian(ring), model.number_operator(ring.n_sites))


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_analytic_matches_numeric(n):
    ring = RingSpec.uniform(n)
    es = _numeric(ring)
    for band, pairs in enumerate(analytic_spectrum(n, ring.omega, ring.hopping)):
        got = np.sort(es.energies[es.band(band)])
        want = np.sort([e for _, e in pairs])
        assert np.allclose(got, want, rtol=1e-10, atol=0)


def test_dimer_has_a_single_bond():
    # the periodic formula would count the one bond twice (splitting 4S)
    es = _numeric(RingSpec.uniform(2))
    assert np.ptp(es.energies[es.band(1)]) == pytest.approx(2 * 0.02)


def test_band_sizes_are_binomial():
    es = _numeric(RingSpec.uniform(6))
    assert [len(es.band(n)) for n in range(7)] == [1, 6, 15, 20, 15, 6, 1]


def test_four_site_first_band():
    ring = RingSpec()
    energies = sorted(e for _, e in analytic_spectrum(4, ring.omega, ring.hopping)[1])
    w, s = ring.omega, ring.hopping
    assert energies == pytest.approx([w - 2 * s, w, w, w + 2 * s], abs=1e-15)
    # bright level sits at 1.8 eV by construction
    assert energies[-1] == pytest.approx(1.8)


def test_k_values_parity_sectors():
    assert np.allclose(spectral.k_values(4, 1), [0, np.pi / 2, np.pi, 3 * np.pi / 2])
    assert np.allclose(spectral.k_values(4, 2), np.pi * np.array([1, 3, 5, 7]) / 4)
    with pytest.raises(ValueError):
        spectral.k_values(4, 5)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_momentum_states_are_eigenstates(n):
    ring = RingSpec.uniform(n)
    H = model.build_ring_hamiltonian(ring)
    for band in range(n + 1):
        for K in k_sets(n, band):
            v = momentum_state(K)
            assert np.allclose(H @ v, K.energy(ring.omega, ring.hopping) * v, atol=1e-12)


@pytest.mark.parametrize("n", [4, 5, 6])
def test_closed_form_weights_match_brute_force(n):
    Jp = model.build_collective_dipole(RingSpec.uniform(n), "raise")
    for band in range(n):
        for K in k_sets(n, band):
            ket = momentum_state(K)
            for Kp in k_sets(n, band + 1):
                brute = abs(momentum_state(Kp).conj() @ Jp @ ket) ** 2
                assert transition_rate_analytic(K, Kp) == pytest.approx(brute, abs=1e-9)


def test_ground_to_bright_weight_is_n():
    # superradiant enhancement: |<k=0|J+|0>|^2 = N
    K0, K1 = KSet((), 4), KSet((0.0,), 4)
    assert transition_rate_analytic(K0, K1) == pytest.approx(4.0)


def test_analytic_rate_argument_checks():
    with pytest.raises(ValueError):
        transition_rate_analytic(KSet((0.0,), 4), KSet((0.0,), 4))
    with pytest.raises(ValueError):
        transition_rate_analytic(KSet((), 4), KSet((0.0,), 5))


def test_ratchet_classification_n4():
    ring = RingSpec()
    es, labels, table = ring_classification(ring)
    ratchets = [m for m, lab in enumerate(labels) if lab == "ratchet"]
    assert len(ratchets) == 3
    energies = sorted(es.energies[ratchets])
    w, s = ring.omega, ring.hopping
    assert energies == pytest.approx([w - 2 * s, w, w], abs=1e-12)
    for m in ratchets:
        assert table.gamma_minus[m] < 1e-9 < table.gamma_plus[m]
    assert labels.count("ground") == 1


def test_transition_table_totals():
    es = ring_eigensystem(RingSpec())
    table = transition_table(es, model.build_collective_dipole(RingSpec(), "raise"))
    # the ground state reaches only the bright state, with weight N
    assert table.gamma_plus[es.band(0)[0]] == pytest.approx(4.0)
    # only adjacent bands carry weight
    b = es.bands
    nz = np.nonzero(table.weights)
    assert np.all(b[nz[1]] == b[nz[0]] + 1)


def test_spectrum_rows_schema():
    rows = spectral.spectrum_rows(RingSpec())
    assert len(rows) == 16
    assert set(rows[0]) == {"band", "energy_eV", "gamma_plus", "gamma_minus", "label"}
    assert sum(r["label"] == "ratchet" for r in rows) == 3


def test_disordered_ring_has_no_k_labels():
    ring = RingSpec(4, (1.70, 1.76, 1.80, 1.75), 0.02)
    es = ring_eigensystem(ring)
    assert es.k_sets is None
    assert np.all(np.diff(es.bands) >= 0)


def test_numeric_diagonalize_rejects_bad_input():
    H = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        numeric_diagonalize(H, np.diag([0.0, 1.0]))
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        numeric_diagonalize(H, np.diag([0.0, 1.0]))


@given(st.floats(0.0, 0.3), st.floats(0.5, 3.0), st.integers(3, 6))
def test_spectrum_property(hopping, omega, n):
    ring = RingSpec.uniform(n, omega, hopping)
    es = _numeric(ring)
    energies = np.concatenate([np.sort([e for _, e in p])
                               for p in analytic_spectrum(n, omega, hopping)])
    assert np.allclose(es.energies, energies, rtol=1e-10, atol=1e-12)
    # total weight out of the ground state is always N
    table = transition_table(es, model.build_collective_dipole(ring, "raise"))
    assert table.gamma_plus[0] == pytest.approx(n)


@given(st.lists(st.floats(1.5, 2.0), min_size=4, max_size=4), st.floats(0.001, 0.05))
def test_eigenvectors_orthonormal_under_disorder(energies, hopping):
    es = _numeric(RingSpec(4, tuple(energies), hopping))
    assert np.allclose(es.vectors.conj().T @ es.vectors, np.eye(16), atol=1e-10)
    labels, _ = classify_states(es, model.build_collective_dipole(RingSpec(), "raise"))
    assert labels[0] == "ground"
