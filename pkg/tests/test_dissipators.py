import numpy as np
import pytest
from hypothesis import given, strategies as st

from optical_ratchet import dissipators as dis
from optical_ratchet import model
from optical_ratchet.model import (K_B, BathSpec, Collective, ImperfectionSpec, RingSpec,
                                   ScenarioKind, SingleSite, TrapSpec)


def random_hermitian(d, rng):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return a + a.conj().T


def context(ring=None, omega_t=1.72):
    ring = ring or RingSpec()
    return dis.RedfieldContext(ring, dis.system_eigensystem(ring), omega_t)


@pytest.fixture(scope="module")
def ctx():
    return context()


def all_channels(ctx):
    bath = BathSpec()
    trap = TrapSpec(omega_t=1.72, gamma_x=1e-7)
    imp = ImperfectionSpec(gamma_nr=1e-7, gamma_eea=1e-6)
    return {
        "optical": dis.optical_dissipator(ctx, bath),
        "optical_fd": dis.optical_dissipator(ctx, bath, forced_dark=True),
        "phonon": dis.phonon_dissipator(ctx, bath),
        "trap": dis.trap_decay(ctx, 1e-6),
        "single": dis.single_site_extraction(ctx, trap),
        "collective": dis.collective_extraction(ctx, ScenarioKind.RATCHETS,
                                                TrapSpec(1.72, 0, 1e-7, Collective())),
        "nr": dis.non_radiative_dissipator(ctx, imp),
        "eea": dis.eea_dissipator(ctx, imp),
        "hamiltonian": ctx.hamiltonian_superop(),
    }


def test_bose_einstein_values():
    w, T = 1.8, 5800.0
    assert dis.bose_einstein(w, T) == pytest.approx(1.0 / np.expm1(w / (K_B * T)))
    assert dis.bose_einstein(1.8, 0.0) == 0.0
    assert dis.bose_einstein(10.0, 1.0) == 0.0  # overflow -> no occupancy
    with pytest.raises(ValueError):
        dis.bose_einstein(0.0, 300.0)


def test_power_spectrum_rules():
    S = dis.PowerSpectrum(2.0, 300.0)
    n = dis.bose_einstein(0.05, 300.0)
    assert S(0.05) == pytest.approx(2.0 * (n + 1))
    assert S(-0.05) == pytest.approx(2.0 * n)
    assert S(0.0) == 0.0
    assert np.all(dis.PowerSpectrum(0.0, 300.0)(np.array([-1.0, 1.0])) == 0.0)
    # detailed balance between the two directions
    assert S(-0.05) / S(0.05) == pytest.approx(np.exp(-0.05 / (K_B * 300.0)))


def test_zero_frequency_probe():
    P = dis.ZeroFrequencyProbe(3.0)
    assert np.allclose(P(np.array([0.0, 1e-12, 1e-3])), [3.0, 3.0, 0.0])


def test_vec_is_column_stacking():
    rho = np.arange(9.0).reshape(3, 3)
    v = dis.vec(rho)
    assert v[1] == rho[1, 0] and v[3] == rho[0, 1]
    assert np.array_equal(dis.unvec(v), rho)
    A, B = np.eye(3) * 2, np.diag([1.0, 2.0, 3.0])
    assert np.allclose(dis.sprepost(A, B) @ v, dis.vec(A @ rho @ B))


def test_lindblad_basics():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    L = dis.lindblad_superop(A, 2.0)
    rho = np.diag([0.0, 1.0]).astype(complex)
    drho = L.apply(rho)
    assert np.allclose(drho, np.diag([2.0, -2.0]))
    assert not np.any(dis.lindblad_superop(A, 0.0).matrix)
    assert not np.any(dis.lindblad_superop(np.eye(2), 1.0).matrix)
    with pytest.raises(ValueError):
        dis.lindblad_superop(A, -1.0)


def test_every_channel_preserves_trace_and_hermiticity(ctx):
    rng = np.random.default_rng(7)
    d = ctx.dim
    channels = all_channels(ctx)
    for _ in range(20):
        rho = random_hermitian(d, rng)
        for name, sop in channels.items():
            out = sop.apply(rho)
            scale = max(1.0, np.max(np.abs(sop.matrix)))
            assert abs(np.trace(out)) < 1e-10 * scale, name
            assert np.max(np.abs(out - out.conj().T)) < 1e-10 * scale, name


def test_dimension_is_32_with_trap(ctx):
    assert ctx.dim == 32
    assert all_channels(ctx)["optical"].matrix.shape == (1024, 1024)


def test_optical_rates_match_transition_table():
    # population transfer a -> b equals gamma * S-weight * |<b|A|a>|^2
    ring = RingSpec()
    c = context(ring, None)
    bath = BathSpec()
    D = dis.optical_dissipator(c, bath).matrix
    es = c.eigensystem
    Jp = model.build_collective_dipole(ring, "raise")
    A = es.to_eigenbasis(Jp + Jp.T)
    S = dis.PowerSpectrum(bath.gamma_o, bath.T_o)
    d = c.dim
    for a in range(d):
        for b in range(d):
            if a == b:
                continue
            rate = D[b + d * b, a + d * a].real
            expected = S(es.energies[a] - es.energies[b]) * abs(A[b, a]) ** 2
            assert rate == pytest.approx(expected, rel=1e-9, abs=1e-22)


def test_gibbs_state_is_fixed_point():
    ring = RingSpec()
    T = 300.0
    c = context(ring, None)
    bath = BathSpec(T_o=T, T_p=T)
    L = dis.optical_dissipator(c, bath) + dis.phonon_dissipator(c, bath) + c.hamiltonian_superop()
    e = c.energies
    p = np.exp(-(e - e.min()) / (K_B * T))
    rho = np.diag(p / p.sum()).astype(complex)
    assert np.max(np.abs(L.apply(rho))) < 1e-3 * bath.gamma_o


def test_single_site_extraction_example(ctx):
    trap = TrapSpec(omega_t=1.72, gamma_x=1e-7, extraction=SingleSite(0))
    D = dis.single_site_extraction(ctx, trap)
    # one exciton on site 0, trap in beta, written in the composite eigenbasis
    site = np.zeros(16)
    site[1] = 1.0
    psi = np.kron(site, [1.0, 0.0])
    rho_site = np.outer(psi, psi)
    rho = ctx.to_eigenbasis(rho_site)
    drho = ctx.to_site_basis(D.apply(rho))
    target = np.kron(np.eye(16)[0], [0.0, 1.0])
    idx = int(np.argmax(target))
    assert drho[idx, idx].real == pytest.approx(1e-7)
    # trap already excited: nothing happens
    psi_full = np.kron(site, [0.0, 1.0])
    out = D.apply(ctx.to_eigenbasis(np.outer(psi_full, psi_full)))
    assert np.max(np.abs(out)) < 1e-20
    with pytest.raises(ValueError):
        dis.single_site_extraction(ctx, TrapSpec(1.72, 0, 1e-7, SingleSite(7)))


def test_extraction_zero_rate_is_zero(ctx):
    assert not np.any(dis.single_site_extraction(ctx, TrapSpec(1.72, 0, 0.0)).matrix)
    coll = dis.collective_extraction(ctx, "np", TrapSpec(1.72, 0, 0.0, Collective()))
    assert not np.any(coll.matrix)


def test_collective_extraction_targets(ctx):
    es = ctx.eigensystem
    trap = TrapSpec(1.72, 0, 1.0, Collective())
    for scenario, pick in (("ratchets", np.argmin), ("np", np.argmax)):
        D = dis.collective_extraction(ctx, scenario, trap)
        band1 = es.band(1)
        source = band1[pick(es.energies[band1])]
        rho = np.zeros((ctx.dim, ctx.dim), complex)
        i = 2 * source  # trap beta
        rho[i, i] = 1.0
        drho = D.apply(rho)
        ground_alpha = 2 * es.band(0)[0] + 1
        assert drho[ground_alpha, ground_alpha].real == pytest.approx(1.0)


def test_collective_extraction_needs_uniform_ring():
    ring = RingSpec(4, (1.70, 1.76, 1.80, 1.75))
    c = context(ring)
    with pytest.raises(ValueError):
        dis.collective_extraction(c, "ratchets", TrapSpec(1.72, 0, 1e-7, Collective()))


def test_trapless_context_rejects_trap_channels():
    c = context(None, None)
    with pytest.raises(ValueError):
        dis.trap_decay(c, 1.0)


def test_forced_dark_removes_ratchet_upward_elements(ctx):
    es = ctx.eigensystem
    A = dis.optical_coupling(ctx, forced_dark=True)
    A0 = dis.optical_coupling(ctx)
    for r, label in enumerate(es.labels):
        upper = es.band(es.bands[r] + 1)
        if label == "ratchet":
            assert np.all(A[upper, r] == 0) and np.all(A[r, upper] == 0)
            assert np.any(A0[upper, r] != 0)
    assert np.allclose(A, A.conj().T)


def test_no_phonon_ladder_is_optically_closed():
    ring = RingSpec()
    c = context(ring, None)
    A = dis.optical_coupling(c)
    ladder = dis.optical_ladder(c.eigensystem, A)
    outside = np.setdiff1d(np.arange(16), ladder)
    assert np.max(np.abs(A[np.ix_(outside, ladder)]), initial=0.0) < 1e-12
    # ground state plus the bright state of band 1 are on it
    es = c.eigensystem
    band1 = es.band(1)
    assert es.band(0)[0] in ladder and band1[np.argmax(es.energies[band1])] in ladder


def test_phonons_conserve_excitation_number():
    c = context(None, None)
    D = dis.phonon_dissipator(c, BathSpec(T_p=1000.0))
    n = c.total_excitations
    rho = np.zeros((16, 16), complex)
    rho[5, 5] = 1.0  # a band-1 state
    out = D.apply(rho)
    assert abs(np.real(np.diag(out)) @ n) < 1e-12


def test_eea_feeds_band_one_top(ctx):
    D = dis.eea_dissipator(ctx, ImperfectionSpec(gamma_eea=1.0))
    es = ctx.eigensystem
    m = es.band(2)[0]
    rho = np.zeros((ctx.dim, ctx.dim), complex)
    rho[2 * m, 2 * m] = 1.0
    out = np.real(np.diag(D.apply(rho)))
    band1 = es.band(1)
    top = band1[np.argmax(es.energies[band1])]
    assert out[2 * top] == pytest.approx(1.0)


def test_redfield_rejects_non_hermitian_coupling():
    c = context(None, None)
    A = np.zeros((16, 16))
    A[0, 1] = 1.0
    with pytest.raises(ValueError):
        dis.build_redfield(c, [(A, dis.PowerSpectrum(1.0, 300.0))])


@given(st.floats(100.0, 1e5), st.floats(1e-7, 1e-3))
def test_redfield_trace_property(T, gamma):
    c = context(RingSpec.uniform(3), None)
    D = dis.build_redfield(c, [(c.ring_site_to_eig(model.sigma_z(3, 0)), dis.PowerSpectrum(gamma, T))])
    ones = dis.vec(np.eye(c.dim))
    # trace functional annihilates every column
    assert np.max(np.abs(ones @ D.matrix)) < 1e-12 * max(1.0, gamma)
