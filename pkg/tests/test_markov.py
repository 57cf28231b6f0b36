"""Tests for Markov decompositions, recovery maps, and the tilde state."""

import numpy as np
import pytest

from markovkit.kidecomp import extend_to_purification, ki_decompose
from markovkit.markov import (
    estimate_zeta,
    is_markov,
    markov_decompose,
    nearest_markov_tilde,
    recovery_from_decomposition,
    split_by_conditioner,
    squeeze_T,
)
from markovkit.qcore import (
    DensityState,
    PureState,
    SystemLayout,
    VerificationError,
    mutual_information,
    partial_trace,
    product_state,
    qcmi,
    random_pure,
    random_state,
    random_unitary,
    reorder,
    trace_distance,
)

from helpers import ghz, mix_with_noise, planted_markov_state


def test_split_by_conditioner():
    layout = SystemLayout.of(("A", 2), ("B1", 2), ("B2", 3), ("C", 2))
    a, b, c = split_by_conditioner(layout, ("B1", "B2"))
    assert a == ("A",) and b == ("B1", "B2") and c == ("C",)
    a, b, c = split_by_conditioner(layout, "B1,B2")
    assert b == ("B1", "B2")


def test_split_rejects_bad_conditioners():
    layout = SystemLayout.of(("A", 2), ("B", 2), ("C", 2))
    with pytest.raises(ValueError):
        split_by_conditioner(layout, ("A", "C"))  # not contiguous
    with pytest.raises(ValueError):
        split_by_conditioner(layout, ("A",))  # nothing to the left
    with pytest.raises(ValueError):
        split_by_conditioner(layout, ())


def test_planted_decomposition_recovers_blocks():
    rng = np.random.default_rng(7)
    state, plant = planted_markov_state(rng)
    md = markov_decompose(state, "B")
    assert md.b_dims == plant["dims"]
    want = np.sort(plant["q"])[::-1]
    assert np.allclose(md.weights, want, atol=1e-9)
    # block states are recovered up to a basis change on bL / bR alone,
    # so spectra must agree
    plant_sorted = sorted(plant["blocks"], key=lambda b: -b[0])
    for entry, (q, sig, phi) in zip(md.entries, plant_sorted):
        assert abs(entry.q - q) < 1e-9
        assert np.allclose(np.linalg.eigvalsh(entry.sigma),
                           np.linalg.eigvalsh(sig), atol=1e-8)
        assert np.allclose(np.linalg.eigvalsh(entry.phi),
                           np.linalg.eigvalsh(phi), atol=1e-8)


@pytest.mark.parametrize("dims", [(1, 2, 2), (2, 1, 2), (2, 2, 1),
                                  (3, 1, 1), (1, 1, 2)])
def test_planted_decomposition_dim_grid(dims):
    b0, bl, br = dims
    rng = np.random.default_rng(100 + 7 * b0 + 3 * bl + br)
    state, plant = planted_markov_state(rng, b0=b0, b_l=bl, b_r=br)
    md = markov_decompose(state, "B")
    assert md.b_dims == dims
    assert np.allclose(md.weights, np.sort(plant["q"])[::-1], atol=1e-9)
    recon = reorder(md.reconstruct(), state.layout.labels)
    assert trace_distance(recon, state) < 1e-8


def test_product_state_puts_everything_in_bL():
    rng = np.random.default_rng(5)
    rho_a = random_state(SystemLayout.of(("A", 2)), seed=rng)
    rho_b = random_state(SystemLayout.of(("B", 3)), seed=rng)
    rho_c = random_state(SystemLayout.of(("C", 2)), seed=rng)
    state = product_state(rho_a, rho_b, rho_c)
    md = markov_decompose(state, "B")
    assert md.b_dims == (1, 3, 1)
    assert np.allclose(md.weights, [1.0], atol=1e-10)
    assert np.allclose(np.linalg.eigvalsh(md.entries[0].phi),
                       np.linalg.eigvalsh(rho_c.matrix), atol=1e-9)


def test_classical_copy_state_is_all_center():
    p = np.array([0.5, 0.3, 0.2])
    dim = 27
    mat = np.zeros((dim, dim), dtype=complex)
    for j, w in enumerate(p):
        mat[j * 9 + j * 3 + j, j * 9 + j * 3 + j] = w
    layout = SystemLayout.of(("A", 3), ("B", 3), ("C", 3))
    state = DensityState(mat, layout)
    md = markov_decompose(state, "B")
    assert md.b_dims == (3, 1, 1)
    assert np.allclose(md.weights, p, atol=1e-10)
    for i, entry in enumerate(md.entries):
        e = np.zeros((3, 3))
        e[i, i] = 1.0
        assert np.allclose(entry.sigma, e, atol=1e-9)
        assert np.allclose(entry.phi, e, atol=1e-9)


def test_ghz_is_not_markov():
    state = ghz().to_density()
    with pytest.raises(VerificationError, match="not Markov"):
        markov_decompose(state, "B")
    report = is_markov(state, "B")
    assert not report.markov
    assert abs(report.qcmi_bits - 1.0) < 1e-9


def test_is_markov_report_on_planted():
    rng = np.random.default_rng(13)
    state, _ = planted_markov_state(rng)
    report = is_markov(state, "B", include_decomposition=True)
    assert report.markov
    assert report.qcmi_bits < 1e-9
    assert report.petz_error_from_bc < 1e-8
    assert report.petz_error_from_ab < 1e-8
    assert report.decomposition is not None
    assert report.epsilon_decomposable_bound < 1e-8


@pytest.mark.parametrize("direction", ["B->AB", "B->BC"])
def test_recovery_exact_on_own_state(direction):
    rng = np.random.default_rng(23)
    state, _ = planted_markov_state(rng)
    md = markov_decompose(state, "B")
    channel = recovery_from_decomposition(md, direction)
    assert channel.completeness_deviation() < 1e-10
    keep = ("B", "C") if direction == "B->AB" else ("A", "B")
    out = channel.apply(partial_trace(state, keep), targets=("B",))
    out = reorder(out, state.layout.labels)
    assert trace_distance(out, state) < 1e-9


@pytest.mark.parametrize("seed,weight", [(31, 0.02), (32, 0.08)])
def test_recovery_error_at_most_twice_the_perturbation(seed, weight):
    rng = np.random.default_rng(seed)
    clean, _ = planted_markov_state(rng)
    noisy = mix_with_noise(clean, rng, weight)
    eps = trace_distance(noisy, clean)
    md = markov_decompose(clean, "B")
    for direction, keep in (("B->AB", ("B", "C")), ("B->BC", ("A", "B"))):
        channel = recovery_from_decomposition(md, direction)
        out = channel.apply(partial_trace(noisy, keep), targets=("B",))
        out = reorder(out, noisy.layout.labels)
        assert trace_distance(out, noisy) <= 2 * eps + 1e-9


def test_recovery_handles_rank_deficient_conditioner():
    rng = np.random.default_rng(41)
    u = random_unitary(3, rng)
    rho_b = DensityState(u @ np.diag([0.6, 0.4, 0.0]) @ u.conj().T,
                         SystemLayout.of(("B", 3)), validate=False)
    state = product_state(random_state(SystemLayout.of(("A", 2)), seed=rng),
                          rho_b,
                          random_state(SystemLayout.of(("C", 2)), seed=rng))
    md = markov_decompose(state, "B")
    assert md.b_dims == (1, 2, 1)
    for direction, keep in (("B->AB", ("B", "C")), ("B->BC", ("A", "B"))):
        channel = recovery_from_decomposition(md, direction)
        assert channel.completeness_deviation() < 1e-10
        out = channel.apply(partial_trace(state, keep), targets=("B",))
        out = reorder(out, state.layout.labels)
        assert trace_distance(out, state) < 1e-9


def test_recovery_direction_validation():
    rng = np.random.default_rng(43)
    state, _ = planted_markov_state(rng)
    md = markov_decompose(state, "B")
    with pytest.raises(ValueError):
        recovery_from_decomposition(md, "C->AB")


def test_squeeze_fixes_block_states():
    rng = np.random.default_rng(53)
    state, _ = planted_markov_state(rng)
    md = markov_decompose(state, "B")
    out, kept = squeeze_T(state, "B", md.gamma_prime, md.b_dims)
    assert abs(kept - 1.0) < 1e-10
    assert trace_distance(out, state) < 1e-10


def test_squeeze_six_eps_bound():
    rng = np.random.default_rng(59)
    clean, _ = planted_markov_state(rng)
    md = markov_decompose(clean, "B")
    for weight in (0.02, 0.08):
        noisy = mix_with_noise(clean, rng, weight)
        eps = trace_distance(noisy, clean)
        out, kept = squeeze_T(noisy, "B", md.gamma_prime, md.b_dims)
        assert kept <= 1.0 + 1e-12
        assert trace_distance(noisy, out) <= 6 * eps + 1e-9


def test_squeeze_reports_lost_weight():
    rng = np.random.default_rng(61)
    u = random_unitary(3, rng)
    rho_b = DensityState(u @ np.diag([0.6, 0.4, 0.0]) @ u.conj().T,
                         SystemLayout.of(("B", 3)), validate=False)
    clean = product_state(random_state(SystemLayout.of(("A", 2)), seed=rng),
                          rho_b,
                          random_state(SystemLayout.of(("C", 2)), seed=rng))
    md = markov_decompose(clean, "B")
    noisy = mix_with_noise(clean, rng, 0.3)  # noise is full rank on B
    out, kept = squeeze_T(noisy, "B", md.gamma_prime, md.b_dims)
    assert kept < 1.0 - 1e-4
    assert abs(np.trace(out.matrix).real - kept) < 1e-10


def test_tilde_of_ghz_is_the_dephased_ghz():
    psi = ghz()
    tilde = nearest_markov_tilde(psi, "A|B|C")
    expect = np.zeros((8, 8), dtype=complex)
    expect[0, 0] = expect[7, 7] = 0.5
    assert np.allclose(tilde.matrix, expect, atol=1e-9)
    assert qcmi(tilde, (("A",), ("B",), ("C",))) < 1e-9
    assert abs(mutual_information(tilde, ("A",), ("B", "C")) - 1.0) < 1e-9


def test_tilde_of_product_state_is_itself():
    layout = SystemLayout.of(("A", 2), ("B", 2), ("C", 2))
    v = np.zeros(8, dtype=complex)
    v[0] = 1.0
    psi = PureState(v, layout)
    tilde = nearest_markov_tilde(psi, "A|B|C")
    assert trace_distance(tilde, psi.to_density()) < 1e-9
    assert mutual_information(tilde, ("A",), ("B", "C")) < 1e-9


@pytest.mark.parametrize("seed", [3, 17, 91])
def test_tilde_invariants_on_random_pure_states(seed):
    layout = SystemLayout.of(("A", 2), ("B", 2), ("C", 2))
    psi = random_pure(layout, seed)
    rho = psi.to_density()
    tilde = nearest_markov_tilde(psi, "A|B|C")
    grouping = (("A",), ("B",), ("C",))
    assert np.allclose(partial_trace(tilde, ("A",)).matrix,
                       partial_trace(rho, ("A",)).matrix, atol=1e-10)
    m = mutual_information(tilde, ("A",), ("B", "C"))
    assert qcmi(rho, grouping) <= m + 1e-9
    assert m <= mutual_information(rho, ("A",), ("B", "C")) + 1e-9


@pytest.mark.parametrize("seed", [5, 29])
def test_tilde_matches_pinched_block_form(seed):
    # rotating the output by (gamma x gamma_prime) must give exactly the
    # pinched version of the rotated pure state: b0 coherences dropped and
    # each block's bL factor replaced by its omega_j marginal
    layout = SystemLayout.of(("A", 2), ("B", 2), ("C", 2))
    psi = random_pure(layout, seed)
    rho_ac = partial_trace(psi.to_density(), ("A", "C"))
    ki = ki_decompose(rho_ac, ("A",))
    form = extend_to_purification(psi, ki)
    tilde = nearest_markov_tilde(psi, "A|B|C")

    (a0, al, ar), (b0, bl, br) = ki.dims, form.b_dims
    d_c = ki.rest.total_dim
    v = form.ki_vector().reshape(a0 * al * ar, b0, bl, br, d_c)
    x = np.einsum("ujlrc,vkmsd->ujlrcvkmsd", v, v.conj())
    pinched = np.zeros_like(x)
    for j, (kb, tb) in enumerate(zip(ki.blocks, form.blocks)):
        w = tb.omega_vec.reshape(kb.a_l_dim, tb.b_l_dim)
        omega_b = np.zeros((bl, bl), dtype=complex)
        omega_b[:tb.b_l_dim, :tb.b_l_dim] = np.einsum("lx,ly->xy", w, w.conj())
        traced = np.einsum("ulrcvlsd->urcvsd", x[:, j, :, :, :, :, j, :, :, :])
        pinched[:, j, :, :, :, :, j, :, :, :] = np.einsum(
            "urcvsd,lm->ulrcvmsd", traced, omega_b)
    dim = a0 * al * ar * b0 * bl * br * d_c
    expected = pinched.reshape(dim, dim)

    rot = np.kron(np.kron(ki.gamma, form.gamma_prime), np.eye(d_c))
    got = rot @ tilde.matrix @ rot.conj().T
    assert np.allclose(got, expected, atol=1e-9)


def test_zeta_vanishes_without_budget():
    psi = ghz()
    assert estimate_zeta(psi, "A|B|C", 0.0, trials=6, seed=1) < 1e-9


def test_zeta_monotone_and_positive():
    psi = ghz()
    z_small = estimate_zeta(psi, "A|B|C", 0.02, trials=6, seed=3)
    z_large = estimate_zeta(psi, "A|B|C", 0.1, trials=6, seed=3)
    assert 0.0 <= z_small <= z_large
    assert z_large > 1e-4
    assert z_large < 4.0


def test_zeta_deterministic_per_seed():
    psi = ghz()
    a = estimate_zeta(psi, "A|B|C", 0.05, trials=4, seed=9)
    b = estimate_zeta(psi, "A|B|C", 0.05, trials=4, seed=9)
    assert a == b


def test_decompose_with_multilabel_sides():
    rng = np.random.default_rng(67)
    state, plant = planted_markov_state(rng, d_a=4)
    mat = state.matrix
    layout = SystemLayout.of(("A1", 2), ("A2", 2), ("B", 8), ("C", 2))
    state2 = DensityState(mat, layout, validate=False)
    md = markov_decompose(state2, "B")
    assert md.b_dims == plant["dims"]
    assert md.a_part.labels == ("A1", "A2")
    recon = reorder(md.reconstruct(), layout.labels)
    assert trace_distance(recon, state2) < 1e-8
