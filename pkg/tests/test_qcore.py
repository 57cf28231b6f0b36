import math

import numpy as np
import pytest

from markovkit.qcore import (
    DensityState,
    PureState,
    SystemLayout,
    VerificationError,
    binary_entropy,
    continuity_functions,
    eta,
    eta0,
    fidelity,
    matrix_function,
    mutual_information,
    parse_grouping,
    partial_trace,
    purify,
    qcmi,
    random_pure,
    random_state,
    random_unitary,
    recovery_error_bound,
    reorder,
    tensor_product,
    trace_distance,
    von_neumann_entropy,
)

from helpers import bell_pair, ghz


def qubits(*names):
    return SystemLayout.of(*[(n, 2) for n in names])


class TestLayout:
    def test_total_dim_and_positions(self):
        lay = SystemLayout.of(("A", 2), ("B", 3), ("C", 4))
        assert lay.total_dim == 24
        assert lay.position("B") == 1
        assert lay.dim_of(("A", "C")) == 8

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError):
            SystemLayout.of(("A", 2), ("A", 2))

    def test_subset_keeps_layout_order(self):
        lay = SystemLayout.of(("A", 2), ("B", 3), ("C", 4))
        assert lay.subset(("C", "A")).labels == ("A", "C")


class TestIndexConvention:
    def test_leftmost_most_significant(self):
        # |0>_A |1>_B must sit at index 1 = 0*2 + 1.
        lay = qubits("A", "B")
        v = np.zeros(4)
        v[1] = 1.0
        st = PureState(v, lay).to_density()
        a = partial_trace(st, "A").matrix
        b = partial_trace(st, "B").matrix
        assert np.allclose(a, np.diag([1.0, 0.0]))
        assert np.allclose(b, np.diag([0.0, 1.0]))

    def test_tensor_product_matches_kron(self):
        lay_a = SystemLayout.of(("A", 2))
        lay_b = SystemLayout.of(("B", 2))
        mat, lay = tensor_product([(np.eye(2), lay_a), (np.eye(2), lay_b)])
        assert np.allclose(mat, np.eye(4))
        assert lay.labels == ("A", "B")
        x = np.array([[0, 1], [1, 0]])
        z = np.diag([1.0, -1.0])
        mat, _ = tensor_product([(x, lay_a), (z, lay_b)])
        assert np.allclose(mat, np.kron(x, z))


class TestPartialTrace:
    def test_bell_marginals_maximally_mixed(self):
        st = bell_pair().to_density()
        for lab in ("A", "B"):
            m = partial_trace(st, lab).matrix
            assert np.allclose(m, np.eye(2) / 2, atol=1e-12)

    def test_product_state_factors(self):
        rng = np.random.default_rng(7)
        a = random_state(SystemLayout.of(("A", 2)), seed=rng)
        b = random_state(SystemLayout.of(("B", 3)), seed=rng)
        mat, lay = tensor_product([(a.matrix, a.layout), (b.matrix, b.layout)])
        joint = DensityState(mat, lay)
        assert np.allclose(partial_trace(joint, "A").matrix, a.matrix, atol=1e-12)
        assert np.allclose(partial_trace(joint, "B").matrix, b.matrix, atol=1e-12)

    def test_keep_order_is_layout_order(self):
        rng = np.random.default_rng(8)
        st = random_state(SystemLayout.of(("A", 2), ("B", 3), ("C", 2)), seed=rng)
        kept = partial_trace(st, ("C", "A"))
        assert kept.layout.labels == ("A", "C")
        # Against independent two-step reduction.
        two = partial_trace(partial_trace(st, ("A", "C")), ("A", "C"))
        assert np.allclose(kept.matrix, two.matrix)

    def test_trace_preserved(self):
        rng = np.random.default_rng(9)
        st = random_state(SystemLayout.of(("A", 3), ("B", 2), ("C", 2)), seed=rng)
        for keep in (("A",), ("B",), ("A", "C"), ("A", "B", "C")):
            assert partial_trace(st, keep).matrix.trace() == pytest.approx(1.0, abs=1e-12)

    def test_reorder_roundtrip(self):
        rng = np.random.default_rng(10)
        st = random_state(SystemLayout.of(("A", 2), ("B", 3), ("C", 4)), seed=rng)
        perm = reorder(st, ("C", "A", "B"))
        assert perm.layout.dims == (4, 2, 3)
        back = reorder(perm, ("A", "B", "C"))
        assert np.allclose(back.matrix, st.matrix)
        # Partial trace commutes with reordering.
        assert np.allclose(
            partial_trace(perm, ("A", "B")).matrix,
            partial_trace(st, ("A", "B")).matrix,
        )


class TestMatrixFunction:
    def test_pseudo_inverse_on_support(self):
        m = np.diag([0.5, 0.25, 0.0])
        inv = matrix_function(m, -1.0)
        assert np.allclose(inv, np.diag([2.0, 4.0, 0.0]))

    def test_sqrt_squares_back(self):
        rng = np.random.default_rng(11)
        st = random_state(SystemLayout.of(("A", 4)), rank=3, seed=rng)
        r = matrix_function(st.matrix, 0.5)
        assert np.allclose(r @ r, st.matrix, atol=1e-10)

    def test_rank_deficient_support_respected(self):
        rng = np.random.default_rng(12)
        st = random_state(SystemLayout.of(("A", 4)), rank=2, seed=rng)
        inv = matrix_function(st.matrix, -1.0)
        proj = inv @ st.matrix
        # inv * rho = projector onto the support
        assert np.allclose(proj @ proj, proj, atol=1e-10)
        assert np.isclose(proj.trace().real, 2.0, atol=1e-9)

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(ValueError):
            matrix_function(np.diag([1.0, -0.5]), 0.5)

    def test_imaginary_exponent_is_isometric_on_support(self):
        rng = np.random.default_rng(13)
        st = random_state(SystemLayout.of(("A", 3)), seed=rng)
        u = matrix_function(st.matrix, 0.5 + 0.3j)
        v = matrix_function(st.matrix, 0.5 - 0.3j)
        assert np.allclose(u @ v, st.matrix, atol=1e-10)


class TestEntropy:
    def test_pure_state_zero(self):
        assert von_neumann_entropy(ghz().to_density()) == pytest.approx(0.0, abs=1e-10)

    def test_diag_quarter_three_quarters(self):
        lay = SystemLayout.of(("A", 2))
        st = DensityState(np.diag([0.25, 0.75]), lay)
        assert von_neumann_entropy(st) == pytest.approx(0.8112781244591328, abs=1e-12)

    def test_maximally_mixed(self):
        lay = SystemLayout.of(("A", 8))
        st = DensityState(np.eye(8) / 8, lay)
        assert von_neumann_entropy(st) == pytest.approx(3.0, abs=1e-12)

    def test_unitary_invariance(self):
        rng = np.random.default_rng(14)
        st = random_state(SystemLayout.of(("A", 5)), seed=rng)
        u = random_unitary(5, rng)
        rotated = DensityState(u @ st.matrix @ u.conj().T, st.layout, validate=False)
        assert von_neumann_entropy(rotated) == pytest.approx(von_neumann_entropy(st), abs=1e-10)

    def test_trace_deviation_rejected(self):
        with pytest.raises(ValueError):
            von_neumann_entropy(np.diag([0.7, 0.7]))


class TestQCMI:
    def test_ghz_is_one_bit(self):
        val = qcmi(ghz().to_density(), (("A",), ("B",), ("C",)))
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_bell_with_trivial_conditioner(self):
        st = bell_pair("A", "C").to_density()
        val = qcmi(st, (("A",), (), ("C",)))
        assert val == pytest.approx(2.0, abs=1e-10)

    def test_product_state_zero(self):
        rng = np.random.default_rng(15)
        parts = [random_state(SystemLayout.of((n, 2)), seed=rng) for n in "ABC"]
        mat, lay = tensor_product([(p.matrix, p.layout) for p in parts])
        val = qcmi(DensityState(mat, lay), (("A",), ("B",), ("C",)))
        assert val == pytest.approx(0.0, abs=1e-10)

    def test_ssa_nonnegative_on_random_states(self):
        # Strong subadditivity: QCMI >= 0 for arbitrary states.
        rng = np.random.default_rng(16)
        lay = SystemLayout.of(("A", 2), ("B", 3), ("C", 2))
        for _ in range(25):
            st = random_state(lay, seed=rng)
            assert qcmi(st, (("A",), ("B",), ("C",))) >= 0.0

    def test_grouped_labels(self):
        rng = np.random.default_rng(17)
        lay = SystemLayout.of(("A1", 2), ("A2", 2), ("B", 2), ("C", 2))
        st = random_state(lay, seed=rng)
        val = qcmi(st, (("A1", "A2"), ("B",), ("C",)))
        assert val >= 0.0

    def test_overlapping_groups_rejected(self):
        st = ghz().to_density()
        with pytest.raises(ValueError):
            qcmi(st, (("A", "B"), ("B",), ("C",)))

    def test_invalid_input_raises(self):
        # A non-PSD "state" can push QCMI genuinely negative.
        lay = SystemLayout.of(("A", 2), ("B", 2), ("C", 2))
        mat = np.diag([0.6, 0.5, 0.2, 0.1, 0.1, -0.2, -0.1, -0.2])
        bad = DensityState(mat, lay, validate=False)
        with pytest.raises((VerificationError, ValueError)):
            qcmi(bad, (("A",), ("B",), ("C",)))


class TestDistances:
    def test_trace_distance_extremes(self):
        lay = SystemLayout.of(("A", 2))
        zero = DensityState(np.diag([1.0, 0.0]), lay)
        one = DensityState(np.diag([0.0, 1.0]), lay)
        assert trace_distance(zero, zero) == pytest.approx(0.0, abs=1e-14)
        assert trace_distance(zero, one) == pytest.approx(2.0, abs=1e-14)

    def test_fidelity_extremes(self):
        lay = SystemLayout.of(("A", 2))
        zero = DensityState(np.diag([1.0, 0.0]), lay)
        one = DensityState(np.diag([0.0, 1.0]), lay)
        assert fidelity(zero, zero) == pytest.approx(1.0, abs=1e-12)
        assert fidelity(zero, one) == pytest.approx(0.0, abs=1e-12)

    def test_fidelity_symmetric_and_unitary_invariant(self):
        rng = np.random.default_rng(18)
        lay = SystemLayout.of(("A", 4))
        a = random_state(lay, seed=rng)
        b = random_state(lay, seed=rng)
        assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-10)
        u = random_unitary(4, rng)
        au = DensityState(u @ a.matrix @ u.conj().T, lay, validate=False)
        bu = DensityState(u @ b.matrix @ u.conj().T, lay, validate=False)
        assert fidelity(au, bu) == pytest.approx(fidelity(a, b), abs=1e-10)

    def test_fuchs_van_de_graaf(self):
        rng = np.random.default_rng(19)
        lay = SystemLayout.of(("A", 3))
        for _ in range(50):
            a = random_state(lay, seed=rng)
            b = random_state(lay, seed=rng)
            f = fidelity(a, b)
            half_dist = trace_distance(a, b) / 2.0
            assert 1.0 - math.sqrt(f) <= half_dist + 1e-9
            assert half_dist <= math.sqrt(1.0 - f) + 1e-9

    def test_triangle_inequality(self):
        rng = np.random.default_rng(20)
        lay = SystemLayout.of(("A", 3))
        for _ in range(25):
            a, b, c = (random_state(lay, seed=rng) for _ in range(3))
            assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-12

    def test_contraction_under_partial_trace(self):
        rng = np.random.default_rng(21)
        lay = SystemLayout.of(("A", 2), ("B", 3))
        for _ in range(25):
            a = random_state(lay, seed=rng)
            b = random_state(lay, seed=rng)
            assert trace_distance(partial_trace(a, "A"), partial_trace(b, "A")) \
                <= trace_distance(a, b) + 1e-12


class TestContinuityFunctions:
    def test_eta0_small_and_capped(self):
        assert eta0(0.0) == 0.0
        assert eta0(0.25) == pytest.approx(0.5, abs=1e-12)
        assert eta0(0.5) == pytest.approx(math.log2(math.e) / math.e, abs=1e-12)
        assert eta0(0.9) == eta0(0.5)

    def test_eta0_continuous_at_cap(self):
        x = 1.0 / math.e
        assert eta0(x - 1e-9) == pytest.approx(eta0(x), abs=1e-8)

    def test_eta_monotone(self):
        xs = np.linspace(0, 1.5, 200)
        ys = [eta(float(x)) for x in xs]
        assert all(b >= a - 1e-12 for a, b in zip(ys, ys[1:]))

    def test_binary_entropy_values(self):
        assert binary_entropy(0.5) == pytest.approx(1.0, abs=1e-12)
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.1) == pytest.approx(0.4689955935892812, abs=1e-12)

    def test_recovery_error_bound_frozen_value(self):
        assert recovery_error_bound(0.01, 2) == pytest.approx(0.4489835985777458, abs=1e-9)

    def test_recovery_error_bound_zero(self):
        assert recovery_error_bound(0.0, 5) == 0.0

    def test_bundle_consistent(self):
        out = continuity_functions(0.01, 2)
        assert out["f"] == pytest.approx(recovery_error_bound(0.01, 2), abs=1e-15)
        assert out["h"] == pytest.approx(binary_entropy(0.01), abs=1e-15)
        assert out["eta"] == pytest.approx(0.01 + out["eta0"], abs=1e-15)

    def test_fannes_bound_on_random_pairs(self):
        rng = np.random.default_rng(22)
        lay = SystemLayout.of(("A", 4))
        d = 4
        for _ in range(50):
            a = random_state(lay, seed=rng)
            b = random_state(lay, seed=rng)
            eps = trace_distance(a, b)
            ds = abs(von_neumann_entropy(a) - von_neumann_entropy(b))
            assert ds <= eta(eps) * math.log2(d) + 1e-9

    def test_alicki_fannes_bound_on_random_pairs(self):
        rng = np.random.default_rng(23)
        lay = SystemLayout.of(("A", 2), ("B", 3))
        for _ in range(50):
            a = random_state(lay, seed=rng)
            b = random_state(lay, seed=rng)
            eps = trace_distance(a, b)
            if eps >= 1.0:
                continue
            cond_a = von_neumann_entropy(a) - von_neumann_entropy(partial_trace(a, "B"))
            cond_b = von_neumann_entropy(b) - von_neumann_entropy(partial_trace(b, "B"))
            assert abs(cond_a - cond_b) <= 4.0 * eta(eps) * 1.0 + 1e-9


class TestPurify:
    def test_reference_dim_is_rank(self):
        rng = np.random.default_rng(24)
        st = random_state(SystemLayout.of(("A", 4)), rank=2, seed=rng)
        psi = purify(st)
        assert psi.layout.dims[-1] == 2

    def test_marginal_recovers_state(self):
        rng = np.random.default_rng(25)
        lay = SystemLayout.of(("A", 2), ("B", 3))
        st = random_state(lay, seed=rng)
        psi = purify(st)
        back = partial_trace(psi.to_density(), ("A", "B"))
        assert np.allclose(back.matrix, st.matrix, atol=1e-10)

    def test_label_collision_avoided(self):
        rng = np.random.default_rng(26)
        st = random_state(SystemLayout.of(("R", 2)), seed=rng)
        psi = purify(st)
        assert len(set(psi.layout.labels)) == 2


class TestRandom:
    def test_unitary_is_unitary(self):
        u = random_unitary(6, 12345)
        assert np.allclose(u @ u.conj().T, np.eye(6), atol=1e-12)

    def test_seed_reproducibility(self):
        a = random_unitary(4, 99)
        b = random_unitary(4, 99)
        assert np.array_equal(a, b)
        lay = SystemLayout.of(("A", 3))
        s1 = random_state(lay, seed=5)
        s2 = random_state(lay, seed=5)
        assert np.array_equal(s1.matrix, s2.matrix)
        p1 = random_pure(lay, seed=5)
        p2 = random_pure(lay, seed=5)
        assert np.array_equal(p1.vector, p2.vector)

    def test_rank_control(self):
        lay = SystemLayout.of(("A", 6))
        st = random_state(lay, rank=3, seed=31)
        vals = np.linalg.eigvalsh(st.matrix)
        assert (vals > 1e-10).sum() == 3

    def test_bad_rank_rejected(self):
        lay = SystemLayout.of(("A", 2))
        with pytest.raises(ValueError):
            random_state(lay, rank=5, seed=0)


class TestGroupingParser:
    def test_basic(self):
        lay = SystemLayout.of(("A", 2), ("B", 2), ("C", 2))
        assert parse_grouping("A|B|C", lay) == (("A",), ("B",), ("C",))

    def test_multi_label_groups(self):
        lay = SystemLayout.of(("A1", 2), ("A2", 2), ("B", 2), ("C", 2))
        assert parse_grouping("A1,A2|B|C", lay) == (("A1", "A2"), ("B",), ("C",))

    def test_empty_middle_group(self):
        lay = SystemLayout.of(("A", 2), ("C", 2))
        assert parse_grouping("A||C", lay) == (("A",), (), ("C",))

    def test_non_partition_rejected(self):
        lay = SystemLayout.of(("A", 2), ("B", 2), ("C", 2))
        with pytest.raises(ValueError):
            parse_grouping("A|B", lay)
        with pytest.raises(ValueError):
            parse_grouping("A|B|B", lay)
        with pytest.raises(ValueError):
            parse_grouping("A|B|D", lay)


class TestMutualInformation:
    def test_bell_two_bits(self):
        st = bell_pair().to_density()
        assert mutual_information(st, "A", "B") == pytest.approx(2.0, abs=1e-10)

    def test_product_zero(self):
        rng = np.random.default_rng(27)
        a = random_state(SystemLayout.of(("A", 2)), seed=rng)
        b = random_state(SystemLayout.of(("B", 2)), seed=rng)
        mat, lay = tensor_product([(a.matrix, a.layout), (b.matrix, b.layout)])
        assert mutual_information(DensityState(mat, lay), "A", "B") == pytest.approx(0.0, abs=1e-10)
