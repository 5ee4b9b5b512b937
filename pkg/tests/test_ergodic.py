"""Composition engines and rate estimators: frozen examples and oracles."""

import numpy as np
import pytest

from layergeom.ergodic import (SequenceGenerator, Trajectory, drift,
                               exact_jacobian, jacobian_distortion_rate,
                               lipschitz_expansion_rate, log_sup_trajectory,
                               run_append, run_insert, subadditive_rate,
                               top_exponent)
from layergeom.layers import (IDENTITY, RELU, SIGMOID, SILU, TANH, BiasSpec,
                              LayerMap, WeightSpec, sample_weights)
from layergeom.metrics import MetricKind, PairSample


def constant_gen(W, b, form="affine", activation=IDENTITY):
    return SequenceGenerator.constant(LayerMap(form, W, np.asarray(b, float),
                                               activation))


def iid_tanh_gen(dim, seed, scale=None, form="affine"):
    scale = 1.0 / np.sqrt(dim) if scale is None else scale
    return SequenceGenerator.iid(form, TANH, WeightSpec.uniform_box(dim, scale),
                                 BiasSpec.zeros(), seed=seed)


class TestComposition:
    def test_append_identity(self):
        gen = constant_gen(np.eye(2), [0.0, 0.0])
        traj = run_append(gen, [1.0, -2.0], 10)
        assert np.array_equal(traj.points, np.tile([1.0, -2.0], (11, 1)))

    def test_append_translation_telescopes(self):
        b = np.array([0.5, -0.25])
        gen = constant_gen(np.eye(2), b)
        traj = run_append(gen, [0.0, 0.0], 20)
        expected = np.arange(21)[:, None] * b
        assert np.array_equal(traj.points, expected)

    def test_insert_equals_append_for_constant(self):
        rng = np.random.default_rng(0)
        W = rng.normal(size=(2, 2)) * 0.4
        gen = constant_gen(W, rng.normal(size=2), activation=TANH)
        x0 = rng.normal(size=2)
        a = run_append(gen, x0, 15)
        b = run_insert(gen, x0, 15)
        assert np.allclose(a.points, b.points, atol=1e-14)

    def test_single_step_orders_agree(self):
        gen = iid_tanh_gen(3, seed=5)
        x0 = np.full(3, 0.3)
        a = run_append(gen, x0, 1)
        b = run_insert(gen, x0, 1)
        assert np.array_equal(a.points, b.points)

    def test_noncommuting_cycle_orders_differ(self):
        # A shear and a diagonal stretch do not commute: appending applies
        # the newest map last, inserting applies it first.
        shear = LayerMap.affine(np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros(2), IDENTITY)
        diag = LayerMap.affine(np.diag([2.0, 0.5]), np.zeros(2), IDENTITY)
        gen = SequenceGenerator.cycle([shear, diag])
        x0 = np.array([1.0, 1.0])
        a = run_append(gen, x0, 2)     # diag(shear(x0))
        b = run_insert(gen, x0, 2)     # shear(diag(x0))
        expected_append = diag(shear(x0))
        expected_insert = shear(diag(x0))
        assert np.array_equal(a.points[2], expected_append)
        assert np.array_equal(b.points[2], expected_insert)
        assert not np.array_equal(a.points[2], b.points[2])

    def test_dimension_mismatch(self):
        gen = iid_tanh_gen(3, seed=1)
        with pytest.raises(ValueError):
            run_append(gen, [1.0, 2.0], 5)

    def test_overflow_truncates_and_flags(self):
        gen = constant_gen(2.0 * np.eye(1), [0.0])
        traj = run_append(gen, [1.0], 1200)
        assert traj.overflowed
        assert traj.n_steps < 1200
        assert np.abs(traj.points).max() <= 1e300

    def test_bit_reproducible(self):
        gen1 = iid_tanh_gen(3, seed=77)
        gen2 = iid_tanh_gen(3, seed=77)
        t1 = run_append(gen1, np.full(3, 0.5), 50)
        t2 = run_append(gen2, np.full(3, 0.5), 50)
        assert np.array_equal(t1.points, t2.points)


class TestGenerators:
    def test_markov_zero_prob_is_constant(self):
        a = LayerMap.affine(np.eye(2), np.ones(2), IDENTITY)
        b = LayerMap.affine(np.eye(2), -np.ones(2), IDENTITY)
        gen = SequenceGenerator.markov(a, b, 0.0, seed=0)
        assert all(m is a for m in gen.realize(20))

    def test_markov_certain_switch_alternates(self):
        a = LayerMap.affine(np.eye(2), np.ones(2), IDENTITY)
        b = LayerMap.affine(np.eye(2), -np.ones(2), IDENTITY)
        gen = SequenceGenerator.markov(a, b, 1.0, seed=0)
        maps = gen.realize(6)
        assert [m is a for m in maps] == [True, False, True, False, True, False]

    def test_cycle_repeats(self):
        a = LayerMap.affine(np.eye(1), np.ones(1), IDENTITY)
        b = LayerMap.affine(np.eye(1), np.zeros(1), IDENTITY)
        gen = SequenceGenerator.cycle([a, b])
        maps = gen.realize(5)
        assert [m is a for m in maps] == [True, False, True, False, True]

    def test_iid_prefix_stability(self):
        gen = iid_tanh_gen(2, seed=9)
        short = gen.realize(5)
        long = gen.realize(9)
        for s, l in zip(short, long):
            assert np.array_equal(s.weights, l.weights)

    def test_invalid_switch_probability(self):
        a = LayerMap.affine(np.eye(1), np.zeros(1), IDENTITY)
        with pytest.raises(ValueError):
            SequenceGenerator.markov(a, a, 1.5)


class TestSubadditiveRate:
    def test_translation_rate_exact(self):
        gen = constant_gen(np.eye(2), [2.0, 0.0])
        traj = run_append(gen, [0.0, 0.0], 500)
        est = subadditive_rate(traj, MetricKind.euclidean())
        assert est.lam == 2.0
        assert np.all(est.values == 2.0)

    def test_bounded_orbit_rate_vanishes(self):
        gen = iid_tanh_gen(3, seed=3)
        traj = run_append(gen, np.full(3, 0.9), 2000)
        est = subadditive_rate(traj, MetricKind.euclidean())
        assert abs(est.lam) < 0.01

    def test_domain_violation_raises(self):
        gen = constant_gen(np.eye(2), [-1.0, -1.0])
        traj = run_append(gen, [0.5, 0.5], 5)  # goes negative
        with pytest.raises(ValueError):
            subadditive_rate(traj, MetricKind.thompson())


class TestTopExponent:
    def test_diag_3_1_matches_eigenvalue_oracle(self):
        gen = constant_gen(np.diag([3.0, 1.0]), [0.0, 0.0])
        traj = run_append(gen, [1.0, 1.0], 10_000)
        est = top_exponent(traj)
        oracle = np.log(np.abs(np.linalg.eigvals(np.diag([3.0, 1.0]))).max())
        assert est.lam == pytest.approx(oracle, abs=1e-9)
        assert est.leading_index == 0
        assert traj.overflowed  # 3^n passes 1e300 long before n = 10^4

    def test_tied_coordinates_flagged(self):
        gen = constant_gen(np.diag([2.0, 2.0]), [0.0, 0.0])
        traj = run_append(gen, [1.0, 1.0], 500)
        est = top_exponent(traj)
        assert est.lam == pytest.approx(np.log(2.0), abs=1e-12)
        assert est.leading_index == 0  # tie broken by lowest index
        assert est.tie

    def test_bounded_tanh_exponent_nonpositive(self):
        gen = iid_tanh_gen(2, seed=4)
        traj = run_append(gen, [0.9, 0.9], 300)
        est = top_exponent(traj)
        assert est.lam <= 0.0

    def test_zero_state_rejected(self):
        gen = constant_gen(np.zeros((2, 2)), [0.0, 0.0])
        traj = run_append(gen, [1.0, 1.0], 5)
        with pytest.raises(ValueError):
            top_exponent(traj)

    def test_log_sup_orbit_recovers_rate(self):
        gen = constant_gen(np.diag([2.0, 0.5]), [0.0, 0.0])
        traj = run_append(gen, [1.0, 1.0], 900)
        scalar = log_sup_trajectory(traj)
        est = subadditive_rate(scalar, MetricKind.euclidean())
        assert est.lam == pytest.approx(np.log(2.0), abs=1e-12)


class TestDrift:
    def test_translation_exact(self):
        b = np.array([0.5, -0.25, 1.0])
        layer = LayerMap.sandwich(np.eye(3), b, IDENTITY)
        gen = SequenceGenerator.cycle([layer])
        traj = run_append(gen, np.zeros(3), 200)
        est = drift(traj)
        assert np.array_equal(est.v, b)
        assert np.all(est.series == b)

    def test_bounded_sandwich_drifts_to_zero(self):
        layer = LayerMap.sandwich(np.eye(2), np.zeros(2), TANH)
        gen = SequenceGenerator.cycle([layer])
        traj = run_append(gen, [5.0, -3.0], 2000)
        est = drift(traj)
        assert est.v_norm < 1e-3

    def test_warns_off_premises(self):
        gen = iid_tanh_gen(2, seed=5)  # affine, uncapped
        traj = run_append(gen, [0.5, 0.5], 50)
        with pytest.warns(UserWarning):
            drift(traj)

    def test_no_warning_on_premises(self):
        import warnings
        spec = WeightSpec.spectral_capped(WeightSpec.uniform_box(2, 1.5))
        gen = SequenceGenerator.iid("sandwich", TANH, spec,
                                    BiasSpec.fixed([0.1, 0.2]), seed=6)
        traj = run_append(gen, np.zeros(2), 50)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            drift(traj)

    def test_seed_invariance_of_norm(self):
        # Loose two-seed agreement; the full concentration suite runs in the
        # acceptance module.
        spec = WeightSpec.spectral_capped(WeightSpec.uniform_box(3, 1.5))
        norms = []
        for seed in (1, 2):
            gen = SequenceGenerator.iid("sandwich", TANH, spec,
                                        BiasSpec.fixed([0.7, 0.7, 0.7]), seed=seed)
            norms.append(drift(run_append(gen, np.zeros(3), 4000)).v_norm)
        assert abs(norms[0] - norms[1]) < 5e-3


class TestExactJacobian:
    def test_identity_affine_returns_weights(self):
        rng = np.random.default_rng(7)
        W = rng.normal(size=(3, 3))
        T = LayerMap.affine(W, rng.normal(size=3), IDENTITY)
        assert np.array_equal(exact_jacobian(T, rng.normal(size=3)), W)

    def test_tanh_at_origin(self):
        T = LayerMap.affine(np.eye(2), np.zeros(2), TANH)
        assert np.array_equal(exact_jacobian(T, np.zeros(2)), np.eye(2))

    def test_finite_difference_oracle_all_forms(self):
        rng = np.random.default_rng(8)
        h = 1e-6
        for form in ("affine", "sandwich", "residual", "scaled_residual"):
            for act in (TANH, SIGMOID, SILU):
                W = rng.normal(size=(3, 3)) * 0.7
                b = rng.normal(size=3)
                scale = 4.0 if form == "scaled_residual" else 1.0
                T = LayerMap(form, W, b, act, scale=scale)
                x = rng.normal(size=3)
                J = exact_jacobian(T, x)
                fd = np.empty((3, 3))
                for j in range(3):
                    e = np.zeros(3)
                    e[j] = h
                    fd[:, j] = (T(x + e) - T(x - e)) / (2.0 * h)
                assert np.allclose(J, fd, atol=1e-6), (form, act.name)


class TestLipschitzExpansionRate:
    def box_pairs(self, dim, count, seed):
        eps = 1e-3
        return PairSample.uniform(np.full(dim, -1 + eps), np.full(dim, 1 - eps),
                                  count, seed=seed)

    def test_identity_rate_one(self):
        gen = constant_gen(np.eye(2), [0.0, 0.0])
        est = lipschitz_expansion_rate(gen, self.box_pairs(2, 32, 0), 50)
        assert est.lam == 0.0
        assert np.exp(est.lam) == 1.0

    def test_halving_map_rate(self):
        gen = constant_gen(0.5 * np.eye(2), [0.0, 0.0])
        est = lipschitz_expansion_rate(gen, self.box_pairs(2, 32, 1), 60)
        assert est.lam == pytest.approx(np.log(0.5), abs=1e-12)

    def test_box_escape_raises(self):
        gen = constant_gen(3.0 * np.eye(2), [0.0, 0.0])
        with pytest.raises(ValueError):
            lipschitz_expansion_rate(gen, self.box_pairs(2, 8, 2), 10)

    def test_jacobian_product_oracle(self):
        # Fixed contracting tanh layer: the pair-separation rate matches the
        # top singular value rate of the chain-rule Jacobian product along
        # the maximizing pair's midpoint orbit.
        rng = np.random.default_rng(42)
        W = rng.uniform(-0.8, 0.8, (3, 3))
        W = W / np.abs(np.linalg.eigvals(W)).max() * 0.9
        layer = LayerMap.affine(W, np.zeros(3), TANH)
        gen = SequenceGenerator.constant(layer)
        n = 200
        pairs = self.box_pairs(3, 50, 3)
        est = lipschitz_expansion_rate(gen, pairs, n)
        x, y = est.argmax_pair
        m = 0.5 * (x + y)
        P = np.eye(3)
        series = np.empty(n)
        for k in range(1, n + 1):
            P = exact_jacobian(layer, m) @ P
            m = layer(m)
            series[k - 1] = np.log(np.linalg.norm(P, 2)) / k
        tail = max(1, n // 10)
        lam_jac = series[-tail:].mean()
        assert est.lam == pytest.approx(lam_jac, abs=5e-2)


class TestJacobianDistortionRate:
    def test_identity_layers(self):
        gen = constant_gen(np.eye(2), [0.0, 0.0])
        pts = np.array([[0.1, 0.2], [-0.3, 0.4], [0.5, -0.5]])
        est = jacobian_distortion_rate(gen, 30, pts)
        assert est.lam == 0.0

    def test_constant_jacobian_layers(self):
        W = np.array([[0.6, 0.2], [-0.1, 0.7]])
        gen = constant_gen(W, [0.3, -0.2])  # identity activation: J = W everywhere
        pts = np.array([[0.1, 0.2], [-0.3, 0.4]])
        est = jacobian_distortion_rate(gen, 30, pts)
        assert est.lam == 0.0

    def test_singular_jacobian_reports_step(self):
        gen = constant_gen(np.zeros((2, 2)), [0.0, 0.0])
        pts = np.array([[0.1, 0.2], [-0.3, 0.4]])
        with pytest.raises(ValueError, match="step 1"):
            jacobian_distortion_rate(gen, 5, pts)

    def test_decision_logdet_shifts_head(self):
        # A decision map with constant log |det J| cancels in the spread.
        W = 0.5 * np.eye(2)
        gen = constant_gen(W, [0.0, 0.0], activation=TANH)
        pts = np.array([[0.3, 0.1], [-0.2, 0.4], [0.0, -0.3]])
        plain = jacobian_distortion_rate(gen, 25, pts)
        shifted = jacobian_distortion_rate(gen, 25, pts,
                                           decision_logdet=lambda x: 1.234)
        assert np.allclose(plain.values, shifted.values, atol=1e-12)

    def test_product_determinant_oracle(self):
        # Same series from an independent route: per-step analytic 2x2
        # determinants multiplied in extended precision, with the log taken
        # at the end, versus the accumulated slogdet sum.
        rng = np.random.default_rng(99)
        W = rng.uniform(-0.8, 0.8, (2, 2))
        W = W / np.abs(np.linalg.eigvals(W)).max() * 0.85
        layer = LayerMap.affine(W, np.zeros(2), TANH)
        gen = SequenceGenerator.constant(layer)
        pts = np.array([[0.7, -0.4], [-0.5, 0.6]])
        n = 150
        est = jacobian_distortion_rate(gen, n, pts)

        Wl = W.astype(np.longdouble)
        xs = pts.astype(np.longdouble)
        prods = np.ones(2, dtype=np.longdouble)
        series = np.empty(n)
        for k in range(1, n + 1):
            for i in range(2):
                z = Wl @ xs[i]
                J = (1.0 - np.tanh(z) ** 2)[:, None] * Wl
                prods[i] *= J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
                xs[i] = np.tanh(z)
            la, lb = np.log(np.abs(prods))
            series[k - 1] = abs(float(la - lb)) / k
        tail = max(1, n // 10)
        lam_oracle = series[-tail:].mean()
        assert est.lam == pytest.approx(lam_oracle, abs=1e-6)


class TestInvariants:
    def test_triangle_split_witness(self):
        # d(x0, xn) <= d(x0, xm) + d(xm, xn) along non-expansive orbits.
        rng = np.random.default_rng(10)
        spec = WeightSpec.spectral_capped(WeightSpec.uniform_box(3, 1.5))
        gen = SequenceGenerator.iid("sandwich", TANH, spec,
                                    BiasSpec.fixed([0.2, -0.1, 0.3]), seed=11)
        traj = run_append(gen, np.zeros(3), 300)
        m = MetricKind.euclidean()
        pts = traj.points
        for _ in range(200):
            k = int(rng.integers(1, 299))
            lhs = m.distance(pts[0], pts[-1])
            rhs = m.distance(pts[0], pts[k]) + m.distance(pts[k], pts[-1])
            assert lhs <= rhs + 1e-9

    def test_pair_distances_nonincreasing_thompson(self):
        rng = np.random.default_rng(12)
        W = rng.uniform(0.0, 0.8, (3, 3))
        layer = LayerMap.affine(W, np.full(3, -1.0), SIGMOID)
        gen = SequenceGenerator.constant(layer)
        maps = gen.realize(40)
        m = MetricKind.thompson()
        xs = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), (1000, 3)))
        ys = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), (1000, 3)))
        d_prev = m.pairwise(xs, ys)
        for T in maps:
            xs, ys = T(xs), T(ys)
            d_now = m.pairwise(xs, ys)
            assert np.all(d_now <= d_prev + 1e-9)
            d_prev = d_now

    def test_pair_distances_nonincreasing_euclidean_sandwich(self):
        rng = np.random.default_rng(13)
        spec = WeightSpec.spectral_capped(WeightSpec.uniform_box(3, 2.0))
        gen = SequenceGenerator.iid("sandwich", TANH, spec,
                                    BiasSpec.uniform(-0.5, 0.5), seed=14)
        maps = gen.realize(40)
        m = MetricKind.euclidean()
        xs = rng.normal(0, 2, (1000, 3))
        ys = rng.normal(0, 2, (1000, 3))
        d_prev = m.pairwise(xs, ys)
        for T in maps:
            xs, ys = T(xs), T(ys)
            d_now = m.pairwise(xs, ys)
            assert np.all(d_now <= d_prev + 1e-9)
            d_prev = d_now
