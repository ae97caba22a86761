import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import linear_gram, pg_dual, rbf_gram
from swirpad.data import RoiStack
from swirpad.errors import BadSchema, DimensionMismatch, EmptyInput, SingleClass
from swirpad.svm import (
    SvmModel,
    decision_value,
    decision_values,
    dual_objective,
    format_model,
    minmax_scale,
    parse_model,
    predict,
    score_spectral_signature,
    train_smo,
)

TWO_POINTS = (np.array([[-1.0], [1.0]]), np.array([-1.0, 1.0]))
XOR = (np.array([[0, 0], [1, 1], [0, 1], [1, 0]], float), np.array([-1, -1, 1, 1.0]))


def full_alpha(model, X, y):
    """Map the model's support vectors back to a dual vector over X."""
    alpha = np.zeros(len(X))
    for coef, sv in zip(model.dual_coefs, model.support_vectors):
        i = int(np.argmin(((X - sv) ** 2).sum(1)))
        alpha[i] = coef * y[i]
    return alpha


def assert_feasible(model):
    assert np.all(np.abs(model.dual_coefs) <= model.C + 1e-12)
    assert abs(model.dual_coefs.sum()) < 1e-6


class TestTraining:
    def test_two_points(self):
        m = train_smo(*TWO_POINTS, kernel="linear", C=1.0)
        assert decision_value(m, [0.0]) == pytest.approx(0.0, abs=1e-9)
        assert np.sign(decision_value(m, [1.0])) == 1
        # both points sit on the margin: alpha = 1/2, w = 1, b = 0
        assert decision_value(m, [1.0]) == pytest.approx(1.0, abs=1e-3)
        assert decision_value(m, [-1.0]) == pytest.approx(-1.0, abs=1e-3)
        assert_feasible(m)

    def test_xor_rbf(self):
        X, y = XOR
        m = train_smo(X, y, kernel="rbf", gamma=1.0, C=10.0)
        assert np.array_equal(predict(m, X), y.astype(int))
        assert m.converged
        assert_feasible(m)

    def test_gamma_default(self):
        m = train_smo(*XOR)
        assert m.kernel == "rbf" and m.gamma == pytest.approx(0.5)

    def test_single_class(self):
        with pytest.raises(SingleClass):
            train_smo(np.zeros((3, 2)), np.ones(3))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            train_smo(np.zeros((3, 2)), np.array([1, -1.0]))

    def test_non_convergence_flagged(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 2))
        y = np.where(rng.random(40) > 0.5, 1.0, -1.0)
        m = train_smo(X, y, C=100.0, tol=1e-12, max_passes=0)
        assert not m.converged
        assert m.n_iter == 40

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(30, 3))
        y = np.where(X[:, 0] + 0.3 * rng.normal(size=30) > 0, 1.0, -1.0)
        a, b = train_smo(X, y, seed=5), train_smo(X, y, seed=5)
        assert format_model(a) == format_model(b)

    def test_kkt_within_tol(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(50, 2))
        y = np.where(X[:, 0] * X[:, 1] + 0.2 * rng.normal(size=50) > 0, 1.0, -1.0)
        tol = 1e-3
        m = train_smo(X, y, kernel="rbf", gamma=1.0, C=2.0, tol=tol)
        alpha = full_alpha(m, X, y)
        margins = y * decision_values(m, X)
        # libsvm-style KKT: free alphas on the margin, bounded ones on the right side
        free = (alpha > 1e-9) & (alpha < m.C - 1e-9)
        assert np.all(np.abs(margins[free] - 1) < 2 * tol)
        assert np.all(margins[alpha <= 1e-9] > 1 - 2 * tol)
        assert np.all(margins[alpha >= m.C - 1e-9] < 1 + 2 * tol)

    def test_six_point_oracle(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(6, 2))
        y = np.array([1, -1, 1, -1, -1, 1.0])
        K = rbf_gram(X, 0.7)
        m = train_smo(X, y, kernel="rbf", gamma=0.7, C=1.5, tol=1e-6)
        ref, _ = pg_dual([K], [y], 1.5)
        assert dual_objective(full_alpha(m, X, y), y, K) == pytest.approx(ref[0], abs=1e-4)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(4, 50))
    def test_separable_sets_fit_perfectly(self, seed, n):
        rng = np.random.default_rng(seed)
        w = rng.normal(size=2)
        w /= np.linalg.norm(w)
        X = rng.uniform(-3, 3, size=(n, 2))
        side = X @ w
        y = np.where(side >= 0, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        X[0] += w * (abs(side[0]) + 0.5)
        X[1] -= w * (abs(side[1]) + 0.5)
        side = X @ w
        X += np.outer(np.where(side >= 0, 0.25, -0.25), w)  # margin >= 0.5
        y = np.where(X @ w >= 0, 1.0, -1.0)
        m = train_smo(X, y, kernel="linear", C=1000.0)
        assert np.array_equal(predict(m, X), y.astype(int))
        assert_feasible(m)


class TestDecision:
    def test_single_sv_linear(self):
        v = np.array([0.5, -2.0, 3.0])
        m = SvmModel("linear", None, 1.0, v[None, :], np.array([1.0]), 0.0, 3)
        assert decision_value(m, v) == pytest.approx(v @ v)

    def test_rbf_finite_at_support_vectors(self):
        X, y = XOR
        m = train_smo(X, y, gamma=1.0, C=10.0)
        assert np.all(np.isfinite(decision_values(m, m.support_vectors)))

    def test_order_invariance(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(30, 4))
        y = np.where(X[:, 1] > 0, 1.0, -1.0)
        m = train_smo(X, y)
        perm = rng.permutation(m.n_support)
        shuffled = SvmModel(m.kernel, m.gamma, m.C, m.support_vectors[perm], m.dual_coefs[perm], m.bias, 4)
        Q = rng.normal(size=(10, 4))
        np.testing.assert_allclose(decision_values(m, Q), decision_values(shuffled, Q), atol=1e-12)

    def test_dimension_mismatch(self):
        m = train_smo(*XOR)
        with pytest.raises(DimensionMismatch):
            decision_value(m, [1.0, 2.0, 3.0])


class TestScaler:
    def test_affine(self):
        scaled, _ = minmax_scale(np.array([[2.0], [4.0], [6.0]]))
        assert scaled.ravel().tolist() == [0.0, 0.5, 1.0]

    def test_constant_column(self):
        scaled, _ = minmax_scale(np.array([[7.0, 1.0], [7.0, 2.0], [7.0, 3.0]]))
        assert scaled[:, 0].tolist() == [0.0, 0.0, 0.0]

    def test_reapply_exact(self):
        X = np.random.default_rng(0).normal(size=(20, 5))
        scaled, scaler = minmax_scale(X)
        assert np.array_equal(scaler.transform(X), scaled)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            minmax_scale(np.zeros((0, 3)))


class TestSpectralScore:
    @staticmethod
    def linear_model(bias):
        # decision = bias regardless of the pixel: w = 0
        return SvmModel("linear", None, 1.0, np.zeros((1, 6)), np.array([0.0]), bias, 6)

    @staticmethod
    def roi():
        ch = np.random.default_rng(0).integers(1000, 60000, size=(4, 18, 58), dtype=np.uint16)
        return RoiStack(ch, (23, 3))

    def test_all_skin(self):
        assert score_spectral_signature(self.linear_model(-1.0), self.roi()) == 0.0

    def test_tie_is_skin(self):
        assert score_spectral_signature(self.linear_model(0.0), self.roi()) == 0.0

    def test_all_nonskin(self):
        assert score_spectral_signature(self.linear_model(1.0), self.roi()) == 100.0

    def test_half(self):
        # non-skin iff the pixel's first difference component is positive
        sv = np.zeros((1, 6))
        sv[0, 0] = 1.0
        m = SvmModel("linear", None, 1.0, sv, np.array([1.0]), 0.0, 6)
        ch = np.full((4, 18, 58), 1000, dtype=np.uint16)
        flat = ch[0].reshape(-1)
        flat[:522] = 2000
        roi = RoiStack(ch, (0, 0))
        assert score_spectral_signature(m, roi) == pytest.approx(50.0)
        flat[522] = 2000
        assert score_spectral_signature(m, roi) == pytest.approx(50.0 + 100 / 1044)

    def test_wrong_dim(self):
        with pytest.raises(DimensionMismatch):
            score_spectral_signature(train_smo(*XOR), self.roi())


class TestPersistence:
    def test_roundtrip_exact(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(40, 6))
        y = np.where(X.sum(1) > 0, 1.0, -1.0)
        scaled, scaler = minmax_scale(X)
        m = train_smo(scaled, y, scaler=scaler)
        back = parse_model(format_model(m))
        Q = scaler.transform(rng.normal(size=(25, 6)))
        np.testing.assert_allclose(decision_values(back, Q), decision_values(m, Q), atol=1e-12, rtol=0)
        assert np.array_equal(back.scaler.mins, scaler.mins)
        assert format_model(back) == format_model(m)

    def test_version_checked(self):
        text = format_model(train_smo(*XOR)).replace("format_version 1", "format_version 9")
        with pytest.raises(BadSchema):
            parse_model(text)

    def test_truncated(self):
        text = format_model(train_smo(*XOR))
        with pytest.raises(BadSchema):
            parse_model("\n".join(text.splitlines()[:-1]))
