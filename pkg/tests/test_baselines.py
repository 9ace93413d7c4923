import numpy as np
import pytest

from ibl.baselines import (
    LinearModel,
    fit_linear_svm,
    fit_logistic,
    knn_scores,
    logistic_gradient,
    logistic_objective,
    svm_objective,
)
from ibl.dataset import CONTINUOUS, Dataset, generate_pseudo
from ibl.evaluation import auc


def separable_ds(n=40, seed=0, gap=4.0):
    """Two well-separated Gaussian blobs along the first coordinate."""
    rng = np.random.default_rng(seed)
    half = n // 2
    x0 = rng.normal(size=(half, 3)) + np.array([-gap / 2, 0, 0])
    x1 = rng.normal(size=(n - half, 3)) + np.array([gap / 2, 0, 0])
    rows = np.vstack([x0, x1])
    labels = np.concatenate([np.zeros(half, dtype=int), np.ones(n - half, dtype=int)])
    return Dataset(("x1", "x2", "x3"), rows, labels, (CONTINUOUS,) * 3)


def permuted(ds, seed):
    idx = np.random.default_rng(seed).permutation(ds.n_rows)
    return ds.subset(idx)


def rescaled(ds, factor):
    return Dataset(ds.feature_names, ds.rows * factor, ds.labels, ds.feature_kinds)


class TestLogistic:
    def test_separates_the_separable(self):
        ds = separable_ds()
        model = fit_logistic(ds)
        assert auc(model.scores(ds).values, ds.labels) == 1.0

    def test_informative_weight_sign(self):
        model = fit_logistic(separable_ds())
        assert model.weights[0] > 0.5
        assert abs(model.weights[1]) < abs(model.weights[0])

    def test_symmetric_data_gives_zero_bias(self):
        # classes are mirror images, so the balanced optimum has bias 0
        rows = np.array([[1.0, 2.0], [2.0, 1.0], [-1.0, -2.0], [-2.0, -1.0]])
        ds = Dataset(("u", "v"), rows, [1, 1, 0, 0], (CONTINUOUS,) * 2)
        model = fit_logistic(ds)
        assert model.bias == pytest.approx(0.0, abs=1e-6)

    def test_probabilities_strictly_inside_unit_interval(self):
        ds = generate_pseudo(80, seed=3)
        values = fit_logistic(ds).scores(ds).values
        assert (values > 0.0).all() and (values < 1.0).all()

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        rows = rng.normal(size=(30, 4))
        labels = rng.integers(0, 2, size=30).astype(float)
        w = rng.normal(size=4)
        b = 0.3
        l2 = 1e-3
        grad_w, grad_b = logistic_gradient(w, b, rows, labels, l2)
        eps = 1e-6
        for j in range(4):
            bump = np.zeros(4)
            bump[j] = eps
            fd = (logistic_objective(w + bump, b, rows, labels, l2)
                  - logistic_objective(w - bump, b, rows, labels, l2)) / (2 * eps)
            assert grad_w[j] == pytest.approx(fd, rel=1e-5)
        fd_b = (logistic_objective(w, b + eps, rows, labels, l2)
                - logistic_objective(w, b - eps, rows, labels, l2)) / (2 * eps)
        assert grad_b == pytest.approx(fd_b, rel=1e-5)

    def test_training_order_is_irrelevant(self):
        ds = generate_pseudo(50, seed=4)
        base = fit_logistic(ds)
        shuffled = fit_logistic(permuted(ds, 99))
        probe = generate_pseudo(20, seed=5)
        assert np.allclose(base.scores(probe).values,
                           shuffled.scores(probe).values, atol=1e-9)

    def test_feature_scaling_is_absorbed_by_standardization(self):
        ds = generate_pseudo(50, seed=4)
        probe = generate_pseudo(20, seed=5)
        base = fit_logistic(ds).scores(probe).values
        scaled = fit_logistic(rescaled(ds, 10.0)).scores(rescaled(probe, 10.0)).values
        assert np.allclose(base, scaled, atol=1e-9)

    def test_single_class_rejected(self):
        ds = Dataset(("x",), [[1.0], [2.0]], [1, 1], (CONTINUOUS,))
        with pytest.raises(ValueError):
            fit_logistic(ds)

    def test_stronger_regularization_shrinks_weights(self):
        ds = separable_ds()
        loose = fit_logistic(ds, l2=1e-6)
        tight = fit_logistic(ds, l2=1.0)
        assert np.linalg.norm(tight.weights) < np.linalg.norm(loose.weights)


class TestSvm:
    def test_separable_margin_with_generous_budget(self):
        ds = separable_ds(gap=8.0)
        model = fit_linear_svm(ds, c=100.0, epochs=400)
        rows = (ds.rows - model.means) / model.sds
        labels_pm = np.where(ds.labels == 1, 1.0, -1.0)
        margins = labels_pm * (rows @ model.weights + model.bias)
        assert margins.min() > 0  # every training point on its own side
        assert auc(model.scores(ds).values, ds.labels) == 1.0

    def test_decision_values_not_squashed(self):
        ds = separable_ds()
        values = fit_linear_svm(ds).scores(ds).values
        assert values.min() < 0 or values.max() > 1  # raw margins, not probabilities

    def test_feature_scaling_is_absorbed_by_standardization(self):
        ds = generate_pseudo(40, seed=8)
        probe = generate_pseudo(15, seed=9)
        base = fit_linear_svm(ds).scores(probe).values
        scaled = fit_linear_svm(rescaled(ds, 10.0)).scores(rescaled(probe, 10.0)).values
        assert np.allclose(base, scaled, atol=1e-9)

    def test_objective_settles_over_epochs(self):
        ds = generate_pseudo(60, seed=2)
        trace = []
        fit_linear_svm(ds, epochs=60, trace=trace)
        rows = (ds.rows - ds.rows.mean(axis=0)) / ds.rows.std(axis=0)
        labels_pm = np.where(ds.labels == 1, 1.0, -1.0)
        objectives = [svm_objective(w, b, rows, labels_pm, 1.0) for w, b in trace]
        # averaged iterates: late objective near the best seen, early noise gone
        assert objectives[-1] <= objectives[0]
        assert objectives[-1] <= min(objectives) + 1e-2

    def test_seeded_determinism(self):
        ds = generate_pseudo(40, seed=1)
        m1 = fit_linear_svm(ds, seed=5)
        m2 = fit_linear_svm(ds, seed=5)
        assert np.array_equal(m1.weights, m2.weights)
        assert m1.bias == m2.bias

    def test_all_finite(self):
        ds = generate_pseudo(30, seed=6)
        model = fit_linear_svm(ds)
        assert np.isfinite(model.weights).all()
        assert np.isfinite(model.bias)

    def test_invalid_c_rejected(self):
        with pytest.raises(ValueError):
            fit_linear_svm(generate_pseudo(10, seed=0), c=0.0)


class TestKnn:
    def test_k1_recovers_own_label_on_training_points(self):
        ds = generate_pseudo(30, seed=11)
        values = knn_scores(ds, ds, k=1).values
        assert np.array_equal(values, ds.labels.astype(float))

    def test_k_equals_n_gives_global_fraction(self):
        ds = generate_pseudo(30, seed=12)
        values = knn_scores(ds, ds, k=ds.n_rows).values
        assert np.allclose(values, ds.labels.mean())

    def test_scores_are_multiples_of_one_over_k(self):
        train = generate_pseudo(50, seed=13)
        queries = generate_pseudo(20, seed=14)
        for k in (1, 3, 5, 7):
            values = knn_scores(train, queries, k=k).values
            assert np.allclose(values * k, np.round(values * k), atol=1e-12)
            assert (values >= 0).all() and (values <= 1).all()

    def test_matches_brute_force_oracle(self):
        train = generate_pseudo(25, seed=15)
        queries = generate_pseudo(10, seed=16)
        k = 5
        got = knn_scores(train, queries, k=k).values
        means, sds = train.rows.mean(axis=0), train.rows.std(axis=0)
        tr = (train.rows - means) / sds
        qr = (queries.rows - means) / sds
        for i in range(queries.n_rows):
            dists = [(float(((qr[i] - tr[j]) ** 2).sum()), j) for j in range(train.n_rows)]
            dists.sort()  # exact tie falls back to the lower index
            expected = np.mean([train.labels[j] for _, j in dists[:k]])
            assert got[i] == pytest.approx(expected, abs=1e-12)

    def test_distance_ties_break_toward_lower_training_index(self):
        # four training points equidistant from the origin query
        rows = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        train = Dataset(("u", "v"), rows, [1, 0, 0, 1], (CONTINUOUS,) * 2)
        query = Dataset(("u", "v"), [[0.0, 0.0]], [0], (CONTINUOUS,) * 2)
        # k=2 must take indices 0 and 1 (labels 1, 0), not any other pair
        assert knn_scores(train, query, k=2).values[0] == 0.5
        # k=3 adds index 2 (label 0)
        assert knn_scores(train, query, k=3).values[0] == pytest.approx(1 / 3)

    def test_query_order_is_respected(self):
        train = generate_pseudo(30, seed=17)
        queries = generate_pseudo(8, seed=18)
        flipped = queries.subset(np.arange(queries.n_rows)[::-1])
        assert np.array_equal(knn_scores(train, queries).values[::-1],
                              knn_scores(train, flipped).values)

    def test_k_bounds_enforced(self):
        ds = generate_pseudo(10, seed=0)
        with pytest.raises(ValueError):
            knn_scores(ds, ds, k=0)
        with pytest.raises(ValueError):
            knn_scores(ds, ds, k=11)

    def test_training_order_is_irrelevant(self):
        train = generate_pseudo(40, seed=19)
        queries = generate_pseudo(12, seed=20)
        assert np.allclose(knn_scores(train, queries).values,
                           knn_scores(permuted(train, 7), queries).values, atol=0)


class TestLinearModelSerialization:
    def test_json_round_trip(self):
        model = fit_logistic(generate_pseudo(30, seed=21))
        back = LinearModel.from_json(model.to_json())
        assert back.kind == model.kind
        assert np.array_equal(back.weights, model.weights)
        assert back.bias == model.bias
        assert back.trained_on == model.trained_on
        assert np.array_equal(back.means, model.means)
        assert np.array_equal(back.sds, model.sds)

    def test_json_carries_standardization_block(self):
        import json
        model = fit_linear_svm(generate_pseudo(20, seed=22))
        payload = json.loads(model.to_json())
        assert set(payload) == {"kind", "weights", "bias", "standardization", "feature_names"}
        assert set(payload["standardization"]) == {"means", "sds"}

    def test_mismatched_features_rejected_at_scoring(self):
        model = fit_logistic(generate_pseudo(20, seed=23))
        other = Dataset(("p", "q"), [[1.0, 2.0]], [0], (CONTINUOUS,) * 2)
        with pytest.raises(ValueError):
            model.scores(other)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            LinearModel("logistic", np.ones(3), 0.0, ("a", "b"), np.zeros(2), np.ones(2))
        with pytest.raises(ValueError):
            LinearModel("logistic", np.ones(2), 0.0, ("a", "b"), np.zeros(2), np.array([1.0, 0.0]))
