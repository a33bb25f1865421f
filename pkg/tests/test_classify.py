import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from mvsc.classify import (
    LeastSquaresClassifier,
    LinearSVMClassifier,
    format_confusion,
    format_report_table,
    parse_report_csv,
    recognition_report,
)
from mvsc.errors import DimensionError, NumericError, ParameterError


def blobs(rng, n_per_class=30, n_classes=3, dim=5, spread=0.3):
    centers = rng.standard_normal((n_classes, dim)) * 3.0
    X, y = [], []
    for c in range(n_classes):
        X.append(centers[c] + spread * rng.standard_normal((n_per_class, dim)))
        y += [f"class{c}"] * n_per_class
    return np.vstack(X), np.array(y)


class TestLeastSquares:
    def test_separable_blobs_fit_exactly(self, rng):
        X, y = blobs(rng)
        clf = LeastSquaresClassifier().fit(X, y)
        assert (clf.predict(X) == y).all()

    def test_classes_sorted_and_preserved(self, rng):
        X, y = blobs(rng, n_classes=2)
        clf = LeastSquaresClassifier().fit(X, y[::-1])
        assert list(clf.classes_) == ["class0", "class1"]

    def test_decision_function_shape(self, rng):
        X, y = blobs(rng)
        clf = LeastSquaresClassifier().fit(X, y)
        assert clf.decision_function(X[:7]).shape == (7, 3)

    def test_duplicate_features_survive_default_ridge(self, rng):
        X, y = blobs(rng, dim=3)
        X = np.hstack([X, X[:, :1]])  # exactly collinear columns
        clf = LeastSquaresClassifier().fit(X, y)
        assert (clf.predict(X) == y).mean() > 0.95

    def test_singular_system_without_ridge_raises(self, rng):
        X, y = blobs(rng, dim=3)
        X = np.hstack([X, X[:, :1]])
        with pytest.raises(NumericError, match="ridge"):
            LeastSquaresClassifier(ridge=0.0).fit(X, y)

    def test_zero_ridge_matches_lstsq_when_well_posed(self, rng):
        X, y = blobs(rng)
        clf0 = LeastSquaresClassifier(ridge=0.0).fit(X, y)
        clf = LeastSquaresClassifier().fit(X, y)
        np.testing.assert_allclose(clf0.weights_, clf.weights_, atol=1e-4)

    def test_tie_breaks_to_first_class(self):
        clf = LeastSquaresClassifier()
        clf.classes_ = np.array(["a", "b"])
        clf.weights_ = np.zeros((2, 2))
        clf.biases_ = np.zeros(2)
        assert list(clf.predict(np.ones((3, 2)))) == ["a", "a", "a"]

    def test_feature_count_mismatch(self, rng):
        X, y = blobs(rng)
        clf = LeastSquaresClassifier().fit(X, y)
        with pytest.raises(DimensionError):
            clf.predict(X[:, :-1])

    def test_predict_before_fit(self):
        with pytest.raises(NotFittedError):
            LeastSquaresClassifier().predict(np.ones((2, 2)))

    def test_negative_ridge_rejected(self, rng):
        X, y = blobs(rng)
        with pytest.raises(ParameterError):
            LeastSquaresClassifier(ridge=-1.0).fit(X, y)

    def test_single_class_training_rejected(self, rng):
        X = rng.standard_normal((10, 3))
        with pytest.raises(ParameterError):
            LeastSquaresClassifier().fit(X, np.zeros(10))


class TestLinearSVM:
    def test_separable_blobs(self, rng):
        X, y = blobs(rng)
        clf = LinearSVMClassifier(epochs=50).fit(X, y)
        assert (clf.predict(X) == y).mean() > 0.98

    def test_same_seed_same_weights(self, rng):
        X, y = blobs(rng)
        a = LinearSVMClassifier(epochs=20, seed=5).fit(X, y)
        b = LinearSVMClassifier(epochs=20, seed=5).fit(X, y)
        np.testing.assert_array_equal(a.weights_, b.weights_)
        np.testing.assert_array_equal(a.biases_, b.biases_)

    def test_different_seed_different_path(self, rng):
        X, y = blobs(rng, spread=1.5)
        a = LinearSVMClassifier(epochs=5, seed=0).fit(X, y)
        b = LinearSVMClassifier(epochs=5, seed=1).fit(X, y)
        assert np.abs(a.weights_ - b.weights_).max() > 0

    def test_weight_norm_bounded(self, rng):
        # the projection step caps ||(w, b)|| at 1/sqrt(reg)
        X, y = blobs(rng)
        clf = LinearSVMClassifier(C=0.5, epochs=10).fit(X, y)
        reg = 1.0 / (0.5 * len(y))
        for w, b in zip(clf.weights_, clf.biases_):
            assert np.sqrt(w @ w + b * b) <= 1.0 / np.sqrt(reg) + 1e-9

    def test_invalid_parameters(self, rng):
        X, y = blobs(rng)
        with pytest.raises(ParameterError):
            LinearSVMClassifier(C=0.0).fit(X, y)
        with pytest.raises(ParameterError):
            LinearSVMClassifier(epochs=0).fit(X, y)

    def test_integer_labels_round_trip(self, rng):
        X, _ = blobs(rng, n_classes=2)
        y = np.array([1] * 30 + [7] * 30)
        clf = LinearSVMClassifier(epochs=30).fit(X, y)
        assert set(clf.predict(X)) <= {1, 7}


class TestReport:
    def test_hand_computed_rates(self):
        preds = ["a", "a", "b", "b", "b", "a"]
        truth = ["a", "a", "a", "b", "b", "b"]
        report = recognition_report(preds, truth)
        assert report.classes == ("a", "b")
        assert report.per_class[0] == pytest.approx(100.0 * 2 / 3)
        assert report.per_class[1] == pytest.approx(100.0 * 2 / 3)
        assert report.overall == pytest.approx(100.0 * 4 / 6)
        assert report.average == pytest.approx(100.0 * 2 / 3)
        np.testing.assert_array_equal(report.confusion, [[2, 1], [1, 2]])
        assert report.n_samples == 6

    def test_average_unweighted_vs_overall_pooled(self):
        # 1 sample of a (correct), 3 of b (1 correct)
        report = recognition_report(["a", "b", "a", "a"], ["a", "b", "b", "b"])
        assert report.overall == pytest.approx(50.0)
        assert report.average == pytest.approx((100.0 + 100.0 / 3) / 2)

    def test_absent_class_reports_none(self):
        report = recognition_report(["a"], ["a"], class_names=["a", "b"])
        assert report.per_class == (100.0, None)
        assert report.average == pytest.approx(100.0)

    def test_unknown_label_rejected(self):
        with pytest.raises(ParameterError):
            recognition_report(["c"], ["a"], class_names=["a", "b"])
        with pytest.raises(ParameterError):
            recognition_report(["a"], ["c"], class_names=["a", "b"])

    def test_empty_rejected(self):
        with pytest.raises(ParameterError):
            recognition_report([], [])

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            recognition_report(["a"], ["a", "b"])

    def test_sixty_nine_of_seventy(self):
        # a 70-sample balanced set with one miss averages 98.57
        classes = [f"c{i}" for i in range(7)]
        truth = [c for c in classes for _ in range(10)]
        preds = list(truth)
        preds[0] = "c1"
        report = recognition_report(preds, truth)
        assert f"{report.average:.2f}" == "98.57"


class TestFormatting:
    def make_rows(self):
        r1 = recognition_report(["a", "b", "b"], ["a", "b", "a"])
        r2 = recognition_report(["a", "b", "a"], ["a", "b", "a"])
        return [("m1", r1), ("m2", r2)]

    def test_text_table_layout(self):
        text = format_report_table(self.make_rows())
        lines = text.strip().splitlines()
        assert lines[0].split() == ["Method", "a", "b", "Aver"]
        assert lines[1].split() == ["m1", "50.00", "100.00", "75.00"]
        assert lines[2].split() == ["m2", "100.00", "100.00", "100.00"]

    def test_csv_round_trip_exact(self):
        rows = self.make_rows()
        parsed = parse_report_csv(format_report_table(rows, fmt="csv"))
        assert parsed["m1"]["a"] == rows[0][1].per_class[0]
        assert parsed["m1"]["Aver"] == rows[0][1].average
        assert parsed["m2"]["Aver"] == 100.0

    def test_none_rate_renders_na(self):
        report = recognition_report(["a"], ["a"], class_names=["a", "b"])
        text = format_report_table([("m", report)])
        assert "n/a" in text
        parsed = parse_report_csv(format_report_table([("m", report)], fmt="csv"))
        assert parsed["m"]["b"] is None

    def test_mixed_class_sets_rejected(self):
        r1 = recognition_report(["a"], ["a"])
        r2 = recognition_report(["b"], ["b"])
        with pytest.raises(ParameterError):
            format_report_table([("m1", r1), ("m2", r2)])

    def test_parse_rejects_other_csv(self):
        with pytest.raises(ParameterError):
            parse_report_csv("foo,bar\n1,2\n")

    def test_confusion_layout(self):
        report = recognition_report(["a", "b", "b"], ["a", "b", "a"])
        text = format_confusion(report, label="demo")
        lines = text.strip().splitlines()
        assert lines[0] == "confusion (demo)"
        assert lines[1].split() == ["a", "b"]
        assert lines[2].split() == ["a", "1", "1"]
        assert lines[3].split() == ["b", "0", "1"]

    def test_unknown_format(self):
        with pytest.raises(ParameterError):
            format_report_table(self.make_rows(), fmt="json")
