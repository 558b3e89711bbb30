import numpy as np
import pytest

from synthdata import block_signal_problem, linear_problem
from zslkit.errors import (
    AlignmentError,
    EmptyClassSetError,
    IncompleteCoverageError,
)
from zslkit.evaluate import (
    EMBEDDING_SUBSETS,
    LINEAR_TERM_GRID,
    ClassSplits,
    SplitDataset,
    ablate_embeddings,
    ablate_linear_terms,
    evaluate_zsl,
    normalized_accuracy,
)
from zslkit.model import CompatModel, score
from zslkit.train import TrainConfig, train


def brute_force_metric(predictions, labels):
    """Per-class ratios with plain loops, averaged without numpy."""
    classes = []
    for l in labels:
        if l not in classes:
            classes.append(l)
    ratios = []
    for c in classes:
        idx = [i for i, l in enumerate(labels) if l == c]
        ratios.append(sum(predictions[i] == c for i in idx) / len(idx))
    return sum(ratios) / len(ratios)


class TestNormalizedAccuracy:
    def test_separates_from_plain_accuracy(self):
        labels = ["A"] * 10 + ["B"] * 5
        preds = ["A"] * 10 + ["A"] * 5  # A perfect, B all wrong
        result = normalized_accuracy(preds, labels)
        assert result.normalized_accuracy == 0.5  # not 10/15
        assert result.per_class_accuracy == {"A": 1.0, "B": 0.0}

    def test_all_correct(self):
        labels = ["A", "B", "C", "B"]
        assert normalized_accuracy(labels, labels).normalized_accuracy == 1.0

    def test_confusion_counts(self):
        labels = ["A", "A", "B"]
        preds = ["A", "B", "B"]
        result = normalized_accuracy(preds, labels)
        assert result.confusion == {("A", "A"): 1, ("A", "B"): 1, ("B", "B"): 1}

    def test_alignment_errors(self):
        with pytest.raises(AlignmentError):
            normalized_accuracy(["A"], ["A", "B"])
        with pytest.raises(AlignmentError):
            normalized_accuracy([], [])

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            k = int(rng.integers(1, 5))
            n = int(rng.integers(k, 21))
            classes = [f"c{i}" for i in range(k)]
            labels = classes + [classes[int(rng.integers(0, k))]
                                for _ in range(n - k)]
            preds = [classes[int(rng.integers(0, k))] for _ in range(n)]
            got = normalized_accuracy(preds, labels).normalized_accuracy
            assert got == brute_force_metric(preds, labels)

    def test_duplication_invariance(self):
        rng = np.random.default_rng(1)
        labels = ["A", "B", "C", "A", "B", "C", "C"]
        preds = [rng.choice(["A", "B", "C"]) for _ in labels]
        base = normalized_accuracy(preds, labels).normalized_accuracy
        for k in (2, 3, 5):
            dup_idx = [i for i, l in enumerate(labels) if l == "B"]
            labels_k = labels + [labels[i] for i in dup_idx] * (k - 1)
            preds_k = preds + [preds[i] for i in dup_idx] * (k - 1)
            assert normalized_accuracy(preds_k, labels_k).normalized_accuracy == base


def trained_problem(seed=0):
    dataset, embeddings, _ = linear_problem(
        seed=seed, n_classes=10, m=6, d=12, per_class=20, n_seen=6, n_val=2)
    cfg = TrainConfig(batch_size=32, max_iterations=300, eval_every=100,
                      seed=seed, learning_rate=3e-3)
    report = train(dataset, embeddings, cfg)
    return dataset, embeddings, report.model


class TestEvaluateZsl:
    def test_predictions_stay_inside_split(self):
        dataset, embeddings, model = trained_problem()
        test_classes = set(dataset.splits.zsl_test)
        result = evaluate_zsl(model, dataset, embeddings, "zsl_test")
        assert set(result.per_class_accuracy) <= test_classes
        predicted = {pred for _, pred in result.confusion}
        assert predicted <= test_classes

    def test_never_touches_other_splits(self):
        dataset, embeddings, model = trained_problem(seed=1)

        class TrackingDataset:
            def __init__(self, inner):
                self._inner = inner
                self.calls = []

            @property
            def splits(self):
                return self._inner.splits

            def subset(self, split):
                self.calls.append(split)
                return self._inner.subset(split)

        tracker = TrackingDataset(dataset)
        evaluate_zsl(model, tracker, embeddings, "zsl_validation")
        assert tracker.calls == ["zsl_validation"]

    def test_bias_change_leaves_result(self):
        dataset, embeddings, model = trained_problem(seed=2)
        base = evaluate_zsl(model, dataset, embeddings, "zsl_test")
        shifted = model.copy()
        shifted.W_e[-1, -1] += 123.456
        again = evaluate_zsl(shifted, dataset, embeddings, "zsl_test")
        assert again.normalized_accuracy == base.normalized_accuracy
        assert again.confusion == base.confusion

    def test_coverage_gap(self):
        dataset, embeddings, model = trained_problem(seed=3)
        from zslkit.embeddings import ClassEmbeddingSet

        partial = ClassEmbeddingSet(embeddings.class_names[:-1],
                                    embeddings.matrix[:-1],
                                    embeddings.block_layout)
        with pytest.raises(IncompleteCoverageError):
            evaluate_zsl(model, dataset, partial, "zsl_test")

    def test_bad_split_name(self):
        dataset, embeddings, model = trained_problem(seed=4)
        with pytest.raises(ValueError):
            evaluate_zsl(model, dataset, embeddings, "seen")

    def test_empty_split(self):
        rng = np.random.default_rng(5)
        splits = ClassSplits(("a",), ("b",), ())
        dataset = SplitDataset(("i0", "i1"), rng.normal(size=(2, 3)),
                               ("a", "b"), splits)
        from zslkit.embeddings import ClassEmbeddingSet

        emb = ClassEmbeddingSet(("a", "b"), rng.normal(size=(2, 4)),
                                (("word", 0, 4),))
        with pytest.raises(EmptyClassSetError):
            evaluate_zsl(CompatModel.zeros(3, 4), dataset, emb, "zsl_test")


FAST = TrainConfig(batch_size=50, max_iterations=300, eval_every=100, seed=3,
                   learning_rate=3e-3)


class TestAblations:
    def test_embedding_grid_shape(self):
        dataset, sources = block_signal_problem(seed=0, n_classes=10, n_seen=5,
                                                n_val=2, per_class=15)
        rows = ablate_embeddings(dataset, sources, FAST)
        assert len(rows) == 7
        assert tuple(r.sources for r in rows) == EMBEDDING_SUBSETS
        assert all(0.0 <= r.accuracy <= 1.0 for r in rows)
        assert all(r.std is None for r in rows)

    def test_signal_block_wins_singletons(self):
        dataset, sources = block_signal_problem(seed=1)
        rows = ablate_embeddings(dataset, sources, FAST)
        singles = {r.sources[0]: r.accuracy for r in rows if len(r.sources) == 1}
        assert singles["word"] > singles["attribute"]
        assert singles["word"] > singles["taxonomy"]

    def test_linear_grid_shape(self):
        dataset, embeddings, _ = linear_problem(
            seed=6, n_classes=10, m=6, d=12, per_class=15, n_seen=6, n_val=2)
        rows = ablate_linear_terms(dataset, embeddings, FAST)
        assert len(rows) == 4
        assert tuple((r.use_wx, r.use_wy) for r in rows) == LINEAR_TERM_GRID
        assert all(0.0 <= r.accuracy <= 1.0 for r in rows)

    def test_repeats_report_std(self):
        dataset, embeddings, _ = linear_problem(
            seed=7, n_classes=8, m=5, d=10, per_class=10, n_seen=4, n_val=2)
        cfg = TrainConfig(batch_size=20, max_iterations=100, eval_every=50, seed=0,
                          learning_rate=3e-3)
        rows = ablate_linear_terms(dataset, embeddings, cfg, repeats=2)
        assert all(r.std is not None and r.std >= 0.0 for r in rows)

    def test_full_mask_reduces_to_plain_bilinear(self):
        dataset, embeddings, _ = linear_problem(
            seed=8, n_classes=8, m=5, d=10, per_class=10, n_seen=4, n_val=2)
        import dataclasses

        cfg = dataclasses.replace(FAST, use_wx=False, use_wy=False,
                                  max_iterations=100, eval_every=50)
        report = train(dataset, embeddings, cfg)
        model = report.model
        rng = np.random.default_rng(9)
        for _ in range(10):
            phi = rng.normal(size=model.d)
            psi = rng.normal(size=model.m)
            assert score(model, phi, psi) == float(phi @ model.W @ psi) + model.b
