import numpy as np
import pytest

from echopad.embed import EmbeddingGrid
from echopad.ensemble import (
    ATTACK_LABEL,
    BONA_FIDE_LABEL,
    Decision,
    EnsembleModel,
    LinearSvm,
    decide,
    dual_coordinate_descent,
    load_model,
    save_model,
    score,
    score_batch,
    train_ensemble,
    train_svm,
)
from echopad.errors import TrainingError


def hinge_objective(w, b, X, y, c_reg=1.0):
    margins = y * (X @ w + b)
    return 0.5 * np.dot(w, w) + c_reg * np.maximum(0.0, 1.0 - margins).sum()


class TestTrainSvm:
    def test_separable_orientation(self):
        # feature -1 labeled attack, +1 labeled bona fide -> positive weight
        model = train_svm(np.array([[-1.0], [1.0]]), np.array([ATTACK_LABEL, BONA_FIDE_LABEL]))
        assert model.w[0] > 0

    def test_label_flip_flips_weights(self, rng):
        X = rng.standard_normal((30, 4))
        y = np.sign(X[:, 0] + 0.2 * rng.standard_normal(30)).astype(int)
        y[y == 0] = 1
        a = train_svm(X, y, seed=3)
        b = train_svm(X, -y, seed=3)
        np.testing.assert_allclose(b.w, -a.w, atol=1e-12)
        assert np.isclose(np.linalg.norm(b.w), np.linalg.norm(a.w), rtol=1e-6)

    def test_objective_matches_grid_search_oracle(self):
        # Symmetric 4-point set: the optimum has zero bias, so the augmented
        # bias term vanishes and the solver minimizes the plain objective.
        X = np.array([[1.2, 0.4], [0.4, 1.4], [-1.2, -0.4], [-0.4, -1.4]])
        y = np.array([1, 1, -1, -1])
        model = train_svm(X, y, c_reg=1.0, seed=0)
        Z = (X - X.mean(axis=0)) / X.std(axis=0)
        impl_obj = hinge_objective(model.w, model.b, Z, y)

        def grid_min(w1_axis, w2_axis, b_axis):
            best = (np.inf, 0.0, 0.0, 0.0)
            w1, w2 = np.meshgrid(w1_axis, w2_axis, indexing="ij")
            for b in b_axis:
                margins = y[None, None, :] * (
                    w1[..., None] * Z[:, 0] + w2[..., None] * Z[:, 1] + b)
                obj = 0.5 * (w1 ** 2 + w2 ** 2) + np.maximum(0, 1 - margins).sum(axis=-1)
                k = np.unravel_index(np.argmin(obj), obj.shape)
                if obj[k] < best[0]:
                    best = (obj[k], w1[k], w2[k], b)
            return best

        # coarse exhaustive lattice, then one refinement around its argmin
        obj0, w1c, w2c, bc = grid_min(np.linspace(-3, 3, 121),
                                      np.linspace(-3, 3, 121),
                                      np.linspace(-1, 1, 41))
        obj1, *_ = grid_min(np.linspace(w1c - 0.1, w1c + 0.1, 101),
                            np.linspace(w2c - 0.1, w2c + 0.1, 101),
                            np.linspace(bc - 0.1, bc + 0.1, 41))
        assert abs(impl_obj - min(obj0, obj1)) <= 1e-3

    def test_zero_variance_dim_gets_zero_weight(self):
        X = np.array([[1.0, 5.0], [-1.0, 5.0], [2.0, 5.0], [-2.0, 5.0]])
        y = np.array([1, -1, 1, -1])
        model = train_svm(X, y)
        assert model.sigma[1] == 1.0
        assert model.w[1] == 0.0

    def test_single_class_rejected(self):
        with pytest.raises(TrainingError):
            train_svm(np.ones((3, 2)), np.array([1, 1, 1]))

    def test_bad_labels_rejected(self):
        with pytest.raises(TrainingError):
            train_svm(np.ones((2, 2)), np.array([0, 1]))

    def test_non_finite_rejected(self):
        X = np.ones((2, 2))
        X[0, 0] = np.inf
        with pytest.raises(TrainingError):
            train_svm(X, np.array([1, -1]))

    def test_deterministic(self, rng):
        X = rng.standard_normal((40, 6))
        y = np.where(X[:, 0] > 0, 1, -1)
        a = train_svm(X, y, seed=7)
        b = train_svm(X, y, seed=7)
        np.testing.assert_array_equal(a.w, b.w)
        assert a.b == b.b

    def test_optimization_progress_invariants(self, rng):
        # Dual coordinate descent maximizes the dual exactly per coordinate:
        # the dual never decreases across epochs, weak duality holds at every
        # epoch, and the converged duality gap is tiny. (The primal value is
        # not monotone for a dual method; it ends at the optimum instead.)
        for trial in range(8):
            X = rng.standard_normal((25, 5))
            y = np.where(X @ rng.standard_normal(5) > 0, 1.0, -1.0)
            Z = np.hstack([X, np.ones((25, 1))])
            _, _, epochs, primal, dual = dual_coordinate_descent(Z, y, 1.0, seed=trial)
            assert np.all(np.diff(dual) >= -1e-12)
            assert np.all(primal >= dual - 1e-9)
            assert primal[-1] - dual[-1] <= 1e-3 * max(1.0, abs(primal[-1]))
            assert primal[-1] <= primal[0] + 1e-12


class TestTrainEnsemble:
    def make_grids(self, rng, n=12, g=3, d=4):
        feats = rng.standard_normal((n, g, g, d))
        y = np.array([1, -1] * (n // 2))
        feats[y == 1, ..., 0] += 3.0
        return feats, y

    def test_g7_yields_49_models(self, rng):
        feats, y = self.make_grids(rng, n=10, g=7, d=2)
        model = train_ensemble(feats, y)
        assert len(model.models) == 49

    def test_cells_match_standalone_training(self, rng):
        feats, y = self.make_grids(rng)
        model = train_ensemble(feats, y, c_reg=1.0, seed=5)
        for i in range(3):
            for j in range(3):
                alone = train_svm(feats[:, i, j, :], y, c_reg=1.0, seed=5)
                cell = model.models[i * 3 + j]
                np.testing.assert_array_equal(cell.w, alone.w)
                np.testing.assert_array_equal(cell.mu, alone.mu)
                assert cell.b == alone.b

    def test_g1_degenerates_to_single_svm(self, rng):
        feats, y = self.make_grids(rng, g=1)
        model = train_ensemble(feats, y, seed=2)
        result = score(feats[0], model)
        assert np.isclose(result.fused, result.cell_scores[0], rtol=1e-15)

    def test_shape_mismatch_rejected(self, rng):
        grids = [EmbeddingGrid(rng.standard_normal((2, 2, 3))),
                 EmbeddingGrid(rng.standard_normal((3, 3, 3)))]
        with pytest.raises(TrainingError):
            train_ensemble(grids, np.array([1, -1]))

    def test_threshold_separates_training_classes(self, rng):
        feats, y = self.make_grids(rng, n=20)
        model = train_ensemble(feats, y, seed=1)
        _, fused = score_batch(feats, model)
        assert fused[y == 1].min() > model.threshold
        assert fused[y == -1].max() < model.threshold


class TestScoring:
    def hand_model(self):
        cells = (
            LinearSvm(np.array([1.0, 0.0]), 0.5, np.zeros(2), np.ones(2)),
            LinearSvm(np.array([0.0, 2.0]), -1.0, np.zeros(2), np.ones(2)),
            LinearSvm(np.array([-1.0, 1.0]), 0.0, np.ones(2), np.full(2, 2.0)),
            LinearSvm(np.array([0.5, 0.5]), 1.0, np.zeros(2), np.ones(2)),
        )
        return EnsembleModel(g=2, d=2, models=cells, threshold=0.25)

    def test_hand_computed_cell_scores_and_fusion(self):
        model = self.hand_model()
        grid = np.array([[[1.0, 2.0], [3.0, 4.0]],
                         [[5.0, 6.0], [7.0, 8.0]]])
        result = score(grid, model)
        # cell (0,0): 1*1 + 0.5 = 1.5
        # cell (0,1): 2*4 - 1 = 7
        # cell (1,0): standardized ((5-1)/2, (6-1)/2) = (2, 2.5) -> -2 + 2.5 = 0.5
        # cell (1,1): 0.5*7 + 0.5*8 + 1 = 8.5
        np.testing.assert_allclose(result.cell_scores, [1.5, 7.0, 0.5, 8.5], rtol=1e-15)
        assert np.isclose(result.fused, 17.5, rtol=1e-15)

    def test_fused_equals_sum_of_cells(self, rng):
        feats = rng.standard_normal((6, 2, 2, 2))
        y = np.array([1, -1, 1, -1, 1, -1])
        feats[y == 1, ..., 0] += 2.0
        model = train_ensemble(feats, y)
        result = score(feats[0], model)
        assert abs(result.fused - result.cell_scores.sum()) <= 1e-9

    def test_all_zero_cells_fuse_to_zero(self):
        model = self.hand_model()
        zero_cells = tuple(LinearSvm(np.zeros(2), 0.0, np.zeros(2), np.ones(2))
                           for _ in range(4))
        zero_model = EnsembleModel(g=2, d=2, models=zero_cells, threshold=0.0)
        result = score(np.ones((2, 2, 2)), zero_model)
        assert result.fused == 0.0

    def test_score_batch_matches_score(self, rng):
        feats = rng.standard_normal((5, 2, 2, 2))
        model = self.hand_model()
        cells, fused = score_batch(feats, model)
        for i in range(5):
            single = score(feats[i], model)
            np.testing.assert_allclose(cells[i], single.cell_scores, rtol=1e-12)
            assert np.isclose(fused[i], single.fused, rtol=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(TrainingError):
            score(np.ones((3, 3, 2)), self.hand_model())

    def test_decide_tie_accepts(self):
        model = self.hand_model()
        assert decide(model.threshold, model) is Decision.BONA_FIDE
        assert decide(model.threshold + 1.0, model) is Decision.BONA_FIDE
        assert decide(model.threshold - 1.0, model) is Decision.ATTACK

    def test_standardization_invariance(self, rng):
        X = rng.standard_normal((30, 2, 2, 3))
        y = np.array([1, -1] * 15)
        X[y == 1, ..., 1] += 2.5
        Xt = rng.standard_normal((8, 2, 2, 3))
        Xt[:4, ..., 1] += 2.5

        a, c = 3.7, -2.0
        Xs = X.copy()
        Xs[..., 1] = a * Xs[..., 1] + c
        Xts = Xt.copy()
        Xts[..., 1] = a * Xts[..., 1] + c

        m1 = train_ensemble(X, y, seed=4)
        m2 = train_ensemble(Xs, y, seed=4)
        _, f1 = score_batch(Xt, m1)
        _, f2 = score_batch(Xts, m2)
        np.testing.assert_allclose(f1, f2, atol=1e-8)
        for v1, v2 in zip(f1, f2):
            assert decide(v1, m1) is decide(v2, m2)


class TestModelSerialization:
    def test_round_trip_scores_identical(self, tmp_path, rng):
        feats = rng.standard_normal((8, 2, 2, 3))
        y = np.array([1, -1] * 4)
        feats[y == 1, ..., 0] += 2.0
        model = train_ensemble(feats, y, seed=9)
        save_model(model, tmp_path / "m.json")
        loaded = load_model(tmp_path / "m.json")
        assert loaded.threshold == model.threshold
        _, f1 = score_batch(feats, model)
        _, f2 = score_batch(feats, loaded)
        np.testing.assert_array_equal(f1, f2)

    def test_identical_training_gives_identical_bytes(self, tmp_path, rng):
        feats = rng.standard_normal((8, 2, 2, 3))
        y = np.array([1, -1] * 4)
        feats[y == 1, ..., 0] += 2.0
        save_model(train_ensemble(feats, y, seed=9), tmp_path / "a.json")
        save_model(train_ensemble(feats.copy(), y.copy(), seed=9), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_bad_format_rejected(self, tmp_path):
        (tmp_path / "bad.json").write_text('{"format": "something-else"}')
        with pytest.raises(TrainingError):
            load_model(tmp_path / "bad.json")
