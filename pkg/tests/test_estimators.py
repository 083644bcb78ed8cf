import numpy as np
import pytest
from sklearn.base import BaseEstimator, clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score

from kinverify.data import to_arrays
from kinverify.estimators import JuryVerifier, SiameseVerifier, TripletVerifier
from kinverify.exceptions import ConfigError, ShapeError
from kinverify.heads import init_head
from kinverify.jury import jury_eval

FAST = dict(epochs=3, hidden_units=16)


@pytest.fixture(scope="module")
def pair_data(small_synth, small_bench):
    return (to_arrays(small_synth.store, small_bench.train_pairs),
            to_arrays(small_synth.store, small_bench.val_pairs))


@pytest.fixture(scope="module")
def triplet_data(small_synth, small_bench):
    return (to_arrays(small_synth.store, small_bench.train_triplets),
            to_arrays(small_synth.store, small_bench.val_triplets))


def test_get_params_and_clone():
    est = SiameseVerifier(fusion="cat", loss="focal", focal_alpha=0.4, epochs=7)
    params = est.get_params()
    assert params["fusion"] == "cat" and params["focal_alpha"] == 0.4 and params["epochs"] == 7
    assert clone(est).get_params() == params
    assert TripletVerifier(lambda1=0.3).get_params()["lambda1"] == 0.3


def test_fit_predict(pair_data):
    (X, y, _), (Xv, yv, _) = pair_data
    est = SiameseVerifier(**FAST).fit(X, y)
    proba = est.predict_proba(Xv)
    assert proba.shape == (len(yv), 2)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert set(np.unique(est.predict(Xv))) <= {0, 1}
    np.testing.assert_array_equal(est.predict(Xv), (est.decision_function(Xv) > 0.5).astype(int))
    assert len(est.loss_curve_) == 3
    assert 0.0 <= est.score(Xv, yv) <= 1.0


def test_threshold_parameter(pair_data):
    (X, y, _), (Xv, _, _) = pair_data
    est = SiameseVerifier(**FAST).fit(X, y)
    est.set_params(threshold=1.0)
    assert not est.predict(Xv).any()
    est.set_params(threshold=0.0)
    assert est.predict(Xv).all()


def test_not_fitted_and_bad_shapes(pair_data):
    (X, y, _), _ = pair_data
    with pytest.raises(NotFittedError):
        SiameseVerifier().predict(X)
    with pytest.raises(ShapeError):
        SiameseVerifier(**FAST).fit(X[:, :1], y)
    est = SiameseVerifier(**FAST).fit(X, y)
    with pytest.raises(ShapeError):
        est.predict(X[:, :, :4])
    with pytest.raises(ValueError):
        SiameseVerifier(**FAST).fit(np.where(X > 0, np.nan, X), y)


def test_works_with_cross_validation(pair_data):
    (X, y, _), _ = pair_data
    scores = cross_val_score(SiameseVerifier(epochs=2, hidden_units=8), X, y, cv=2)
    assert scores.shape == (2,)


def test_save_and_reload(pair_data, tmp_path):
    from kinverify.heads import load_model
    (X, y, _), (Xv, _, _) = pair_data
    est = SiameseVerifier(threshold=0.42, **FAST).fit(X, y)
    est.save(tmp_path / "m.kv")
    head, t, meta = load_model(tmp_path / "m.kv")
    again = SiameseVerifier.from_head(head, t)
    assert t == 0.42 and meta["epochs"] == "3"
    np.testing.assert_array_equal(again.decision_function(Xv), est.decision_function(Xv))


def test_triplet_verifier(triplet_data):
    (X, y, r), (Xv, yv, rv) = triplet_data
    est = TripletVerifier(type_thresholds={"FMD": 0.3, "FMS": 0.4}, **FAST).fit(X, y)
    s_fc, s_mc = est.head_scores(Xv)
    np.testing.assert_array_equal(est.decision_function(Xv), 0.5 * s_fc + 0.5 * s_mc)
    cut = np.where(rv == "FMD", 0.3, 0.4)
    np.testing.assert_array_equal(est.predict(Xv, rv), (est.decision_function(Xv) > cut).astype(int))
    np.testing.assert_array_equal(est.predict(Xv), (est.decision_function(Xv) > 0.5).astype(int))
    assert not np.shares_memory(est.model_.fc_head.w1, est.model_.mc_head.w1)


def test_jury_of_identical_members_equals_single_at_t_median(pair_data):
    (X, y, _), (Xv, yv, rv) = pair_data
    single = SiameseVerifier(**FAST).fit(X, y)
    jury = JuryVerifier(single, [single, single, single])
    s = single.decision_function(Xv)
    assert not np.any(s == 0.3)
    np.testing.assert_array_equal(jury.predict(Xv), (s > 0.3).astype(int))
    rep = jury_eval(single, [single] * 3, Xv, yv, rv)
    single.set_params(threshold=0.3)
    from kinverify.evaluation import report_from_arrays
    assert rep.per_type == report_from_arrays(rv, single.predict(Xv), yv).per_type


def test_jury_fits_unfitted_members(pair_data):
    (X, y, _), (Xv, _, _) = pair_data
    jury = JuryVerifier(SiameseVerifier(random_state=1, **FAST),
                        [SiameseVerifier(random_state=s, **FAST) for s in (2, 3)]).fit(X, y)
    assert jury.member_scores(Xv).shape == (3, len(Xv))
    with pytest.raises(NotFittedError):
        JuryVerifier(SiameseVerifier(), [SiameseVerifier()]).predict(Xv)


def test_jury_major_confident_sample_ignores_auxiliaries():
    class Fixed(BaseEstimator):
        def __init__(self, s=None):
            self.s = np.array(s)
            self.fitted_ = True

        def fit(self, X, y):
            return self

        def decision_function(self, X):
            return self.s

    jury = JuryVerifier(Fixed([0.7]), [Fixed([0.0]), Fixed([0.0]), Fixed([0.0])])
    assert jury.predict(None).tolist() == [1]


def test_jury_config_errors():
    with pytest.raises(ConfigError):
        JuryVerifier(SiameseVerifier(), []).fit(np.zeros((2, 2, 2)), [0, 1])
    with pytest.raises(ConfigError):
        JuryVerifier(SiameseVerifier(), [SiameseVerifier()], t_low=0.4).fit(np.zeros((2, 2, 2)), [0, 1])


def test_from_head_wraps_existing_head(rng):
    head = init_head("cat", 3, 0, 8)
    est = SiameseVerifier.from_head(head, 0.5)
    assert est.decision_function(rng.standard_normal((4, 2, 3))).shape == (4,)
