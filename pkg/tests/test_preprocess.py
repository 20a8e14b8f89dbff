import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tabanogan.io import DatasetSchema, load_csv, write_csv
from tabanogan.preprocess import (
    Dataset,
    GmmColumnModel,
    ModeEncodedValue,
    PreprocessConfig,
    bic,
    drop_columns,
    fit_encoder,
    fit_gmm_em,
    fit_minmax,
    mode_denormalize,
    mode_normalize,
    select_gmm_bic,
    split_by_label,
)

from oracles import two_cluster_moments


def five_columns(n=8):
    rng = np.random.default_rng(0)
    return Dataset(["dow", "hod", "a", "b", "c"], rng.normal(size=(n, 5)))


# ------------------------------------------------------------- drop / split

def test_drop_dow_hod():
    out = drop_columns(five_columns(), ["dow", "hod"])
    assert out.columns == ["a", "b", "c"]
    assert out.values.shape == (8, 3)


def test_drop_nothing_is_identity():
    data = five_columns()
    out = drop_columns(data, [])
    assert out.columns == data.columns
    np.testing.assert_array_equal(out.values, data.values)


def test_drop_unknown_column():
    with pytest.raises(KeyError):
        drop_columns(five_columns(), ["nope"])


def labeled(labels):
    n = len(labels)
    return Dataset(["x"], np.arange(n, dtype=float)[:, None], np.array(labels, dtype=object), "label")


def test_split_counts():
    normal, anomaly = split_by_label(labeled(["1"] * 7 + ["0"] * 3), "label", "0")
    assert (len(normal), len(anomaly)) == (7, 3)


def test_split_all_normal():
    normal, anomaly = split_by_label(labeled(["1"] * 5), "label", "0")
    assert (len(normal), len(anomaly)) == (5, 0)


def test_split_missing_label_column():
    with pytest.raises(KeyError):
        split_by_label(labeled(["1", "0"]), "class", "0")
    with pytest.raises(KeyError):
        split_by_label(five_columns(), "label", "0")


def test_split_matches_numeric_spellings():
    normal, anomaly = split_by_label(labeled(["0.0", "1", "0", "1.0"]), "label", "0")
    np.testing.assert_array_equal(anomaly.values[:, 0], [0.0, 2.0])


@given(st.lists(st.sampled_from(["0", "1"]), min_size=1, max_size=40))
def test_split_is_exhaustive_and_disjoint(labels):
    normal, anomaly = split_by_label(labeled(labels), "label", "0")
    ids = np.r_[normal.values[:, 0], anomaly.values[:, 0]]
    assert sorted(ids) == list(range(len(labels)))
    assert all(l == "1" for l in normal.labels) and all(l == "0" for l in anomaly.labels)


def test_split_counts_on_full_size_stand_in(tmp_path):
    # stand-in with the published row counts: 60,425 rows of which 1,921 are anomalous
    n, n_anom = 60_425, 1_921
    rng = np.random.default_rng(0)
    labels = np.array(["1"] * n)
    labels[rng.choice(n, n_anom, replace=False)] = "0"
    path = tmp_path / "building.csv"
    write_csv(path, ["dow", "hod", "v", "label"],
              ([i % 7, i % 24, 0.5, lab] for i, lab in enumerate(labels)))
    data = load_csv(path, DatasetSchema(label_column="label"))
    assert len(data) == 60_425
    normal, anomaly = split_by_label(drop_columns(data, ["dow", "hod"]), "label", "0")
    assert (len(normal), len(anomaly)) == (58_504, 1_921)


# ------------------------------------------------------------------- minmax

def test_minmax_endpoints_and_midpoint():
    p = fit_minmax([0.0, 10.0])
    np.testing.assert_array_equal(p.transform(np.array([0.0, 10.0, 5.0])), [-1.0, 1.0, 0.0])


def test_minmax_round_trip():
    x = np.random.default_rng(0).normal(0, 50, 1000)
    p = fit_minmax(x)
    back = p.inverse_transform(p.transform(x))
    assert np.max(np.abs(back - x) / np.maximum(np.abs(x), 1e-300)) < 1e-12


def test_minmax_constant_column_warns():
    with pytest.warns(RuntimeWarning):
        p = fit_minmax([4.0, 4.0, 4.0])
    np.testing.assert_array_equal(p.transform(np.array([4.0, 4.0, 4.0])), [0.0, 0.0, 0.0])


def test_minmax_empty_column():
    with pytest.raises(ValueError):
        fit_minmax([])


@given(arrays(np.float64, st.integers(2, 50), elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_minmax_maps_min_and_max_exactly(x):
    if x.min() == x.max():
        return
    p = fit_minmax(x)
    y = p.transform(x)
    assert y[np.argmin(x)] == -1.0 and y[np.argmax(x)] == 1.0
    assert np.all((y >= -1) & (y <= 1))


# ---------------------------------------------------------------------- EM

def test_em_single_component_closed_form():
    x = np.random.default_rng(2).normal(3.0, 2.0, 500)
    m = fit_gmm_em(x, 1)
    assert m.means[0] == pytest.approx(x.mean(), rel=1e-12)
    assert m.variances[0] == pytest.approx(x.var(), rel=1e-12)
    assert m.weights[0] == 1.0


def test_em_two_cluster_recovery():
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal(-5, 0.5, 300), rng.normal(5, 0.5, 700)]
    rng.shuffle(x)
    (m_neg, m_pos), (p_neg, p_pos) = two_cluster_moments(x)
    model = fit_gmm_em(x, 2, seed=0)
    order = np.argsort(model.means)
    np.testing.assert_allclose(model.means[order], [m_neg, m_pos], atol=0.1)
    np.testing.assert_allclose(model.means[order], [-5, 5], atol=0.1)
    np.testing.assert_allclose(model.weights[order], [p_neg, p_pos], atol=0.05)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_em_log_likelihood_non_decreasing(seed, m):
    rng = np.random.default_rng(seed)
    k = rng.integers(1, 4)
    x = np.concatenate([rng.normal(rng.uniform(-10, 10), rng.uniform(0.1, 3), 80) for _ in range(k)])
    model = fit_gmm_em(x, m, seed=seed)
    ll = np.asarray(model.log_likelihood)
    assert np.all(np.diff(ll) >= -1e-9)
    assert abs(model.weights.sum() - 1.0) < 1e-9
    assert np.all(model.variances > 0) and np.all(model.weights >= 0)


def test_em_prunes_light_components():
    rng = np.random.default_rng(1)
    x = np.r_[rng.normal(0, 1, 2000), [50.0]]  # one far outlier cannot hold 0.5% of the mass
    model = fit_gmm_em(x, 10, seed=0)
    assert np.all(model.weights >= 0.005)
    assert model.n_components < 10


def test_em_errors():
    with pytest.raises(ValueError):
        fit_gmm_em(np.array([1.0, 2.0]), 0)
    with pytest.raises(ValueError):
        fit_gmm_em(np.array([1.0, 1.0, 2.0]), 3)  # more components than distinct values
    with pytest.raises(ValueError):
        fit_gmm_em(np.array([1.0, np.nan, 2.0]), 1)


def test_em_deterministic_given_seed():
    x = np.random.default_rng(4).normal(size=300)
    a, b = fit_gmm_em(x, 3, seed=7), fit_gmm_em(x, 3, seed=7)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.variances, b.variances)


def test_bic_selects_true_mode_count():
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal(-4, 0.3, 400), rng.normal(4, 0.3, 400)]
    model = select_gmm_bic(x, 10)
    assert model.n_components == 2
    assert bic(model, x) <= bic(fit_gmm_em(x, 1), x)


# -------------------------------------------------------- mode normalization

@pytest.fixture
def two_mode():
    return GmmColumnModel(np.array([0.4, 0.6]), np.array([-5.0, 5.0]), np.array([0.25, 1.0]))


def test_mode_normalize_centre(two_mode):
    enc = mode_normalize(np.array([5.0]), two_mode)
    np.testing.assert_array_equal(enc.indicator, [[0.0, 1.0]])
    assert enc.scalar[0] == 0.0


def test_mode_normalize_clip_boundary(two_mode):
    enc = mode_normalize(np.array([5.0 + 4.0 * 1.0, 5.0 + 4.5]), two_mode)
    np.testing.assert_array_equal(enc.scalar, [1.0, 1.0])


def test_mode_denormalize_examples(two_mode):
    assert mode_denormalize(ModeEncodedValue(np.array([1.0, 0.0]), np.array(0.0)), two_mode) == -5.0
    assert mode_denormalize(ModeEncodedValue(np.array([0.0, 1.0]), np.array(1.0)), two_mode) == 9.0


def test_mode_denormalize_rejects_non_one_hot(two_mode):
    with pytest.raises(ValueError):
        mode_denormalize(ModeEncodedValue(np.array([0.5, 0.5]), np.array(0.0)), two_mode)
    with pytest.raises(ValueError):
        mode_denormalize(ModeEncodedValue(np.array([1.0, 1.0]), np.array(0.0)), two_mode)


def test_mode_normalize_requires_fitted_model():
    with pytest.raises(ValueError):
        mode_normalize(np.array([1.0]), None)


def test_round_trip_on_draws_from_fitted_mixture():
    rng = np.random.default_rng(0)
    data = np.r_[rng.normal(-5, 0.5, 500), rng.normal(5, 1.0, 500)]
    model = fit_gmm_em(data, 2, seed=0)
    comp = rng.choice(2, 1000, p=model.weights)
    x = rng.normal(model.means[comp], model.stds[comp])
    enc = mode_normalize(x, model)
    unclipped = np.abs(enc.scalar) < 1.0
    back = mode_denormalize(enc, model)
    np.testing.assert_allclose(back[unclipped], x[unclipped], rtol=0, atol=1e-9)
    assert unclipped.mean() > 0.99


@given(st.integers(0, 1), st.floats(-1.0, 1.0))
def test_normalize_after_denormalize_is_identity(k, s):
    model = GmmColumnModel(np.array([0.5, 0.5]), np.array([-50.0, 50.0]), np.array([1.0, 4.0]))
    enc = ModeEncodedValue(np.eye(2)[k], np.array(s))
    again = mode_normalize(np.atleast_1d(mode_denormalize(enc, model)), model)
    np.testing.assert_array_equal(again.indicator[0], np.eye(2)[k])
    assert again.scalar[0] == pytest.approx(s, abs=1e-12)


def test_mode_choice_is_argmax_responsibility(two_mode):
    x = np.linspace(-10, 10, 201)
    enc = mode_normalize(x, two_mode)
    np.testing.assert_array_equal(enc.indicator.argmax(axis=1), two_mode.responsibilities(x).argmax(axis=1))


# --------------------------------------------------------------- the encoder

def bimodal_table(n=500):
    rng = np.random.default_rng(0)
    a = np.where(rng.random(n) < 0.5, -3.0, 3.0) + rng.normal(0, 0.2, n)
    return Dataset(["a", "b"], np.stack([a, rng.normal(10, 2, n)], axis=1))


def test_encoder_layout_and_round_trip():
    data = bimodal_table()
    enc = fit_encoder(data, PreprocessConfig())
    assert [n.gmm.n_components for n in enc.normalizers] == [2, 1]
    assert enc.width == 3 + 2
    e = enc.transform(data.values)
    back = enc.inverse_transform(e)
    inside = np.all(np.abs(e[:, [s.scalar for s in enc.layout]]) < 1, axis=1)
    np.testing.assert_allclose(back[inside], data.values[inside], atol=1e-9)


def test_encoder_minmax_option():
    data = bimodal_table()
    enc = fit_encoder(data, PreprocessConfig(encoding="minmax"))
    assert enc.width == 2 and all(s.block_width == 0 for s in enc.layout)
    np.testing.assert_allclose(enc.inverse_transform(enc.transform(data.values)), data.values, rtol=1e-12)


def test_encoder_scale_before_gmm_round_trip():
    data = bimodal_table()
    enc = fit_encoder(data, PreprocessConfig(scale_before_gmm=True))
    e = enc.transform(data.values)
    inside = np.all(np.abs(e[:, [s.scalar for s in enc.layout]]) < 1, axis=1)
    np.testing.assert_allclose(enc.inverse_transform(e)[inside], data.values[inside], atol=1e-9)


def test_encoder_fixed_mode_count_clamped_to_distinct_values():
    data = Dataset(["a"], np.array([[1.0], [2.0], [1.0], [2.0], [2.0]]))
    enc = fit_encoder(data, PreprocessConfig(select_modes="fixed", n_modes=10))
    assert enc.normalizers[0].gmm.n_components <= 2


def test_encoder_constant_column_is_logged(caplog):
    data = Dataset(["a", "flat"], np.stack([np.arange(20.0), np.full(20, 3.0)], axis=1))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        enc = fit_encoder(data, PreprocessConfig(encoding="minmax"))
    assert "flat" in caplog.text
    np.testing.assert_array_equal(enc.transform(data.values)[:, 1], 0.0)
