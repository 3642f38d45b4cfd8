import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cospeech.exceptions import EmptyCorpus, NonPsd, ShapeMismatch, SingularCovarianceWarning, TooShort
from cospeech.metrics import (
    TABLE_COLUMNS,
    FeatureGaussian,
    LandmarkAutoencoder,
    fgd,
    fit_gaussian,
    fld,
    frechet_gaussian_distance,
    mace,
    maje,
    male,
    MetricReport,
)
from helpers import expression_windows

EXACT = 1e-12
FRECHET_TOL = 1e-9
FLD_ZERO = 1e-6
NOISE_MM = (1.0, 2.0, 4.0)


def loop_error(gt, syn):
    total, count = 0.0, 0
    for n in range(gt.shape[0]):
        for t in range(gt.shape[1]):
            for p in range(gt.shape[2]):
                d = gt[n, t, p] - syn[n, t, p]
                total += np.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
                count += 1
    return total / count


def gaussian(mean, cov):
    return FeatureGaussian(np.atleast_1d(np.asarray(mean, float)), np.atleast_2d(np.asarray(cov, float)))


# reconstruction errors ----------------------------------------------------------

def test_male_matches_loop_oracle(rng):
    gt = rng.standard_normal((3, 5, 7, 3))
    syn = rng.standard_normal((3, 5, 7, 3))
    assert abs(male(gt, syn) - loop_error(gt, syn)) < EXACT
    assert abs(maje(gt, syn) - loop_error(gt, syn)) < EXACT


def test_identical_and_constant_offset(rng):
    gt = rng.standard_normal((2, 4, 6, 3)) * 100
    assert male(gt, gt) == 0.0 and maje(gt, gt) == 0.0 and mace(gt, gt) == 0.0
    assert abs(male(gt, gt + np.array([1.0, 0, 0])) - 1.0) < EXACT


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        male(np.zeros((2, 3, 3)), np.zeros((2, 4, 3)))
    with pytest.raises(ShapeMismatch):
        maje(np.zeros((2, 3, 2)), np.zeros((2, 3, 2)))


def test_mace_linear_motion_is_zero(rng):
    t = np.arange(10.0)[:, None, None]
    a = rng.standard_normal((1, 4, 3)) + t * rng.standard_normal((1, 4, 3))
    b = rng.standard_normal((1, 4, 3)) + t * rng.standard_normal((1, 4, 3))
    assert mace(a, b) < 1e-9


def test_mace_quadratic_equals_acceleration():
    fps = 15.0
    acc = np.array([3.0, -4.0, 12.0])  # |a| = 13
    t = np.arange(12) / fps
    gt = (0.5 * t[:, None, None] ** 2 * acc).repeat(2, axis=1)
    syn = np.zeros_like(gt)
    assert abs(mace(gt, syn, fps) - 13.0) < 1e-9


def test_mace_too_short():
    with pytest.raises(TooShort):
        mace(np.zeros((2, 4, 3)), np.zeros((2, 4, 3)))


# Frechet distance ---------------------------------------------------------------

def test_frechet_analytic_1d():
    assert abs(frechet_gaussian_distance(gaussian(0, 1), gaussian(1, 1)) - 1.0) < FRECHET_TOL
    assert abs(frechet_gaussian_distance(gaussian(0, 1), gaussian(0, 4)) - 1.0) < FRECHET_TOL
    g = gaussian([1.0, 2.0], [[2.0, 0.5], [0.5, 1.0]])
    assert frechet_gaussian_distance(g, g) < FRECHET_TOL


def test_frechet_diagonal_closed_form(rng):
    v1 = rng.uniform(0.5, 3, 5)
    v2 = rng.uniform(0.5, 3, 5)
    mu = rng.standard_normal(5)
    expected = mu @ mu + np.sum((np.sqrt(v1) - np.sqrt(v2)) ** 2)
    got = frechet_gaussian_distance(gaussian(np.zeros(5), np.diag(v1)), gaussian(mu, np.diag(v2)))
    assert abs(got - expected) < FRECHET_TOL


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(1, 6))
def test_frechet_symmetric_and_nonnegative(seed, d):
    r = np.random.default_rng(seed)
    a = r.standard_normal((d, d))
    b = r.standard_normal((d, d))
    g1 = gaussian(r.standard_normal(d), a @ a.T)
    g2 = gaussian(r.standard_normal(d), b @ b.T)
    d12 = frechet_gaussian_distance(g1, g2)
    assert d12 >= 0
    assert abs(d12 - frechet_gaussian_distance(g2, g1)) < FRECHET_TOL * max(1.0, d12)


def test_frechet_rejects_non_psd():
    with pytest.raises(NonPsd):
        frechet_gaussian_distance(gaussian([0, 0], [[1, 0], [0, -1]]), gaussian([0, 0], np.eye(2)))
    with pytest.raises(ShapeMismatch):
        frechet_gaussian_distance(gaussian([0], [1]), gaussian([0, 0], np.eye(2)))


def test_fit_gaussian_shrinkage_warning(rng):
    with pytest.warns(SingularCovarianceWarning):
        g = fit_gaussian(rng.standard_normal((5, 10)))
    assert np.all(np.linalg.eigvalsh(g.covariance) > 0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        g = fit_gaussian(rng.standard_normal((50, 3)))
    assert np.allclose(g.covariance, g.covariance.T, atol=1e-12)
    with pytest.raises(EmptyCorpus):
        fit_gaussian(np.zeros((1, 3)))


# autoencoder and FLD ------------------------------------------------------------

@pytest.fixture(scope="module")
def corpus():
    return expression_windows(200, seed=0)


@pytest.fixture(scope="module")
def encoder(corpus):
    return LandmarkAutoencoder(d_enc=32, epochs=100, seed=0).fit(corpus)


def test_autoencoder_overfits_small_set():
    w = expression_windows(16, seed=5)
    ae = LandmarkAutoencoder(d_enc=8, epochs=300, seed=0).fit(w)
    spread = np.sqrt(np.mean((w - w.mean(axis=(0, 1))) ** 2))
    assert ae.reconstruction_error(w) < 0.05 * spread


def test_autoencoder_contract(corpus, encoder):
    f1 = encoder.transform(corpus[:5])
    assert f1.shape == (5, 32)
    assert np.array_equal(f1, encoder.transform(corpus[:5]))
    again = LandmarkAutoencoder(d_enc=4, epochs=2, seed=3).fit(corpus[:8])
    same = LandmarkAutoencoder(d_enc=4, epochs=2, seed=3).fit(corpus[:8])
    assert np.array_equal(again.transform(corpus[:3]), same.transform(corpus[:3]))
    with pytest.raises(EmptyCorpus):
        LandmarkAutoencoder().fit(np.zeros((0, 34, 68, 3)))
    with pytest.raises(ShapeMismatch):
        encoder.transform(corpus[:2, :20])


def test_fld_identity(corpus, encoder):
    assert fld(corpus, corpus, encoder) < FLD_ZERO
    assert fgd(corpus, corpus, encoder) < FLD_ZERO


def test_fld_increases_with_noise(corpus, encoder):
    noise = np.random.default_rng(1).standard_normal(corpus.shape)
    values = [fld(corpus, corpus + s * noise, encoder) for s in NOISE_MM]
    assert values[0] > 0
    assert all(b > a for a, b in zip(values, values[1:]))


def test_fld_halves_below_unit_noise(corpus, encoder):
    noise = np.random.default_rng(1).standard_normal(corpus.shape)
    halves = fld(corpus[:100], corpus[100:], encoder)
    assert 0 < halves < fld(corpus, corpus + noise, encoder)


def test_fld_permutation_invariant(corpus, encoder):
    noisy = corpus[:60] + np.random.default_rng(2).standard_normal(corpus[:60].shape)
    perm = np.random.default_rng(3).permutation(60)
    a = fld(corpus[:60], noisy, encoder)
    assert abs(a - fld(corpus[:60][perm], noisy[::-1], encoder)) < 1e-9 * max(1.0, a)


def test_fld_empty_corpus(corpus, encoder):
    with pytest.raises(EmptyCorpus):
        fld(corpus[:0], corpus, encoder)


# report -------------------------------------------------------------------------

def test_report_columns_and_round_trip():
    r = MetricReport(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, sample_count=7)
    assert TABLE_COLUMNS == ("MALE", "MAJE", "MAcE-LM", "MAcE-P", "FLD", "FGD")
    header, row = r.to_csv().strip().split("\n")
    assert header.split(",") == list(TABLE_COLUMNS)
    assert [float(v) for v in row.split(",")] == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    assert MetricReport.from_dict(json.loads(r.to_json())) == r


@pytest.mark.parametrize("bad", [-1.0, float("nan"), float("inf")])
def test_report_rejects_bad_values(bad):
    with pytest.raises(ValueError):
        MetricReport(bad, 0.0, 0.0, 0.0, 0.0, 0.0, sample_count=1)
