import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from splatss.errors import DimensionError, NumericError
from splatss.estimators import GassUpsampler, LtfiInterpolator, check_image
from splatss.gass import hermite_oracle_upsample
from splatss.harness.train import TrainConfig, gass_dataset, ltfi_dataset

CFG = TrainConfig(steps=2, lr_res=(16, 16), gaussians=300, n_sequences=2, unroll=3)


@pytest.fixture(scope="module")
def gass_data():
    seqs = gass_dataset(CFG)
    return [s.bundles for s in seqs], [s.targets for s in seqs]


def test_params_and_clone():
    est = GassUpsampler(scale=4, steps=7)
    assert est.get_params()["steps"] == 7
    assert clone(est).get_params() == est.get_params()
    assert LtfiInterpolator(no_tru=True).get_params()["no_tru"] is True


def test_unfitted_raises(gass_data):
    with pytest.raises(NotFittedError):
        GassUpsampler().transform(gass_data[0][0])
    with pytest.raises(NotFittedError):
        LtfiInterpolator().predict([])


def test_hermite_estimator_matches_oracle(gass_data):
    bundles = gass_data[0][0]
    out = GassUpsampler.hermite(2).set_params(no_gtrr=True).transform(bundles)
    assert out.shape == (3, 3, 32, 32)
    b = bundles[0]
    ref = np.clip(hermite_oracle_upsample(b.color, b.grad_x, b.grad_y, 2), 0, 1)
    np.testing.assert_allclose(out[0][:, 4:-4, 4:-4], ref[:, 4:-4, 4:-4], atol=1e-4)


def test_gass_fit_transform(gass_data):
    X, y = gass_data
    est = GassUpsampler(steps=2).fit(X, y)
    assert len(est.log_.losses) == 2 and est.checkpoint_.kind == "gass"
    out = est.transform(X[1])
    assert out.shape == (3, 3, 32, 32) and np.all((out >= 0) & (out <= 1))


def test_gass_fit_validation(gass_data):
    X, y = gass_data
    with pytest.raises(ValueError):
        GassUpsampler(steps=1).fit(X, y[:1])
    with pytest.raises(DimensionError):
        GassUpsampler(scale=4, steps=1).fit(X, y)
    with pytest.raises(TypeError):
        GassUpsampler(steps=1).fit([[np.zeros((3, 16, 16))]], [[np.zeros((3, 32, 32))]])


def test_ltfi_fit_predict():
    data = ltfi_dataset(CFG)
    est = LtfiInterpolator(steps=2).fit(data)
    out = est.predict(data[0])
    assert out.shape == (2, 3, 32, 32) and np.all((out >= 0) & (out <= 1))
    np.testing.assert_array_equal(est.predict([g.prep for g in data[0]]), out)
    with pytest.raises(TypeError):
        LtfiInterpolator(steps=1).fit([[object()]])


def test_check_image():
    assert check_image(np.zeros((3, 2, 2), np.float64)).dtype == np.float32
    with pytest.raises(DimensionError):
        check_image(np.zeros((2, 2)))
    with pytest.raises(NumericError):
        check_image(np.full((3, 2, 2), np.nan))
