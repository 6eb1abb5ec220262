import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from puschpool import numerics as nm
from puschpool.estimators import ChannelEstimator, MMSEEqualizer, NoiseVarianceEstimator
from puschpool.pipeline import DESK, run_golden

from conftest import crandn


@pytest.mark.parametrize("est", [ChannelEstimator(coherence_sc=12), NoiseVarianceEstimator(),
                                 MMSEEqualizer(sigma2=0.5)])
def test_clone_and_params(est):
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert twin is not est


def test_set_params():
    eq = MMSEEqualizer().set_params(sigma2=0.2)
    assert eq.sigma2 == 0.2


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        MMSEEqualizer().predict(np.ones((4, 2), np.complex64))


def test_estimators_reproduce_golden_chain():
    g = run_golden(DESK)
    p = DESK.N_pilot
    y_pilot = g.y_bf[:p]
    x_pilot = g.stimulus.x_pilot.astype(np.complex64)
    che = ChannelEstimator(coherence_sc=DESK.coherence_sc).fit(y_pilot, x_pilot)
    np.testing.assert_array_equal(che.channel_, g.h_hat)
    ne = NoiseVarianceEstimator().fit(y_pilot, che.channel_, x_pilot)
    assert ne.sigma2_ == g.sigma2_hat
    eq = MMSEEqualizer(sigma2=ne.sigma2_).fit(che.channel_)
    x_hat = eq.predict(np.swapaxes(g.y_bf[p:], -1, -2))
    np.testing.assert_array_equal(x_hat, g.x_hat)
    assert -eq.score(np.swapaxes(g.y_bf[p:], -1, -2), np.swapaxes(g.stimulus.x_data, -1, -2)) \
        == pytest.approx(g.evm)


def test_equalizer_noiseless_recovery(rng):
    h = crandn(rng, (10, 8, 4))
    x = crandn(rng, (10, 4))
    y = np.einsum("sbl,sl->sb", h.astype(complex), x).astype(np.complex64)
    assert nm.relative_error(MMSEEqualizer().fit(h).predict(y), x) <= 1e-4
