import math

import numpy as np
import pytest

from lobtree import verify as V
from lobtree.lobsim import ModelParams
from lobtree.measures import JumpDistribution, OrderBook

REF = ModelParams(JumpDistribution.parse("-1:0.3,1:0.7"))
UP = ModelParams(JumpDistribution.degenerate_up())


def test_reference_laws():
    law = V.price_reference(REF, 1.0)
    assert law.sigma == pytest.approx(math.sqrt(2) * 0.4)
    assert float(law.cdf(law.scale)) == pytest.approx(2 * 0.8413447460685429 - 1)
    assert float(law.cdf(-1.0)) == 0.0
    assert V.mass_reference(REF, 1.0).mean() == pytest.approx(math.sqrt(2) * math.sqrt(2 / math.pi))
    lt = V.ReferenceLaw("levy_local_time", REF.alpha, 1.0)
    assert lt.mean() / 0.4 == pytest.approx(1.4105, abs=1e-4)
    lt2 = V.ReferenceLaw("levy_local_time", REF.alpha, 1.0, normalization=2.0)
    assert lt2.mean() == pytest.approx(2 * lt.mean())
    rng = np.random.default_rng(0)
    s = law.sample(rng, 100_000)
    assert s.min() >= 0 and s.mean() == pytest.approx(law.mean(), rel=0.02)
    with pytest.raises(ValueError):
        V.ReferenceLaw("gauss", 1.0, 1.0)


def test_ks_one_sample_exact_law():
    law = V.mass_reference(REF, 1.0)
    d, p = V.ks_one_sample(law.sample(np.random.default_rng(1), 5000), law)
    assert d < 1.36 / math.sqrt(5000) * 1.5


def test_time_zero_degenerate():
    assert V.price_marginal_test(REF, 50, 0.0, 100, 1).statistic == 0
    assert V.mass_marginal_test(REF, 50, 0.0, 100, 1).statistic == 0


def test_marginals_small():
    r = V.price_marginal_test(REF, 30, 1.0, 500, 2, threshold=0.12)
    assert r.passed and r.extra["sigma"] == pytest.approx(0.5657, abs=1e-4)
    r = V.mass_marginal_test(REF, 30, 1.0, 500, 2, threshold=0.12, mean_rel_tol=0.12)
    assert r.passed


def test_ratio_degenerate_is_zero():
    r = V.ratio_test(UP, [5, 10], 1.0, 50, 3)
    assert r.extra["deviation"] == {5: 0.0, 10: 0.0}


def test_mass_dominates_price():
    from lobtree.lobsim import snapshot_batch
    sb = snapshot_batch(REF, 20, [0.5, 1.0], 300, 4)
    assert np.all(sb.mass >= sb.price)


def test_density_inconclusive():
    r = V.density_profile_test(REF, 20, 1.0, 0.5, [0.25], 20, 5, min_hits=100)
    assert r.inconclusive and not r.passed
    with pytest.raises(ValueError):
        V.density_profile_test(REF, 20, 1.0, 0.5, [0.6], 20, 5)


def test_local_time_small():
    r = V.local_time_tests(REF, 20, 1.0, [0.4, 0.2], 400, 6)
    e = r.extra
    # occupation-density local time is twice the semimartingale one
    assert e["l_pi_target_normalized"] == pytest.approx(2 * e["l_pi_target"])
    assert e["l_m_mean"] == pytest.approx(e["l_m_identity"], rel=0.15)


def test_idle_fraction_small():
    r = V.idle_fraction_test(REF, 2e4, 20, 7, tol=0.1)
    assert r.passed


def test_coupling_small():
    r = V.coupling_equivalence_test(REF, 0, 3000, 8, censor=20_000)
    assert r.passed, r.extra["p_values"]
    assert r.extra["mean_deposited"] == pytest.approx(3 / 7, abs=0.1)


def test_excursion_iid_small():
    r = V.excursion_iid_test(REF, 3, 40, 40, 9, n_perm=50)
    assert not r.inconclusive
    assert r.extra["band"] > 0 and r.extra["naive_band"] > 0


def test_excursion_iid_budget():
    r = V.excursion_iid_test(REF, 0, 10, 10, 9, max_events=5)
    assert r.inconclusive


def test_shuffled_control():
    x = np.repeat(np.arange(1000), 3)  # strongly serially correlated
    assert V.shuffled_control(x, 1) < 0.1


def test_forest_small():
    r = V.forest_vs_ctmc_test(REF, OrderBook.parse("1:2"), 1500, 10, censor=5000)
    assert r.passed
