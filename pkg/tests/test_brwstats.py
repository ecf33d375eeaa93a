import json
import math

import numpy as np
import pytest

from lobtree import brwstats as B
from lobtree.measures import JumpDistribution

REF = JumpDistribution.parse("-1:0.3,1:0.7")
UP = JumpDistribution.degenerate_up()


def test_stat_report_pass_rule():
    r = B.StatReport("x", "p", 0.5, 0.01, 10, 1, target=0.52, tol=0.03)
    assert r.passed
    r = B.StatReport("x", "p", 0.5, 0.01, 10, 1, target=0.6, tol=0.03)
    assert not r.passed
    assert r.to_csv_row().split(",")[:2] == ["x", "p"]
    assert B.StatReport.CSV_HEADER.startswith("name,param,estimate,se")
    assert json.loads(r.to_json())["target"] == 0.6


def test_exact_targets():
    assert 1 - REF.mean / REF.p1 == pytest.approx(3 / 7)
    assert REF.mean ** 2 / REF.p1 == pytest.approx(0.16 / 0.7)
    assert B.size_tail_exact(1) == 1.0
    # P(|T| = 1) = 1/2, P(|T| = 2) = 1/8
    assert B.size_tail_exact(3) == pytest.approx(1 - 0.5 - 0.125)
    assert math.sqrt(100) * B.size_tail_exact(100) == pytest.approx(1 / math.sqrt(math.pi), rel=0.01)
    assert B.contour_visit_mean(1, 2) == pytest.approx(3.0)
    assert B.contour_visit_mean(2, 4) == pytest.approx(6.0)
    assert [B.variance_exact(n) for n in (1, 2, 5)] == [2, 10, 110]
    with pytest.raises(ValueError):
        B.contour_visit_mean(0, 2)


def test_label_count_exact_limits():
    assert B.label_count_exact(UP, 50) / 50 == pytest.approx(1.0)
    assert B.label_count_exact(REF, 200) / 200 == pytest.approx(1 / 0.7, rel=0.01)


def test_level_count_mean_exact():
    # E N_1 = sum_m P(1 + S_m = 1) = 1 / (1 - P(return)) for the +-1 walk: 1/(1 - 2*0.3) = 2.5
    assert B.level_count_mean_exact(REF, 1) == pytest.approx(2.5, rel=1e-6)


def test_walk_helpers():
    rw = B.RandomWalkSpec(REF)
    beta = rw.chernoff_rate()
    assert beta == pytest.approx(2 * math.sqrt(0.21), rel=1e-6)
    assert rw.tail_after(1000) < 1e-30
    p, off = rw.pmf_of_sum(3)
    assert p.sum() == pytest.approx(1.0) and p[3 + off] == pytest.approx(0.7 ** 3)
    assert B.truncation_bias_bound(REF, 40) == pytest.approx((3 / 7) ** 40)


def test_tau_identity_small():
    r = B.tau_identity(REF, 2000, 1)
    assert r.estimate == 0 and r.passed


def test_mean_killed_small():
    r = B.mean_killed(REF, 50_000, 3)
    assert r.passed and r.target == pytest.approx(3 / 7)
    assert B.mean_killed(UP, 1000, 3).estimate == 0


def test_height_and_size_tails_small():
    for r in B.height_tail([5, 10], 100_000, 2):
        assert r.passed
    for r in B.size_tail([100], 100_000, 2):
        assert r.passed


def test_min_walk_positive_small():
    r = B.min_walk_positive(REF, 200, 50_000, 4)
    assert r.passed and r.target == pytest.approx(4 / 7)


def test_contour_visits_small():
    reps = B.conditioned_generation(2, [1], "height", 100_000, 5)
    (v,) = [r for r in reps if r.name == "contour_visits"]
    assert v.target == 3 and v.passed


def test_variance_and_second_moment_small():
    for r in B.variance_growth([1, 2], 100_000, 6):
        assert r.passed
    for r in B.z_second_moment([1, 3], 100_000, 6):
        assert r.passed


def test_kcal_degenerate():
    for r in B.kcal_conditioned(UP, [0, 5], 2000, 7):
        assert r.estimate == 0


def test_node_count_decreases_in_kappa():
    reps = B.node_count_at_level(REF, [2], None, 0, [1, 50, 10_000], 20_000, 8)
    probs = [r.estimate * 2 / float(r.param.split("kappa=")[1]) for r in reps]
    assert probs[0] >= probs[1] >= probs[2] and probs[2] < 1e-3
    assert reps[0].extra["mean_count"] == pytest.approx(reps[0].extra["mean_count_exact"], rel=0.1)


def test_reproducible():
    a = B.mean_killed(REF, 5000, 11)
    b = B.mean_killed(REF, 5000, 11)
    assert a.estimate == b.estimate and a.se == b.se
