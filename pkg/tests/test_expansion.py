import math

import numpy as np
import pytest

from bosepoly.expansion import (
    ExpansionConfig,
    approximate_log_partition,
    error_budget,
    kp_diagnostic,
    onsite_log_partition,
    resolve_cutoff,
    truncated_log_ratio,
)
from bosepoly.fock import onsite_energy, restricted_log_partition
from bosepoly.lattice import interaction_edges
from bosepoly.polymers import Polymer, enumerate_polymers
from bosepoly.weights import WeightRequest, polymer_weight

from conftest import make_chain, make_explicit, make_long_range_chain


def test_onsite_log_partition_single_site():
    model = make_chain(1, g=0.1, beta=1.0, U=1.0, mu=0.0)
    assert onsite_log_partition(model, 1) == pytest.approx(math.log(2))


def test_onsite_log_partition_product_structure():
    model = make_chain(5, g=0.1, beta=1.0, U=1.0, mu=0.0)
    assert onsite_log_partition(model, 1) == pytest.approx(5 * math.log(2))


def test_onsite_log_partition_three_levels():
    model = make_chain(1, g=0.1, beta=1.0, U=1.0, mu=0.5)
    # W(0)=0, W(1)=-1/2, W(2)=0
    assert onsite_log_partition(model, 2) == pytest.approx(math.log(2 + math.exp(0.5)))


def test_zero_couplings_give_zero_ratio():
    model = make_explicit(4, np.zeros((4, 4)), beta=0.4)
    for m in (1, 2, 3):
        res = truncated_log_ratio(model, ExpansionConfig(m=m, q=2))
        assert res.value == 0.0
        assert res.polymer_count == 0
    report = approximate_log_partition(model, ExpansionConfig(m=2, q=2))
    assert report.t_m == 0.0
    assert report.f_beta == report.log_z_w


def test_m1_is_sum_of_single_edge_weights():
    model = make_chain(3, g=0.4, beta=0.3, U=1.0, mu=0.2)
    q = 2
    res = truncated_log_ratio(model, ExpansionConfig(m=1, q=q))
    expected = sum(
        polymer_weight(WeightRequest(Polymer((e,)), model, q)).value
        for e in interaction_edges(model.couplings, 0.0)
    )
    assert res.value == pytest.approx(expected, rel=1e-12)


def test_single_polymer_resummation_converges_to_log1p():
    # one edge: clusters are the single polymer at each multiplicity, and the
    # series must reproduce log(1 + w), not exp(w) - 1
    model = make_chain(2, g=0.3, beta=1.0, U=1.0, mu=0.0)
    w = (math.cosh(0.3) - 1) / 2
    res = truncated_log_ratio(model, ExpansionConfig(m=6, q=1))
    assert res.value == pytest.approx(math.log1p(w), abs=1e-9)
    partial = 0.0
    for oc in res.per_order:
        partial += (-1) ** (oc.order - 1) * w**oc.order / oc.order
        assert oc.cluster_count == 1
    assert res.value == pytest.approx(partial, rel=1e-12)


def test_order_two_mixed_term_is_minus_product():
    # two overlapping single-edge polymers: brute-force polymer partition
    # function is 1 + w_a + w_b, so the order-2 cluster sum must equal
    # -(w_a^2 + w_b^2)/2 - w_a*w_b
    model = make_chain(3, g=0.4, beta=0.3, U=1.0, mu=0.0)
    q = 1
    w = {}
    for e in ((0, 1), (1, 2)):
        w[e] = polymer_weight(WeightRequest(Polymer((e,)), model, q)).value
    cfg = ExpansionConfig(m=2, q=q, polymer_threshold=0.0)
    res = truncated_log_ratio(model, cfg)
    order2 = dict((oc.order, oc.contribution) for oc in res.per_order)[2]
    wa, wb = w[(0, 1)], w[(1, 2)]
    # exclude the two-edge polymer's own singleton cluster from the brute sum
    big = polymer_weight(WeightRequest(Polymer(((0, 1), (1, 2))), model, q)).value
    assert order2 - big == pytest.approx(-(wa**2 + wb**2) / 2 - wa * wb, rel=1e-10)


def test_expansion_matches_exact_for_two_sites():
    model = make_chain(2, g=0.3, beta=1.0, U=1.0, mu=0.0)
    exact = math.log(2 + 2 * math.cosh(0.3))
    report = approximate_log_partition(model, ExpansionConfig(m=2, q=1))
    # order-2 truncation of log(1+w): error ~ w^3/3 ~ 4e-6; the wrong Ursell
    # pairing would instead leave a w^2/2 ~ 2.6e-4 residue
    assert abs(report.f_beta - exact) < 1e-5
    report6 = approximate_log_partition(model, ExpansionConfig(m=6, q=1))
    assert abs(report6.f_beta - exact) < 1e-9


def test_error_non_increasing_in_m_vs_oracle():
    model = make_chain(4, g=0.1, beta=0.1, U=1.0, mu=0.5)
    q = 3
    oracle = restricted_log_partition(
        model, range(4), interaction_edges(model.couplings, 0.0), q
    )
    errors = []
    for m in (2, 4):
        report = approximate_log_partition(model, ExpansionConfig(m=m, q=q))
        errors.append(abs(report.f_beta - oracle))
    assert errors[1] <= errors[0]


def test_report_invariants():
    model = make_chain(3, g=0.2, beta=0.2, U=1.0, mu=0.1)
    report = approximate_log_partition(model, ExpansionConfig(m=3, q=2))
    assert report.t_m == pytest.approx(
        sum(oc.contribution for oc in report.per_order), rel=1e-14
    )
    assert report.f_beta == report.log_z_w + report.t_m
    assert report.q == 2 and report.m == 3
    assert report.m_error_bound == pytest.approx(3 * math.exp(-3))


def test_determinism_across_workers_and_runs():
    model = make_chain(4, g=0.1, beta=0.1, U=1.0, mu=0.5)
    reports = [
        approximate_log_partition(model, ExpansionConfig(m=4, q=3, workers=w))
        for w in (1, 4, 1)
    ]
    dicts = [r.to_dict() for r in reports]
    assert dicts[0] == dicts[1] == dicts[2]


def test_kp_diagnostic_zero_couplings():
    model = make_explicit(3, np.zeros((3, 3)), beta=0.5)
    rows = kp_diagnostic(model, ExpansionConfig(m=2, q=2))
    assert all(r.lhs == 0.0 and r.rhs == 0.5 and r.certified for r in rows)


def test_kp_lhs_decreases_with_beta():
    lhs = []
    for beta in (0.2, 0.1):
        model = make_chain(3, g=0.5, beta=beta, U=1.0, mu=0.0)
        rows = kp_diagnostic(model, ExpansionConfig(m=3, q=2), probe_sites=[1])
        lhs.append(rows[0].lhs)
    assert lhs[1] < lhs[0]


def test_kp_flags_failure():
    # strong coupling at this beta blows past the margin
    model = make_chain(2, g=8.0, beta=1.0, U=1.0, mu=0.0)
    rows = kp_diagnostic(model, ExpansionConfig(m=2, q=3))
    assert any(not r.certified for r in rows)
    report = approximate_log_partition(model, ExpansionConfig(m=2, q=3))
    assert not report.kp_certified
    assert any("no convergence certificate" in note for note in report.notes)


def test_error_budget_formula():
    model = make_chain(4, g=0.1, beta=0.1, U=1.0, mu=0.5)
    budget = error_budget(model, ExpansionConfig(m=4, q=2))
    assert budget.m_error == pytest.approx(4 * math.exp(-4))
    assert budget.m_error_conditional
    assert budget.q_error_proxy is not None and budget.q_error_delta == 2
    # the proxy honestly reports the still-unconverged cutoff, and shrinks
    looser = error_budget(model, ExpansionConfig(m=4, q=6))
    assert looser.q_error_proxy < budget.q_error_proxy
    tighter = error_budget(model, ExpansionConfig(m=12, q=2))
    assert tighter.m_error < budget.m_error


def test_error_budget_proxy_tiny_at_converged_cutoff():
    model = make_chain(1, g=0.1, beta=0.1, U=1.0, mu=0.5)
    budget = error_budget(model, ExpansionConfig(m=4, q=20))
    assert budget.q_error_proxy is not None
    assert budget.q_error_proxy < 1e-8


def test_error_budget_without_oracle():
    model = make_chain(4, g=0.1, beta=0.1, U=1.0, mu=0.5)
    budget = error_budget(model, ExpansionConfig(m=4, q=2), oracle_dim_cap=10)
    assert budget.q_error_proxy is None


def test_q_policy_auto():
    model = make_chain(4, g=0.1, beta=0.1, U=1.0, mu=0.5)
    cfg = ExpansionConfig(m=2, q_policy="auto", theta=1.0, q_prefactor=2.0)
    q = resolve_cutoff(model, cfg)
    assert q == math.ceil(2.0 * 2.0 * math.log(4) / math.sqrt(0.1))
    assert resolve_cutoff(model, ExpansionConfig(m=2, q=7)) == 7


def test_config_validation():
    with pytest.raises(ValueError):
        ExpansionConfig(m=0, q=1)
    with pytest.raises(ValueError):
        ExpansionConfig(m=2, q=None, q_policy="explicit")
    with pytest.raises(ValueError):
        ExpansionConfig(m=2, q=1, q_policy="bogus")
    with pytest.raises(ValueError):
        ExpansionConfig(m=2, q=1, workers=0)


def test_error_budget_reports_theta_target():
    model = make_chain(4, g=0.1, beta=0.1, U=1.0, mu=0.5)
    budget = error_budget(model, ExpansionConfig(m=4, q=2), theta=2.0)
    assert budget.q_error_target == pytest.approx(4.0 ** (-2.0))


def test_cluster_beyond_ursell_cap_aborts_with_diagnostics():
    # a single edge at m = 11 produces a multiplicity-11 cluster whose copy
    # graph exceeds the memo cap
    model = make_chain(2, g=0.3, beta=0.5, U=1.0, mu=0.0)
    with pytest.raises(ValueError, match="Ursell cap"):
        truncated_log_ratio(model, ExpansionConfig(m=11, q=1))


def test_long_range_expansion_tracks_oracle():
    # richer instance: complete interaction graph, all orders interacting
    model = make_long_range_chain(5, g=0.3, alpha=2.5, beta=0.15, U=1.0, mu=0.2)
    q = 2
    oracle = restricted_log_partition(
        model, range(5), interaction_edges(model.couplings, 0.0), q
    )
    last = None
    for m in (2, 4):
        rep = approximate_log_partition(model, ExpansionConfig(m=m, q=q))
        err = abs(rep.f_beta - oracle)
        if rep.kp_certified:
            assert err <= rep.m_error_bound
        if last is not None:
            assert err <= last
        last = err
    assert last < 1e-6  # m=4 on this model is already deep in the tail


def test_weights_share_lattice_symmetry():
    # uniform periodic ring: every nearest-neighbor edge carries equal weight
    model = make_chain(4, g=0.4, beta=0.3, U=1.0, mu=0.1, periodic=True)
    res = truncated_log_ratio(model, ExpansionConfig(m=1, q=2))
    from bosepoly.weights import polymer_weight, WeightRequest
    from bosepoly.polymers import Polymer

    values = {
        e: polymer_weight(WeightRequest(Polymer((e,)), model, 2)).value
        for e in interaction_edges(model.couplings, 0.0)
    }
    vals = list(values.values())
    assert all(v == pytest.approx(vals[0], rel=1e-12) for v in vals)
    assert res.value == pytest.approx(sum(vals), rel=1e-12)


def test_two_dimensional_lattice_pipeline():
    # 2x2 periodic-free grid, long-range couplings over graph distances
    from bosepoly.lattice import ModelInstance, OnsiteParams, build_couplings, build_lattice

    lat = build_lattice([2, 2])
    coup = build_couplings(lat, "long_range", g=0.15, alpha=3.0)
    model = ModelInstance(lat, coup, OnsiteParams.uniform(4, 1.0, 0.1), beta=0.2)
    q = 2
    oracle = restricted_log_partition(
        model, range(4), interaction_edges(model.couplings, 0.0), q
    )
    rep = approximate_log_partition(model, ExpansionConfig(m=3, q=q))
    assert abs(rep.f_beta - oracle) < 1e-7
    assert rep.kp_certified


def test_polymer_threshold_knob():
    # dropping far couplings shrinks the alphabet and shifts the estimate by
    # roughly the discarded single-edge weights
    model = make_long_range_chain(4, g=0.2, alpha=2.0, beta=0.2, U=1.0, mu=0.0)
    full = approximate_log_partition(model, ExpansionConfig(m=2, q=2))
    # J at distance 3 is 0.2/16 = 0.0125: threshold 0.02 removes only that edge
    cut = approximate_log_partition(
        model, ExpansionConfig(m=2, q=2, polymer_threshold=0.02)
    )
    assert cut.polymer_count < full.polymer_count
    assert full.f_beta != cut.f_beta
    assert abs(full.f_beta - cut.f_beta) < 1e-4


def test_prune_below_knob():
    model = make_chain(3, g=0.3, beta=0.2, U=1.0, mu=0.0)
    everything_pruned = approximate_log_partition(
        model, ExpansionConfig(m=2, q=2, prune_below=1e30)
    )
    assert everything_pruned.t_m == 0.0
    assert everything_pruned.polymer_count == 0
    default_off = approximate_log_partition(model, ExpansionConfig(m=2, q=2))
    keep_all = approximate_log_partition(
        model, ExpansionConfig(m=2, q=2, prune_below=0.0)
    )
    assert default_off.t_m == keep_all.t_m
