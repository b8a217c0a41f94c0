import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chronofield.mcmc import ChainOutput, ChronologyData, RunConfig, prior_draws
from chronofield.model import PriorSpec
from chronofield.onsetfield import Lattice
from chronofield.summaries import (BLUE, GREEN, RED, SummaryError, arrival_odds, batch_means_se,
                                   bayes_factor, centre_corner_difference, effective_sample_size,
                                   empty_phase_predicate,
                                   field_summary, model_probabilities, partition,
                                   phase_counts_predicate, phase_scatter, pit_onset_histograms,
                                   poisson_prior_M, prior_probability, threshold_scan)


def fake_chain(phi=None, psi=None, M=None, m=None, V=None):
    """ChainOutput assembled directly from arrays."""
    n = len(phi) if phi is not None else len(M)
    if psi is None:
        top = np.asarray(phi).reshape(n, -1).max(axis=1) if phi is not None else np.full(n, 3000.0)
        psi = [np.array([2000.0, t]) for t in top]
    M = np.ones(n, dtype=np.int64) if M is None else np.asarray(M)
    m = np.ones((n, 1), dtype=np.int64) if m is None else np.asarray(m)
    V = np.ones(n, dtype=np.int64) if V is None else np.asarray(V)
    nan = np.full(n, np.nan)
    return ChainOutput("RPOF", {}, np.arange(n), np.zeros((n, m.shape[1])), m, M, list(psi),
                       [np.ones(k) for k in M], nan, nan, nan, V, nan,
                       None if phi is None else np.asarray(phi, dtype=float), {})


def ramp_chain(n=200, shape=(3, 4), spread=300.0, noise=5.0, seed=0):
    """Fields falling linearly away from the first cell, small jitter."""
    rng = np.random.default_rng(seed)
    base = 3000.0 - spread * np.linspace(0, 1, shape[0] * shape[1]).reshape(shape)
    phi = base + rng.normal(0, noise, (n,) + shape)
    phi[:, 0, 0] = 3000.0 + rng.normal(0, noise, n)
    phi = np.minimum(phi, phi[:, :1, :1])
    return fake_chain(phi)


# --- field_summary ------------------------------------------------------------

def test_single_state_has_zero_std():
    s = field_summary(fake_chain(np.full((1, 2, 3), 2900.0)))
    assert np.all(s.std == 0) and np.all(s.elapsed_std == 0)
    assert s.mean.shape == (2, 3)


def test_constant_shift_gives_zero_elapsed_std():
    phi = np.array([np.arange(6.0).reshape(2, 3), np.arange(6.0).reshape(2, 3) + 50])
    s = field_summary(fake_chain(phi))
    assert np.allclose(s.elapsed_std, 0)
    assert np.all(s.std > 0)


def test_summary_mean_within_trace_range():
    c = ramp_chain()
    s = field_summary(c)
    assert np.all(s.mean >= c.phi.min(axis=0)) and np.all(s.mean <= c.phi.max(axis=0))
    assert np.all(s.std >= 0)


def test_summary_requires_field():
    with pytest.raises(SummaryError):
        field_summary(fake_chain(M=np.ones(3, dtype=np.int64)))


def test_centre_corner_difference():
    g = np.zeros((3, 3))
    g[1, 1] = 4.0
    assert centre_corner_difference(g) == 4.0
    g2 = np.zeros((2, 4))
    g2[:, 1:3] = 2.0
    assert centre_corner_difference(g2) == 2.0


def test_prior_elapsed_std_order_of_two_hundred_years():
    lat = Lattice(13, 32)
    cfg = RunConfig(variant="SPOF", iterations=10, burn_in=0, thin=1, A=10.0, B=1.0,
                    lattice=lat)
    out = prior_draws(cfg, ChronologyData.empty(0), 2000, rng=4)
    typical = np.median(field_summary(out).elapsed_std)
    assert 100 <= typical <= 300


# --- partition ----------------------------------------------------------------

def test_zero_depth_is_all_settled_early():
    c = fake_chain(np.full((10, 3, 4), 2800.0))
    for T in (1.0, 150.0, 1e4):
        assert set(partition(c, T, 0.8).labels.ravel()) == {GREEN}


def test_unattainable_threshold_all_red():
    p = partition(ramp_chain(), 150.0, 1.01)
    assert set(p.labels.ravel()) == {RED}


def test_partition_labels_follow_definition():
    c = ramp_chain(spread=400.0, noise=40.0)
    p = partition(c, 150.0, 0.8)
    depth = c.psi_M[:, None, None] - c.phi
    early, late = (depth < 150).mean(axis=0), (depth > 150).mean(axis=0)
    assert np.array_equal(p.labels == GREEN, early > 0.8)
    assert np.array_equal(p.labels == BLUE, late > 0.8)
    assert sum(p.counts().values()) == 12
    assert len(p.cells(GREEN)) > 0 and len(p.cells(BLUE)) > 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 1000), T=st.floats(1, 500), p=st.floats(0.5, 0.99))
def test_partition_is_a_disjoint_cover(seed, T, p):
    part = partition(ramp_chain(n=30, noise=60.0, seed=seed), T, p)
    g, b, r = (part.labels == GREEN), (part.labels == BLUE), (part.labels == RED)
    assert np.all(g.astype(int) + b + r == 1)
    again = partition(ramp_chain(n=30, noise=60.0, seed=seed), T, p)
    assert np.array_equal(part.labels, again.labels)


def test_threshold_scan_identical_fields_never_split():
    assert not threshold_scan(fake_chain(np.full((10, 3, 4), 2800.0))).any_split


def test_threshold_scan_spreading_splits():
    scan = threshold_scan(ramp_chain(spread=400.0), 0.8)
    assert scan.any_split
    assert all(g > 0 and b > 0 for t, g, b in scan.rows if t in scan.splitting)


# --- arrival odds -------------------------------------------------------------

def test_identical_chains_odds_one():
    V = np.array([1, 1, 2, 3, 1, 2])
    o = arrival_odds(V, V)
    assert np.allclose(o.odds, 1.0) and len(o.undefined) == 0


def test_unseen_prior_value_flagged():
    o = arrival_odds(np.array([1, 1, 4]), np.array([1, 2, 2]))
    assert list(o.undefined) == [3, 4]
    assert np.isnan(o.odds[3])


def test_odds_decreasing():
    post = np.repeat([1, 2, 3], [70, 20, 10])
    prior = np.repeat([1, 2, 3], [30, 35, 35])
    assert arrival_odds(post, prior).is_decreasing()
    assert not arrival_odds(prior, post).is_decreasing()


# --- pit histograms -----------------------------------------------------------

def test_constant_field_point_mass():
    h = pit_onset_histograms(fake_chain(np.full((20, 2, 2), 2903.0)), {"A": 0})
    edges, counts = h["A"]
    assert counts.sum() == 20 and counts.max() == 20
    assert edges[0] == 2900.0 and np.all(np.diff(edges) == 10.0)


def test_two_pits_in_one_cell_identical():
    h = pit_onset_histograms(ramp_chain(noise=30.0), {"A": 5, "B": 5}, bin_width=7)
    assert np.array_equal(h["A"][0], h["B"][0]) and np.array_equal(h["A"][1], h["B"][1])


def test_histogram_matches_direct_extraction():
    c = ramp_chain(noise=30.0)
    edges, counts = pit_onset_histograms(c, {"A": 7})["A"]
    x = c.phi.reshape(len(c), -1)[:, 7]
    assert np.array_equal(counts, np.histogram(x, edges)[0])
    assert edges[0] <= x.min() and edges[-1] > x.max()


def test_bin_width_must_be_positive():
    with pytest.raises(SummaryError):
        pit_onset_histograms(ramp_chain(), {"A": 0}, bin_width=0)


# --- model comparison ---------------------------------------------------------

def test_poisson_prior_pmf():
    assert poisson_prior_M(1) == pytest.approx(0.5)
    assert sum(poisson_prior_M(k) for k in range(1, 30)) == pytest.approx(1.0)
    assert poisson_prior_M(0) == 0.0


def test_only_M1_visited():
    probs = model_probabilities(np.ones(50, dtype=int))
    assert probs[1]["p"] == 1.0 and probs[1]["e"] == pytest.approx(2.0)


def test_model_probabilities_sum_to_one_and_prior_evidence():
    rng = np.random.default_rng(0)
    M = 1 + rng.poisson(np.log(2), 200_000)
    probs = model_probabilities(M)
    assert sum(v["p"] for v in probs.values()) == pytest.approx(1.0)
    for k in (1, 2, 3):
        assert probs[k]["e"] == pytest.approx(1.0, abs=0.03)
        assert probs[k]["se"] > 0


def test_bayes_factor_identity_and_reciprocity():
    rng = np.random.default_rng(1)
    M = rng.integers(1, 4, 300)
    m = np.array([[rng.integers(1, k + 1) for _ in range(2)] for k in M])
    c = fake_chain(M=M, m=m)
    A = (phase_counts_predicate(2, [None, None]), 0.3)
    B = (phase_counts_predicate(1, [2]), 0.5)
    assert bayes_factor(c, A, A) == pytest.approx(1.0)
    assert bayes_factor(c, A, B) * bayes_factor(c, B, A) == pytest.approx(1.0)


def test_bayes_factor_degenerate():
    c = fake_chain(M=np.ones(5, dtype=int))
    one = (phase_counts_predicate(1, [None]), 0.5)
    three = (empty_phase_predicate(3, 2), 0.01)
    assert bayes_factor(c, one, three) == np.inf
    assert np.isnan(bayes_factor(c, three, three))
    with pytest.raises(SummaryError):
        bayes_factor(c, (one[0], 0.0), three)


def test_bayes_factor_prior_only_near_one():
    spec = PriorSpec("RP", 2000.0, 3500.0)
    n = 20000
    rng = np.random.default_rng(2)
    from chronofield.model import sample_prior
    states = [sample_prior(spec, 3, rng) for _ in range(n)]
    c = fake_chain(M=np.array([s.M for s in states]), m=np.array([s.m for s in states]))
    A = phase_counts_predicate(2, [None, None])
    B = phase_counts_predicate(1, [3])
    pa, _ = prior_probability(A, spec, 3, n=20000, rng=3)
    pb, _ = prior_probability(B, spec, 3, n=20000, rng=4)
    assert bayes_factor(c, (A, pa), (B, pb)) == pytest.approx(1.0, abs=0.06)


def test_predicates():
    pred = phase_counts_predicate(3, [2, 0, 1])
    assert pred(3, np.array([1, 1, 3]))
    assert not pred(3, np.array([1, 2, 3]))
    assert not pred(2, np.array([1, 1, 2]))
    gap = empty_phase_predicate(3, 2)
    assert gap(3, np.array([1, 3, 3])) and not gap(3, np.array([2, 3]))


def test_prior_probability_single_phase():
    spec = PriorSpec("RP", 2000.0, 3500.0)
    p, se = prior_probability(lambda M, m: M == 1, spec, 2, n=4000, rng=0)
    assert abs(p - 0.5) < 4 * se


# --- phase scatter ------------------------------------------------------------

def test_scatter_single_phase():
    c = fake_chain(M=np.ones(10, dtype=int), m=np.ones((10, 3), dtype=int))
    g = phase_scatter(c, ["a", "b", "a"], {"a": (1.0, 2.0), "b": (3.0, 4.0)}, 1)
    assert [r[0] for r in g[1]] == [0, 1, 2]
    assert all(r[4] == 1.0 for r in g[1])
    assert g[1][1][2:4] == (3.0, 4.0)


def test_scatter_conditions_on_M_and_reports_modal_probability():
    M = np.array([2, 2, 2, 2, 1])
    m = np.array([[1, 2], [1, 2], [2, 2], [1, 2], [1, 1]])
    g = phase_scatter(fake_chain(M=M, m=m), ["a", "b"], {"a": (0, 0), "b": (1, 1)}, 2)
    assert g[1] == [(0, "a", 0.0, 0.0, 0.75)]
    assert g[2] == [(1, "b", 1.0, 1.0, 1.0)]
    with pytest.raises(SummaryError):
        phase_scatter(fake_chain(M=M, m=m), ["a", "b"], {"a": (0, 0), "b": (1, 1)}, 3)


def test_batch_means_se_iid_scale():
    x = np.random.default_rng(0).normal(size=40000)
    assert batch_means_se(x) == pytest.approx(1 / np.sqrt(40000), rel=0.4)


def test_effective_sample_size_ar1():
    rng = np.random.default_rng(1)
    rho, n = 0.9, 200_000
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0]
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    assert effective_sample_size(x) == pytest.approx(n * (1 - rho) / (1 + rho), rel=0.15)
    iid = rng.normal(size=5000)
    assert effective_sample_size(iid) == pytest.approx(5000, rel=0.15)
    assert effective_sample_size(np.ones(10)) == 10
