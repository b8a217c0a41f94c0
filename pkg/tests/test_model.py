import itertools
from math import log

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from chronofield.model import (ChronologyState, InvalidStateError, PriorSpec,
                               assignment_probabilities, delta_span, log_prior_alpha_beta,
                               log_prior_assignment, log_prior_M, log_prior_psi,
                               log_prior_rates, log_prior_theta, polya_log_pmf,
                               prior_rate_means, sample_phase_counts, sample_prior,
                               sample_prior_psi)
from chronofield.onsetfield import Lattice, field_in_bounds

L, U = 2000.0, 3500.0


# --- boundaries ---------------------------------------------------------------

def test_psi_prior_single_phase():
    assert log_prior_psi([2500, 3000], L, U) == pytest.approx(-log(1000))


def test_psi_prior_two_phases():
    assert log_prior_psi([2500, 2800, 3000], L, U) == pytest.approx(-log(1000) - log(500))


def test_psi_prior_three_phases_includes_ordering_factor():
    # two interior points uniform on the span: density 2!/span^2
    assert log_prior_psi([2500, 2600, 2800, 3000], L, U) == pytest.approx(
        -log(1000) - 2 * log(500) + log(2))


def test_psi_prior_full_span_is_an_error():
    with pytest.raises(InvalidStateError):
        log_prior_psi([L, U], L, U)


def test_psi_prior_invalid_ordering_and_bounds():
    assert log_prior_psi([2800, 2700, 3000], L, U) == -np.inf
    assert log_prior_psi([1990, 2500], L, U) == -np.inf
    assert log_prior_psi([2500, 3600], L, U) == -np.inf


def test_psi_prior_normalised_m1_integrates_to_one():
    f = lambda b, a: np.exp(log_prior_psi([a, b], L, U, normalized=True))  # noqa: E731
    val, _ = integrate.dblquad(f, L + 1e-9, U, lambda a: a + 1e-9, lambda a: U - 1e-9,
                               epsabs=1e-6)
    assert val == pytest.approx(1.0, abs=1e-3)


def test_psi_prior_normalised_m2_integrates_to_one():
    # integrate out the interior point analytically-free: span, start, fraction
    def f(frac, start, span):
        return np.exp(log_prior_psi([start, start + frac * span, start + span], L, U,
                                    normalized=True)) * span
    val, _ = integrate.tplquad(f, 1.0, U - L - 1.0, lambda s: L, lambda s: U - s,
                               lambda s, a: 1e-6, lambda s, a: 1 - 1e-6, epsabs=1e-4)
    assert val == pytest.approx(1.0, abs=5e-3)


def test_sample_prior_psi_shapes():
    rng = np.random.default_rng(0)
    assert len(sample_prior_psi(1, L, U, rng)) == 2
    p = sample_prior_psi(3, L, U, rng)
    assert len(p) == 4 and np.all(np.diff(p) > 0)
    with pytest.raises(ValueError):
        sample_prior_psi(0, L, U, rng)


def test_sample_prior_psi_span_uniform():
    rng = np.random.default_rng(1)
    spans = np.array([np.ptp(sample_prior_psi(1, L, U, rng)) for _ in range(100000)])
    assert stats.kstest(spans, stats.uniform(0, U - L).cdf).pvalue > 0.01


@pytest.mark.parametrize("M", [1, 2])
def test_sample_prior_psi_matches_density(M):
    """Histogram chi-square of (psi_0, psi_M) against the integrated density."""
    rng = np.random.default_rng(2 + M)
    n = 40000
    draws = np.array([sample_prior_psi(M, L, U, rng)[[0, -1]] for _ in range(n)])
    edges = np.linspace(L, U, 7)
    obs, _, _ = np.histogram2d(draws[:, 0], draws[:, 1], [edges, edges])
    # density of (psi_0, psi_M) after integrating interior points is 1/((U-L)(U-L-span))
    dens = lambda b, a: 1.0 / ((U - L) * (U - L - (b - a)))  # noqa: E731
    exp = np.zeros_like(obs)
    for i, j in itertools.product(range(6), range(6)):
        if j < i:
            continue
        a0, a1, b0, b1 = edges[i], edges[i + 1], edges[j], edges[j + 1]
        val, _ = integrate.dblquad(dens, a0, a1, lambda a: max(a, b0), lambda a: b1)
        exp[i, j] = n * val
    mask = exp > 5
    chi2 = ((obs[mask] - exp[mask]) ** 2 / exp[mask]).sum()
    assert obs[~mask].sum() < 0.01 * n
    assert stats.chi2.sf(chi2, mask.sum() - 1) > 0.001


# --- dates --------------------------------------------------------------------

def test_theta_prior_examples():
    psi = np.array([2500.0, 3000.0])
    m = np.array([1])
    assert log_prior_theta([2700], psi, m) == pytest.approx(-log(500))
    assert log_prior_theta([2700], psi, m, onset=[2800]) == pytest.approx(-log(300))
    assert log_prior_theta([2900], psi, m, onset=[2800]) == -np.inf


def test_theta_prior_permutation_equivariant():
    psi = np.array([2500.0, 2700.0, 3000.0])
    theta = np.array([2550, 2600, 2750, 2900.0])
    m = np.array([1, 1, 2, 2])
    onset = np.array([2950, 2950, 2950, 2950.0])
    perm = [1, 0, 3, 2]
    assert log_prior_theta(theta, psi, m, onset) == pytest.approx(
        log_prior_theta(theta[perm], psi, m[perm], onset[perm]))


def test_delta_span_cases():
    psi = np.array([2500.0, 2700.0, 3000.0])
    assert delta_span(2, 3100.0, psi) == pytest.approx(300.0)
    assert delta_span(2, 2600.0, psi) == 0.0
    assert delta_span(2, 2900.0, psi) == pytest.approx(200.0)


# --- assignment ---------------------------------------------------------------

def test_assignment_single_phase_is_certain():
    assert log_prior_assignment(np.array([1, 1, 1]), [1.0], [2500.0, 3000.0]) == 0.0


def test_assignment_symmetric_two_phase():
    lp = log_prior_assignment(np.array([1, 2]), [1.0, 1.0], [2500.0, 2750.0, 3000.0])
    assert lp == pytest.approx(2 * log(0.5))


def test_assignment_weighted():
    lp = log_prior_assignment(np.array([1]), [2.0, 1.0], [2500.0, 2600.0, 2900.0])
    assert lp == pytest.approx(log(200 / 500))


def test_assignment_all_spans_zero_is_invalid():
    psi = [2500.0, 2600.0, 2900.0]
    assert log_prior_assignment(np.array([1]), [1.0, 1.0], psi, onset=[2400.0]) == -np.inf


@settings(max_examples=25, deadline=None)
@given(K=st.integers(1, 4), M=st.integers(1, 3), seed=st.integers(0, 10_000),
       use_field=st.booleans())
def test_assignment_sums_to_one(K, M, seed, use_field):
    rng = np.random.default_rng(seed)
    psi = sample_prior_psi(M, L, U, rng)
    lam = rng.exponential(1.0, M)
    onset = rng.uniform(psi[0] + 1.0, psi[-1], K) if use_field else None
    tot = sum(np.exp(log_prior_assignment(np.array(m), lam, psi, onset))
              for m in itertools.product(range(1, M + 1), repeat=K))
    assert tot == pytest.approx(1.0)


def test_assignment_probabilities_shape():
    p = assignment_probabilities([1.0, 2.0], [2500.0, 2600.0, 2900.0], K=3)
    assert p.shape == (3, 2)
    assert np.allclose(p.sum(axis=1), 1.0)


# --- M, rates, alpha/beta -----------------------------------------------------

def test_M_prior():
    assert log_prior_M(1) == pytest.approx(log(0.5))
    assert log_prior_M(2) == pytest.approx(log(0.5 * log(2)))
    with pytest.raises(InvalidStateError):
        log_prior_M(0)


def test_rate_prior():
    assert log_prior_rates([1.0]) == pytest.approx(-1.0)
    assert log_prior_rates([0.5, 2.0]) == pytest.approx(-2.5)
    with pytest.raises(InvalidStateError):
        log_prior_rates([1.0, 0.0])


def test_alpha_beta_prior():
    lat = Lattice()
    ma, mb = prior_rate_means(10, 1, lat, L, U)
    assert ma == pytest.approx(10 / (lat.C * 1500))
    assert mb == pytest.approx(32 / 3000)
    base = -2 * log(mb) - 2.0
    at_mean = log_prior_alpha_beta(ma, mb, mb, 10, 1, lat, L, U)
    assert at_mean == pytest.approx(log(1 / ma) - 1 + base)
    tiny = log_prior_alpha_beta(1e-15, mb, mb, 10, 1, lat, L, U)
    assert tiny == pytest.approx(log(1 / ma) + base, abs=1e-6)
    # beta1 and beta2 enter independently
    a = log_prior_alpha_beta(ma, 0.5 * mb, 2 * mb, 10, 1, lat, L, U)
    b = log_prior_alpha_beta(ma, 2 * mb, 0.5 * mb, 10, 1, lat, L, U)
    assert a == pytest.approx(b)
    with pytest.raises(InvalidStateError):
        log_prior_alpha_beta(0.0, mb, mb, 10, 1, lat, L, U)


# --- Polya --------------------------------------------------------------------

def test_polya_single_phase():
    for K in (0, 1, 7):
        assert polya_log_pmf([K]) == pytest.approx(0.0)


def test_polya_two_phase_small():
    assert np.exp(polya_log_pmf([1, 0])) == pytest.approx(0.5)
    p = [np.exp(polya_log_pmf(k)) for k in ([2, 0], [1, 1], [0, 2])]
    assert p == pytest.approx([3 / 8, 2 / 8, 3 / 8])
    assert sum(p) == pytest.approx(1.0)


def compositions(K, M):
    if M == 1:
        yield (K,)
        return
    for k in range(K + 1):
        for rest in compositions(K - k, M - 1):
            yield (k,) + rest


@pytest.mark.parametrize("M", [2, 3, 4])
def test_polya_approximates_phase_counts(M):
    K = 10
    rng = np.random.default_rng(M)
    counts = sample_phase_counts(M, K, L, U, 40000, rng)
    keys, freq = np.unique(counts, axis=0, return_counts=True)
    emp = {tuple(k): f / len(counts) for k, f in zip(keys, freq)}
    tv = 0.5 * sum(abs(emp.get(c, 0.0) - np.exp(polya_log_pmf(c))) for c in compositions(K, M))
    assert tv < 0.05


# --- joint prior sampler ------------------------------------------------------

@pytest.mark.parametrize("variant", ["SP", "SPOF", "RP", "RPOF"])
def test_sample_prior_valid(variant):
    lat = Lattice(3, 4)
    spec = PriorSpec(variant, L, U, lattice=lat, date_cells=np.array([0, 5, 11]))
    rng = np.random.default_rng(3)
    for _ in range(50):
        s = sample_prior(spec, 3, rng)
        assert isinstance(s, ChronologyState)
        assert np.all(np.diff(s.psi) > 0) and L < s.psi[0] and s.psi[-1] < U
        assert np.all((s.m >= 1) & (s.m <= s.M))
        lo = s.psi[s.m - 1]
        hi = s.psi[s.m]
        if s.phi is not None:
            assert field_in_bounds(s.phi, s.psi[0], s.psi[-1])
            assert s.phi.max() == s.psi[-1]
            hi = np.minimum(hi, s.phi.ravel()[[0, 5, 11]])
        assert np.all((s.theta > lo) & (s.theta < hi))
