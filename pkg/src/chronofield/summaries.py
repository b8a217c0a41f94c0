"""Posterior summaries of chain output: field maps, partitions, odds, model comparison.

Probabilities are plain frequencies over recorded states. Monte Carlo
standard errors use batch means, which allow for autocorrelation left after
thinning.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, log

import numpy as np

from .model import POISSON_MEAN_M, PriorSpec, sample_prior

GREEN, BLUE, RED = "green", "blue", "red"


class SummaryError(ValueError):
    pass


def batch_means_se(x, n_batches=20) -> float:
    """Standard error of mean(x) from non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        return float("nan")
    b = min(n_batches, n)
    size = n // b
    means = x[: b * size].reshape(b, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(b))


def effective_sample_size(x) -> float:
    """ESS from the FFT autocorrelation, truncated by Geyer's initial positive sequence."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    y = x - x.mean()
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return float(n / max(tau, 1.0 / n))


def _require_field(chain):
    if chain.phi is None or len(chain.phi) == 0:
        raise SummaryError("chain has no recorded onset fields")
    return chain.phi


def _depths(chain):
    phi = _require_field(chain)
    return chain.psi_M[:, None, None] - phi


# --- field maps ---------------------------------------------------------------

@dataclass
class FieldSummary:
    mean: np.ndarray
    std: np.ndarray
    elapsed_mean: np.ndarray
    elapsed_std: np.ndarray
    n: int


def field_summary(chain) -> FieldSummary:
    """Per-cell mean/std of the onset age and of the elapsed time psi_M - phi."""
    phi = _require_field(chain)
    depth = _depths(chain)
    return FieldSummary(phi.mean(axis=0), phi.std(axis=0), depth.mean(axis=0),
                        depth.std(axis=0), len(phi))


def centre_corner_difference(grid) -> float:
    """Mean of the central cell(s) minus the mean of the four corners."""
    g = np.asarray(grid, dtype=float)
    r, c = g.shape
    rows = slice((r - 1) // 2, r // 2 + 1)
    cols = slice((c - 1) // 2, c // 2 + 1)
    corners = g[[0, 0, -1, -1], [0, -1, 0, -1]]
    return float(g[rows, cols].mean() - corners.mean())


# --- partitions ---------------------------------------------------------------

@dataclass
class Partition:
    labels: np.ndarray          # object array of GREEN / BLUE / RED, lattice shape
    p_early: np.ndarray         # P(psi_M - phi_c < T*)
    p_late: np.ndarray          # P(psi_M - phi_c > T*)
    T_star: float
    p_star: float

    def cells(self, label) -> np.ndarray:
        """Flat indices of the cells carrying ``label``."""
        return np.flatnonzero(self.labels.ravel() == label)

    def counts(self) -> dict:
        return {k: int((self.labels == k).sum()) for k in (GREEN, BLUE, RED)}


def exceedance(chain, T_star):
    """(P(depth < T*), P(depth > T*)) per cell, depth = psi_M - phi_c."""
    d = _depths(chain)
    return (d < T_star).mean(axis=0), (d > T_star).mean(axis=0)


def partition(chain, T_star=150.0, p_star=0.8) -> Partition:
    """Label cells settled confidently early (green), late (blue), or neither (red).

    green: P(psi_M - phi_c < T*) > p*, the cell was occupied within T* of the
    first arrival; blue: P(psi_M - phi_c > T*) > p*.
    """
    p_early, p_late = exceedance(chain, T_star)
    labels = np.full(p_early.shape, RED, dtype=object)
    labels[p_late > p_star] = BLUE
    labels[p_early > p_star] = GREEN
    return Partition(labels, p_early, p_late, float(T_star), float(p_star))


@dataclass
class ThresholdScan:
    rows: list                  # (T*, n_green, n_blue)
    p_star: float

    @property
    def splitting(self) -> list:
        """Thresholds giving both a green and a blue cell."""
        return [t for t, g, b in self.rows if g > 0 and b > 0]

    @property
    def any_split(self) -> bool:
        return bool(self.splitting)


def threshold_scan(chain, p_star=0.8, thresholds=None, step=5.0) -> ThresholdScan:
    """Partition sizes over a grid of T*; by default 0 to the largest sampled depth."""
    d = _depths(chain)
    if thresholds is None:
        top = float(d.max())
        thresholds = np.arange(step, max(top, step) + step, step)
    rows = []
    for t in thresholds:
        p_early = (d < t).mean(axis=0)
        p_late = (d > t).mean(axis=0)
        rows.append((float(t), int((p_early > p_star).sum()), int((p_late > p_star).sum())))
    return ThresholdScan(rows, float(p_star))


# --- arrival counts -----------------------------------------------------------

@dataclass
class ArrivalOdds:
    V: np.ndarray
    posterior: np.ndarray
    prior: np.ndarray
    odds: np.ndarray            # nan where the prior count is zero
    undefined: np.ndarray       # V values with no prior mass

    def is_decreasing(self) -> bool:
        """Odds non-increasing over the V values where both pmfs are defined."""
        ok = np.isfinite(self.odds) & (self.posterior > 0)
        o = self.odds[ok]
        return bool(len(o) >= 2 and np.all(np.diff(o) <= 0))


def arrival_odds(posterior_chain, prior_chain) -> ArrivalOdds:
    """Ratio of posterior to prior pmfs of the arrival count V."""
    vp = np.asarray(posterior_chain.V if hasattr(posterior_chain, "V") else posterior_chain)
    vq = np.asarray(prior_chain.V if hasattr(prior_chain, "V") else prior_chain)
    if len(vp) == 0 or len(vq) == 0:
        raise SummaryError("empty arrival-count sample")
    V = np.arange(1, max(vp.max(), vq.max()) + 1)
    post = np.array([(vp == v).mean() for v in V])
    prior = np.array([(vq == v).mean() for v in V])
    with np.errstate(divide="ignore", invalid="ignore"):
        odds = np.where(prior > 0, post / np.where(prior > 0, prior, 1.0), np.nan)
    return ArrivalOdds(V, post, prior, odds, V[prior == 0])


# --- pit histograms -----------------------------------------------------------

def pit_onset_histograms(chain, pit_cells: dict, bin_width=10.0) -> dict:
    """Histogram of the onset age at each pit's cell.

    ``pit_cells`` maps pit name to flat lattice index. Bin edges are multiples
    of ``bin_width``. Returns name -> (edges, counts).
    """
    if bin_width <= 0:
        raise SummaryError("bin width must be positive")
    phi = _require_field(chain).reshape(len(chain.phi), -1)
    out = {}
    for name, cell in pit_cells.items():
        x = phi[:, int(cell)]
        lo = np.floor(x.min() / bin_width) * bin_width
        hi = (np.floor(x.max() / bin_width) + 1) * bin_width
        edges = np.arange(lo, hi + bin_width / 2, bin_width)
        counts, _ = np.histogram(x, edges)
        out[name] = (edges, counts)
    return out


# --- model comparison ---------------------------------------------------------

def poisson_prior_M(M) -> float:
    """Prior Pr(M) with M - 1 ~ Poisson(log 2)."""
    k = int(M) - 1
    if k < 0:
        return 0.0
    return float(np.exp(k * log(POISSON_MEAN_M) - POISSON_MEAN_M - lgamma(k + 1)))


def model_probabilities(chain) -> dict:
    """M -> {"p": Pr(M|y), "se": batch-means error, "e": Pr(M|y) / Pr(M)}."""
    M = np.asarray(chain.M if hasattr(chain, "M") else chain)
    if len(M) == 0:
        raise SummaryError("empty chain")
    out = {}
    for m in range(1, int(M.max()) + 1):
        ind = (M == m).astype(float)
        p = float(ind.mean())
        out[m] = {"p": p, "se": batch_means_se(ind), "e": p / poisson_prior_M(m)}
    return out


def predicate_frequency(chain, predicate):
    """Indicator series of predicate(M, m) over recorded states."""
    return np.array([bool(predicate(int(M), m)) for M, m in zip(chain.M, chain.m)], dtype=float)


def bayes_factor(chain, model_a, model_b) -> float:
    """Posterior-to-prior odds ratio for two (predicate, prior probability) models.

    Returns inf if model B is never visited and nan if neither is.
    """
    (pa, prior_a), (pb, prior_b) = model_a, model_b
    if not (prior_a > 0 and prior_b > 0):
        raise SummaryError("prior probabilities must be positive")
    fa = predicate_frequency(chain, pa).mean()
    fb = predicate_frequency(chain, pb).mean()
    if fb == 0:
        return float("nan") if fa == 0 else float("inf")
    return float(fa / fb * prior_b / prior_a)


def prior_probability(predicate, spec: PriorSpec, K, n=20000, rng=None):
    """Monte Carlo estimate (p, se) of the prior probability of predicate(M, m)."""
    rng = np.random.default_rng(rng)
    hits = 0
    for _ in range(n):
        s = sample_prior(spec, K, rng)
        hits += bool(predicate(s.M, s.m))
    p = hits / n
    return p, float(np.sqrt(p * (1 - p) / n))


def phase_counts_predicate(M, counts):
    """Predicate matching M phases with the given per-phase date counts (None = any)."""
    counts = list(counts)

    def pred(M_state, m):
        if M_state != M:
            return False
        k = np.bincount(m, minlength=M + 1)[1:]
        return all(c is None or k[j] == c for j, c in enumerate(counts))

    return pred


def empty_phase_predicate(M, phase):
    """Predicate: M phases and no date in ``phase`` (1-based)."""
    def pred(M_state, m):
        return M_state == M and not np.any(np.asarray(m) == phase)

    return pred


def phase_scatter(chain, date_pits, pit_xy: dict, M_condition) -> dict:
    """Modal phase per date among states with M = M_condition, grouped by phase.

    Returns phase -> list of (date index, pit, x, y, probability).
    """
    sel = np.asarray(chain.M) == M_condition
    if not sel.any():
        raise SummaryError(f"no recorded state with M={M_condition}")
    m = np.asarray(chain.m)[sel]
    groups = {k: [] for k in range(1, M_condition + 1)}
    for i in range(m.shape[1]):
        freq = np.bincount(m[:, i], minlength=M_condition + 1)[1:] / len(m)
        k = int(np.argmax(freq)) + 1
        pit = date_pits[i]
        x, y = pit_xy[pit]
        groups[k].append((i, pit, float(x), float(y), float(freq[k - 1])))
    return groups
