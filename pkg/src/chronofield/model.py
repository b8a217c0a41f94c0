"""Chronology state and prior densities.

Conventions
-----------
* Ages are years BP; ``psi`` is increasing, ``psi[0]`` is the end of
  deposition and ``psi[M]`` its onset. Phase ``m`` (1-based) is the interval
  ``(psi[m-1], psi[m])``.
* Phase labels ``m`` are stored 1-based, as integers in ``1..M``.
* Every exponential distribution here is parameterised by its MEAN.
* Densities of invalid states are ``-inf``; callers reject on that.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import lgamma, log

import numpy as np
from scipy.special import gammaln

from .onsetfield import Lattice, field_in_bounds, simulate_field

VARIANTS = ("SP", "SPOF", "RP", "RPOF")
POISSON_MEAN_M = log(2.0)


class InvalidStateError(ValueError):
    pass


def has_field(variant: str) -> bool:
    return variant in ("SPOF", "RPOF")


def random_phases(variant: str) -> bool:
    return variant in ("RP", "RPOF")


@dataclass
class ChronologyState:
    """Full sampler state; arrays are owned by the state (copy before mutating)."""

    theta: np.ndarray
    psi: np.ndarray
    m: np.ndarray
    lam: np.ndarray
    variant: str = "SP"
    alpha: float = np.nan
    beta1: float = np.nan
    beta2: float = np.nan
    phi: np.ndarray | None = None

    @property
    def M(self) -> int:
        return len(self.psi) - 1

    @property
    def K(self) -> int:
        return len(self.theta)

    def counts(self) -> np.ndarray:
        return np.bincount(self.m, minlength=self.M + 1)[1:]

    def copy(self) -> "ChronologyState":
        return replace(self, theta=self.theta.copy(), psi=self.psi.copy(), m=self.m.copy(),
                       lam=self.lam.copy(),
                       phi=None if self.phi is None else self.phi.copy())


# --- phase boundaries ---------------------------------------------------------

def log_prior_psi(psi, L, U, normalized=False) -> float:
    """Log density of ordered boundaries given M = len(psi) - 1.

    -log(U-L-span) - (M-1) log(span) + log((M-1)!); the factorial makes the
    density of the interior boundaries proper so that comparisons across M
    are fair. The constant -log(U-L) is added only when ``normalized``.
    """
    psi = np.asarray(psi, dtype=float)
    M = len(psi) - 1
    if M < 1:
        raise InvalidStateError("need at least one phase")
    span = psi[-1] - psi[0]
    if span >= U - L:
        raise InvalidStateError("span must be shorter than U - L")
    if not (L < psi[0] and psi[-1] < U and np.all(np.diff(psi) > 0)):
        return -np.inf
    lp = -log(U - L - span) - (M - 1) * log(span) + lgamma(M)
    return lp - log(U - L) if normalized else lp


def sample_prior_psi(M, L, U, rng=None) -> np.ndarray:
    """Draw boundaries: uniform span, uniform placement, uniform interior points."""
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(rng)
    span = rng.uniform(0.0, U - L)
    start = L + rng.uniform(0.0, U - L - span)
    interior = np.sort(rng.uniform(start, start + span, size=M - 1))
    return np.concatenate(([start], interior, [start + span]))


# --- specimen ages ------------------------------------------------------------

def deposition_windows(psi, m, onset=None):
    """Lower and upper age limits of each date's deposition window."""
    psi = np.asarray(psi, dtype=float)
    m = np.asarray(m)
    lo = psi[m - 1]
    hi = psi[m]
    if onset is not None:
        hi = np.minimum(hi, onset)
    return lo, hi


def log_prior_theta(theta, psi, m, onset=None) -> float:
    """Uniform density of each age on (psi[m-1], min(onset, psi[m]))."""
    theta = np.asarray(theta, dtype=float)
    if len(theta) == 0:
        return 0.0
    lo, hi = deposition_windows(psi, m, onset)
    if np.any(theta <= lo) or np.any(theta >= hi):
        return -np.inf
    return float(-np.log(hi - lo).sum())


def delta_span(m, onset, psi):
    """Length of phase ``m`` after the local onset: max(0, min(onset, psi_m) - psi_{m-1})."""
    psi = np.asarray(psi, dtype=float)
    return np.maximum(0.0, np.minimum(onset, psi[m]) - psi[m - 1])


def assignment_probabilities(lam, psi, onset=None, K=None) -> np.ndarray:
    """Matrix (K, M) of phase probabilities p[i, m-1] proportional to lam_m * Delta_{m,i}.

    Rows whose weights are all zero are returned as NaN.
    """
    psi = np.asarray(psi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    spans = np.diff(psi)[None, :]
    if onset is None:
        w = np.repeat(lam * spans, 1 if K is None else K, axis=0)
    else:
        onset = np.asarray(onset, dtype=float)[:, None]
        w = lam * np.maximum(0.0, np.minimum(onset, psi[None, 1:]) - psi[None, :-1])
    tot = w.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, w / tot, np.nan)


def log_prior_assignment(m, lam, psi, onset=None) -> float:
    """Sum of log assignment probabilities (no multinomial coefficient)."""
    m = np.asarray(m)
    K = len(m)
    if K == 0:
        return 0.0
    lam = np.asarray(lam, dtype=float)
    if len(lam) != len(psi) - 1:
        raise InvalidStateError("need one rate per phase")
    if len(lam) == 1:
        return 0.0 if onset is None or np.all(np.asarray(onset) > psi[0]) else -np.inf
    p = assignment_probabilities(lam, psi, onset, K=K)
    chosen = p[np.arange(K), m - 1]
    if np.any(~(chosen > 0)):
        return -np.inf
    return float(np.log(chosen).sum())


# --- phase count and rates ----------------------------------------------------

def log_prior_M(M) -> float:
    """Poisson log-pmf of M - 1 with mean log 2, so Pr(M = 1) = 1/2."""
    if M < 1 or int(M) != M:
        raise InvalidStateError("M must be a positive integer")
    k = int(M) - 1
    return k * log(POISSON_MEAN_M) - POISSON_MEAN_M - lgamma(k + 1)


def log_prior_rates(lam) -> float:
    """Unit-mean exponential prior on each relative deposition rate."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise InvalidStateError("deposition rates must be positive")
    return float(-lam.sum())


def prior_rate_means(A, B, lattice: Lattice, L, U):
    """Prior means (E[alpha], E[beta]) for immigration and migration."""
    mean_alpha = A / (lattice.C * (U - L))
    mean_beta = B * max(lattice.C1, lattice.C2) / (2.0 * (U - L))
    return mean_alpha, mean_beta


def log_prior_alpha_beta(alpha, beta1, beta2, A, B, lattice: Lattice, L, U) -> float:
    """Independent exponential log-densities of alpha, beta1, beta2."""
    if not (alpha > 0 and beta1 > 0 and beta2 > 0):
        raise InvalidStateError("immigration and migration rates must be positive")
    ma, mb = prior_rate_means(A, B, lattice, L, U)
    return float(-log(ma) - alpha / ma - 2 * log(mb) - (beta1 + beta2) / mb)


def sample_alpha_beta(A, B, lattice: Lattice, L, U, rng=None, size=None):
    rng = np.random.default_rng(rng)
    ma, mb = prior_rate_means(A, B, lattice, L, U)
    return rng.exponential(ma, size), rng.exponential(mb, size), rng.exponential(mb, size)


def polya_log_pmf(counts) -> float:
    """Dirichlet(1/2)-multinomial log-pmf of the phase counts (K_1..K_M)."""
    k = np.asarray(counts, dtype=float)
    M, K = len(k), k.sum()
    return float(gammaln(K + 1) - gammaln(k + 1).sum() + gammaln(M / 2) - gammaln(K + M / 2)
                 + (gammaln(k + 0.5) - 0.5 * np.log(np.pi)).sum())


def sample_phase_counts(M, K, L, U, n, rng=None) -> np.ndarray:
    """Phase counts under the full prior (boundaries, Exp(1) rates, multinomial)."""
    rng = np.random.default_rng(rng)
    out = np.empty((n, M), dtype=np.int64)
    for r in range(n):
        psi = sample_prior_psi(M, L, U, rng)
        w = rng.exponential(1.0, M) * np.diff(psi)
        out[r] = rng.multinomial(K, w / w.sum())
    return out


# --- direct prior simulation --------------------------------------------------

@dataclass
class PriorSpec:
    """Everything the prior needs besides the state itself."""

    variant: str = "SP"
    L: float = 2000.0
    U: float = 3500.0
    A: float = 10.0
    B: float = 1.0
    lattice: Lattice = field(default_factory=Lattice)
    date_cells: np.ndarray | None = None
    M_fixed: int = 1
    m_fixed: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not self.L < self.U:
            raise ValueError("need L < U")


def sample_prior(spec: PriorSpec, K, rng=None, max_tries=100000) -> ChronologyState:
    """Exact draw from the (truncated) joint prior of ``spec.variant``.

    Field variants redraw boundaries, rates and field until every cell
    satisfies psi_0 < phi_c <= psi_M.
    """
    rng = np.random.default_rng(rng)
    cells = spec.date_cells
    for _ in range(max_tries):
        if random_phases(spec.variant):
            M = 1 + rng.poisson(POISSON_MEAN_M)
        else:
            M = spec.M_fixed
        psi = sample_prior_psi(M, spec.L, spec.U, rng)
        alpha = beta1 = beta2 = np.nan
        phi = None
        onset = None
        if has_field(spec.variant):
            alpha, beta1, beta2 = sample_alpha_beta(spec.A, spec.B, spec.lattice, spec.L,
                                                    spec.U, rng)
            phi = simulate_field(alpha, beta1, beta2, spec.lattice, psi[-1], True, rng)
            if not field_in_bounds(phi, psi[0], psi[-1]):
                continue
            onset = phi.ravel()[cells] if K else np.empty(0)
        if random_phases(spec.variant):
            lam = rng.exponential(1.0, M)
            if K:
                p = assignment_probabilities(lam, psi, onset, K=K)
                m = 1 + (rng.random((K, 1)) > np.cumsum(p, axis=1)).sum(axis=1)
                m = np.minimum(m, M)
            else:
                m = np.empty(0, dtype=np.int64)
        else:
            lam = np.ones(M)
            m = (np.ones(K, dtype=np.int64) if spec.m_fixed is None
                 else np.asarray(spec.m_fixed, dtype=np.int64))
        lo, hi = deposition_windows(psi, m, onset)
        theta = rng.uniform(lo, hi) if K else np.empty(0)
        return ChronologyState(theta=np.asarray(theta, dtype=float), psi=psi,
                               m=np.asarray(m, dtype=np.int64), lam=np.asarray(lam, float),
                               variant=spec.variant, alpha=float(alpha), beta1=float(beta1),
                               beta2=float(beta2), phi=phi)
    raise RuntimeError("prior rejection sampler exhausted its budget")
