"""Metropolis-Hastings / reversible-jump samplers for the four model variants.

SP    single phase, no onset field
SPOF  single phase with onset field
RP    random number of phases, no field
RPOF  random phases with onset field

Each iteration performs one move: a move family is drawn with probability
proportional to its weight, then an index (date or boundary) uniformly.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from math import log

import numpy as np

from . import calibration as cal
from .model import (ChronologyState, PriorSpec, InvalidStateError, has_field, random_phases,
                    log_prior_psi, log_prior_theta, log_prior_assignment, log_prior_M,
                    log_prior_rates, log_prior_alpha_beta, sample_alpha_beta, sample_prior,
                    deposition_windows, VARIANTS)
from .onsetfield import Lattice, arrival_count, log_density_field, neighbors, simulate_field

log_ = logging.getLogger(__name__)

MOVE_FAMILIES = ("theta", "psi", "shift_ages", "scale_ages", "field_joint",
                 "field_conditional", "field_local", "scale_rates", "rj", "assignment",
                 "rates")


RATE_TARGETS = ("all", "alpha", "beta1", "beta2", "time")


def available_moves(variant):
    moves = ["theta", "psi", "shift_ages", "scale_ages"]
    if has_field(variant):
        moves += ["field_joint", "field_conditional", "field_local", "scale_rates"]
    if random_phases(variant):
        moves += ["rj", "assignment", "rates"]
    return moves


@dataclass
class RunConfig:
    variant: str = "SP"
    iterations: int = 1_000_000
    burn_in: int = 100_000
    thin: int = 100
    seed: int = 0
    weights: dict = field(default_factory=dict)
    A: float = 10.0
    B: float = 1.0
    L: float = 2000.0
    U: float = 3500.0
    lattice: Lattice = field(default_factory=Lattice)
    flat_likelihood: bool = False
    init_from_prior: bool | None = None
    init_retries: int = 200

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.iterations <= self.burn_in or self.burn_in < 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if (self.iterations - self.burn_in) // self.thin == 0:
            raise ValueError("no samples would be recorded after burn-in")
        allowed = available_moves(self.variant)
        unknown = set(self.weights) - set(MOVE_FAMILIES)
        if unknown:
            raise ValueError(f"unknown move families {sorted(unknown)}")
        w = self.move_weights()
        if any(v < 0 for v in w.values()) or sum(w.values()) <= 0:
            raise ValueError("move weights must be nonnegative and not all zero")
        if not set(k for k, v in w.items() if v > 0) <= set(allowed):
            raise ValueError(f"variant {self.variant} supports moves {allowed}")

    def move_weights(self) -> dict:
        w = {k: 1.0 for k in available_moves(self.variant)}
        w.update(self.weights)
        return w

    def prior_spec(self, date_cells=None) -> PriorSpec:
        return PriorSpec(self.variant, self.L, self.U, self.A, self.B, self.lattice, date_cells)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lattice"] = self.lattice.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        d = dict(d)
        lat = dict(d.pop("lattice", {}))
        if "origin" in lat:
            lat["origin"] = tuple(lat["origin"])
        return cls(lattice=Lattice(**lat), **d)


@dataclass
class ChronologyData:
    """Dates, curves and the lattice cell of each date's pit."""

    dates: list = field(default_factory=list)
    curves: dict | None = None
    date_cells: np.ndarray | None = None

    def __post_init__(self):
        self.table = cal.DateTable(list(self.dates))
        if self.date_cells is not None:
            self.date_cells = np.asarray(self.date_cells, dtype=np.int64)
            if len(self.date_cells) != len(self.dates):
                raise ValueError("need one lattice cell per date")

    @property
    def K(self) -> int:
        return len(self.dates)

    @classmethod
    def empty(cls, K=0, date_cells=None) -> "ChronologyData":
        """Placeholder dates for prior (flat-likelihood) runs."""
        dates = [cal.RadiocarbonDate(f"d{i}", "p", 0.0, 1.0) for i in range(K)]
        if date_cells is None and K:
            date_cells = np.zeros(K, dtype=np.int64)
        return cls(dates, None, date_cells)


# Term groups: which named log-density terms each group owns.
TERM_GROUPS = {
    "psi": ("psi",),
    "field": ("field", "alpha_beta"),
    "phases": ("M", "rates", "assignment"),
    "theta": ("theta",),
    "likelihood": ("likelihood",),
}
ALL_GROUPS = tuple(TERM_GROUPS)


def state_is_valid(state: ChronologyState, config: RunConfig) -> bool:
    """Hard constraints shared by every variant (ordering, bounds, labels, positivity)."""
    psi = state.psi
    if not (config.L < psi[0] and psi[-1] < config.U and np.all(psi[1:] > psi[:-1])):
        return False
    if state.K and (state.m.min() < 1 or state.m.max() > state.M):
        return False
    if has_field(state.variant):
        if not (state.alpha > 0 and state.beta1 > 0 and state.beta2 > 0):
            return False
        if not (state.phi.min() > psi[0] and state.phi.max() == psi[-1]):
            return False
    if random_phases(state.variant) and not np.all(state.lam > 0):
        return False
    return True


def _group_terms(group, state, data, config, onset) -> dict:
    if group == "psi":
        return {"psi": log_prior_psi(state.psi, config.L, config.U)}
    if group == "field":
        if not has_field(state.variant):
            return {}
        return {
            "field": log_density_field(state.phi, state.alpha, state.beta1, state.beta2,
                                       config.lattice, state.psi[-1], conditioned=True),
            "alpha_beta": log_prior_alpha_beta(state.alpha, state.beta1, state.beta2, config.A,
                                               config.B, config.lattice, config.L, config.U),
        }
    if group == "phases":
        if not random_phases(state.variant):
            return {}
        return {"M": log_prior_M(state.M), "rates": log_prior_rates(state.lam),
                "assignment": log_prior_assignment(state.m, state.lam, state.psi, onset)}
    if group == "theta":
        return {"theta": log_prior_theta(state.theta, state.psi, state.m, onset)}
    if group == "likelihood":
        if config.flat_likelihood or data.K == 0:
            return {"likelihood": 0.0}
        return {"likelihood": float(
            cal.log_likelihood_vector(state.theta, data.table, data.curves).sum())}
    raise KeyError(group)


def _onset_of(state, data):
    if not has_field(state.variant):
        return None
    return state.phi.ravel()[data.date_cells] if data.K else np.empty(0)


def posterior_terms(state: ChronologyState, data: ChronologyData, config: RunConfig,
                    groups=ALL_GROUPS, cached=None) -> dict | None:
    """Named log-density terms, or None for a state violating a hard constraint.

    Terms outside ``groups`` are copied from ``cached``.
    """
    if not state_is_valid(state, config):
        return None
    terms = {} if cached is None else dict(cached)
    onset = _onset_of(state, data)
    for g in groups:
        terms.update(_group_terms(g, state, data, config, onset))
    return terms


def log_posterior(state, data, config) -> float:
    """Unnormalised log posterior of any variant; -inf for invalid states."""
    terms = posterior_terms(state, data, config)
    if terms is None:
        return -np.inf
    total = sum(terms.values())
    return float(total) if np.isfinite(total) else -np.inf


@dataclass
class ChainOutput:
    variant: str
    config: dict
    iteration: np.ndarray
    theta: np.ndarray
    m: np.ndarray
    M: np.ndarray
    psi: list
    lam: list
    alpha: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    V: np.ndarray
    log_post: np.ndarray
    phi: np.ndarray | None
    acceptance: dict

    def __len__(self):
        return len(self.iteration)

    @property
    def psi_0(self):
        return np.array([p[0] for p in self.psi])

    @property
    def psi_M(self):
        return np.array([p[-1] for p in self.psi])

    @property
    def span(self):
        return self.psi_M - self.psi_0

    @property
    def lattice(self) -> Lattice:
        lat = dict(self.config["lattice"])
        lat["origin"] = tuple(lat["origin"])
        return Lattice(**lat)

    def counts(self) -> list:
        return [np.bincount(mm, minlength=k + 1)[1:] for mm, k in zip(self.m, self.M)]

    def acceptance_rates(self) -> dict:
        return {k: (a / n if n else float("nan")) for k, (a, n) in self.acceptance.items()}


class Sampler:
    """One Markov chain; owns its state and RNG."""

    def __init__(self, config: RunConfig, data: ChronologyData, rng=None, state=None):
        self.config = config
        self.data = data
        self.rng = np.random.default_rng(config.seed if rng is None else rng)
        self.variant = config.variant
        if has_field(self.variant) and data.K and data.date_cells is None:
            raise ValueError("field variants need the lattice cell of every date")
        if not config.flat_likelihood and data.K:
            if not data.curves:
                raise ValueError("calibration curves required unless the likelihood is flat")
            kinds = {"marine" if d.material == "marine" else "terrestrial" for d in data.dates}
            for k in kinds:
                lo, hi = data.curves[k].age_range
                if lo > config.L or hi < config.U:
                    raise cal.CurveRangeError(
                        f"{k} curve [{lo}, {hi}] does not cover [{config.L}, {config.U}]")
        weights = config.move_weights()
        self.moves = [k for k in MOVE_FAMILIES if weights.get(k, 0) > 0]
        w = np.array([weights[k] for k in self.moves], dtype=float)
        self.move_cum = np.cumsum(w / w.sum())
        self.acceptance = {k: [0, 0] for k in self.moves}
        self.state = self.initial_state() if state is None else state
        self.terms = posterior_terms(self.state, data, config)
        self.lp = -np.inf if self.terms is None else float(sum(self.terms.values()))
        if not np.isfinite(self.lp):
            raise InvalidStateError("initial state has zero posterior density")

    # --- initialisation ------------------------------------------------------

    def initial_state(self) -> ChronologyState:
        cfg, data, rng = self.config, self.data, self.rng
        from_prior = cfg.init_from_prior
        if from_prior is None:
            from_prior = cfg.flat_likelihood or data.K == 0
        if from_prior:
            return sample_prior(cfg.prior_spec(data.date_cells), data.K, rng)
        L, U = cfg.L, cfg.U
        theta = np.array([cal.likelihood_mode(d, data.curves, int(np.ceil(L)) + 2,
                                              int(np.floor(U)) - 2) for d in data.dates],
                         dtype=float)
        theta += rng.uniform(-0.25, 0.25, size=len(theta))
        for _ in range(cfg.init_retries):
            lo = theta.min() - rng.uniform(1.0, 50.0)
            hi = theta.max() + rng.uniform(1.0, 50.0)
            psi = np.array([max(lo, L + 0.5 * (theta.min() - L)),
                            min(hi, U - 0.5 * (U - theta.max()))])
            state = ChronologyState(theta=theta.copy(), psi=psi,
                                    m=np.ones(data.K, dtype=np.int64), lam=np.ones(1),
                                    variant=self.variant)
            if has_field(self.variant):
                a, b1, b2 = sample_alpha_beta(cfg.A, cfg.B, cfg.lattice, L, U, rng)
                phi = simulate_field(a, b1, b2, cfg.lattice, psi[-1], True, rng)
                # shrink the field towards psi_M until it clears every constraint
                for _ in range(60):
                    ok_bounds = np.all(phi > psi[0])
                    ok_dates = (not data.K) or np.all(theta < phi.ravel()[data.date_cells])
                    if ok_bounds and ok_dates:
                        break
                    phi = psi[-1] - 0.5 * (psi[-1] - phi)
                state.alpha, state.beta1, state.beta2, state.phi = float(a), float(b1), float(b2), phi
            if np.isfinite(log_posterior(state, data, cfg)):
                return state
        raise InvalidStateError("no valid initial state found within the retry budget")

    # --- helpers ------------------------------------------------------------------

    def _onset(self, state):
        if not has_field(state.variant) or not self.data.K:
            return None
        return state.phi.ravel()[self.data.date_cells]

    def _accept(self, proposal, groups, log_hastings=0.0):
        """Metropolis-Hastings-Green test; only ``groups`` are re-evaluated."""
        terms = posterior_terms(proposal, self.data, self.config, groups, self.terms)
        if terms is None:
            return False
        lp_new = float(sum(terms.values()))
        if not np.isfinite(lp_new):
            return False
        log_a = lp_new - self.lp + log_hastings
        if log_a >= 0 or self.rng.random() < np.exp(log_a):
            self.state = proposal
            self.terms = terms
            self.lp = lp_new
            return True
        return False

    # --- moves --------------------------------------------------------------------

    def update_theta(self, i=None):
        """Redraw one age uniformly on its current deposition window."""
        s = self.state
        if s.K == 0:
            return False
        i = self.rng.integers(s.K) if i is None else i
        onset = self._onset(s)
        lo = s.psi[s.m[i] - 1]
        hi = s.psi[s.m[i]] if onset is None else min(s.psi[s.m[i]], onset[i])
        prop = s.copy()
        prop.theta[i] = self.rng.uniform(lo, hi)
        return self._accept(prop, ("theta", "likelihood"))

    def psi_window(self, s, j):
        """Interval of legal values for boundary ``j`` given everything else."""
        cfg = self.config
        M = s.M
        lo = s.psi[j - 1] if j > 0 else cfg.L
        hi = s.psi[j + 1] if j < M else cfg.U
        if s.K:
            above = s.theta[s.m == j]          # dates whose window ends at psi_j
            below = s.theta[s.m == j + 1]      # dates whose window starts at psi_j
            if len(above):
                lo = max(lo, above.max())
            if len(below):
                hi = min(hi, below.min())
        if has_field(s.variant):
            if j == 0:
                hi = min(hi, s.phi.min())
            if j == M:
                # the whole field moves with psi_M; constraints in terms of its shape
                depth = s.psi[M] - s.phi
                lo = max(lo, s.psi[0] + depth.max())
                if s.K:
                    onset_depth = depth.ravel()[self.data.date_cells]
                    lo = max(lo, (s.theta + onset_depth).max())
        return lo, hi

    def update_psi(self, j=None):
        """Uniform proposal for one boundary over its widest legal interval.

        In field variants the onset psi_M carries the whole field with it
        (a translation, so no Jacobian term).
        """
        s = self.state
        j = self.rng.integers(s.M + 1) if j is None else j
        lo, hi = self.psi_window(s, j)
        if not hi > lo:
            return False
        prop = s.copy()
        prop.psi[j] = self.rng.uniform(lo, hi)
        if has_field(s.variant) and j == s.M:
            prop.phi = prop.phi + (prop.psi[j] - s.psi[j])
            # pin the maximum exactly after floating-point translation
            prop.phi[np.unravel_index(np.argmax(s.phi), s.phi.shape)] = prop.psi[j]
            return self._accept(prop, ("psi", "field", "phases", "theta"))
        return self._accept(prop, ("psi", "phases", "theta"))

    def _field_proposal_density(self, st, with_rates):
        cfg = self.config
        q = log_density_field(st.phi, st.alpha, st.beta1, st.beta2, cfg.lattice, st.psi[-1],
                              conditioned=True)
        if with_rates:
            q += log_prior_alpha_beta(st.alpha, st.beta1, st.beta2, cfg.A, cfg.B, cfg.lattice,
                                      cfg.L, cfg.U)
        return q

    def _field_update(self, with_rates):
        s = self.state
        cfg = self.config
        prop = s.copy()
        if with_rates:
            a, b1, b2 = sample_alpha_beta(cfg.A, cfg.B, cfg.lattice, cfg.L, cfg.U, self.rng)
            prop.alpha, prop.beta1, prop.beta2 = float(a), float(b1), float(b2)
        prop.phi = simulate_field(prop.alpha, prop.beta1, prop.beta2, cfg.lattice, s.psi[-1],
                                  True, self.rng)
        # bounds and date constraints are enforced at the acceptance stage
        if not np.all(prop.phi > s.psi[0]):
            return False
        onset = self._onset(prop)
        if onset is not None and np.any(s.theta >= onset):
            return False
        log_h = (self._field_proposal_density(s, with_rates)
                 - self._field_proposal_density(prop, with_rates))
        return self._accept(prop, ("field", "phases", "theta"), log_h)

    def update_field_joint(self):
        """Independence proposal of (alpha, beta1, beta2, phi) from their prior."""
        return self._field_update(True)

    def update_field_conditional(self):
        """Independence proposal of phi from its prior at the current rates."""
        return self._field_update(False)

    def update_field_local(self, c=None, step=None, swap=None):
        """Local field move: random-walk one cell, or move the pinned maximum.

        With probability 0.1 the pinned cell exchanges ages with a uniformly
        chosen neighbour (Hastings factor |N(old)| / |N(new)|); otherwise a
        non-pinned cell takes a normal step whose scale is drawn from
        {5, 30, 150} years (symmetric).
        """
        s = self.state
        lat = self.config.lattice
        flat = s.phi.ravel()
        top = int(np.argmax(flat))
        swap = (self.rng.random() < 0.1) if swap is None else swap
        prop = s.copy()
        new = prop.phi.ravel()
        if swap:
            nb = neighbors(lat, top)
            if not nb:
                return False
            c = nb[self.rng.integers(len(nb))] if c is None else c
            new[top], new[c] = flat[c], flat[top]
            log_h = log(len(nb)) - log(len(neighbors(lat, c)))
        else:
            if lat.C == 1:
                return False
            if c is None:
                c = int(self.rng.integers(lat.C - 1))
                c += c >= top
            elif c == top:
                return False
            if step is None:
                step = (5.0, 30.0, 150.0)[self.rng.integers(3)] * self.rng.standard_normal()
            new[c] = flat[c] + step
            if not new[c] < s.psi[-1]:
                return False
            log_h = 0.0
        return self._accept(prop, ("field", "phases", "theta"), log_h)

    def update_scale_rates(self, z=None, target=None):
        """Scale alpha, beta1 and beta2 jointly, or one of them, by z ~ U(1/2, 2).

        The map (x, z) -> (z x, 1/z) on n coordinates has Jacobian z^n / z^2
        and the uniform z-density is the same at z and 1/z, so the Hastings
        factor is z for the joint move and 1/z for a single rate. Single-rate
        moves are what let the ratio beta1 / beta2 change.

        Target "time" rescales the clock of the growth process: every depth
        psi_M - phi_c is multiplied by z and all three rates divided by z.
        The field density changes by z^-(C-1), which the Jacobian cancels, so
        the move follows the prior's depth/rate ridge. Hastings factor
        z^(C-1) z^-3 z^-2.
        """
        s = self.state
        z = self.rng.uniform(0.5, 2.0) if z is None else z
        if target is None:
            target = RATE_TARGETS[self.rng.integers(len(RATE_TARGETS))]
        prop = s.copy()
        if target == "time":
            prop.alpha, prop.beta1, prop.beta2 = s.alpha / z, s.beta1 / z, s.beta2 / z
            top = s.psi[-1]
            prop.phi = top - z * (top - s.phi)
            n = self.config.lattice.C - 1
            return self._accept(prop, ("field", "phases", "theta"), (n - 5) * log(z))
        if target == "all":
            prop.alpha, prop.beta1, prop.beta2 = z * s.alpha, z * s.beta1, z * s.beta2
            return self._accept(prop, ("field",), log(z))
        setattr(prop, target, z * getattr(s, target))
        return self._accept(prop, ("field",), -log(z))

    def update_rates(self, k=None, z=None):
        """Scale one deposition rate by z ~ U(1/2, 2); Hastings factor 1/z."""
        s = self.state
        k = self.rng.integers(s.M) if k is None else k
        z = self.rng.uniform(0.5, 2.0) if z is None else z
        prop = s.copy()
        prop.lam[k] *= z
        return self._accept(prop, ("phases",), -log(z))

    def propose_add(self, k=None, b=None, lam_new=None):
        """Split phase k at age b; the lower part gets the new rate ``lam_new``.

        Returns (proposal, log of reverse/forward proposal density ratio).
        """
        s = self.state
        M = s.M
        k = 1 + self.rng.integers(M) if k is None else k
        lo, hi = s.psi[k - 1], s.psi[k]
        b = self.rng.uniform(lo, hi) if b is None else b
        lam_new = self.rng.exponential(1.0) if lam_new is None else lam_new
        prop = s.copy()
        prop.psi = np.insert(s.psi, k, b)
        prop.lam = np.insert(s.lam, k - 1, lam_new)
        m = s.m.copy()
        m[m > k] += 1
        split = (s.m == k) & (s.theta > b)
        m[split] = k + 1
        prop.m = m
        # forward: 1/M * 1/(hi-lo) * exp(-lam_new); reverse: 1/M interior boundaries
        log_ratio = log(hi - lo) + lam_new
        return prop, log_ratio

    def propose_delete(self, j=None):
        """Merge phases j and j+1 (remove interior boundary j), dropping lam_j."""
        s = self.state
        M = s.M
        j = 1 + self.rng.integers(M - 1) if j is None else j
        prop = s.copy()
        lam_removed = s.lam[j - 1]
        prop.psi = np.delete(s.psi, j)
        prop.lam = np.delete(s.lam, j - 1)
        m = s.m.copy()
        m[m > j] -= 1
        prop.m = m
        log_ratio = -log(s.psi[j + 1] - s.psi[j - 1]) - lam_removed
        return prop, log_ratio

    def update_rj(self):
        """Add or delete a phase boundary (with its rate) with probability 1/2 each."""
        if self.rng.random() < 0.5:
            prop, log_ratio = self.propose_add()
        else:
            if self.state.M == 1:
                return False
            prop, log_ratio = self.propose_delete()
        return self._accept(prop, ("psi", "phases", "theta"), log_ratio)

    def update_assignment(self, i=None, direction=None):
        """Move one date to an adjacent phase, redrawing its age on the new window."""
        s = self.state
        if s.K == 0 or s.M == 1:
            return False
        i = self.rng.integers(s.K) if i is None else i
        direction = (1 if self.rng.random() < 0.5 else -1) if direction is None else direction
        src = s.m[i]
        dest = src + direction
        if dest < 1 or dest > s.M:
            return False
        onset = self._onset(s)
        o = np.inf if onset is None else onset[i]
        w_dest = min(o, s.psi[dest]) - s.psi[dest - 1]
        if not w_dest > 0:
            return False
        w_src = min(o, s.psi[src]) - s.psi[src - 1]
        prop = s.copy()
        prop.m[i] = dest
        prop.theta[i] = s.psi[dest - 1] + self.rng.random() * w_dest
        return self._accept(prop, ("phases", "theta", "likelihood"), log(w_dest) - log(w_src))

    def update_shift_ages(self, d=None):
        """Translate every age (dates, boundaries, field) by a common offset.

        The offset is symmetric with a log-uniform magnitude between 1e-4 and
        U - L; the map is a translation, so there is no Jacobian.
        """
        s = self.state
        cfg = self.config
        if d is None:
            d = (cfg.U - cfg.L) * 10.0 ** self.rng.uniform(-4.0, 0.0)
            d = d if self.rng.random() < 0.5 else -d
        prop = s.copy()
        prop.theta = s.theta + d
        prop.psi = s.psi + d
        if has_field(s.variant):
            prop.phi = s.phi + d
            prop.phi[np.unravel_index(np.argmax(s.phi), s.phi.shape)] = prop.psi[-1]
        return self._accept(prop, ALL_GROUPS)

    def update_scale_ages(self, z=None, anchor=None):
        """Stretch ages about the youngest or the oldest boundary.

        log z is drawn from a symmetric mixture of uniforms, so the proposal
        density satisfies g(1/z) = z^2 g(z); with the Jacobian z^n / z^2 of
        (x, z) -> (a + z (x - a), 1/z) the Hastings factor is z^n, n the number
        of scaled free coordinates. About psi_M (anchor 1) the field is left
        alone; about psi_0 (anchor 0) it is stretched with everything else,
        its pinned maximum following psi_M.
        """
        s = self.state
        if z is None:
            width = (0.01, 0.1, 0.5, 1.5)[self.rng.integers(4)]
            z = np.exp(self.rng.uniform(-width, width))
        if anchor is None:
            anchor = int(self.rng.integers(2))
        prop = s.copy()
        n = s.K + s.M
        groups = ("psi", "phases", "theta", "likelihood")
        if anchor:
            a = s.psi[-1]
            prop.psi[:-1] = a + z * (s.psi[:-1] - a)
        else:
            a = s.psi[0]
            prop.psi[1:] = a + z * (s.psi[1:] - a)
            if has_field(s.variant):
                prop.phi = a + z * (s.phi - a)
                prop.phi[np.unravel_index(np.argmax(s.phi), s.phi.shape)] = prop.psi[-1]
                n += s.phi.size - 1
                groups = ALL_GROUPS
        prop.theta = a + z * (s.theta - a)
        return self._accept(prop, groups, n * log(z))

    def step(self):
        move = self.moves[int(np.searchsorted(self.move_cum, self.rng.random(), side="right"))
                          if len(self.moves) > 1 else 0]
        accepted = getattr(self, _MOVE_METHODS[move])()
        self.acceptance[move][1] += 1
        self.acceptance[move][0] += int(bool(accepted))
        return move, accepted


_MOVE_METHODS = {
    "theta": "update_theta",
    "psi": "update_psi",
    "shift_ages": "update_shift_ages",
    "scale_ages": "update_scale_ages",
    "field_joint": "update_field_joint",
    "field_conditional": "update_field_conditional",
    "field_local": "update_field_local",
    "scale_rates": "update_scale_rates",
    "rj": "update_rj",
    "assignment": "update_assignment",
    "rates": "update_rates",
}


def run_chain(config: RunConfig, data: ChronologyData, curves=None, rng=None,
              progress=None) -> ChainOutput:
    """Run one chain; deterministic given ``config.seed`` (or ``rng``)."""
    if curves is not None:
        data.curves = curves
    sampler = Sampler(config, data, rng=rng)
    field_run = has_field(config.variant)
    rec = {k: [] for k in ("iteration", "theta", "m", "M", "psi", "lam", "alpha", "beta1",
                           "beta2", "V", "log_post", "phi")}
    lat = config.lattice
    for t in range(1, config.iterations + 1):
        sampler.step()
        if t > config.burn_in and (t - config.burn_in) % config.thin == 0:
            s = sampler.state
            rec["iteration"].append(t)
            rec["theta"].append(s.theta.copy())
            rec["m"].append(s.m.copy())
            rec["M"].append(s.M)
            rec["psi"].append(s.psi.copy())
            rec["lam"].append(s.lam.copy())
            rec["alpha"].append(s.alpha)
            rec["beta1"].append(s.beta1)
            rec["beta2"].append(s.beta2)
            rec["log_post"].append(sampler.lp)
            if field_run:
                rec["phi"].append(s.phi.copy())
                rec["V"].append(arrival_count(s.phi, lat))
            else:
                rec["V"].append(0)
        if progress is not None and t % progress == 0:
            log_.info("iteration %d lp %.3f M %d", t, sampler.lp, sampler.state.M)
    K = data.K
    return ChainOutput(
        variant=config.variant,
        config=config.to_dict(),
        iteration=np.array(rec["iteration"], dtype=np.int64),
        theta=np.array(rec["theta"], dtype=float).reshape(len(rec["theta"]), K),
        m=np.array(rec["m"], dtype=np.int64).reshape(len(rec["m"]), K),
        M=np.array(rec["M"], dtype=np.int64),
        psi=rec["psi"],
        lam=rec["lam"],
        alpha=np.array(rec["alpha"], dtype=float),
        beta1=np.array(rec["beta1"], dtype=float),
        beta2=np.array(rec["beta2"], dtype=float),
        V=np.array(rec["V"], dtype=np.int64),
        log_post=np.array(rec["log_post"], dtype=float),
        phi=np.array(rec["phi"]) if field_run else None,
        acceptance={k: tuple(v) for k, v in sampler.acceptance.items()},
    )


def _run_seeded(args):
    config, data, seed_seq = args
    return run_chain(config, data, rng=np.random.default_rng(seed_seq))


def run_chains(config: RunConfig, data: ChronologyData, n_chains=2, n_jobs=1) -> list:
    """Independent chains with spawned RNG streams; results do not depend on n_jobs."""
    seeds = np.random.SeedSequence(config.seed).spawn(n_chains)
    jobs = [(config, data, s) for s in seeds]
    if n_jobs == 1:
        return [_run_seeded(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(_run_seeded, jobs))


def combine_chains(chains) -> ChainOutput:
    """Pool the records of several chains of one run (acceptance counts are summed)."""
    chains = list(chains)
    if not chains:
        raise ValueError("no chains to combine")
    first = chains[0]
    acc = {}
    for c in chains:
        for k, (a, n) in c.acceptance.items():
            a0, n0 = acc.get(k, (0, 0))
            acc[k] = (a0 + a, n0 + n)
    cat = lambda name: np.concatenate([getattr(c, name) for c in chains])  # noqa: E731
    return ChainOutput(
        variant=first.variant, config=first.config, iteration=cat("iteration"),
        theta=cat("theta"), m=cat("m"), M=cat("M"),
        psi=[p for c in chains for p in c.psi], lam=[x for c in chains for x in c.lam],
        alpha=cat("alpha"), beta1=cat("beta1"), beta2=cat("beta2"), V=cat("V"),
        log_post=cat("log_post"), phi=None if first.phi is None else cat("phi"),
        acceptance=acc)


def prior_draws(config: RunConfig, data: ChronologyData, n, rng=None) -> ChainOutput:
    """Independent draws from the prior of ``config.variant`` in chain-output form."""
    rng = np.random.default_rng(config.seed if rng is None else rng)
    spec = config.prior_spec(data.date_cells)
    field_run = has_field(config.variant)
    states = [sample_prior(spec, data.K, rng) for _ in range(n)]
    nan = np.full(n, np.nan)
    return ChainOutput(
        variant=config.variant, config=config.to_dict(),
        iteration=np.arange(1, n + 1, dtype=np.int64),
        theta=np.array([s.theta for s in states], dtype=float).reshape(n, data.K),
        m=np.array([s.m for s in states], dtype=np.int64).reshape(n, data.K),
        M=np.array([s.M for s in states], dtype=np.int64),
        psi=[s.psi for s in states], lam=[s.lam for s in states],
        alpha=np.array([s.alpha for s in states]) if field_run else nan,
        beta1=np.array([s.beta1 for s in states]) if field_run else nan.copy(),
        beta2=np.array([s.beta2 for s in states]) if field_run else nan.copy(),
        V=np.array([arrival_count(s.phi, config.lattice) if field_run else 0 for s in states],
                   dtype=np.int64),
        log_post=np.full(n, np.nan),
        phi=np.array([s.phi for s in states]) if field_run else None,
        acceptance={})
