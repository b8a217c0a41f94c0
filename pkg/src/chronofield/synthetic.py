"""Synthetic excavations: pits, true ages and simulated radiocarbon dates."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .calibration import RadiocarbonDate, interpolate_curve, mu_sigma, synthetic_curve
from .io import Dataset
from .onsetfield import Lattice, cell_of


@dataclass
class SyntheticSite:
    dataset: Dataset
    curves: dict
    theta: np.ndarray           # true calendar ages
    psi: np.ndarray             # true phase boundaries
    m: np.ndarray               # true phase of each date
    phi: np.ndarray | None = None
    seed_cell: int | None = None


def reference_curves(L, U, pad=50, error=15.0, wiggle=0.0) -> dict:
    """Interpolated identity-like terrestrial curve covering [L - pad, U + pad]."""
    lo, hi = int(np.floor(L)) - pad, int(np.ceil(U)) + pad
    return {"terrestrial": interpolate_curve(synthetic_curve(lo, hi, wiggle=wiggle, error=error))}


def random_pits(n, lattice: Lattice, rng, inset=0.25) -> list:
    """``n`` pits placed uniformly in the box, kept ``inset`` cells from its edge."""
    (x0, x1), (y0, y1) = lattice.extent()
    d = inset * lattice.cell_side
    xs = rng.uniform(x0 + d, x1 - d, n)
    ys = rng.uniform(y0 + d, y1 - d, n)
    return [(f"P{i + 1:02d}", float(x), float(y)) for i, (x, y) in enumerate(zip(xs, ys))]


def simulate_dates(theta, pits_of_dates, curves, rng, sigma_lab=30.0, prefix="D") -> list:
    """Radiocarbon ages y ~ N(mu(theta), sigma_lab^2 + sigma(theta)^2)."""
    curve = curves["terrestrial"]
    mu, sig = mu_sigma(curve, np.rint(theta))
    sd = np.sqrt(sigma_lab**2 + np.asarray(sig) ** 2)
    y = np.rint(rng.normal(mu, sd))
    return [RadiocarbonDate(f"{prefix}{i + 1:03d}", pit, float(yi), float(sigma_lab))
            for i, (pit, yi) in enumerate(zip(pits_of_dates, y))]


def _assign_pits(K, pits, rng):
    """Every pit gets at least one date when K >= number of pits."""
    names = [p[0] for p in pits]
    first = names[: min(K, len(names))]
    rest = list(rng.choice(names, K - len(first))) if K > len(first) else []
    out = np.array(first + rest, dtype=object)
    rng.shuffle(out)
    return out


def single_phase_site(K=49, H=24, psi=(2450.0, 2900.0), lattice=None, L=2000.0, U=3500.0,
                      sigma_lab=30.0, rng=None) -> SyntheticSite:
    """All dates uniform on one phase, no spatial structure."""
    rng = np.random.default_rng(rng)
    lattice = lattice or Lattice()
    curves = reference_curves(L, U)
    pits = random_pits(H, lattice, rng)
    where = _assign_pits(K, pits, rng)
    theta = rng.uniform(psi[0], psi[1], K)
    dates = simulate_dates(theta, where, curves, rng, sigma_lab)
    return SyntheticSite(Dataset(dates, pits, lattice), curves, theta, np.array(psi, float),
                         np.ones(K, dtype=np.int64))


def spreading_site(K=120, H=48, psi=(2300.0, 3100.0), beta2=None, lattice=None, L=2000.0,
                   U=3500.0, sigma_lab=20.0, seed_cell=None, rng=None) -> SyntheticSite:
    """One settlement spreading from a single cell, along-beach migration twice cross-beach.

    Immigration is switched off, so the seed cell is the only arrival and is
    occupied at psi_M. Dates in a pit are uniform between psi_0 and the local
    onset.
    """
    rng = np.random.default_rng(rng)
    lattice = lattice or Lattice()
    curves = reference_curves(L, U)
    span = psi[1] - psi[0]
    if beta2 is None:
        # front crosses the long axis in about half the span
        beta2 = lattice.C2 / (0.5 * span) / 2.5 / 2.0
    beta1 = 2.0 * beta2
    if seed_cell is None:
        seed_cell = int((lattice.C1 // 2) * lattice.C2 + lattice.C2 // 4)
    phi = _field_from_seed(beta1, beta2, lattice, psi[1], seed_cell, rng)
    if phi.min() <= psi[0]:
        raise ValueError("field does not fit inside the phase; lower the span or raise beta")
    pits = random_pits(H, lattice, rng)
    where = _assign_pits(K, pits, rng)
    cells = {n: cell_of(lattice, (x, y)) for n, x, y in pits}
    onset = np.array([phi.ravel()[cells[p]] for p in where])
    theta = rng.uniform(psi[0], onset)
    dates = simulate_dates(theta, where, curves, rng, sigma_lab)
    return SyntheticSite(Dataset(dates, pits, lattice), curves, theta, np.array(psi, float),
                         np.ones(K, dtype=np.int64), phi, seed_cell)


def _field_from_seed(beta1, beta2, lattice, psi_M, seed_cell, rng):
    """Migration-only field grown from ``seed_cell``, occupied at ``psi_M``.

    By memorylessness, growth at rate beta per occupied neighbour equals
    first-passage percolation with independent exponential edge delays.
    """
    C1, C2 = lattice.shape
    phi = np.empty(C1 * C2)
    heap = [(0.0, seed_cell)]
    done = np.zeros(C1 * C2, dtype=bool)
    while heap:
        t, c = heapq.heappop(heap)
        if done[c]:
            continue
        done[c] = True
        phi[c] = psi_M - t
        i, j = divmod(c, C2)
        for di, dj, b in ((0, 1, beta1), (0, -1, beta1), (1, 0, beta2), (-1, 0, beta2)):
            ii, jj = i + di, j + dj
            if 0 <= ii < C1 and 0 <= jj < C2 and not done[ii * C2 + jj]:
                heapq.heappush(heap, (t + rng.exponential(1.0 / b), ii * C2 + jj))
    return phi.reshape(C1, C2)


def hiatus_site(n_young=13, n_old=15, young=(450.0, 700.0), old=(1200.0, 1450.0),
                H=10, lattice=None, L=0.0, U=2000.0, sigma_lab=25.0, rng=None) -> SyntheticSite:
    """Two bursts of deposition separated by a gap, as three phases with an empty middle."""
    rng = np.random.default_rng(rng)
    lattice = lattice or Lattice()
    curves = reference_curves(L, U)
    pits = random_pits(H, lattice, rng)
    K = n_young + n_old
    where = _assign_pits(K, pits, rng)
    theta = np.concatenate([rng.uniform(*young, n_young), rng.uniform(*old, n_old)])
    m = np.concatenate([np.ones(n_young, dtype=np.int64), np.full(n_old, 3, dtype=np.int64)])
    dates = simulate_dates(theta, where, curves, rng, sigma_lab)
    psi = np.array([young[0], young[1], old[0], old[1]])
    return SyntheticSite(Dataset(dates, pits, lattice), curves, theta, psi, m)
