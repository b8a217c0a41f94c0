"""Immigration-migration onset fields on a rectangular lattice.

Cells are indexed row-major on a ``C1 x C2`` grid: rows run across the beach
(axis 0), columns run along the beach (axis 1). Migration between
horizontally adjacent cells happens at rate ``beta1`` (along the beach) and
between vertically adjacent cells at rate ``beta2``.

An onset field ``phi`` holds one age (years BP) per cell with
``phi <= psi_M``. Fields are simulated backwards in age from ``psi_M``:
each unoccupied cell is entered by immigration at rate ``alpha`` plus
``beta`` for every occupied neighbour.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numba
import numpy as np


@dataclass(frozen=True)
class Lattice:
    C1: int = 13
    C2: int = 32
    cell_side: float = 2.375
    origin: tuple = (0.0, 0.0)
    along_axis: int = 0

    def __post_init__(self):
        if self.C1 < 1 or self.C2 < 1:
            raise ValueError("lattice needs at least one cell along each axis")
        if not self.cell_side > 0:
            raise ValueError("cell_side must be positive")
        if self.along_axis not in (0, 1):
            raise ValueError("along_axis must be 0 or 1")

    @property
    def C(self) -> int:
        return self.C1 * self.C2

    @property
    def shape(self) -> tuple:
        return (self.C1, self.C2)

    def extent(self):
        """Box as ((x_min, x_max), (y_min, y_max)) in excavation coordinates."""
        along = self.C2 * self.cell_side
        across = self.C1 * self.cell_side
        sizes = (along, across) if self.along_axis == 0 else (across, along)
        return tuple((o, o + s) for o, s in zip(self.origin, sizes))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["origin"] = list(self.origin)
        return d

    @classmethod
    def fit_to_points(cls, points, cell_side=2.375, margin=None, C1=None, C2=None):
        """Box around ``points`` holding a whole number of cells.

        The long axis of the lattice follows the wider extent of the data.
        ``C1``/``C2`` force the cell counts; the box is then centred on the data.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        if margin is None:
            margin = 0.5 * cell_side
        span = hi - lo + 2 * margin
        along_axis = 0 if span[0] >= span[1] else 1
        n_along = max(1, int(np.ceil(span[along_axis] / cell_side)))
        n_across = max(1, int(np.ceil(span[1 - along_axis] / cell_side)))
        if C2 is not None:
            n_along = max(n_along, C2) if C2 * cell_side < span[along_axis] else C2
        if C1 is not None:
            n_across = max(n_across, C1) if C1 * cell_side < span[1 - along_axis] else C1
        counts = np.empty(2)
        counts[along_axis] = n_along
        counts[1 - along_axis] = n_across
        centre = 0.5 * (lo + hi)
        origin = centre - 0.5 * counts * cell_side
        return cls(int(n_across), int(n_along), float(cell_side),
                   (float(origin[0]), float(origin[1])), along_axis)


def neighbors(lattice: Lattice, c: int) -> list:
    """4-neighbourhood of flat cell index ``c``, clipped at the boundary."""
    i, j = divmod(int(c), lattice.C2)
    out = []
    if i > 0:
        out.append(c - lattice.C2)
    if j > 0:
        out.append(c - 1)
    if j < lattice.C2 - 1:
        out.append(c + 1)
    if i < lattice.C1 - 1:
        out.append(c + lattice.C2)
    return out


def cell_of(lattice: Lattice, x) -> int:
    """Flat index of the cell containing point ``x``.

    A point on an interior cell boundary goes to the cell with the larger
    index along that axis; the far edge of the box belongs to the last cell.
    """
    x = np.asarray(x, dtype=float)
    (x0, x1), (y0, y1) = lattice.extent()
    if not (x0 <= x[0] <= x1 and y0 <= x[1] <= y1):
        raise ValueError(f"point {tuple(x)} outside lattice box")
    a = lattice.along_axis
    j = int(np.floor((x[a] - lattice.origin[a]) / lattice.cell_side))
    i = int(np.floor((x[1 - a] - lattice.origin[1 - a]) / lattice.cell_side))
    j = min(max(j, 0), lattice.C2 - 1)
    i = min(max(i, 0), lattice.C1 - 1)
    return i * lattice.C2 + j


def _grid(field, lattice):
    return np.asarray(field, dtype=float).reshape(lattice.shape)


def rho_field(field, alpha, beta1, beta2, lattice: Lattice) -> np.ndarray:
    """Per-cell occupation rate alpha + sum of beta over strictly older neighbours."""
    phi = _grid(field, lattice)
    r = np.full(phi.shape, float(alpha))
    # along the beach (axis 1)
    older = phi[:, 1:] > phi[:, :-1]
    r[:, :-1] += beta1 * older
    r[:, 1:] += beta1 * (phi[:, :-1] > phi[:, 1:])
    # across the beach (axis 0)
    r[:-1, :] += beta2 * (phi[1:, :] > phi[:-1, :])
    r[1:, :] += beta2 * (phi[:-1, :] > phi[1:, :])
    return r


def rho(field, c, alpha, beta1, beta2, lattice: Lattice) -> float:
    return float(rho_field(field, alpha, beta1, beta2, lattice).flat[c])


@numba.njit(cache=True)
def _log_density_kernel(phi, alpha, beta1, beta2, psi_M):
    C1, C2 = phi.shape
    lp = 0.0
    for i in range(C1):
        for j in range(C2):
            v = phi[i, j]
            r = alpha
            if j > 0 and phi[i, j - 1] > v:
                r += beta1
            if j < C2 - 1 and phi[i, j + 1] > v:
                r += beta1
            if i > 0 and phi[i - 1, j] > v:
                r += beta2
            if i < C1 - 1 and phi[i + 1, j] > v:
                r += beta2
            lp += np.log(r) - alpha * (psi_M - v)
            # each edge once: right and down neighbours
            if j < C2 - 1:
                lp -= beta1 * abs(v - phi[i, j + 1])
            if i < C1 - 1:
                lp -= beta2 * abs(v - phi[i + 1, j])
    return lp


def log_density_field(field, alpha, beta1, beta2, lattice: Lattice, psi_M,
                      conditioned=False) -> float:
    """Exact log-density of an onset field; -inf outside the support.

    sum_c [log rho_c - alpha (psi_M - phi_c)] - sum over edges beta |phi_c - phi_c'|.
    With ``conditioned`` the field must attain ``psi_M`` and the density is
    divided by ``alpha`` (first arrival pinned at ``psi_M``).
    """
    phi = np.ascontiguousarray(_grid(field, lattice))
    mx = phi.max()
    if mx > psi_M:
        return -np.inf
    if conditioned and mx != psi_M:
        return -np.inf
    lp = _log_density_kernel(phi, float(alpha), float(beta1), float(beta2), float(psi_M))
    if conditioned:
        lp -= np.log(alpha)
    return float(lp)


def log_density_field_numpy(field, alpha, beta1, beta2, lattice: Lattice, psi_M,
                            conditioned=False) -> float:
    """Vectorised reference implementation of :func:`log_density_field`."""
    phi = _grid(field, lattice)
    if np.any(phi > psi_M) or (conditioned and phi.max() != psi_M):
        return -np.inf
    lp = np.log(rho_field(phi, alpha, beta1, beta2, lattice)).sum()
    lp -= alpha * (psi_M - phi).sum()
    lp -= beta1 * np.abs(np.diff(phi, axis=1)).sum()
    lp -= beta2 * np.abs(np.diff(phi, axis=0)).sum()
    if conditioned:
        lp -= np.log(alpha)
    return float(lp)


def arrival_count(field, lattice: Lattice) -> int:
    """Number of strict local maxima (cells older than all their neighbours)."""
    phi = _grid(field, lattice)
    padded = np.pad(phi, 1, constant_values=-np.inf)
    core = padded[1:-1, 1:-1]
    peak = ((core > padded[:-2, 1:-1]) & (core > padded[2:, 1:-1])
            & (core > padded[1:-1, :-2]) & (core > padded[1:-1, 2:]))
    return int(peak.sum())


def field_in_bounds(field, psi_0, psi_M) -> bool:
    phi = np.asarray(field)
    return bool(np.all(phi > psi_0) and np.all(phi <= psi_M))


# --- simulation -----------------------------------------------------------

@numba.njit(cache=True)
def _simulate_kernel(C1, C2, alpha, beta1, beta2, psi_M, conditioned, expo, unif, out):
    C = C1 * C2
    rates = np.full(C, alpha)
    occupied = np.zeros(C, dtype=np.bool_)
    # Fenwick tree over cell rates for O(log C) categorical draws
    tree = np.zeros(C + 1)
    for k in range(C):
        i = k + 1
        while i <= C:
            tree[i] += alpha
            i += i & (-i)
    top = 1
    while top * 2 <= C:
        top *= 2
    total = alpha * C
    t = psi_M
    for n in range(C):
        if not (conditioned and n == 0):
            t -= expo[n] / total
        target = unif[n] * total
        pos = 0
        step = top
        while step > 0:
            nxt = pos + step
            if nxt <= C and tree[nxt] < target:
                pos = nxt
                target -= tree[nxt]
            step >>= 1
        c = pos if pos < C else C - 1
        if occupied[c] or rates[c] <= 0.0:
            # float round-off landed on an exhausted cell; take nearest live one
            best = -1
            for d in range(C):
                if c + d < C and not occupied[c + d]:
                    best = c + d
                    break
                if c - d >= 0 and not occupied[c - d]:
                    best = c - d
                    break
            c = best
        out[c] = t
        occupied[c] = True
        delta = -rates[c]
        rates[c] = 0.0
        total += delta
        i = c + 1
        while i <= C:
            tree[i] += delta
            i += i & (-i)
        ci = c // C2
        cj = c - ci * C2
        for s in range(4):
            if s == 0:
                ni, nj, b = ci - 1, cj, beta2
            elif s == 1:
                ni, nj, b = ci + 1, cj, beta2
            elif s == 2:
                ni, nj, b = ci, cj - 1, beta1
            else:
                ni, nj, b = ci, cj + 1, beta1
            if ni < 0 or ni >= C1 or nj < 0 or nj >= C2:
                continue
            nc = ni * C2 + nj
            if occupied[nc]:
                continue
            rates[nc] += b
            total += b
            i = nc + 1
            while i <= C:
                tree[i] += b
                i += i & (-i)
        if total <= 0.0:
            # only reachable after round-off once every cell is occupied
            total = 1e-300


@numba.njit(cache=True)
def _simulate_batch(C1, C2, alpha, beta1, beta2, psi_M, conditioned, expo, unif, out):
    for r in range(out.shape[0]):
        _simulate_kernel(C1, C2, alpha[r], beta1[r], beta2[r], psi_M[r], conditioned,
                         expo[r], unif[r], out[r])


def simulate_field(alpha, beta1, beta2, lattice: Lattice, psi_M, conditioned=False,
                   rng=None) -> np.ndarray:
    """One onset field as a ``(C1, C2)`` array.

    Arrivals come at exponential gaps with mean ``1/R_n`` (``R_n`` the total
    rate); the arriving cell is drawn in proportion to its current rate, its
    rate is zeroed and each unoccupied neighbour gains the matching beta.
    ``conditioned`` places the first arrival at ``psi_M`` exactly.
    """
    rng = np.random.default_rng(rng)
    C = lattice.C
    expo = rng.standard_exponential(C)
    unif = rng.random(C)
    out = np.empty(C)
    _simulate_kernel(lattice.C1, lattice.C2, float(alpha), float(beta1), float(beta2),
                     float(psi_M), bool(conditioned), expo, unif, out)
    return out.reshape(lattice.shape)


def simulate_fields(n, alpha, beta1, beta2, lattice: Lattice, psi_M, conditioned=False,
                    rng=None, chunk=4096) -> np.ndarray:
    """``n`` independent fields, shape ``(n, C1, C2)``.

    Rate arguments and ``psi_M`` may be scalars or length-``n`` arrays.
    """
    rng = np.random.default_rng(rng)
    C = lattice.C
    alpha, beta1, beta2, psi_M = (np.broadcast_to(np.asarray(v, dtype=float), (n,))
                                  for v in (alpha, beta1, beta2, psi_M))
    out = np.empty((n, C))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        m = stop - start
        expo = rng.standard_exponential((m, C))
        unif = rng.random((m, C))
        _simulate_batch(lattice.C1, lattice.C2, np.ascontiguousarray(alpha[start:stop]),
                        np.ascontiguousarray(beta1[start:stop]),
                        np.ascontiguousarray(beta2[start:stop]),
                        np.ascontiguousarray(psi_M[start:stop]), bool(conditioned),
                        expo, unif, out[start:stop])
    return out.reshape((n,) + lattice.shape)


def moment_statistic(fields, alpha, beta1, beta2, lattice: Lattice) -> np.ndarray:
    """phi_c + 1/rho_c for a stack of fields; its mean is psi_M in every cell."""
    fields = np.asarray(fields, dtype=float).reshape((-1,) + lattice.shape)
    alpha, beta1, beta2 = (np.broadcast_to(np.asarray(v, dtype=float), (len(fields),))
                           for v in (alpha, beta1, beta2))
    out = np.empty_like(fields)
    for k, phi in enumerate(fields):
        out[k] = phi + 1.0 / rho_field(phi, alpha[k], beta1[k], beta2[k], lattice)
    return out


def front_speed(beta, size=151, n_rep=10, alpha=1e-12, rng=None):
    """Radial growth speed (cells/year) of a single-seed cluster.

    With near-zero immigration each field grows from its first arrival;
    fields whose seed lies within ``size // 4`` of an edge are redrawn. The
    equivalent radius sqrt(N(t)/pi) of the occupied set inside the largest
    disc around the seed is regressed on elapsed time ``t``.
    Returns (mean speed, per-replicate speeds).
    """
    rng = np.random.default_rng(rng)
    lat = Lattice(size, size, 1.0)
    ii, jj = np.indices(lat.shape)
    speeds = []
    while len(speeds) < n_rep:
        phi = simulate_field(alpha, beta, beta, lat, 0.0, conditioned=True, rng=rng)
        si, sj = np.unravel_index(np.argmax(phi), lat.shape)
        radius = min(si, sj, size - 1 - si, size - 1 - sj)
        if radius < size // 4:
            continue
        d = np.hypot(ii - si, jj - sj)
        inside = d <= radius
        elapsed = -phi
        # stop well before the front reaches the disc edge
        t_max = np.median(elapsed[d <= 0.7 * radius])
        ts = np.linspace(t_max / 4, t_max, 40)
        r_eq = [np.sqrt(np.count_nonzero(inside & (elapsed <= t)) / np.pi) for t in ts]
        speeds.append(float(np.polyfit(ts, r_eq, 1)[0]))
    return float(np.mean(speeds)), np.array(speeds)


def write_field_csv(path, field, lattice: Lattice, sidecar=True):
    """CSV grid (C1 rows x C2 columns) with a JSON geometry sidecar."""
    grid = _grid(field, lattice)
    np.savetxt(path, grid, delimiter=",", fmt="%.6f")
    if sidecar:
        with open(str(path) + ".json", "w") as fh:
            json.dump({"lattice": lattice.to_dict(), "rows": "across beach (C1)",
                       "columns": "along beach (C2)"}, fh, indent=2)


def read_field_csv(path):
    grid = np.atleast_2d(np.loadtxt(path, delimiter=","))
    try:
        with open(str(path) + ".json") as fh:
            geom = json.load(fh)["lattice"]
        geom["origin"] = tuple(geom["origin"])
        lat = Lattice(**geom)
    except FileNotFoundError:
        lat = Lattice(grid.shape[0], grid.shape[1], 1.0)
    return grid, lat
