"""Reading and writing datasets, chain traces, fields and reports."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CURVE_KINDS, CalibrationError, RadiocarbonDate
from .onsetfield import Lattice, cell_of

DATE_COLUMNS = ("id", "pit", "c14_age", "c14_error", "material", "delta_r", "delta_r_error")
PIT_COLUMNS = ("pit", "x", "y")
TRUE_WORDS = {"1", "true", "yes", "y", "t"}
FALSE_WORDS = {"0", "false", "no", "n", "f"}


class DataError(ValueError):
    pass


def _text(source) -> str:
    if isinstance(source, Path):
        return source.read_text()
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        if "\n" not in source and Path(source).exists():
            return Path(source).read_text()
        return source
    text = source.read()
    return text.decode("utf-8") if isinstance(text, bytes) else text


def _rows(source, required, what):
    lines = [ln for ln in _text(source).splitlines() if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{what}: missing column(s) {', '.join(missing)}")
    reader.fieldnames = header
    return header, list(reader)


def _number(row, col, lineno, what):
    raw = (row.get(col) or "").strip()
    try:
        return float(raw)
    except ValueError:
        raise DataError(f"{what} line {lineno}: column {col!r} is not numeric: {raw!r}") from None


@dataclass
class ParsedDates:
    dates: list
    excluded: list = field(default_factory=list)   # ids of rows with include=false

    @property
    def n_excluded(self) -> int:
        return len(self.excluded)


def parse_dates(source) -> ParsedDates:
    """Parse a radiocarbon date table.

    Columns: id, pit, c14_age, c14_error, material, delta_r, delta_r_error and
    an optional ``include`` flag; rows with a false flag are dropped and
    listed in ``excluded``.
    """
    header, rows = _rows(source, DATE_COLUMNS, "dates")
    has_include = "include" in header
    dates, excluded, seen = [], [], set()
    for lineno, row in enumerate(rows, start=2):
        did = (row["id"] or "").strip()
        if not did:
            raise DataError(f"dates line {lineno}: empty id")
        if did in seen:
            raise DataError(f"dates line {lineno}: duplicate id {did!r}")
        seen.add(did)
        if has_include:
            flag = (row["include"] or "").strip().lower()
            if flag in FALSE_WORDS:
                excluded.append(did)
                continue
            if flag not in TRUE_WORDS:
                raise DataError(f"dates line {lineno}: include must be true/false, got {flag!r}")
        material = (row["material"] or "").strip().lower()
        if material not in CURVE_KINDS:
            raise DataError(f"dates line {lineno}: unknown material {material!r}; "
                            f"allowed: {', '.join(CURVE_KINDS)}")
        y = _number(row, "c14_age", lineno, "dates")
        sig = _number(row, "c14_error", lineno, "dates")
        if not sig > 0:
            raise DataError(f"dates line {lineno}: c14_error must be positive")
        dr = _number(row, "delta_r", lineno, "dates") if (row["delta_r"] or "").strip() else 0.0
        drs = (_number(row, "delta_r_error", lineno, "dates")
               if (row["delta_r_error"] or "").strip() else 0.0)
        try:
            dates.append(RadiocarbonDate(did, (row["pit"] or "").strip(), y, sig, material, dr,
                                         drs))
        except CalibrationError as e:
            raise DataError(f"dates line {lineno}: {e}") from None
    return ParsedDates(dates, excluded)


def parse_pits(source) -> list:
    """Parse ``pit,x,y`` rows into [(name, x, y), ...]; duplicate names are rejected."""
    _, rows = _rows(source, PIT_COLUMNS, "pits")
    pits, seen = [], set()
    for lineno, row in enumerate(rows, start=2):
        name = (row["pit"] or "").strip()
        if not name:
            raise DataError(f"pits line {lineno}: empty pit name")
        if name in seen:
            raise DataError(f"pits line {lineno}: duplicate pit {name!r}")
        seen.add(name)
        pits.append((name, _number(row, "x", lineno, "pits"), _number(row, "y", lineno, "pits")))
    return pits


def format_dates(dates) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATE_COLUMNS)
    for d in dates:
        w.writerow([d.id, d.pit, *(repr(float(v)) for v in (d.y, d.sigma_lab)), d.material,
                    *(repr(float(v)) for v in (d.delta_r, d.delta_r_sigma))])
    return buf.getvalue()


def format_pits(pits) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PIT_COLUMNS)
    for name, x, y in pits:
        w.writerow([name, repr(float(x)), repr(float(y))])
    return buf.getvalue()


@dataclass
class Dataset:
    """Dates, pit coordinates and the lattice box aligned to them."""

    dates: list
    pits: list
    box: Lattice | None = None
    excluded: list = field(default_factory=list)

    def __post_init__(self):
        if not self.dates:
            raise DataError("dataset needs at least one date")
        names = [p[0] for p in self.pits]
        if len(set(names)) != len(names):
            raise DataError("duplicate pit names")
        known = set(names)
        missing = sorted({d.pit for d in self.dates} - known)
        if missing:
            raise DataError(f"dates refer to unknown pit(s): {', '.join(missing)}")
        if self.box is not None:
            (x0, x1), (y0, y1) = self.box.extent()
            outside = [n for n, x, y in self.pits if not (x0 <= x <= x1 and y0 <= y <= y1)]
            if outside:
                raise DataError(f"pit(s) outside the lattice box: {', '.join(outside)}")

    @property
    def K(self) -> int:
        return len(self.dates)

    @property
    def pit_xy(self) -> dict:
        return {n: (x, y) for n, x, y in self.pits}

    def pit_cells(self, lattice: Lattice | None = None) -> dict:
        lat = lattice or self.box
        return {n: cell_of(lat, (x, y)) for n, x, y in self.pits}

    def date_cells(self, lattice: Lattice | None = None) -> np.ndarray:
        cells = self.pit_cells(lattice)
        return np.array([cells[d.pit] for d in self.dates], dtype=np.int64)

    @classmethod
    def from_files(cls, dates_src, pits_src, box: Lattice | None = None, cell_side=2.375,
                   C1=None, C2=None):
        """Assemble and cross-check; without ``box`` the lattice is fitted to the pits."""
        parsed = parse_dates(dates_src)
        pits = parse_pits(pits_src)
        if box is None and pits:
            box = Lattice.fit_to_points([(x, y) for _, x, y in pits], cell_side, C1=C1, C2=C2)
        return cls(parsed.dates, pits, box, parsed.excluded)


# --- chain output -------------------------------------------------------------

TRACE_SCALARS = ("iteration", "M", "psi_0", "psi_M", "span", "alpha", "beta1", "beta2", "V",
                 "log_post")


def trace_table(chain) -> tuple[list, np.ndarray]:
    """Header and float matrix of per-state scalars, ages theta_i and phase counts."""
    K = chain.theta.shape[1] if chain.theta.ndim == 2 else 0
    Mmax = int(chain.M.max()) if len(chain.M) else 1
    cols = list(TRACE_SCALARS)
    cols += [f"psi_{j}" for j in range(Mmax + 1)]
    cols += [f"lam_{j}" for j in range(1, Mmax + 1)]
    cols += [f"K_{j}" for j in range(1, Mmax + 1)]
    cols += [f"theta_{i}" for i in range(K)] + [f"m_{i}" for i in range(K)]
    n = len(chain)
    out = np.full((n, len(cols)), np.nan)
    base = np.column_stack([chain.iteration, chain.M, chain.psi_0, chain.psi_M, chain.span,
                            chain.alpha, chain.beta1, chain.beta2, chain.V, chain.log_post]) \
        if n else np.empty((0, len(TRACE_SCALARS)))
    out[:, :len(TRACE_SCALARS)] = base
    off = len(TRACE_SCALARS)
    counts = chain.counts()
    for r in range(n):
        M = int(chain.M[r])
        out[r, off:off + M + 1] = chain.psi[r]
        out[r, off + Mmax + 1:off + Mmax + 1 + M] = chain.lam[r]
        out[r, off + 2 * Mmax + 1:off + 2 * Mmax + 1 + M] = counts[r]
    off += 3 * Mmax + 1
    if K:
        out[:, off:off + K] = chain.theta
        out[:, off + K:off + 2 * K] = chain.m
    return cols, out


def write_trace_csv(path, chain):
    cols, table = trace_table(chain)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in table:
            w.writerow(["" if np.isnan(v) else repr(float(v)) for v in row])


def read_trace_csv(path) -> dict:
    """Column name -> float array (empty cells become nan)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        cols = next(reader)
        rows = [[float(v) if v else np.nan for v in r] for r in reader]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(cols))
    return {c: arr[:, j] for j, c in enumerate(cols)}


def write_phi_binary(path, phi):
    """Fields as row-major little-endian float64, C1*C2 values per record."""
    np.ascontiguousarray(phi, dtype="<f8").tofile(path)


def read_phi_binary(path, shape) -> np.ndarray:
    flat = np.fromfile(path, dtype="<f8")
    C1, C2 = shape
    if flat.size % (C1 * C2):
        raise DataError(f"{path}: size is not a multiple of {C1}x{C2}")
    return flat.reshape(-1, C1, C2)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_grid_csv(path, grid, fmt="%.6f"):
    np.savetxt(path, np.asarray(grid), delimiter=",", fmt=fmt)


def write_chain(outdir, chain, prefix="chain"):
    """Trace CSV, packed fields (if any) and acceptance JSON; returns written paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trace": out / f"{prefix}_trace.csv", "acceptance": out / f"{prefix}_acceptance.json",
             "config": out / f"{prefix}_config.json"}
    write_trace_csv(paths["trace"], chain)
    acc = {k: {"accepted": a, "proposed": n, "rate": (a / n if n else None)}
           for k, (a, n) in chain.acceptance.items()}
    write_json(paths["acceptance"], acc)
    write_json(paths["config"], {"variant": chain.variant, "config": chain.config})
    if chain.phi is not None:
        paths["phi"] = out / f"{prefix}_phi.f64"
        write_phi_binary(paths["phi"], chain.phi)
    return paths


def read_chain(outdir, prefix="chain"):
    """Rebuild a ChainOutput from files written by ``write_chain``."""
    from .mcmc import ChainOutput

    out = Path(outdir)
    meta = json.loads((out / f"{prefix}_config.json").read_text())
    acc = json.loads((out / f"{prefix}_acceptance.json").read_text())
    tr = read_trace_csv(out / f"{prefix}_trace.csv")
    n = len(tr["iteration"])
    M = tr["M"].astype(np.int64)
    K = sum(1 for c in tr if c.startswith("theta_"))
    psi = [np.array([tr[f"psi_{j}"][r] for j in range(M[r] + 1)]) for r in range(n)]
    lam = [np.array([tr[f"lam_{j}"][r] for j in range(1, M[r] + 1)]) for r in range(n)]
    theta = np.column_stack([tr[f"theta_{i}"] for i in range(K)]) if K else np.empty((n, 0))
    m = (np.column_stack([tr[f"m_{i}"] for i in range(K)]).astype(np.int64) if K
         else np.empty((n, 0), dtype=np.int64))
    lat = meta["config"]["lattice"]
    phi_path = out / f"{prefix}_phi.f64"
    phi = read_phi_binary(phi_path, (lat["C1"], lat["C2"])) if phi_path.exists() else None
    return ChainOutput(
        variant=meta["variant"], config=meta["config"],
        iteration=tr["iteration"].astype(np.int64), theta=theta, m=m, M=M, psi=psi, lam=lam,
        alpha=tr["alpha"], beta1=tr["beta1"], beta2=tr["beta2"],
        V=tr["V"].astype(np.int64), log_post=tr["log_post"], phi=phi,
        acceptance={k: (v["accepted"], v["proposed"]) for k, v in acc.items()})
