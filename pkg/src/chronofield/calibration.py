"""Radiocarbon calibration curves and the normal observation model.

Ages are in calendar years BP (larger is older). A curve maps a calendar age
to a radiocarbon age ``mu`` with standard error ``sigma``; curves are
interpolated to a 1-year grid and looked up at integer ages.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

CURVE_KINDS = ("terrestrial", "marine")


class CalibrationError(ValueError):
    pass


class CurveRangeError(CalibrationError):
    pass


@dataclass(frozen=True)
class CalibrationCurve:
    cal_age: np.ndarray
    c14_age: np.ndarray
    error: np.ndarray
    kind: str = "terrestrial"

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise CalibrationError(f"unknown curve kind {self.kind!r}")
        if len(self.cal_age) == 0:
            raise CalibrationError("empty curve")
        if np.any(np.diff(self.cal_age) <= 0):
            raise CalibrationError("cal_age values must be strictly increasing")
        # zero error is allowed for exact reference curves; files must have error > 0
        if np.any(self.error < 0):
            raise CalibrationError("curve error must be nonnegative")

    def __len__(self):
        return len(self.cal_age)

    @property
    def is_unit_spaced(self) -> bool:
        return bool(np.all(np.diff(self.cal_age) == 1))

    @property
    def age_range(self) -> tuple[int, int]:
        return int(self.cal_age[0]), int(self.cal_age[-1])


@dataclass(frozen=True)
class RadiocarbonDate:
    id: str
    pit: str
    y: float
    sigma_lab: float
    material: str = "terrestrial"
    delta_r: float = 0.0
    delta_r_sigma: float = 0.0

    def __post_init__(self):
        if self.material not in CURVE_KINDS:
            raise CalibrationError(
                f"date {self.id}: unknown material {self.material!r}, "
                f"expected one of {', '.join(CURVE_KINDS)}"
            )
        if not self.sigma_lab > 0:
            raise CalibrationError(f"date {self.id}: lab error must be positive")
        if self.delta_r_sigma < 0:
            raise CalibrationError(f"date {self.id}: reservoir error must be >= 0")
        if self.material == "terrestrial" and (self.delta_r != 0 or self.delta_r_sigma != 0):
            raise CalibrationError(f"date {self.id}: terrestrial dates take no reservoir offset")


def load_curve(source, kind: str = "terrestrial") -> CalibrationCurve:
    """Parse ``cal_age,c14_age,error`` rows (comma or tab separated).

    ``source`` may be bytes, a str of file contents, or a binary/text stream.
    Lines starting with ``#`` and blank lines are skipped. The curve is kept
    in its native tabulation order; rows given in decreasing cal_age (as in
    published curve files) are reversed.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")

    rows = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.replace("\t", ",").split(",") if p.strip()]
        if len(parts) < 3:
            raise CalibrationError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            cal, c14, err = (float(p) for p in parts[:3])
        except ValueError:
            raise CalibrationError(f"line {lineno}: non-numeric field in {line!r}") from None
        if cal != int(cal):
            raise CalibrationError(f"line {lineno}: cal_age must be an integer year")
        if not err > 0:
            raise CalibrationError(f"line {lineno}: error must be positive")
        rows.append((cal, c14, err))
    if not rows:
        raise CalibrationError("empty curve")

    arr = np.array(rows, dtype=float)
    d = np.diff(arr[:, 0])
    if len(d) and np.all(d < 0):
        arr = arr[::-1]
        d = -d[::-1]
    if np.any(d <= 0):
        bad = int(np.argmax(d <= 0)) + 1
        raise CalibrationError(f"cal_age not strictly monotone at row {bad + 1}")
    return CalibrationCurve(arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2], kind)


def interpolate_curve(curve: CalibrationCurve) -> CalibrationCurve:
    """Linearly interpolate c14_age and error onto a 1-year grid."""
    if len(curve) < 2:
        raise CalibrationError("need at least 2 entries to interpolate")
    if curve.is_unit_spaced:
        return curve
    lo, hi = curve.age_range
    grid = np.arange(lo, hi + 1, dtype=np.int64)
    c14 = np.interp(grid, curve.cal_age, curve.c14_age)
    err = np.interp(grid, curve.cal_age, curve.error)
    return CalibrationCurve(grid, c14, err, curve.kind)


def _offsets(curve: CalibrationCurve, theta) -> np.ndarray:
    if not curve.is_unit_spaced:
        raise CalibrationError("curve must be interpolated to 1-year steps before lookup")
    t = np.rint(np.asarray(theta, dtype=float)).astype(np.int64)
    idx = t - curve.cal_age[0]
    if np.any(idx < 0) or np.any(idx >= len(curve)):
        lo, hi = curve.age_range
        raise CurveRangeError(f"age outside calibration range [{lo}, {hi}]")
    return idx


def mu_sigma(curve: CalibrationCurve, theta):
    """Table lookup of (mu, sigma) at integer age(s) ``theta``."""
    idx = _offsets(curve, theta)
    mu, sig = curve.c14_age[idx], curve.error[idx]
    if np.ndim(theta) == 0:
        return float(mu), float(sig)
    return mu, sig


def log_likelihood(date: RadiocarbonDate, theta, curves) -> float:
    """Normal log-likelihood of one date at age ``theta``, up to a constant.

    Reservoir offset shifts the curve mean; its error adds in quadrature.
    """
    curve = curves[date.material]
    mu, sig = mu_sigma(curve, theta)
    s2 = date.sigma_lab**2 + sig**2 + date.delta_r_sigma**2
    return -0.5 * np.log(s2) - (mu + date.delta_r - date.y) ** 2 / (2.0 * s2)


@dataclass
class DateTable:
    """Column view of a list of dates for vectorised likelihood evaluation."""

    dates: list
    y: np.ndarray = field(init=False)
    var_lab: np.ndarray = field(init=False)
    delta_r: np.ndarray = field(init=False)
    marine: np.ndarray = field(init=False)

    def __post_init__(self):
        self.y = np.array([d.y for d in self.dates], dtype=float)
        self.var_lab = np.array([d.sigma_lab**2 + d.delta_r_sigma**2 for d in self.dates])
        self.delta_r = np.array([d.delta_r for d in self.dates], dtype=float)
        self.marine = np.array([d.material == "marine" for d in self.dates])

    def __len__(self):
        return len(self.dates)


def log_likelihood_vector(theta, table: DateTable, curves) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(table),):
        raise CalibrationError(f"expected {len(table)} ages, got shape {theta.shape}")
    mu = np.empty(len(table))
    sig = np.empty(len(table))
    for kind, mask in (("terrestrial", ~table.marine), ("marine", table.marine)):
        if mask.any():
            mu[mask], sig[mask] = mu_sigma(curves[kind], theta[mask])
    s2 = table.var_lab + sig**2
    return -0.5 * np.log(s2) - (mu + table.delta_r - table.y) ** 2 / (2.0 * s2)


def log_likelihood_total(theta_vec, dates, curves) -> float:
    """Sum of per-date log-likelihoods; ``dates`` is a list or a DateTable."""
    table = dates if isinstance(dates, DateTable) else DateTable(list(dates))
    return float(log_likelihood_vector(theta_vec, table, curves).sum())


def likelihood_mode(date: RadiocarbonDate, curves, lo: int, hi: int) -> int:
    """Integer age in [lo, hi] maximising the single-date likelihood."""
    curve = curves[date.material]
    c_lo, c_hi = curve.age_range
    grid = np.arange(max(lo, c_lo), min(hi, c_hi) + 1)
    if len(grid) == 0:
        raise CurveRangeError(f"date {date.id}: no overlap between [{lo}, {hi}] and curve")
    mu, sig = mu_sigma(curve, grid)
    s2 = date.sigma_lab**2 + sig**2 + date.delta_r_sigma**2
    ll = -0.5 * np.log(s2) - (mu + date.delta_r - date.y) ** 2 / (2.0 * s2)
    return int(grid[np.argmax(ll)])


def synthetic_curve(lo: int, hi: int, kind: str = "terrestrial", wiggle: float = 0.0,
                    error: float = 15.0, step: int = 5, offset: float = 0.0) -> CalibrationCurve:
    """Identity-like curve mu(theta) = theta + offset (+ optional sinusoidal wiggle).

    Used for tests and demos where no published curve is available.
    """
    grid = np.arange(lo, hi + 1, step, dtype=np.int64)
    if grid[-1] != hi:
        grid = np.append(grid, hi)
    c14 = grid + offset + wiggle * np.sin(2 * np.pi * grid / 400.0)
    return CalibrationCurve(grid, c14.astype(float), np.full(len(grid), float(error)), kind)


def format_curve(curve: CalibrationCurve) -> str:
    lines = [f"# {curve.kind} calibration curve: cal_age,c14_age,error"]
    lines += [f"{a},{m:.6g},{e:.6g}" for a, m, e in zip(curve.cal_age, curve.c14_age, curve.error)]
    return "\n".join(lines) + "\n"
