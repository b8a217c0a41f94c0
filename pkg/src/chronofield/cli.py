"""Command-line pipeline: ingest data, run chains, summarise and draw.

Verbs::

    chronofield simulate-prior SPEC   direct draws from the prior
    chronofield fit SPEC              MCMC run followed by summaries and plots
    chronofield summarize DIR         recompute summaries from saved chains
    chronofield render DIR            redraw PNGs from saved summary grids

SPEC is a JSON run specification (see ``RunSpec``). Flags override its
fields; ``CHRONOFIELD_OUTPUT_DIR`` overrides the output directory.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as cio
from . import summaries as S
from .calibration import CalibrationError, interpolate_curve, load_curve
from .mcmc import (ChronologyData, RunConfig, combine_chains, prior_draws, run_chains)
from .model import has_field, random_phases
from .onsetfield import Lattice

OUTPUT_ENV = "CHRONOFIELD_OUTPUT_DIR"
log = logging.getLogger("chronofield")


class SpecError(ValueError):
    pass


@dataclass
class RunSpec:
    """Run configuration plus input paths, output directory and summary options."""

    variant: str = "SP"
    iterations: int = 1_000_000
    burn_in: int = 100_000
    thin: int = 100
    seed: int = 0
    n_chains: int = 1
    n_jobs: int = 1
    weights: dict = field(default_factory=dict)
    A: float = 10.0
    B: float = 1.0
    L: float = 2000.0
    U: float = 3500.0
    lattice: dict = field(default_factory=lambda: {"C1": 13, "C2": 32, "cell_side": 2.375,
                                                   "fit": True})
    curves: dict = field(default_factory=dict)      # kind -> path
    dates: str | None = None
    pits: str | None = None
    output: str = "chronofield-out"
    T_star: float = 150.0
    p_star: float = 0.8
    bin_width: float = 10.0
    prior_draws: int = 2000
    flat_likelihood: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "RunSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise SpecError(f"unknown spec field(s): {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunSpec":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise SpecError(f"cannot read spec {path}: {e}") from None
        spec = cls.from_dict(d)
        base = Path(path).resolve().parent
        # relative input paths are taken relative to the spec file
        spec.dates = _rel(base, spec.dates)
        spec.pits = _rel(base, spec.pits)
        spec.curves = {k: _rel(base, v) for k, v in spec.curves.items()}
        return spec

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def validate(self, need_data=True):
        if self.variant not in ("SP", "SPOF", "RP", "RPOF"):
            raise SpecError(f"variant must be one of SP, SPOF, RP, RPOF; got {self.variant!r}")
        if need_data and not (self.dates and self.pits):
            raise SpecError("dates and pits files are required")
        for p in (self.dates, self.pits, *self.curves.values()):
            if p is not None and not Path(p).exists():
                raise SpecError(f"input file not found: {p}")
        unknown = set(self.curves) - {"terrestrial", "marine"}
        if unknown:
            raise SpecError(f"unknown curve kind(s): {', '.join(sorted(unknown))}")
        if self.n_chains < 1 or self.n_jobs < 1:
            raise SpecError("n_chains and n_jobs must be >= 1")
        if not 0 <= self.p_star <= 1.5 or self.T_star < 0 or self.bin_width <= 0:
            raise SpecError("summary options out of range")
        try:
            self.run_config(Lattice())
        except (TypeError, ValueError) as e:
            raise SpecError(str(e)) from None

    def run_config(self, lattice: Lattice) -> RunConfig:
        return RunConfig(variant=self.variant, iterations=self.iterations, burn_in=self.burn_in,
                         thin=self.thin, seed=self.seed, weights=dict(self.weights), A=self.A,
                         B=self.B, L=self.L, U=self.U, lattice=lattice,
                         flat_likelihood=self.flat_likelihood)


def _rel(base: Path, p):
    if p is None:
        return None
    q = Path(p)
    return str(q if q.is_absolute() else base / q)


# --- pipeline pieces ----------------------------------------------------------

def load_dataset(spec: RunSpec) -> cio.Dataset:
    lat = dict(spec.lattice)
    fit = lat.pop("fit", True)
    if fit:
        ds = cio.Dataset.from_files(spec.dates, spec.pits, cell_side=lat.get("cell_side", 2.375),
                                    C1=lat.get("C1"), C2=lat.get("C2"))
    else:
        if "origin" in lat:
            lat["origin"] = tuple(lat["origin"])
        ds = cio.Dataset.from_files(spec.dates, spec.pits, box=Lattice(**lat))
    if ds.excluded:
        log.info("%d date(s) excluded by the include column", len(ds.excluded))
    return ds


def load_curves(spec: RunSpec, dataset: cio.Dataset) -> dict:
    kinds = {d.material for d in dataset.dates}
    missing = kinds - set(spec.curves)
    if missing and not spec.flat_likelihood:
        raise SpecError(f"no calibration curve given for: {', '.join(sorted(missing))}")
    curves = {}
    for kind, path in spec.curves.items():
        curves[kind] = interpolate_curve(load_curve(Path(path).read_bytes(), kind))
    return curves


def chain_data(dataset: cio.Dataset, curves) -> ChronologyData:
    return ChronologyData(dataset.dates, curves, dataset.date_cells())


def summarise(chain, outdir: Path, spec: RunSpec, dataset: cio.Dataset | None = None,
              prior_chain=None) -> dict:
    """Write summary tables and return the JSON report."""
    outdir.mkdir(parents=True, exist_ok=True)
    q = [0.025, 0.25, 0.5, 0.75, 0.975]
    report = {
        "variant": chain.variant,
        "samples": len(chain),
        "acceptance": {k: (a / n if n else None) for k, (a, n) in chain.acceptance.items()},
        "psi_0": dict(zip(map(str, q), np.quantile(chain.psi_0, q).tolist())),
        "psi_M": dict(zip(map(str, q), np.quantile(chain.psi_M, q).tolist())),
        "span": dict(zip(map(str, q), np.quantile(chain.span, q).tolist())),
    }
    if random_phases(chain.variant):
        report["model_probabilities"] = {str(k): v for k, v in
                                         S.model_probabilities(chain).items()}
    if has_field(chain.variant):
        fs = S.field_summary(chain)
        cio.write_grid_csv(outdir / "field_mean.csv", fs.mean)
        cio.write_grid_csv(outdir / "field_std.csv", fs.std)
        cio.write_grid_csv(outdir / "elapsed_std.csv", fs.elapsed_std)
        part = S.partition(chain, spec.T_star, spec.p_star)
        np.savetxt(outdir / "partition.csv", part.labels, delimiter=",", fmt="%s")
        scan = S.threshold_scan(chain, spec.p_star)
        with open(outdir / "threshold_scan.csv", "w") as fh:
            fh.write("T_star,green,blue\n")
            fh.writelines(f"{t:g},{g},{b}\n" for t, g, b in scan.rows)
        report["field"] = {
            "elapsed_std_median": float(np.median(fs.elapsed_std)),
            "partition": part.counts(), "T_star": spec.T_star, "p_star": spec.p_star,
            "splitting_thresholds": scan.splitting,
            "V_pmf": {str(v): float((chain.V == v).mean()) for v in np.unique(chain.V)},
        }
        if prior_chain is not None and prior_chain.phi is not None:
            odds = S.arrival_odds(chain, prior_chain)
            report["field"]["arrival_odds"] = {
                str(v): (None if np.isnan(o) else float(o)) for v, o in zip(odds.V, odds.odds)}
            report["field"]["arrival_odds_undefined"] = odds.undefined.tolist()
        if dataset is not None:
            hists = S.pit_onset_histograms(chain, dataset.pit_cells(chain.lattice),
                                           spec.bin_width)
            with open(outdir / "pit_onset_histograms.csv", "w") as fh:
                fh.write("pit,bin_lo,bin_hi,count\n")
                for name, (edges, counts) in hists.items():
                    fh.writelines(f"{name},{lo:g},{hi:g},{c}\n"
                                  for lo, hi, c in zip(edges[:-1], edges[1:], counts))
    cio.write_json(outdir / "report.json", report)
    return report


def render_dir(outdir: Path) -> list:
    """PNG for every summary grid present in ``outdir``."""
    from .render import render_heatmap, render_partition

    written = []
    for stem, label in (("field_mean", "onset age (years BP)"),
                        ("field_std", "std (years)"), ("elapsed_std", "std (years)")):
        p = outdir / f"{stem}.csv"
        if p.exists():
            grid = np.atleast_2d(np.loadtxt(p, delimiter=","))
            png, _ = render_heatmap(grid, title=stem.replace("_", " "), label=label)
            (outdir / f"{stem}.png").write_bytes(png)
            written.append(outdir / f"{stem}.png")
    p = outdir / "partition.csv"
    if p.exists():
        labels = np.atleast_2d(np.loadtxt(p, delimiter=",", dtype=str))
        (outdir / "partition.png").write_bytes(render_partition(labels, title="partition"))
        written.append(outdir / "partition.png")
    return written


# --- manifest -----------------------------------------------------------------

def _versions() -> dict:
    import matplotlib
    import numba
    import scipy

    return {"chronofield": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__,
            "matplotlib": matplotlib.__version__}


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(outdir: Path, spec: RunSpec | None, verb: str, status: str, error=None,
                   outputs=()):
    outdir.mkdir(parents=True, exist_ok=True)
    man = {
        "verb": verb,
        "status": status,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "versions": _versions(),
        "spec": None if spec is None else spec.to_dict(),
        "config_hash": None if spec is None else spec.config_hash(),
        "seed": None if spec is None else spec.seed,
        "outputs": {str(Path(p).relative_to(outdir)): _digest(Path(p)) for p in sorted(outputs)},
    }
    if error is not None:
        man["error"] = error
    cio.write_json(outdir / "manifest.json", man)
    return man


def _outputs(outdir: Path) -> list:
    return [p for p in outdir.rglob("*") if p.is_file() and p.name != "manifest.json"]


# --- verbs --------------------------------------------------------------------

def _output_dir(spec: RunSpec) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or spec.output)


def do_fit(spec: RunSpec) -> Path:
    spec.validate()
    out = _output_dir(spec)
    dataset = load_dataset(spec)
    curves = load_curves(spec, dataset)
    config = spec.run_config(dataset.box)
    data = chain_data(dataset, curves)
    log.info("fitting %s to %d dates, %d chain(s)", spec.variant, dataset.K, spec.n_chains)
    chains = run_chains(config, data, spec.n_chains, spec.n_jobs)
    for i, c in enumerate(chains):
        cio.write_chain(out / "chains", c, prefix=f"chain{i}")
    pooled = combine_chains(chains)
    prior = None
    if has_field(spec.variant) and spec.prior_draws > 0:
        prior = prior_draws(config, data, spec.prior_draws, np.random.default_rng(
            np.random.SeedSequence(spec.seed).spawn(spec.n_chains + 1)[-1]))
        cio.write_chain(out / "prior", prior, prefix="prior")
    summarise(pooled, out / "summary", spec, dataset, prior)
    render_dir(out / "summary")
    return out


def do_simulate_prior(spec: RunSpec) -> Path:
    spec.validate(need_data=False)
    out = _output_dir(spec)
    dataset = None
    if spec.dates and spec.pits:
        dataset = load_dataset(spec)
        lattice = dataset.box
        data = ChronologyData(dataset.dates, None, dataset.date_cells())
    else:
        lat = {k: v for k, v in spec.lattice.items() if k != "fit"}
        if "origin" in lat:
            lat["origin"] = tuple(lat["origin"])
        lattice = Lattice(**lat)
        data = ChronologyData.empty(0)
    config = spec.run_config(lattice)
    prior = prior_draws(config, data, spec.prior_draws, np.random.default_rng(spec.seed))
    cio.write_chain(out / "prior", prior, prefix="prior")
    summarise(prior, out / "summary", spec, dataset)
    render_dir(out / "summary")
    return out


def do_summarize(spec: RunSpec, run_dir: Path) -> Path:
    chain_dir = run_dir / "chains"
    prefixes = sorted(p.name[: -len("_trace.csv")] for p in chain_dir.glob("*_trace.csv"))
    if not prefixes:
        raise SpecError(f"no chain traces under {chain_dir}")
    pooled = combine_chains([cio.read_chain(chain_dir, p) for p in prefixes])
    prior = None
    if (run_dir / "prior" / "prior_trace.csv").exists():
        prior = cio.read_chain(run_dir / "prior", "prior")
    dataset = load_dataset(spec) if spec.dates and spec.pits else None
    summarise(pooled, run_dir / "summary", spec, dataset, prior)
    return run_dir


def run(spec: RunSpec, verb: str = "fit") -> int:
    """Run one pipeline verb; returns a process exit status."""
    out = _output_dir(spec)
    try:
        if verb == "fit":
            do_fit(spec)
        elif verb == "simulate-prior":
            do_simulate_prior(spec)
        else:
            raise SpecError(f"unknown verb {verb!r}")
    except (SpecError, cio.DataError, CalibrationError, ValueError, OSError) as e:
        mod = type(e).__module__.rsplit(".", 1)[-1]
        msg = f"{mod}: {e}"
        log.error(msg)
        write_manifest(out, spec, verb, "error", msg)
        return 2
    write_manifest(out, spec, verb, "ok", outputs=_outputs(out))
    return 0


# --- argument parsing ---------------------------------------------------------

def _add_spec_flags(p):
    p.add_argument("spec", help="JSON run specification")
    p.add_argument("--variant", choices=["SP", "SPOF", "RP", "RPOF"])
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", dest="n_chains", type=int)
    p.add_argument("--jobs", dest="n_jobs", type=int)
    p.add_argument("--dates")
    p.add_argument("--pits")
    p.add_argument("--output", "-o")
    p.add_argument("--T-star", dest="T_star", type=float)
    p.add_argument("--p-star", dest="p_star", type=float)
    p.add_argument("--bin-width", dest="bin_width", type=float)
    p.add_argument("--prior-draws", dest="prior_draws", type=int)


def _spec_from_args(args) -> RunSpec:
    spec = RunSpec.load(args.spec)
    for name in ("variant", "iterations", "burn_in", "thin", "seed", "n_chains", "n_jobs",
                 "dates", "pits", "output", "T_star", "p_star", "bin_width", "prior_draws"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(spec, name, v)
    return spec


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chronofield", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)
    _add_spec_flags(sub.add_parser("simulate-prior", help="direct draws from the prior"))
    _add_spec_flags(sub.add_parser("fit", help="run the sampler, summarise and render"))
    p = sub.add_parser("summarize", help="recompute summaries of a finished run")
    p.add_argument("run_dir")
    p.add_argument("--spec", dest="spec_path", help="spec used for the run (defaults to manifest)")
    p.add_argument("--T-star", dest="T_star", type=float)
    p.add_argument("--p-star", dest="p_star", type=float)
    p.add_argument("--bin-width", dest="bin_width", type=float)
    p = sub.add_parser("render", help="draw PNGs from summary grids")
    p.add_argument("run_dir")
    return ap


def _spec_for_run_dir(run_dir: Path, spec_path=None) -> RunSpec:
    if spec_path:
        return RunSpec.load(spec_path)
    man = run_dir / "manifest.json"
    if man.exists():
        d = json.loads(man.read_text()).get("spec")
        if d:
            return RunSpec.from_dict(d)
    return RunSpec()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.verb in ("fit", "simulate-prior"):
            spec = _spec_from_args(args)
            return run(spec, args.verb)
        run_dir = Path(args.run_dir)
        if not run_dir.is_dir():
            raise SpecError(f"not a directory: {run_dir}")
        if args.verb == "summarize":
            spec = _spec_for_run_dir(run_dir, args.spec_path)
            for name in ("T_star", "p_star", "bin_width"):
                if getattr(args, name) is not None:
                    setattr(spec, name, getattr(args, name))
            do_summarize(spec, run_dir)
        written = render_dir(run_dir / "summary")
        if args.verb == "render":
            print("\n".join(map(str, written)))
        return 0
    except (SpecError, cio.DataError, CalibrationError, OSError) as e:
        print(f"chronofield: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
