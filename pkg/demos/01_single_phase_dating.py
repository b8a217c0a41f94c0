"""Dating one phase of deposition from a handful of radiocarbon ages.

Runs the plain single-phase sampler on simulated dates and compares the
posterior for the start and end of the phase with the values used to make
the data. Takes well under a minute.
"""
import numpy as np

from chronofield import calibration as cal
from chronofield.mcmc import ChronologyData, RunConfig, run_chain
from chronofield.synthetic import reference_curves

rng = np.random.default_rng(1)

#%% a toy calibration curve and twelve dates drawn from 2600-2850 BP
curves = reference_curves(2000, 3500)
true_start, true_end = 2600.0, 2850.0
theta = rng.uniform(true_start, true_end, 12)
mu, sig = cal.mu_sigma(curves["terrestrial"], np.rint(theta))
y = np.rint(rng.normal(mu, np.hypot(30.0, sig)))
dates = [cal.RadiocarbonDate(f"d{i}", "pit1", float(v), 30.0) for i, v in enumerate(y)]
print("radiocarbon ages:", y.astype(int))

#%% sample
data = ChronologyData(dates, curves)
config = RunConfig(variant="SP", iterations=100_000, burn_in=10_000, thin=20, seed=2)
chain = run_chain(config, data)
print("acceptance:", {k: round(v, 2) for k, v in chain.acceptance_rates().items()})

#%% the phase limits
for name, draws, truth in (("end (psi_0)", chain.psi_0, true_start),
                           ("start (psi_M)", chain.psi_M, true_end)):
    lo, med, hi = np.quantile(draws, [0.025, 0.5, 0.975])
    print(f"{name:14s} median {med:7.1f}  95% [{lo:7.1f}, {hi:7.1f}]  truth {truth:.0f}")

# calibration noise widens the posterior span somewhat beyond the spread of the dates
print("span median", np.median(chain.span).round(1), "truth", true_end - true_start)
