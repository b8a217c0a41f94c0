"""Finding a gap in occupation with the reversible-jump phase model.

Two bursts of dates 500 years apart are fitted with a random number of
phases. The posterior over the number of phases and a Bayes factor for
"three phases, the middle one empty" against "one phase" show the gap.
About a minute.
"""
import numpy as np

from chronofield.mcmc import ChronologyData, RunConfig, run_chain
from chronofield.model import PriorSpec
from chronofield.summaries import (bayes_factor, empty_phase_predicate, model_probabilities,
                                   phase_scatter, prior_probability)
from chronofield.synthetic import hiatus_site

site = hiatus_site(rng=4)
ds = site.dataset
print(ds.K, "dates; true boundaries", site.psi)

#%% sample over the number of phases
data = ChronologyData(ds.dates, site.curves, ds.date_cells())
config = RunConfig(variant="RP", iterations=200_000, burn_in=20_000, thin=50, seed=3,
                   L=0.0, U=2000.0, lattice=ds.box)
chain = run_chain(config, data)

for M, r in model_probabilities(chain).items():
    print(f"M={M}: posterior {r['p']:.3f} +- {r['se']:.3f}   e_M {r['e']:.2f}")

#%% Bayes factor; the prior probability of the gap model is estimated by simulation
gap = empty_phase_predicate(3, 2)
p_gap, se = prior_probability(gap, PriorSpec("RP", 0.0, 2000.0), ds.K, n=20_000, rng=1)
bf = bayes_factor(chain, (gap, p_gap), (lambda M, m: M == 1, 0.5))
print(f"prior P(gap) = {p_gap:.4f} +- {se:.4f};  Bayes factor gap vs one phase = {bf:.3g}")

#%% which dates sit in which phase, given three phases
groups = phase_scatter(chain, [d.pit for d in ds.dates], ds.pit_xy, 3)
for k, rows in groups.items():
    probs = [r[4] for r in rows]
    print(f"phase {k}: {len(rows)} dates, mean assignment probability "
          f"{np.mean(probs) if probs else float('nan'):.2f}")
