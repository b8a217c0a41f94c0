"""What the onset-field prior looks like before seeing any data.

Draws fields on the default 13 x 32 lattice at A=10, B=1, summarises the mean
and spread of the elapsed time since first arrival, and writes two heat maps.
"""
from pathlib import Path

import numpy as np

from chronofield.mcmc import ChronologyData, RunConfig, prior_draws
from chronofield.onsetfield import Lattice, arrival_count, front_speed
from chronofield.render import render_heatmap
from chronofield.summaries import centre_corner_difference, field_summary

out = Path("demo-output")
out.mkdir(exist_ok=True)

#%% 3000 independent prior fields
lat = Lattice(13, 32)
config = RunConfig(variant="SPOF", iterations=10, burn_in=0, thin=1, A=10.0, B=1.0, lattice=lat)
chain = prior_draws(config, ChronologyData.empty(0), 3000, rng=0)
fs = field_summary(chain)

print("typical std of psi_M - phi_c:", np.median(fs.elapsed_std).round(0), "years")
print("centre minus corner mean onset:", round(centre_corner_difference(fs.mean)), "years")

#%% number of separate arrivals per field
V = np.array([arrival_count(phi, lat) for phi in chain.phi])
for v in range(1, 6):
    print(f"P(V={v}) = {np.mean(V == v):.3f}")

#%% maps
png, notes = render_heatmap(fs.elapsed_mean, title="prior mean elapsed time", label="years")
(out / "prior_elapsed_mean.png").write_bytes(png)
png, _ = render_heatmap(fs.elapsed_std, title="prior std of elapsed time", label="years")
(out / "prior_elapsed_std.png").write_bytes(png)
print("maps written to", out, notes)

#%% a single seed with no immigration grows at between 2 and 3 beta cells a year
speed, _ = front_speed(0.05, size=121, n_rep=4, rng=3)
print(f"front speed {speed:.3f} cells/yr = {speed / 0.05:.2f} beta")
