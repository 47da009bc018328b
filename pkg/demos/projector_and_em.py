"""Simulate a noisy sinogram of the test phantom and watch MLEM converge.

Run with ``python demos/projector_and_em.py``.
"""

import numpy as np

from bcdpet import (Geometry, ScenarioSpec, em_reconstruct, get_projector, make_phantom,
                    simulate_measurement, testing_phantom)
from bcdpet.metrics import RegionSet, cnr, rmse

g = Geometry(64, 64, n_angles=96)
P = get_projector(g)

# the adjoint identity holds to round-off
rng = np.random.default_rng(0)
x, s = rng.random(g.image_shape), rng.random(g.sino_shape)
print("adjoint gap", abs(np.vdot(P.forward(x), s) - np.vdot(x, P.back(s))))

spec = ScenarioSpec(testing_phantom(g), total_net_trues=2e4, random_fraction=0.875,
                    n_realizations=1, seed=1)
img, masks = make_phantom(spec.phantom)
sim = simulate_measurement(img, g, spec)
m, truth = sim.measurements[0], sim.truth
regions = RegionSet.from_phantom(masks, 4.0)

_, trace = em_reconstruct(m, P, 60)
print(" it        nll    rmse    cnr")
for it in (5, 10, 20, 30, 40, 60):
    x = trace.images[it]
    print(f"{it:3d} {trace.nll[it]:10.1f} {rmse(x, truth, regions.fov):7.3f} "
          f"{cnr(x, regions.lesion, regions.background):6.2f}")
