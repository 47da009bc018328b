"""Train a small BCD-Net on one phantom and test it on another.

Compares the learned reconstruction with EM and TV at the test scenario.
Takes about half a minute.
"""

import numpy as np

from bcdpet import (Geometry, ReconConfig, ScenarioSpec, TrainConfig, TVConfig,
                    bcd_net_reconstruct, em_reconstruct, get_projector, make_phantom,
                    simulate_measurement, testing_phantom, train_bcdnet, training_phantom,
                    tv_pdhg_reconstruct)
from bcdpet.metrics import RegionSet, cnr, rmse

g = Geometry(64, 64, n_angles=96)
P = get_projector(g)
recon = ReconConfig(T=10, c=0.3)

train_spec = ScenarioSpec(training_phantom(g), 1e4, 0.909, 5, seed=11)
train_img, _ = make_phantom(train_spec.phantom)
train = simulate_measurement(train_img, g, train_spec)
model = train_bcdnet(train.measurements, train.truth, P, T=10, K=16, R=9,
                     train_cfg=TrainConfig(epochs=100, learning_rate=0.03, lr_decay=0.98),
                     recon_cfg=recon)

test_spec = ScenarioSpec(testing_phantom(g), 2e4, 0.875, 3, seed=22)
test_img, masks = make_phantom(test_spec.phantom)
test = simulate_measurement(test_img, g, test_spec)
reg = RegionSet.from_phantom(masks, 4.0)


def score(name, images):
    r = np.mean([rmse(x, test.truth, reg.fov) for x in images])
    c = np.mean([cnr(x, reg.lesion, reg.background) for x in images])
    print(f"{name:8s} rmse {r:6.3f}  cnr {c:5.2f}")


score("EM-20", [em_reconstruct(m, P, 20)[0] for m in test.measurements])
score("TV", [tv_pdhg_reconstruct(m, P, ReconConfig(tv=TVConfig(beta=0.5, n_iter=200)))[0]
             for m in test.measurements])
out = [bcd_net_reconstruct(m, P, model, recon) for m in test.measurements]
score("BCD-Net", [x for x, _ in out])
print("adaptive beta per stage", np.round(out[0][1].beta[1:], 2))
