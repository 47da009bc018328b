import numpy as np
import pytest

from bcdpet import phantoms
from bcdpet.phantoms import (Ellipse, Measurement, PhantomSpec, Region, ScenarioSpec,
                             make_phantom, simulate_measurement, training_phantom,
                             uniform_background)
from bcdpet.projector import Geometry, forward_project

G = Geometry(32, 32, n_angles=24)


def _spec(regions=()):
    return PhantomSpec(G, Ellipse((0.0, 0.0), (12.0, 9.0)), 2.0, tuple(regions))


def test_no_regions_gives_uniform_ellipse():
    img, masks = make_phantom(_spec())
    sup = masks["support"]
    assert np.all(img[sup] == 2.0) and np.all(img[~sup] == 0.0)
    np.testing.assert_array_equal(masks["background"], sup)
    assert np.all(masks["fov"] >= sup)


def test_cold_region_is_zero():
    cold = Region(Ellipse((3.0, 1.0), (3.0, 3.0)), 0.0, "cold", "cold")
    img, masks = make_phantom(_spec([cold]))
    assert np.all(img[masks["cold"]] == 0.0)
    assert not np.any(masks["cold"] & masks["background"])


def test_training_preset_ratio_is_nine():
    img, masks = make_phantom(training_phantom(G))
    bkg = img[masks["background"]].mean()
    assert img.max() / bkg == 9.0
    img, masks = make_phantom(phantoms.testing_phantom(G))
    assert img.max() / img[masks["background"]].mean() == 4.0


def test_presets_differ_in_shape():
    _, m1 = make_phantom(training_phantom(G))
    _, m2 = make_phantom(phantoms.testing_phantom(G))
    assert (m1["support"] != m2["support"]).sum() > 20


def test_region_validation():
    with pytest.raises(ValueError):
        Region(Ellipse((0, 0), (1, 1)), 0.5, "hot")
    with pytest.raises(ValueError):
        Region(Ellipse((0, 0), (1, 1)), 2.0, "cold")
    with pytest.raises(ValueError):
        Region(Ellipse((0, 0), (1, 1)), -1.0, "cold")
    outside = Region(Ellipse((11.0, 0.0), (4.0, 4.0)), 3.0, "hot")
    with pytest.raises(ValueError, match="outside"):
        make_phantom(_spec([outside]))


def test_scenario_validation():
    ph = _spec()
    with pytest.raises(ValueError):
        ScenarioSpec(ph, 0.0, 0.5)
    with pytest.raises(ValueError):
        ScenarioSpec(ph, 1e4, 1.0)
    with pytest.raises(ValueError):
        ScenarioSpec(ph, 1e4, 0.5, n_realizations=0)


def test_random_fraction_arithmetic():
    r = uniform_background(2e5, 0.909, (10, 20))
    np.testing.assert_allclose(r.sum(), 1.998e6, rtol=1e-3)
    np.testing.assert_allclose(r.sum() / (r.sum() + 2e5), 0.909, rtol=1e-12)


def test_simulation_scaling_and_rf():
    img, _ = make_phantom(training_phantom(G))
    s = ScenarioSpec(training_phantom(G), 3e4, 0.8, 2, seed=3)
    sim = simulate_measurement(img, G, s)
    t = forward_project(sim.truth, G)
    np.testing.assert_allclose(t.sum(), 3e4, rtol=1e-10)
    r = sim.measurements[0].r_bar
    np.testing.assert_allclose(r.sum() / (r.sum() + t.sum()), 0.8, rtol=1e-12)
    np.testing.assert_allclose(sim.truth, img * sim.scale)
    for m in sim.measurements:
        assert m.y.dtype.kind == "i" and m.y.min() >= 0


def test_zero_phantom_errors():
    s = ScenarioSpec(_spec(), 1e4, 0.0, 1)
    with pytest.raises(ValueError):
        simulate_measurement(np.zeros(G.image_shape), G, s)


def test_seeded_determinism_and_independent_realizations():
    img, _ = make_phantom(phantoms.testing_phantom(G))
    s = ScenarioSpec(phantoms.testing_phantom(G), 1e4, 0.5, 3, seed=9)
    a = simulate_measurement(img, G, s)
    b = simulate_measurement(img, G, s)
    for ma, mb in zip(a.measurements, b.measurements):
        np.testing.assert_array_equal(ma.y, mb.y)
    assert not np.array_equal(a.measurements[0].y, a.measurements[1].y)
    # a realization depends only on (seed, index), not on how many are drawn
    s5 = ScenarioSpec(phantoms.testing_phantom(G), 1e4, 0.5, 5, seed=9)
    np.testing.assert_array_equal(simulate_measurement(img, G, s5).measurements[2].y,
                                  a.measurements[2].y)


def test_poisson_mean_monte_carlo():
    g = Geometry(8, 8, n_angles=4)
    spec = PhantomSpec(g, Ellipse((0.0, 0.0), (3.0, 3.0)))
    img, _ = make_phantom(spec)
    s = ScenarioSpec(spec, 500.0, 0.3, 1000, seed=1)
    sim = simulate_measurement(img, g, s)
    ys = np.stack([m.y for m in sim.measurements])
    mean = sim.sino_mean
    se = np.sqrt(mean / len(ys))
    z = np.abs(ys.mean(axis=0) - mean) / se
    assert np.mean(z < 3) > 0.99


def test_measurement_validation():
    with pytest.raises(ValueError):
        Measurement(np.array([1, 2]), np.array([0.1]))
    with pytest.raises(ValueError):
        Measurement(np.array([-1]), np.array([0.1]))
