import numpy as np
import pytest

from subweyl.ccball import (BallCloud, ControlPath, auto_bins, ball_volume,
                            check_inclusion_chain, doubling_exponent,
                            draw_controls, integrate_paths, lambda_compare,
                            sample_ball)
from subweyl.fields import parse_field

CO2 = ["x", "y"]
CO3 = ["x", "y", "z"]


def heis_fields():
    return [parse_field("d/dx", CO3), parse_field("d/dy + x*d/dz", CO3)]


def grushin_fields():
    return [parse_field("d/dx", CO2), parse_field("sin(x)*d/dy", CO2)]


def euclid_fields():
    return [parse_field("d/dx", CO2), parse_field("d/dy", CO2)]


def test_control_draw_classes():
    rng = np.random.default_rng(0)
    c2 = draw_controls(rng, 500, 8, 2, "C2")
    assert np.all(np.sum(c2 ** 2, axis=2) <= 1.0 + 1e-12)
    ci = draw_controls(rng, 500, 8, 2, "Cinf")
    assert np.all(np.abs(ci) <= 1.0)
    with pytest.raises(ValueError):
        draw_controls(rng, 1, 1, 1, "L1")


def test_control_path_admissibility():
    c = np.array([[0.3, 0.0], [0.0, 0.4]])
    p = ControlPath(c, "C2", 0.5)
    assert p.satisfies("C2", 0.5)
    assert p.satisfies("Cinf", 0.41)
    assert not p.satisfies("Cinf", 0.39)


def test_rk4_exact_on_heisenberg():
    """Heisenberg flows are polynomial of degree <= 2; RK4 is exact on them,
    so halving the step must not move the endpoints."""
    fs = heis_fields()
    rng = np.random.default_rng(2)
    ctr = draw_controls(rng, 64, 4, 2, "C2") * 0.3
    e1, _ = integrate_paths(fs, np.zeros(3), ctr, substeps=1)
    e2, _ = integrate_paths(fs, np.zeros(3), ctr, substeps=2)
    assert np.abs(e1 - e2).max() < 1e-14


def test_rk4_fourth_order_on_grushin():
    fs = grushin_fields()
    rng = np.random.default_rng(3)
    ctr = draw_controls(rng, 32, 4, 2, "C2") * 1.5
    ref, _ = integrate_paths(fs, np.array([0.2, 0.0]), ctr, substeps=16)
    e1, _ = integrate_paths(fs, np.array([0.2, 0.0]), ctr, substeps=1)
    e2, _ = integrate_paths(fs, np.array([0.2, 0.0]), ctr, substeps=2)
    r = np.abs(e1 - ref).max() / np.abs(e2 - ref).max()
    assert r > 12.0   # fifth-order local error: ratio 16 up to constants


def test_heisenberg_dilation_ratio_exact():
    """With shared unit draws, z-extents scale exactly by delta^2 (group
    dilation), so doubling delta multiplies the z-spread by exactly 4."""
    fs = heis_fields()
    rng = np.random.default_rng(5)
    base = draw_controls(rng, 2000, 4, 2, "C2")
    e1, _ = integrate_paths(fs, np.zeros(3), base * 0.1)
    e2, _ = integrate_paths(fs, np.zeros(3), base * 0.2)
    r = np.abs(e2[:, 2]).max() / np.abs(e1[:, 2]).max()
    assert r == pytest.approx(4.0, rel=1e-12)
    # x extent scales by exactly 2
    rx = np.abs(e2[:, 0]).max() / np.abs(e1[:, 0]).max()
    assert rx == pytest.approx(2.0, rel=1e-12)


def test_sample_ball_deterministic():
    fs = grushin_fields()
    a = sample_ball([0.0, 0.0], 0.2, fs, n_paths=500, seed=9)
    b = sample_ball([0.0, 0.0], 0.2, fs, n_paths=500, seed=9)
    assert np.array_equal(a.endpoints, b.endpoints)


def test_ball_volume_idempotent_under_duplication():
    fs = euclid_fields()
    cloud = sample_ball([0.0, 0.0], 0.3, fs, n_paths=2000, seed=1)
    v1, _ = ball_volume(cloud, auto_bins(cloud))
    dup = BallCloud(center=cloud.center, delta=cloud.delta,
                    endpoints=np.vstack([cloud.endpoints, cloud.endpoints]),
                    seed=cloud.seed, kind=cloud.kind, n_steps=cloud.n_steps)
    v2, _ = ball_volume(dup, auto_bins(cloud))
    assert v1 == pytest.approx(v2)


def test_doubling_exponents_reduced():
    """Volume-growth exponents at reduced path count (acceptance reruns at
    10^5 paths): Euclidean 2, Heisenberg 4, Grushin singular line 3."""
    e = doubling_exponent([0.0, 0.0], euclid_fields(), samples=20_000, seed=7)
    assert e.exponent == pytest.approx(2.0, abs=0.25)
    h = doubling_exponent([0.0, 0.0, 0.0], heis_fields(), samples=20_000,
                          seed=7)
    assert h.exponent == pytest.approx(4.0, abs=0.35)
    g = doubling_exponent([0.0, 0.0], grushin_fields(), samples=20_000,
                          seed=7)
    assert g.exponent == pytest.approx(3.0, abs=0.35)
    # off the degeneracy line the growth is planar
    g2 = doubling_exponent([np.pi / 2, 0.0], grushin_fields(),
                           samples=20_000, seed=7,
                           delta_range=(0.05, 0.2))
    assert g2.exponent == pytest.approx(2.0, abs=0.3)


def test_lambda_volume_comparability():
    cmp = lambda_compare([0.0, 0.0, 0.0], heis_fields(),
                         delta_range=(0.05, 0.2), samples=20_000, seed=11)
    assert cmp["spread"] <= 3.0
    assert np.all(np.asarray(cmp["ratios"]) > 0)


def test_inclusion_chain():
    assert check_inclusion_chain(heis_fields(), 0.3, n_paths=1000, seed=0)
    assert check_inclusion_chain(grushin_fields(), 0.3, n_paths=1000, seed=1)


def test_box_chart_discards_exits():
    fs = euclid_fields()
    cloud = sample_ball([0.05, 0.05], 0.3, fs, n_paths=2000, seed=3,
                        box=([0, 0], [np.pi, np.pi]))
    assert cloud.endpoints.shape[0] < 2000
    assert np.all(cloud.endpoints >= 0)
