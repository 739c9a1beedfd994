import numpy as np
import pytest

from subweyl.fields import parse_field
from subweyl.filtration import (HormanderFailure, hormander_audit,
                                homogeneous_dimension, lambda_poly,
                                tangent_filtration)

CO2 = ["x", "y"]
CO3 = ["x", "y", "z"]

HEIS = ["d/dx", "d/dy + x*d/dz"]
GRUSHIN = ["d/dx", "sin(x)*d/dy"]
MARTINET = ["d/dx", "d/dy + sin(x)**2*d/dz"]


def fields(texts, co):
    return [parse_field(t, co) for t in texts]


def test_elliptic_point():
    fp = tangent_filtration([0.3, 0.7], fields(["d/dx", "d/dy"], CO2))
    assert fp.dims == (2,)
    assert (fp.Q, fp.tau) == (2, 1)


def test_heisenberg_constant_filtration():
    fs = fields(HEIS, CO3)
    for p in ([0, 0, 0], [0.5, -1.0, 2.0], [3.0, 0.1, -0.7]):
        fp = tangent_filtration(p, fs)
        assert fp.dims == (2, 3)
        assert (fp.Q, fp.tau) == (4, 2)


def test_grushin_steps_up_on_degeneracy_line():
    fs = fields(GRUSHIN, CO2)
    assert homogeneous_dimension([0.4, 1.0], fs) == (2, 1)
    # sin(x) = 0: second direction only appears at bracket length 2
    assert homogeneous_dimension([0.0, 1.0], fs) == (3, 2)
    assert homogeneous_dimension([np.pi, 1.0], fs) == (3, 2)


def test_martinet_double_degeneracy():
    fs = fields(MARTINET, CO3)
    assert homogeneous_dimension([0.5, 0, 0], fs) == (4, 2)
    # sin(x)^2 vanishes to second order: z-direction needs length-3 words
    assert homogeneous_dimension([0.0, 0, 0], fs) == (5, 3)


def test_hormander_failure_raised():
    fs = fields(["d/dx", "x*d/dx"], CO2)   # never spans d/dy
    with pytest.raises(HormanderFailure):
        tangent_filtration([0.1, 0.2], fs, depth_cap=4)


def test_audit_constant_Q_scenario():
    rep = hormander_audit(fields(HEIS, CO3), (1.0, 1.0, 1.0), (6, 6, 6))
    assert rep.Q_L == 4 and rep.tau_L == 2
    assert not rep.failures
    assert rep.measure_zero_candidates == []
    assert rep.Fk_mass[4] == pytest.approx(rep.total_mass)
    assert rep.total_mass == pytest.approx(1.0)


def test_audit_flags_measure_zero_top_stratum():
    L = (2 * np.pi, 2 * np.pi)
    rep = hormander_audit(fields(GRUSHIN, CO2), L, (16, 16))
    assert rep.Q_L == 3 and rep.tau_L == 2
    # the Q = 3 stratum is the pair of lines sin(x) = 0
    assert rep.measure_zero_candidates == [3]
    assert rep.Fk_mass[3] < 0.2 * rep.total_mass
    assert rep.Fk_mass[2] == pytest.approx(rep.total_mass)


def test_audit_mass_scales_with_density():
    L = (2 * np.pi, 2 * np.pi)
    base = hormander_audit(fields(GRUSHIN, CO2), L, (8, 8))
    from subweyl.fields import parse_coeff
    dens = parse_coeff("2", CO2)
    doubled = hormander_audit(fields(GRUSHIN, CO2), L, (8, 8), density=dens)
    assert doubled.total_mass == pytest.approx(2 * base.total_mass)


def test_lambda_poly_degrees():
    """Lambda(x, delta) = sum |det| delta^deg; leading degree is Q(x)."""
    fs = fields(HEIS, CO3)
    lam = lambda_poly([0.2, 0.0, 0.0], fs, 2)
    d = np.geomspace(0.01, 0.1, 5)
    vals = np.array([lam(x) for x in d])
    slope = np.polyfit(np.log(d), np.log(vals), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.05)

    fs2 = fields(GRUSHIN, CO2)
    lam0 = lambda_poly([0.0, 0.0], fs2, 2)
    slope0 = np.polyfit(np.log(d), np.log([lam0(x) for x in d]), 1)[0]
    assert slope0 == pytest.approx(3.0, abs=0.05)


def test_audit_to_json_roundtrip():
    import json
    rep = hormander_audit(fields(GRUSHIN, CO2), (2 * np.pi, 2 * np.pi),
                          (8, 8))
    d = json.loads(rep.to_json())
    assert d["Q_L"] == 3
    assert set(d["Fk_mass"]) == {"2", "3"}
