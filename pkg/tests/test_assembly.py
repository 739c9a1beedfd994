import numpy as np
import pytest
import scipy.sparse as sp

from subweyl.assembly import (AssemblyError, OperatorPencil, PsiScenario,
                              Scenario, assemble_operator, build_grid,
                              discretize_field, psinc)
from subweyl.fields import parse_coeff, parse_field

CO1 = ["x"]
CO2 = ["x", "y"]
CO3 = ["x", "y", "z"]


def flds(texts, co):
    return [parse_field(t, co) for t in texts]


# -- grids --------------------------------------------------------------------

def test_grid_charts_and_dims():
    g = build_grid("torus", (8, 12))
    assert g.lengths == (2 * np.pi, 2 * np.pi)
    assert g.dim == 96
    b = build_grid("box", (8, 8))
    assert b.lengths == (np.pi, np.pi)
    assert b.dim == 49          # interior nodes only
    n = build_grid("nilmanifold3", (6, 6, 6))
    assert n.lengths == (1.0, 1.0, 1.0)


@pytest.mark.parametrize("bad", [
    lambda: build_grid("torus", (3, 8)),
    lambda: build_grid("nilmanifold3", (8, 8, 6)),
    lambda: build_grid("nilmanifold3", (8, 8, 8), lengths=(2, 1, 1)),
    lambda: build_grid("klein", (8, 8)),
    lambda: build_grid("torus", (8, 8), lengths=(1.0,)),
])
def test_grid_rejects(bad):
    with pytest.raises(AssemblyError):
        bad()


# -- displacement discretization ----------------------------------------------

def test_psinc_integer_displacement_is_kronecker():
    N = 16
    off = np.arange(N)
    w = psinc(off - 3.0, N)
    want = np.zeros(N)
    want[3] = 1.0
    assert np.allclose(w, want, atol=1e-14)


def test_psinc_partition_of_unity():
    N = 16
    for a in (0.25, 0.5, 1.7, -0.3):
        w = psinc(np.arange(N) - a, N)
        assert np.sum(w) == pytest.approx(1.0, abs=1e-12)


def test_symbol_exact_on_modes():
    """Displacement differences act diagonally on lattice Fourier modes with
    the exact translation symbol (e^{i k . d h} - 1)/theta below Nyquist."""
    g = build_grid("torus", (16, 16))
    h = g.h[0]
    D = discretize_field(parse_field("d/dx + 0.37*d/dy", CO2), g)
    ii, jj = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    x, y = ii.ravel() * h, jj.ravel() * h
    for k1, k2 in [(1, 0), (0, 1), (3, 2), (5, -4), (7, 7)]:
        mode = np.exp(1j * (k1 * x + k2 * y))
        want = (np.exp(1j * (k1 + 0.37 * k2) * h) - 1.0) / h
        assert np.abs(D @ mode - want * mode).max() < 1e-11


def test_integer_displacement_reduces_to_one_sided_difference():
    g = build_grid("torus", (16,))
    D = discretize_field(parse_field("d/dx", CO1), g).toarray()
    h = g.h[0]
    want = (np.roll(np.eye(16), 1, axis=1) - np.eye(16)) / h
    assert np.allclose(D, want, atol=1e-13)


def test_nilmanifold_seam_is_consistent():
    """The x-wrap on the Heisenberg quotient re-indexes z; the assembled
    operator must still be exactly symmetric."""
    g = build_grid("nilmanifold3", (6, 6, 6))
    scn = Scenario("heis", "nilmanifold3",
                   flds(["d/dx", "d/dy + x*d/dz"], CO3))
    p = assemble_operator(scn, g)
    assert p.symmetric
    assert p.asymmetry < 1e-12


# -- pencils -------------------------------------------------------------------

def test_pencil_symmetric_psd():
    g = build_grid("torus", (12, 12))
    p = assemble_operator(Scenario("g", "torus",
                                   flds(["d/dx", "sin(x)*d/dy"], CO2)), g)
    assert p.symmetric and p.asymmetry < 1e-12
    assert np.all(p.W > 0)
    ev = np.linalg.eigvalsh(p.S.toarray())
    assert ev.min() > -1e-10


def test_potential_enters_as_mass_weighted_diagonal():
    g = build_grid("torus", (10, 10))
    fields = flds(["d/dx", "d/dy"], CO2)
    p0 = assemble_operator(Scenario("a", "torus", fields), g)
    pV = assemble_operator(Scenario("b", "torus", fields,
                                    V=parse_coeff("sin(x)+cos(y)", CO2)), g)
    diff = (pV.S - p0.S).toarray()
    pts = g.points()
    want = np.diag(p0.W * (np.sin(pts[:, 0]) + np.cos(pts[:, 1])))
    assert np.allclose(diff, want, atol=1e-12)


def test_density_scales_mass_and_form():
    g = build_grid("torus", (10, 10))
    fields = flds(["d/dx", "d/dy"], CO2)
    p1 = assemble_operator(Scenario("a", "torus", fields), g)
    p2 = assemble_operator(Scenario("b", "torus", fields,
                                    density=parse_coeff("2", CO2)), g)
    assert np.allclose(p2.W, 2 * p1.W)
    assert np.abs((p2.S - 2 * p1.S)).max() < 1e-12


def test_density_must_be_positive():
    g = build_grid("torus", (10, 10))
    with pytest.raises(AssemblyError):
        assemble_operator(Scenario("bad", "torus", flds(["d/dx"], CO2),
                                   density=parse_coeff("sin(x)", CO2)), g)


def test_box_is_principal_submatrix_of_torus():
    """Equal-spacing embedding: the Dirichlet box operator equals the torus
    operator restricted to the interior nodes, entry for entry."""
    fields = flds(["d/dx", "d/dy"], CO2)
    gt = build_grid("torus", (8, 8))          # h = pi/4
    gb = build_grid("box", (4, 4))            # h = pi/4, 3x3 interior
    St = assemble_operator(Scenario("t", "torus", fields), gt)
    Sb = assemble_operator(Scenario("b", "box", fields), gb)
    idx = [i * 8 + j for i in range(1, 4) for j in range(1, 4)]
    assert np.allclose(St.S.toarray()[np.ix_(idx, idx)], Sb.S.toarray(),
                       atol=1e-14)
    assert np.allclose(St.W[idx], Sb.W)


def test_box_spectrum_matches_sine_closed_form(frozen):
    fx = frozen["box_sine_lowest"]
    g = build_grid("box", tuple(fx["res"]))
    p = assemble_operator(Scenario("b", "box",
                                   flds(["d/dx", "d/dy"], CO2)), g)
    H = np.diag(1 / np.sqrt(p.W)) @ p.S.toarray() @ np.diag(1 / np.sqrt(p.W))
    ev = np.linalg.eigvalsh(H)[:len(fx["eigs"])]
    assert np.allclose(ev, fx["eigs"], atol=1e-10)


def test_psi_conjugation_symmetric_and_shifts_form():
    base = Scenario("b", "torus", flds(["d/dx", "d/dy"], CO2))
    scn = PsiScenario("psi", base,
                      lprime_fields=flds(["sin(y)*d/dx"], CO2),
                      psi=parse_coeff("0.5*(1 - cos(x))", CO2))
    g = build_grid("torus", (16, 16))
    p = assemble_operator(scn, g)
    assert p.symmetric and p.asymmetry < 1e-10
    p0 = assemble_operator(base, g)
    assert np.abs((p.S - p0.S)).max() > 1e-3   # conjugation actually acts


def test_drift_term_violates_self_adjoint_claim():
    """A generic first-order drift is not symmetric; the assembler must
    refuse it under self_adjoint_claim and record the asymmetry without."""
    g = build_grid("torus", (12, 12))
    fields = flds(["d/dx", "d/dy"], CO2)
    gamma = (parse_coeff("sin(y)", CO2), None)
    with pytest.raises(AssemblyError):
        assemble_operator(Scenario("d", "torus", fields, gamma=gamma), g)
    p = assemble_operator(Scenario("d", "torus", fields, gamma=gamma,
                                   self_adjoint_claim=False), g)
    assert not p.symmetric
    assert p.asymmetry > 1e-6


def test_bracket_coupling_term_assembles():
    g = build_grid("torus", (12, 12))
    fields = flds(["d/dx", "sin(x)*d/dy"], CO2)
    c = {(1, 2): parse_coeff("1", CO2)}
    p = assemble_operator(Scenario("c", "torus", fields, c=c,
                                   self_adjoint_claim=False), g)
    assert p.S.nnz > 0
