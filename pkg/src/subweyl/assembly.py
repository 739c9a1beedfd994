"""Lattice charts, field discretization, and sparse pencil assembly.

Charts: flat tori (periodic wrap), the twisted 3-torus quotient (periodic in
y and z, x-wrap composed with a y-dependent z-shift), and Dirichlet boxes
(stencil taps outside the interior read 0).

A vector field X is discretized as a displacement operator: at node p the
forward difference is ([T ψ](p) − ψ(p)) / θ_p where T translates by one
flow step θ_p·X(p) and θ_p is chosen so the largest per-axis displacement
is exactly one cell.  Integer cell displacements are exact index shifts, so
for axis-aligned unit fields this reduces to the classical one-sided
per-axis difference, and for a single-axis field with variable coefficient
to the coefficient-scaled upwind difference.  Sub-cell displacements are
applied through periodic trigonometric interpolation (exact translation of
band-limited lattice functions); plain nearest-node interpolation damps
high modes enough to corrupt the low spectrum of step-2 scenarios.

The second-order part is assembled in symmetrized sum-of-squares form
½ Σ_i (D_i⁺ᵀ W D_i⁺ + D_i⁻ᵀ W D_i⁻), which is symmetric by construction
and avoids checkerboard null modes; first-order terms use plain per-axis
central differences of symbolically precomputed fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .fields import ChartCoeff, VectorField, bracket

INTEGER_TOL = 1e-12
SYMMETRY_TOL = 1e-10


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    chart: str                      # "torus" | "nilmanifold3" | "box"
    res: Tuple[int, ...]            # per-axis point count
    lengths: Tuple[float, ...]
    h: Tuple[float, ...]
    dim: int                        # node count

    @property
    def n(self) -> int:
        return len(self.res)

    def points(self) -> np.ndarray:
        """Node coordinates, shape (dim, n), C-order raveled."""
        if self.chart == "box":
            axes = [self.h[a] * np.arange(1, self.res[a])
                    for a in range(self.n)]
        else:
            axes = [self.h[a] * np.arange(self.res[a]) for a in range(self.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def _shape(self) -> Tuple[int, ...]:
        if self.chart == "box":
            return tuple(N - 1 for N in self.res)
        return self.res


def build_grid(chart: str, resolution: Sequence[int],
               lengths: Optional[Sequence[float]] = None) -> Grid:
    res = tuple(int(N) for N in resolution)
    if any(N < 4 for N in res):
        raise AssemblyError("resolution must be >= 4 on every axis")
    if chart == "nilmanifold3":
        if len(res) != 3:
            raise AssemblyError("nilmanifold3 is three-dimensional")
        if res[1] != res[2]:
            raise AssemblyError("nilmanifold3 requires N2 == N3 so the "
                                "x-wrap z-shift lands on lattice points")
        if lengths is None:
            lengths = (1.0, 1.0, 1.0)
        if tuple(lengths) != (1.0, 1.0, 1.0):
            raise AssemblyError("nilmanifold3 uses the unit lattice quotient")
    elif chart == "torus":
        if lengths is None:
            lengths = (2.0 * np.pi,) * len(res)
    elif chart == "box":
        if lengths is None:
            lengths = (np.pi,) * len(res)
    else:
        raise AssemblyError(f"unknown chart {chart!r}")
    L = tuple(float(v) for v in lengths)
    if len(L) != len(res):
        raise AssemblyError("lengths/resolution rank mismatch")
    h = tuple(Li / Ni for Li, Ni in zip(L, res))
    if chart == "box":
        dim = int(np.prod([N - 1 for N in res]))
    else:
        dim = int(np.prod(res))
    return Grid(chart=chart, res=res, lengths=L, h=h, dim=dim)


# -- lattice index helpers ---------------------------------------------------

def _index_arrays(grid: Grid):
    shape = grid._shape()
    idx = np.arange(grid.dim)
    return np.array(np.unravel_index(idx, shape)), shape


def axis_shift(grid: Grid, axis: int, step: int):
    """Destination node index for a shift of `step` cells along `axis`.

    Returns (dest, alive): on a box chart, taps leaving the interior get
    alive=False (Dirichlet zero); on the twisted chart an x-wrap composes
    with the z-shift z -> z - step*y.
    """
    multi, shape = _index_arrays(grid)
    dest = multi.copy()
    dest[axis] = multi[axis] + step
    alive = np.ones(grid.dim, dtype=bool)
    if grid.chart == "box":
        alive = (dest[axis] >= 0) & (dest[axis] < shape[axis])
        dest[axis] = np.clip(dest[axis], 0, shape[axis] - 1)
    elif grid.chart == "nilmanifold3" and axis == 0:
        wrapped = (dest[0] // shape[0]).astype(np.int64)   # net x-wraps
        dest[0] = dest[0] % shape[0]
        # crossing the x-seam w times shifts z by -w*y on the lattice
        dest[2] = (dest[2] - wrapped * multi[1]) % shape[2]
    else:
        dest[axis] = dest[axis] % shape[axis]
    return np.ravel_multi_index(dest, shape), alive


def psinc(d: np.ndarray, N: int) -> np.ndarray:
    """Periodic interpolation kernel: the weight at lattice offset d for an
    even-N circular translation.  Exactly 1/0 at integer offsets; response
    e^{2 pi i q s / N} on modes |q| < N/2."""
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    near = np.abs(np.remainder(d + 0.5, N) - 0.5) < 1e-12
    out[near] = np.where(
        np.abs(np.remainder(d[near] + N / 2.0, N) - N / 2.0) < 0.5, 1.0, 0.0)
    rest = ~near
    dr = d[rest]
    out[rest] = np.sin(np.pi * dr) / (N * np.tan(np.pi * dr / N))
    return out


def _translation_matrix(grid: Grid, cells: np.ndarray) -> sp.csr_matrix:
    """Sparse T with row p holding interpolation weights for psi evaluated
    at node p displaced by cells[p, a] lattice cells along each axis a.

    Integer displacements are index remaps; at most one axis may carry a
    sub-cell displacement (tap count per row stays O(N)).  On the twisted
    chart only the x-axis displacement may be nonzero together with no
    other axis crossing rule; fields mixing x with y/z displacements are
    rejected because the seam re-chart does not commute with them.
    """
    n = grid.n
    rounded = np.round(cells)
    frac_mask = np.abs(cells - rounded) > INTEGER_TOL
    frac_axes = [a for a in range(n) if frac_mask[:, a].any()]
    if len(frac_axes) > 1:
        raise AssemblyError("more than one sub-cell displacement axis")
    if grid.chart == "box" and frac_axes:
        raise AssemblyError("sub-cell displacements undefined on a "
                            "Dirichlet box (non-periodic interpolation)")
    if grid.chart == "nilmanifold3":
        active = [a for a in range(n)
                  if np.any(np.abs(cells[:, a]) > INTEGER_TOL)]
        if 0 in active and len(active) > 1:
            raise AssemblyError("twisted chart: x-displacement cannot be "
                                "combined with other axes in one field")

    # integer part: pure index remap, one tap per row; the remap is applied
    # to the current tap column so successive axes compose.  A fractional
    # axis is skipped here: its periodic taps below carry the whole
    # displacement, integer part included.
    rows = np.arange(grid.dim)
    cols = np.arange(grid.dim)
    data = np.ones(grid.dim)
    alive = np.ones(grid.dim, dtype=bool)
    for a in range(n):
        if a in frac_axes:
            continue
        steps = rounded[rows, a].astype(np.int64)
        if not steps.any():
            continue
        new_cols = cols.copy()
        for s in np.unique(steps):
            if s == 0:
                continue
            sel = (steps == s) & alive
            dest, ok = axis_shift(grid, a, int(s))
            alive[sel] &= ok[cols[sel]]
            new_cols[sel] = dest[cols[sel]]
        cols = new_cols

    if grid.chart == "box":
        keep = alive
        T = sp.coo_matrix((data[keep], (rows[keep], cols[keep])),
                          shape=(grid.dim, grid.dim))
        return T.tocsr(), ~alive

    if frac_axes:
        a = frac_axes[0]
        N = grid.res[a]
        if N % 2:
            raise AssemblyError("sub-cell displacement needs even axis size")
        shape = grid._shape()
        stride = int(np.prod(shape[a + 1:]))
        base = cols - ((cols // stride) % N) * stride
        k0 = (cols // stride) % N
        offs = np.arange(N)
        # row p taps every node along axis a with weight psinc(m - c_p)
        tap_cols = base[:, None] + ((k0[:, None] + offs[None, :]) % N) * stride
        tap_w = psinc(offs[None, :] - cells[:, a][:, None], N)
        keep = np.abs(tap_w) > 1e-14
        rows = np.repeat(rows, keep.sum(axis=1))
        cols = tap_cols[keep]
        data = (data[:, None] * tap_w)[keep]
    T = sp.coo_matrix((data, (rows, cols)), shape=(grid.dim, grid.dim))
    T.sum_duplicates()
    return T.tocsr(), np.zeros(grid.dim, dtype=bool)


def discretize_field(X: VectorField, grid: Grid,
                     scheme: str = "forward") -> sp.csr_matrix:
    """Sparse difference operator for X on the grid.

    forward/backward: displacement differences ([T(±c)ψ](p) ∓ ψ(p)) / ±θ_p
    with per-node step θ_p normalizing the largest axis displacement to one
    cell.  central: plain per-axis central differences with coefficients
    evaluated at p (used for first-order terms).
    """
    D, _ = _discretize_with_boundary(X, grid, scheme)
    return D


def _discretize_with_boundary(X: VectorField, grid: Grid, scheme: str):
    """discretize_field plus the mask of rows whose displaced tap landed on
    the Dirichlet boundary.  Each interior lattice edge is seen by both the
    forward and the backward operator (weight ½ + ½ in the symmetrized
    form); a boundary edge is seen by exactly one of them, so the assembly
    doubles those rows' quadratic-form weight to count every edge once."""
    if X.dim != grid.n:
        raise AssemblyError("field/grid dimension mismatch")
    pts = grid.points()
    comp = np.stack([c.evaluate(pts) for c in X.components], axis=1)

    if scheme == "central":
        D = sp.csr_matrix((grid.dim, grid.dim))
        for a in range(grid.n):
            ca = comp[:, a]
            if not np.any(np.abs(ca) > 0):
                continue
            dp, okp = axis_shift(grid, a, +1)
            dm, okm = axis_shift(grid, a, -1)
            w = ca / (2.0 * grid.h[a])
            rows = np.arange(grid.dim)
            D = D + sp.coo_matrix(
                (np.concatenate([w[okp], -w[okm]]),
                 (np.concatenate([rows[okp], rows[okm]]),
                  np.concatenate([dp[okp], dm[okm]]))),
                shape=(grid.dim, grid.dim)).tocsr()
        return D, np.zeros(grid.dim, dtype=bool)
    if scheme not in ("forward", "backward"):
        raise AssemblyError(f"unknown scheme {scheme!r}")

    absc = np.abs(comp)
    active = absc > 1e-14
    any_active = active.any(axis=1)
    # per-node flow step: largest axis displacement is exactly one cell
    ratios = np.where(active, np.asarray(grid.h)[None, :] / np.where(
        active, absc, 1.0), np.inf)
    theta = np.min(ratios, axis=1)
    theta[~any_active] = 1.0
    cells = comp * (theta / 1.0)[:, None] / np.asarray(grid.h)[None, :]
    cells[~any_active] = 0.0

    sgn = 1.0 if scheme == "forward" else -1.0
    T, died = _translation_matrix(grid, sgn * cells)
    I = sp.identity(grid.dim, format="csr")
    Dif = (T - I) if scheme == "forward" else (I - T)
    inv_theta = sp.diags(np.where(any_active, 1.0 / theta, 0.0))
    D = (inv_theta @ Dif).tocsr()
    # zero-coefficient nodes contribute nothing (row already zeroed by mask)
    mask = sp.diags(any_active.astype(float))
    return (mask @ D).tocsr(), died & any_active


# -- scenarios and pencils ---------------------------------------------------

@dataclass
class Scenario:
    name: str
    chart: str
    fields: Tuple[VectorField, ...]
    lengths: Optional[Tuple[float, ...]] = None
    c: Optional[Dict[Tuple[int, int], ChartCoeff]] = None
    gamma: Optional[Tuple[Optional[ChartCoeff], ...]] = None
    V: Optional[ChartCoeff] = None
    density: Optional[ChartCoeff] = None
    self_adjoint_claim: bool = True

    @property
    def has_first_order(self) -> bool:
        return bool(self.c) or bool(
            self.gamma and any(g is not None for g in self.gamma))


@dataclass
class PsiScenario:
    """Perturbation L + ψ²L'/2 + (ψ²L')ᵀ/2 of a self-adjoint base."""
    name: str
    base: Scenario
    lprime_fields: Tuple[VectorField, ...]
    psi: ChartCoeff

    @property
    def chart(self) -> str:
        return self.base.chart

    @property
    def lengths(self):
        return self.base.lengths

    @property
    def self_adjoint_claim(self) -> bool:
        return True


@dataclass
class OperatorPencil:
    S: sp.csr_matrix
    W: np.ndarray                  # diagonal mass (mu cell masses)
    dim: int
    symmetric: bool
    asymmetry: float
    grid: Grid
    scheme: str = "displacement"

    def scale(self) -> float:
        return float(np.abs(self.S).max()) if self.S.nnz else 0.0


def _mass_diagonal(scn, grid: Grid) -> np.ndarray:
    cell = float(np.prod(grid.h))
    dens = getattr(scn, "density", None)
    if dens is None:
        return np.full(grid.dim, cell)
    W = dens.evaluate(grid.points()) * cell
    if np.any(W <= 0):
        raise AssemblyError("density must be strictly positive at all nodes")
    return W


def _sum_of_squares(fields, grid, W) -> sp.csr_matrix:
    S = sp.csr_matrix((grid.dim, grid.dim))
    for X in fields:
        Dp, diedp = _discretize_with_boundary(X, grid, "forward")
        Dm, diedm = _discretize_with_boundary(X, grid, "backward")
        # boundary edges appear in only one of the two operators: double
        # those rows so every lattice edge carries unit quadrature weight
        Wp = sp.diags(W * (1.0 + diedp))
        Wm = sp.diags(W * (1.0 + diedm))
        S = S + 0.5 * (Dp.T @ Wp @ Dp + Dm.T @ Wm @ Dm)
    return S.tocsr()


def _first_order(scn: Scenario, grid: Grid, W) -> sp.csr_matrix:
    A = sp.csr_matrix((grid.dim, grid.dim))
    Wd = sp.diags(W)
    if scn.c:
        for (i, j), cij in scn.c.items():
            Y = bracket(scn.fields[i - 1], scn.fields[j - 1]).mul_coeff(cij)
            A = A + Wd @ discretize_field(Y, grid, "central")
    if scn.gamma:
        for i, g in enumerate(scn.gamma):
            if g is None:
                continue
            A = A + Wd @ discretize_field(scn.fields[i].mul_coeff(g),
                                          grid, "central")
    return A.tocsr()


def assemble_operator(scenario, grid: Grid) -> OperatorPencil:
    """Weighted pencil (S, W) for the scenario on the grid.

    S = ½Σ_i(D_i⁺ᵀWD_i⁺ + D_i⁻ᵀWD_i⁻) + W·diag(V) + A with A the centrally
    discretized first-order part; Dirichlet grids carry interior nodes only.
    """
    if isinstance(scenario, PsiScenario):
        base_p = assemble_operator(scenario.base, grid)
        Sprime = _sum_of_squares(scenario.lprime_fields, grid, base_p.W)
        psi2 = scenario.psi.evaluate(grid.points()) ** 2
        B = sp.diags(psi2) @ Sprime
        S = (base_p.S + 0.5 * (B + B.T)).tocsr()
        asym = abs(S - S.T).max() if S.nnz else 0.0
        return OperatorPencil(S=S, W=base_p.W, dim=grid.dim,
                              symmetric=bool(asym <= SYMMETRY_TOL *
                                             max(abs(S).max(), 1e-300)),
                              asymmetry=float(asym), grid=grid)

    W = _mass_diagonal(scenario, grid)
    S = _sum_of_squares(scenario.fields, grid, W)
    if scenario.V is not None:
        S = S + sp.diags(W * scenario.V.evaluate(grid.points()))
    if scenario.has_first_order:
        S = S + _first_order(scenario, grid, W)
    S = S.tocsr()
    scale = max(abs(S).max() if S.nnz else 0.0, 1e-300)
    asym = float(abs(S - S.T).max()) if S.nnz else 0.0
    symmetric = asym <= SYMMETRY_TOL * scale
    if scenario.self_adjoint_claim and scenario.has_first_order \
            and not symmetric:
        raise AssemblyError(
            f"self-adjoint claim violated: asymmetry {asym:.3e} exceeds "
            f"{SYMMETRY_TOL:.0e} * scale")
    return OperatorPencil(S=S, W=W, dim=grid.dim, symmetric=symmetric,
                          asymmetry=asym, grid=grid)


def psi_transform(base: Scenario, lprime_fields: Sequence[VectorField],
                  psi: ChartCoeff, name: Optional[str] = None) -> PsiScenario:
    if not base.self_adjoint_claim:
        raise AssemblyError("psi transform needs a self-adjoint base")
    for X in lprime_fields:
        if X.dim != base.fields[0].dim:
            raise AssemblyError("chart mismatch between base and L'")
    return PsiScenario(name=name or f"{base.name}+psi", base=base,
                       lprime_fields=tuple(lprime_fields), psi=psi)


def export_pencil(pencil: OperatorPencil, path_prefix: str) -> None:
    """Triplet text (`row col value`, sorted) plus a JSON header."""
    coo = pencil.S.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path_prefix + ".triplets", "w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
    header = {"chart": pencil.grid.chart, "resolution": pencil.grid.res,
              "lengths": pencil.grid.lengths, "dim": pencil.dim,
              "scheme": pencil.scheme, "symmetric": pencil.symmetric,
              "asymmetry": pencil.asymmetry}
    with open(path_prefix + ".json", "w") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
        fh.write("\n")
