"""Monte-Carlo estimation of control-reachable sets and their volume growth.

A point cloud approximating the ball B(x, delta) is generated by integrating
random admissible control paths

    c'(t) = sum_i a_i(t) X_i(c(t)),   c(0) = x,  t in [0, 1],

with piecewise-constant controls a drawn uniformly from the step constraint
set of the chosen class:

    C2:   sum_i a_i^2 < delta^2   (Euclidean ball in control space)
    Cinf: max_i |a_i| < delta     (box in control space)

Volumes are bin-occupancy counts, and the doubling exponent is the
least-squares slope of log volume against log delta.  Sampling approximates
the ball from inside only; that is enough for inclusion properties and
growth exponents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .fields import VectorField
from .filtration import lambda_poly, tangent_filtration

CONTROL_KINDS = ("C2", "Cinf")


@dataclass(frozen=True)
class ControlPath:
    """Piecewise-constant control: row k holds the coefficients on
    [k/K, (k+1)/K)."""

    controls: np.ndarray        # (K, m)
    class_norm: str             # "C2" | "Cinf"
    delta: float

    @property
    def steps(self) -> int:
        return self.controls.shape[0]

    def satisfies(self, kind: str, delta: float) -> bool:
        """Strict step-wise admissibility under another (kind, delta)."""
        if kind == "C2":
            return bool(np.all(np.sum(self.controls ** 2, axis=1) < delta ** 2))
        if kind == "Cinf":
            return bool(np.all(np.abs(self.controls) < delta))
        raise ValueError(f"unknown control class {kind!r}")


@dataclass
class BallCloud:
    center: np.ndarray
    delta: float
    endpoints: np.ndarray       # (P, n), chart coordinates
    seed: int
    kind: str
    n_steps: int
    integrator: str = "rk4"
    discarded: int = 0
    lengths: Optional[Tuple[float, ...]] = None   # torus periods, if any


def draw_controls(rng: np.random.Generator, n_paths: int, n_steps: int,
                  m: int, kind: str) -> np.ndarray:
    """Unit-radius control draws, shape (n_paths, n_steps, m).

    Scaled by delta at use time so that clouds at different radii share the
    same underlying draws (monotone volumes, exact dilation comparisons).
    """
    if kind == "C2":
        v = rng.standard_normal((n_paths, n_steps, m))
        v /= np.linalg.norm(v, axis=2, keepdims=True)
        r = rng.random((n_paths, n_steps)) ** (1.0 / m)
        return v * r[..., None]
    if kind == "Cinf":
        return rng.uniform(-1.0, 1.0, size=(n_paths, n_steps, m))
    raise ValueError(f"unknown control class {kind!r}")


def _rhs(fields: Sequence[VectorField], states: np.ndarray,
         coeffs: np.ndarray) -> np.ndarray:
    # states (P, n); coeffs (P, m)
    out = np.zeros_like(states)
    for i, f in enumerate(fields):
        out += coeffs[:, i, None] * f.evaluate(states)
    return out


def integrate_paths(fields: Sequence[VectorField], x0: np.ndarray,
                    controls: np.ndarray, substeps: int = 1,
                    box: Optional[Tuple[Sequence[float], Sequence[float]]] = None
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """RK4-integrate all paths at once.

    controls: (P, K, m) already scaled to the target radius.  Each control
    interval is integrated with `substeps` classical RK4 steps.  Returns
    (endpoints (P, n), inside mask (P,)); the mask is all-True unless a box
    is given, in which case it marks paths that never left the box.
    """
    P, K, _ = controls.shape
    y = np.broadcast_to(np.asarray(x0, dtype=float), (P, len(x0))).copy()
    inside = np.ones(P, dtype=bool)
    dt = 1.0 / (K * substeps)
    for k in range(K):
        a = controls[:, k, :]
        for _ in range(substeps):
            k1 = _rhs(fields, y, a)
            k2 = _rhs(fields, y + 0.5 * dt * k1, a)
            k3 = _rhs(fields, y + 0.5 * dt * k2, a)
            k4 = _rhs(fields, y + dt * k3, a)
            y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if box is not None:
                lo, hi = box
                inside &= np.all((y >= lo) & (y <= hi), axis=1)
    return y, inside


def sample_ball(x: Sequence[float], delta: float,
                fields: Sequence[VectorField], kind: str = "C2",
                n_paths: int = 10_000, n_steps: int = 16, seed: int = 0,
                substeps: int = 1,
                lengths: Optional[Sequence[float]] = None,
                box: Optional[Tuple[Sequence[float], Sequence[float]]] = None
                ) -> BallCloud:
    """Sample the reachable set of radius delta from x.

    Chart clipping: on a torus (lengths given) endpoints are wrapped into
    [0, L) at recording time; on a box, paths that exit are discarded and
    counted.  Deterministic in (seed, parameters): all controls come from
    one block draw of default_rng(seed).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if n_paths < 1 or n_steps < 1:
        raise ValueError("n_paths and n_steps must be >= 1")
    x = np.asarray(x, dtype=float)
    m = len(fields)
    rng = np.random.default_rng(seed)
    u = draw_controls(rng, n_paths, n_steps, m, kind) * delta
    ends, inside = integrate_paths(fields, x, u, substeps=substeps, box=box)
    discarded = int(n_paths - inside.sum())
    ends = ends[inside]
    if lengths is not None:
        ends = np.mod(ends, np.asarray(lengths, dtype=float))
    return BallCloud(center=x, delta=float(delta), endpoints=ends, seed=seed,
                     kind=kind, n_steps=n_steps, discarded=discarded,
                     lengths=tuple(lengths) if lengths is not None else None)


def _displacements(cloud: BallCloud) -> np.ndarray:
    d = cloud.endpoints - cloud.center
    if cloud.lengths is not None:
        L = np.asarray(cloud.lengths, dtype=float)
        d = np.mod(d + L / 2.0, L) - L / 2.0   # minimal torus representative
    return d


def auto_bins(cloud: BallCloud, frac: float = 0.1) -> np.ndarray:
    """Per-axis bin sizes scaled to the cloud's own extents (99th-percentile
    absolute displacement).  Resolves strongly anisotropic reachable sets
    (z-extent of a step-2 ball scales like delta^2 while x, y scale like
    delta) that a single isotropic bin size cannot."""
    disp = np.abs(_displacements(cloud))
    ext = np.quantile(disp, 0.99, axis=0)
    ext = np.maximum(ext, 1e-12 * max(cloud.delta, 1.0))
    return frac * ext


def ball_volume(cloud: BallCloud, bin_size, density=None
                ) -> Tuple[float, float]:
    """Bin-occupancy volume of the cloud: (coordinate volume, mu volume).

    Occupied = axis-aligned bin containing >= 1 endpoint; coordinate volume
    = count * prod(bin sides).  bin_size is a scalar side length or a
    per-axis array (see auto_bins).  The mu volume weights each occupied
    bin by the density h evaluated at the bin center (h = 1 when density is
    None).  Idempotent under endpoint duplication by construction.
    """
    bins = np.broadcast_to(np.asarray(bin_size, dtype=float),
                           (cloud.center.size,))
    if np.any(bins <= 0):
        raise ValueError("bin_size must be positive")
    if cloud.endpoints.size == 0:
        raise ValueError("empty cloud")
    disp = _displacements(cloud)
    idx = np.floor(disp / bins).astype(np.int64)
    occ = np.unique(idx, axis=0)
    cell = float(np.prod(bins))
    vol = occ.shape[0] * cell
    if density is None:
        return vol, vol
    centers = cloud.center + (occ + 0.5) * bins
    mu = float(density.evaluate(centers).sum()) * cell
    return vol, mu


@dataclass
class ExponentFit:
    exponent: float
    stderr: float
    deltas: np.ndarray
    volumes: np.ndarray

    @property
    def ci95(self) -> Tuple[float, float]:
        return (self.exponent - 1.96 * self.stderr,
                self.exponent + 1.96 * self.stderr)


def _loglog_slope(xs: np.ndarray, ys: np.ndarray) -> Tuple[float, float]:
    lx, ly = np.log(xs), np.log(ys)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    dof = max(len(xs) - 2, 1)
    s2 = (res[0] / dof) if res.size else 0.0
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(np.sqrt(max(cov[0, 0], 0.0)))


def doubling_exponent(x: Sequence[float], fields: Sequence[VectorField],
                      kind: str = "C2",
                      delta_range: Tuple[float, float] = (0.1, 0.4),
                      samples: int = 100_000, n_steps: int = 4,
                      seed: int = 0, n_deltas: int = 6,
                      bin_frac: float = 0.1, bins: str = "auto"
                      ) -> ExponentFit:
    """Volume-growth exponent: slope of log volume vs log delta.

    All radii reuse one block of unit control draws scaled by delta, so the
    slope measures pure volume scaling.  bins="auto" uses per-axis bin
    sizes adapted to each cloud's extents (handles anisotropic balls at any
    delta); bins="scalar" uses an isotropic bin of side bin_frac * delta,
    which needs mid-range delta to resolve higher-step directions.
    """
    lo, hi = delta_range
    if not hi >= 2 * lo:
        raise ValueError("delta_range must span at least one doubling")
    x = np.asarray(x, dtype=float)
    m = len(fields)
    rng = np.random.default_rng(seed)
    base = draw_controls(rng, samples, n_steps, m, kind)
    deltas = np.geomspace(lo, hi, n_deltas)
    vols = []
    for d in deltas:
        ends, _ = integrate_paths(fields, x, base * d)
        cloud = BallCloud(center=x, delta=float(d), endpoints=ends,
                          seed=seed, kind=kind, n_steps=n_steps)
        b = auto_bins(cloud, bin_frac) if bins == "auto" else bin_frac * d
        vol, _ = ball_volume(cloud, b)
        vols.append(vol)
    vols = np.asarray(vols)
    slope, err = _loglog_slope(deltas, vols)
    return ExponentFit(exponent=slope, stderr=err, deltas=deltas,
                       volumes=vols)


def lambda_compare(x: Sequence[float], fields: Sequence[VectorField],
                   delta_range: Tuple[float, float] = (0.05, 0.2),
                   samples: int = 50_000, n_steps: int = 4, seed: int = 0,
                   n_deltas: int = 6, bin_frac: float = 0.1,
                   tau_cap: Optional[int] = None) -> dict:
    """Ratio statistics of Lambda(x, delta) / coordinate volume over a
    delta range; boundedness of this ratio is the comparability claim."""
    x = np.asarray(x, dtype=float)
    if tau_cap is None:
        tau_cap = tangent_filtration(x, fields).tau
    lam = lambda_poly(x, fields, tau_cap)
    m = len(fields)
    rng = np.random.default_rng(seed)
    base = draw_controls(rng, samples, n_steps, m, "C2")
    deltas = np.geomspace(delta_range[0], delta_range[1], n_deltas)
    ratios = []
    for d in deltas:
        ends, _ = integrate_paths(fields, x, base * d)
        cloud = BallCloud(center=x, delta=float(d), endpoints=ends,
                          seed=seed, kind="C2", n_steps=n_steps)
        vol, _ = ball_volume(cloud, auto_bins(cloud, bin_frac))
        ratios.append(lam(d) / vol)
    ratios = np.asarray(ratios)
    return {"deltas": deltas, "ratios": ratios,
            "min": float(ratios.min()), "max": float(ratios.max()),
            "mean": float(ratios.mean()),
            "spread": float(ratios.max() / ratios.min())}


def check_inclusion_chain(fields: Sequence[VectorField], delta: float,
                          n_paths: int = 1000, n_steps: int = 16,
                          seed: int = 0) -> bool:
    """Control-level sandwich: every Cinf(delta/sqrt(m)) draw is
    C2(delta)-admissible and every C2(delta) draw is Cinf(delta)-admissible.
    """
    m = len(fields)
    rng = np.random.default_rng(seed)
    inner = draw_controls(rng, n_paths, n_steps, m, "Cinf") * (delta / np.sqrt(m))
    mid = draw_controls(rng, n_paths, n_steps, m, "C2") * delta
    for p in range(n_paths):
        cp_in = ControlPath(inner[p], "Cinf", delta / np.sqrt(m))
        cp_mid = ControlPath(mid[p], "C2", delta)
        if not cp_in.satisfies("C2", delta):
            return False
        if not cp_mid.satisfies("Cinf", delta):
            return False
    return True
