"""Bracket filtration, homogeneous dimension, audits, Lambda polynomial.

All quantities derive from numerical ranks of evaluated iterated-bracket
frames.  Rank tolerance is scale invariant: singular values below
RANK_RTOL * sigma_max count as zero.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .fields import VectorField, bracket, iterated_bracket, TAU_CAP_DEFAULT

RANK_RTOL = 1e-9


class HormanderFailure(Exception):
    """Raised when the bracket span never reaches the chart dimension."""

    def __init__(self, point, depth_cap):
        self.point = tuple(float(v) for v in np.atleast_1d(point))
        self.depth_cap = depth_cap
        super().__init__(
            f"brackets up to depth {depth_cap} do not span at {self.point}")


@dataclass(frozen=True)
class FiltrationPoint:
    point: tuple
    dims: tuple          # d(x,1), ..., d(x,tau)
    tau: int
    Q: int


@dataclass(frozen=True)
class MultiWord:
    words: tuple         # n distinct words (tuples of letters), sorted

    @property
    def deg(self) -> int:
        return sum(len(w) for w in self.words)


@dataclass(frozen=True)
class LambdaPoly:
    point: tuple
    coeffs: Dict[int, float]   # degree -> sum of |det| over multi-words

    def __call__(self, delta: float) -> float:
        return sum(c * delta ** d for d, c in self.coeffs.items())

    @property
    def min_degree(self) -> int:
        return min(d for d, c in self.coeffs.items() if c > 0)


@dataclass
class AuditReport:
    tau_L: int
    Q_L: int
    Fk_mass: Dict[int, float]
    total_mass: float
    cell_mass: float
    measure_zero_candidates: List[int]
    failures: List[tuple]
    points: List[FiltrationPoint] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        payload = {
            "tau_L": self.tau_L,
            "Q_L": self.Q_L,
            "Fk_mass": {str(k): v for k, v in sorted(self.Fk_mass.items())},
            "total_mass": self.total_mass,
            "cell_mass": self.cell_mass,
            "measure_zero_candidates": self.measure_zero_candidates,
            "failures": [list(p) for p in self.failures],
        }
        return json.dumps(payload, sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# word / bracket-field enumeration (cached per field family)
# ---------------------------------------------------------------------------

_WORD_CACHE: dict = {}


def bracket_words(fields: Sequence[VectorField], depth_cap: int):
    """All words I with 1 <= |I| <= depth_cap and their (exact) bracket
    fields, with canonically-zero fields dropped.  Returns a list of
    (word, VectorField) sorted by (len, word)."""
    key = (tuple(f.canonical_key() for f in fields), depth_cap)
    hit = _WORD_CACHE.get(key)
    if hit is not None:
        return hit
    m = len(fields)
    out = []
    by_word = {}
    for j in range(1, depth_cap + 1):
        for word in itertools.product(range(1, m + 1), repeat=j):
            if j == 1:
                fld = fields[word[0] - 1]
            else:
                # X_(i1,...,ij) = [X_i1, X_(i2,...,ij)]
                fld = bracket(fields[word[0] - 1], by_word[word[1:]])
            by_word[word] = fld
            if not fld.is_zero():
                out.append((word, fld))
    _WORD_CACHE[key] = out
    return out


def tangent_filtration(x, fields: Sequence[VectorField],
                       depth_cap: int = TAU_CAP_DEFAULT) -> FiltrationPoint:
    """Dimensions d(x,j) of the spans of bracket values up to length j."""
    x = np.asarray(x, dtype=float)
    n = fields[0].dim
    words = bracket_words(fields, depth_cap)
    dims = []
    vecs: List[np.ndarray] = []
    rank = 0
    for j in range(1, depth_cap + 1):
        vecs.extend(f.evaluate(x) for (w, f) in words if len(w) == j)
        if vecs:
            M = np.stack(vecs)
            sv = np.linalg.svd(M, compute_uv=False)
            rank = int((sv > RANK_RTOL * sv[0]).sum()) if sv[0] > 0 else 0
        dims.append(rank)
        if rank == n:
            break
    if rank < n:
        raise HormanderFailure(x, depth_cap)
    tau = len(dims)
    # Q = d(x,1) + sum_{j>=2} j (d(x,j) - d(x,j-1))
    Q = dims[0]
    for j in range(2, tau + 1):
        Q += j * (dims[j - 1] - dims[j - 2])
    return FiltrationPoint(tuple(float(v) for v in x), tuple(dims), tau, Q)


def homogeneous_dimension(x, fields, depth_cap: int = TAU_CAP_DEFAULT):
    fp = tangent_filtration(x, fields, depth_cap)
    return fp.Q, fp.tau


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------

def _sample_grid(lengths: Sequence[float], counts: Sequence[int],
                 offsets: Optional[Sequence[float]] = None) -> np.ndarray:
    axes = []
    for L, c, in zip(lengths, counts):
        axes.append(np.arange(c) * (L / c))
    if offsets is not None:
        axes = [a + o for a, o in zip(axes, offsets)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _audit_pass(fields, lengths, sample_counts, density, depth_cap,
                keep_points):
    pts = _sample_grid(lengths, sample_counts)
    cellvol = float(np.prod([L / c for L, c in zip(lengths, sample_counts)]))
    if density is None:
        weights = np.full(len(pts), cellvol)
    else:
        weights = density.evaluate(pts) * cellvol
        if np.any(weights <= 0):
            raise ValueError("density must be positive at all sample points")
    records: List[FiltrationPoint] = []
    failures: List[tuple] = []
    Qs = np.zeros(len(pts), dtype=int)
    taus = np.zeros(len(pts), dtype=int)
    ok = np.ones(len(pts), dtype=bool)
    for i, p in enumerate(pts):
        try:
            fp = tangent_filtration(p, fields, depth_cap)
        except HormanderFailure:
            failures.append(tuple(float(v) for v in p))
            ok[i] = False
            continue
        Qs[i] = fp.Q
        taus[i] = fp.tau
        if keep_points:
            records.append(fp)
    return pts, weights, cellvol, Qs, taus, ok, failures, records


def hormander_audit(fields: Sequence[VectorField],
                    lengths: Sequence[float],
                    sample_counts: Sequence[int],
                    density=None,
                    depth_cap: int = TAU_CAP_DEFAULT,
                    keep_points: bool = False) -> AuditReport:
    """Aggregate per-point filtrations over a uniform sample grid.

    density, when given, is a ChartCoeff weight h; mu-masses are
    h(sample) * cell volume.  Deterministic: grids are fixed by
    (lengths, sample_counts).

    Level sets F_k are additionally probed at double resolution: a genuine
    positive-measure set keeps its mass under refinement while a set of
    measure zero loses roughly half per doubling, which is what the
    measure-zero-candidate flag tests (mass ratio <= 0.6, or mass below one
    refined cell).
    """
    _, weights, cellvol, Qs, taus, ok, failures, records = _audit_pass(
        fields, lengths, sample_counts, density, depth_cap, keep_points)
    total = float(weights.sum())

    if not ok.any():
        return AuditReport(tau_L=0, Q_L=0, Fk_mass={}, total_mass=total,
                           cell_mass=cellvol, measure_zero_candidates=[],
                           failures=failures, points=records)

    Q_L = int(Qs[ok].max())
    tau_L = int(taus[ok].max())
    n = fields[0].dim

    fine_counts = [2 * c for c in sample_counts]
    _, fweights, fcell, fQs, _, fok, _, _ = _audit_pass(
        fields, lengths, fine_counts, density, depth_cap, False)

    Fk = {}
    flagged = []
    for k in range(n, Q_L + 1):
        coarse = float(weights[ok & (Qs >= k)].sum())
        fine = float(fweights[fok & (fQs >= k)].sum())
        Fk[k] = fine
        if fine <= 0:
            continue
        if fine <= float(fweights.max()) or (coarse > 0 and fine / coarse <= 0.6):
            flagged.append(k)
    return AuditReport(tau_L=tau_L, Q_L=Q_L, Fk_mass=Fk, total_mass=total,
                       cell_mass=cellvol, measure_zero_candidates=flagged,
                       failures=failures, points=records)


# ---------------------------------------------------------------------------
# Lambda polynomial and minimal frames
# ---------------------------------------------------------------------------

def _sign_classes(words):
    """Group (word, field) pairs whose fields agree up to sign.

    Returns list of (representative word, field, multiplicity); keeps the
    lexicographically-first shortest word as representative.
    """
    classes = {}
    for word, fld in words:
        key = fld.canonical_key()
        nkey = (-fld).canonical_key()
        if key in classes:
            classes[key][2] += 1
        elif nkey in classes:
            classes[nkey][2] += 1
        else:
            classes[key] = [word, fld, 1]
    out = [(w, f, m) for (w, f, m) in classes.values()]
    out.sort(key=lambda t: (len(t[0]), t[0]))
    return out


def lambda_poly(x, fields: Sequence[VectorField],
                tau_cap: int = TAU_CAP_DEFAULT) -> LambdaPoly:
    """Degree-indexed coefficients sum |det| over multi-words at x.

    Multi-words are unordered n-sets of distinct words; words whose bracket
    fields coincide up to sign are enumerated once and re-expanded through a
    multiplicity count (mixed sets with two words from one sign class have
    det 0 and drop out anyway).
    """
    x = np.asarray(x, dtype=float)
    n = fields[0].dim
    # Hormander must hold at x
    tangent_filtration(x, fields, tau_cap)
    classes = _sign_classes(bracket_words(fields, tau_cap))
    vals = [f.evaluate(x) for (_, f, _) in classes]
    coeffs: Dict[int, float] = {}
    for combo in itertools.combinations(range(len(classes)), n):
        M = np.stack([vals[i] for i in combo])
        det = abs(float(np.linalg.det(M)))
        if det <= 0:
            continue
        deg = sum(len(classes[i][0]) for i in combo)
        mult = 1
        for i in combo:
            mult *= classes[i][2]
        coeffs[deg] = coeffs.get(deg, 0.0) + mult * det
    return LambdaPoly(tuple(float(v) for v in x), coeffs)


def minimal_frame(x, fields: Sequence[VectorField],
                  tau_cap: int = TAU_CAP_DEFAULT) -> MultiWord:
    """A multi-word with nonzero determinant at x of minimal degree Q(x);
    ties broken lexicographically on the sorted word sequence."""
    x = np.asarray(x, dtype=float)
    n = fields[0].dim
    fp = tangent_filtration(x, fields, tau_cap)
    words = bracket_words(fields, tau_cap)
    vals = {w: f.evaluate(x) for (w, f) in words}
    scale = max(float(np.abs(v).max()) for v in vals.values())
    best = None
    for combo in itertools.combinations(sorted(vals, key=lambda w: (len(w), w)), n):
        deg = sum(len(w) for w in combo)
        if deg != fp.Q:
            continue
        M = np.stack([vals[w] for w in combo])
        if abs(np.linalg.det(M)) > RANK_RTOL * scale ** n:
            cand = MultiWord(tuple(sorted(combo)))
            if best is None or cand.words < best.words:
                best = cand
    if best is None:
        raise HormanderFailure(x, tau_cap)
    return best


def audit_points_csv(points: Sequence[FiltrationPoint],
                     polys: Sequence[LambdaPoly]) -> str:
    """Per-point CSV: x1..xn, tau, Q, lambda_min_deg, lambda_coeffs."""
    lines = []
    n = len(points[0].point) if points else 0
    head = [f"x{i+1}" for i in range(n)] + ["tau", "Q", "lambda_min_deg",
                                            "lambda_coeffs"]
    lines.append(",".join(head))
    for fp, lp in zip(points, polys):
        coeff_str = ";".join(f"{d}:{c:.12g}" for d, c in sorted(lp.coeffs.items()))
        row = [f"{v:.12g}" for v in fp.point] + [str(fp.tau), str(fp.Q),
                                                 str(lp.min_degree), coeff_str]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
