"""Spectral engine for weighted sparse pencils (S, W).

Counting goes through factorization inertia (Sylvester's law on S - lambda
W), the low spectrum through shift-invert Lanczos in the symmetrized
variable, heat traces through either certified eigenvalue sums or
stochastic Lanczos quadrature, and small instances through a dense oracle.
All randomness is seeded; repeated calls are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import OperatorPencil

DENSE_CAP = 4096
TIE_BUMP = 1e-9
JITTER = 1e-12


class SpectralError(RuntimeError):
    pass


class TailNotCertified(SpectralError):
    """eigsum cannot certify the spectral tail at this t."""


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    residual_norms: np.ndarray
    k: int
    method: str


@dataclass
class TraceEstimate:
    t: float
    value: float
    stderr: float
    method: str
    detail: dict = dc_field(default_factory=dict)


@dataclass
class DiagProbe:
    node: int
    t: float
    value: float


def _sym_operator(pencil: OperatorPencil):
    """Similarity-transformed standard form H = W^{-1/2} S W^{-1/2}."""
    d = 1.0 / np.sqrt(pencil.W)
    Dh = sp.diags(d)
    return (Dh @ pencil.S @ Dh).tocsr()


def _spectral_scale(pencil: OperatorPencil) -> float:
    return float(np.abs(pencil.S.diagonal()).max() / pencil.W.min()) or 1.0


# -- counting ----------------------------------------------------------------

def _inertia_once(pencil: OperatorPencil, lam: float) -> Optional[int]:
    A = (pencil.S - lam * sp.diags(pencil.W)).tocsc()
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError:
        return None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        # off-diagonal pivoting happened; inertia of U is unreliable
        return None
    d = lu.U.diagonal()
    if np.any(d == 0.0):
        return None
    return int((d < 0).sum())


def count_below(pencil: OperatorPencil, lam: float, retries: int = 4) -> int:
    """Number of pencil eigenvalues <= lam, by Sylvester inertia of
    S - lam W.  Ties and factorization breakdowns retry with a relative
    bump lam*(1 + 1e-9) and then diagonal jitter."""
    if not pencil.symmetric:
        raise SpectralError("inertia counting requires a symmetric pencil")
    scale = _spectral_scale(pencil)
    lam_try = lam
    rng = np.random.default_rng(12345)
    for attempt in range(retries):
        count = _inertia_once(pencil, lam_try)
        if count is not None:
            return count
        lam_try = lam_try * (1.0 + TIE_BUMP) + scale * JITTER * (
            rng.random() if attempt else 0.0)
    raise SpectralError(f"inertia factorization failed near lambda={lam}")


def count_curve(pencil: OperatorPencil, lams: Sequence[float],
                workers: int = 1) -> List[Tuple[float, int]]:
    """Counting staircase at each lambda.  Each probe is an independent
    factorization, so workers > 1 fans them out over processes."""
    lams = [float(l) for l in lams]
    if workers <= 1 or len(lams) <= 1:
        return [(l, count_below(pencil, l)) for l in lams]
    import concurrent.futures as cf
    with cf.ProcessPoolExecutor(max_workers=min(workers, len(lams))) as pool:
        counts = list(pool.map(count_below, [pencil] * len(lams), lams))
    return list(zip(lams, counts))


# -- low spectrum ------------------------------------------------------------

def lowest_eigs(pencil: OperatorPencil, k: int, tol: float = 0,
                maxiter: Optional[int] = None) -> Spectrum:
    """Lowest k generalized eigenvalues by shift-invert Lanczos on the
    symmetrized operator; deterministic start vector."""
    if not pencil.symmetric:
        raise SpectralError("lowest_eigs requires a symmetric pencil")
    if k >= pencil.dim / 2:
        raise SpectralError("k must be below dim/2; use dense_oracle")
    H = _sym_operator(pencil)
    scale = _spectral_scale(pencil)
    sigma = -1e-6 * scale
    v0 = np.full(pencil.dim, 1.0 / np.sqrt(pencil.dim))
    vals, vecs = spla.eigsh(H, k=k, sigma=sigma, which="LM", v0=v0,
                            tol=tol, maxiter=maxiter)
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    # residuals in the pencil variable: u = W^{-1/2} y
    u = vecs / np.sqrt(pencil.W)[:, None]
    R = pencil.S @ u - (pencil.W[:, None] * u) * vals[None, :]
    res = np.linalg.norm(R, axis=0) / np.linalg.norm(
        pencil.W[:, None] * u, axis=0)
    return Spectrum(eigenvalues=vals, residual_norms=res, k=k,
                    method="shift-invert-lanczos")


# -- dense oracle ------------------------------------------------------------

def dense_oracle(pencil: OperatorPencil, t: Optional[float] = None):
    """Full dense eigendecomposition; optionally the full e^{-t W^{-1}S}.

    Independent brute-force reference for tests and for small
    non-self-adjoint scenarios."""
    if pencil.dim > DENSE_CAP:
        raise SpectralError(f"dense oracle capped at {DENSE_CAP} nodes")
    S = pencil.S.toarray()
    if pencil.symmetric:
        d = 1.0 / np.sqrt(pencil.W)
        H = (S * d[:, None]) * d[None, :]
        H = 0.5 * (H + H.T)
        vals, Y = np.linalg.eigh(H)
        spec = Spectrum(eigenvalues=vals,
                        residual_norms=np.zeros_like(vals),
                        k=pencil.dim, method="dense")
        if t is None:
            return spec
        E = (Y * np.exp(-t * vals)[None, :]) @ Y.T
        # back to the pencil variable: e^{-tH} = W^{-1/2} E W^{1/2}
        expm = (E * d[:, None]) / d[None, :]
        return spec, expm
    vals = np.sort_complex(sla.eig(np.linalg.solve(np.diag(pencil.W), S),
                                   right=False))
    return Spectrum(eigenvalues=vals, residual_norms=np.full(pencil.dim,
                                                             np.nan),
                    k=pencil.dim, method="dense-general")


# -- Lanczos quadrature ------------------------------------------------------

def _lanczos(H, v: np.ndarray, depth: int):
    """Full-reorthogonalized Lanczos; returns (alpha, beta) of T."""
    n = v.size
    Q = np.empty((depth, n))
    alpha = np.empty(depth)
    beta = np.empty(depth)
    q = v / np.linalg.norm(v)
    Q[0] = q
    r = H @ q
    alpha[0] = q @ r
    r -= alpha[0] * q
    r -= Q[:1].T @ (Q[:1] @ r)
    for j in range(1, depth):
        b = np.linalg.norm(r)
        beta[j - 1] = b
        if b < 1e-14:
            return alpha[:j], beta[:j - 1], Q[:j]
        q = r / b
        Q[j] = q
        r = H @ q - b * Q[j - 1]
        alpha[j] = q @ r
        r -= alpha[j] * q
        r -= Q[:j + 1].T @ (Q[:j + 1] @ r)   # full reorthogonalization
    return alpha, beta[:depth - 1], Q


def _quad_exp(alpha, beta, ts) -> Tuple[np.ndarray, float]:
    """e1^T exp(-t T) e1 for each t, via the tridiagonal eigensystem."""
    vals, vecs = sla.eigh_tridiagonal(alpha, beta, lapack_driver="stev")
    w = vecs[0] ** 2
    out = np.array([(w * np.exp(-t * vals)).sum()
                    for t in np.atleast_1d(ts)])
    return out, float(vals[0])


def _adaptive_quadrature(H, v, ts, rel_tol, depth0=24, depth_max=512):
    """Grow Lanczos depth until every quadrature value moves < rel_tol.

    Values that underflow to zero additionally require the smallest Ritz
    value to stabilize: at large t the quadrature can vanish at shallow
    depth while the true value is carried by a near-kernel mode the Krylov
    space has not reached yet, and 0 == 0 would pass any relative test.
    Exact breakdown (invariant subspace) accepts unconditionally."""
    depth = depth0
    prev = None
    prev_lam = None
    while True:
        depth = min(depth, v.size)
        alpha, beta, _ = _lanczos(H, v, depth)
        cur, lam_min = _quad_exp(alpha, beta, ts)
        if len(alpha) < depth or depth == v.size:
            return cur, len(alpha)
        if prev is not None:
            val_ok = np.all(np.abs(cur - prev) <= rel_tol * np.abs(cur))
            if val_ok and np.any(cur == 0.0):
                lam_scale = max(abs(lam_min), abs(prev_lam), 1e-300)
                val_ok = abs(lam_min - prev_lam) <= max(
                    rel_tol * lam_scale, 1e-13 * (abs(alpha).max() or 1.0))
            if val_ok:
                return cur, depth
        prev, prev_lam = cur, lam_min
        if depth >= depth_max:
            return cur, depth
        depth = min(depth * 2, depth_max, v.size)


# -- heat traces -------------------------------------------------------------

def _eigsum_trace(pencil, ts, k_schedule=(64, 128, 256, 512)) -> list:
    dim = pencil.dim
    out = []
    spec = None
    for t in ts:
        ok = False
        for k in [k for k in k_schedule if k < dim / 2] or [max(dim // 4, 1)]:
            if spec is None or spec.k < k:
                spec = lowest_eigs(pencil, k)
            lam = spec.eigenvalues
            val = float(np.exp(-t * lam).sum())
            tail = (dim - spec.k) * float(np.exp(-t * lam[-1]))
            if tail <= 0.01 * val:
                out.append(TraceEstimate(
                    t=float(t), value=val + 0.0, stderr=0.0, method="eigsum",
                    detail={"k": spec.k, "tail_bound": tail}))
                ok = True
                break
        if not ok:
            raise TailNotCertified(
                f"eigsum tail bound exceeds 1% of the value at t={t}; "
                "use the stochastic estimator")
    return out


def _stochastic_trace(pencil, ts, n_probes=64, seed=0, rel_tol=1e-3) -> list:
    if n_probes < 8:
        raise SpectralError("stochastic trace needs at least 8 probes")
    H = _sym_operator(pencil)
    dim = pencil.dim
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    per_probe = np.empty((n_probes, ts.size))
    for i in range(n_probes):
        rng = np.random.default_rng((seed, i))
        z = rng.integers(0, 2, size=dim) * 2.0 - 1.0
        # one Lanczos per probe serves the whole t-curve (T is t-free)
        vals, _ = _adaptive_quadrature(H, z, ts, rel_tol)
        per_probe[i] = dim * vals
    mean = per_probe.mean(axis=0)
    stderr = per_probe.std(axis=0, ddof=1) / np.sqrt(n_probes)
    return [TraceEstimate(t=float(t), value=float(m), stderr=float(s),
                          method="stochastic",
                          detail={"n_probes": n_probes, "seed": seed})
            for t, m, s in zip(ts, mean, stderr)]


def heat_trace_curve(pencil: OperatorPencil, ts, method: str = "auto",
                     n_probes: int = 64, seed: int = 0) -> list:
    """Tr exp(-t W^{-1}S) over a t-grid.

    eigsum: partial eigenvalue sum, only when the certified tail bound
    (dim-k)e^{-t lam_k} stays under 1% of the value; stochastic: Hutchinson
    with Rademacher probes and Lanczos quadrature, one Lanczos per probe
    reused across the whole curve.  auto tries eigsum and falls back.
    """
    if not pencil.symmetric:
        raise SpectralError("heat trace requires a symmetric pencil")
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts <= 0):
        raise SpectralError("t must be positive")
    if method == "eigsum":
        return _eigsum_trace(pencil, ts)
    if method == "stochastic":
        return _stochastic_trace(pencil, ts, n_probes=n_probes, seed=seed)
    if method != "auto":
        raise SpectralError(f"unknown trace method {method!r}")
    try:
        return _eigsum_trace(pencil, ts)
    except TailNotCertified:
        return _stochastic_trace(pencil, ts, n_probes=n_probes, seed=seed)


def heat_trace(pencil: OperatorPencil, t: float, method: str = "auto",
               n_probes: int = 64, seed: int = 0) -> TraceEstimate:
    return heat_trace_curve(pencil, [t], method=method, n_probes=n_probes,
                            seed=seed)[0]


def heat_diag(pencil: OperatorPencil, t, nodes: Sequence[int],
              rel_tol: float = 1e-8) -> List[DiagProbe]:
    """mu-normalized heat kernel diagonal K(x, x, t) = (e^{-tH})_xx / W_x
    at the requested nodes, by Lanczos from the unit vector e_x."""
    if not pencil.symmetric:
        raise SpectralError("heat_diag requires a symmetric pencil")
    H = _sym_operator(pencil)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    probes = []
    for x in nodes:
        e = np.zeros(pencil.dim)
        e[int(x)] = 1.0
        vals, _ = _adaptive_quadrature(H, e, ts, rel_tol)
        for tv, v in zip(ts, vals):
            probes.append(DiagProbe(node=int(x), t=float(tv),
                                    value=float(v / pencil.W[int(x)])))
    return probes


def export_trace_csv(estimates: Sequence[TraceEstimate], path: str) -> None:
    with open(path, "w") as fh:
        fh.write("t,value,stderr,method\n")
        for e in estimates:
            fh.write(f"{e.t:.17g},{e.value:.17g},{e.stderr:.17g},{e.method}\n")


def export_count_csv(curve: Sequence[Tuple[float, int]], path: str) -> None:
    with open(path, "w") as fh:
        fh.write("lambda,count\n")
        for lam, c in curve:
            fh.write(f"{lam:.17g},{c}\n")
