"""Scenario registry: named operator setups with desk-scale defaults.

Each entry carries the chart, the field expressions, the expected
filtration invariants, the coefficient kind, and the probe grids and
tolerances its verification runs with.  Entries are data; the pipeline
logic lives in asymptotics.verify.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .assembly import PsiScenario, Scenario, build_grid
from .fields import parse_coeff, parse_field


@dataclass(frozen=True)
class ScenarioRegistryEntry:
    id: str
    description: str
    chart: str
    coords: Tuple[str, ...]
    field_texts: Tuple[str, ...]
    expected_Q_L: int
    expected_tau_L: int
    coeff_kind: str
    lengths: Optional[Tuple[float, ...]] = None
    resolution: Tuple[int, ...] = (64, 64)
    audit_samples: Tuple[int, ...] = (16, 16)
    V_text: Optional[str] = None
    density_text: Optional[str] = None
    psi_text: Optional[str] = None
    lprime_texts: Tuple[str, ...] = ()
    # probe grids (geometric) at the default resolution
    lam_grid: Tuple[float, float, int] = (8.0, 280.0, 14)
    lam_cap_rule: Optional[str] = None     # None | "z-nyquist"
    t_grid: Tuple[float, float, int] = (0.03, 0.45, 10)
    t_min_rule: Optional[str] = None       # None (resolution policy) | "z-nyquist"
    tr_min: float = 10.0
    kappa_res: float = 4.0
    trace_method: str = "auto"
    n_trace_probes: int = 64
    # window policy and check tolerances
    min_count: int = 30
    max_count_frac: float = 0.05
    exp_tol: float = 0.05
    coeff_tol: float = 0.10
    karamata: bool = True
    karamata_exp_tol: float = 0.05
    karamata_coeff_tol: float = 0.15
    spread_tol: float = 3.0
    trend_slack: float = 1.10
    margin: float = 0.25
    check_coefficient: bool = True
    probe_mode: Optional[str] = None   # None -> spread / trend by kind
    probe_nodes: int = 16
    probe_times: int = 8
    time_budget_min: float = 10.0

    # -- construction helpers ------------------------------------------------

    def fields(self):
        return [parse_field(t, self.coords) for t in self.field_texts]

    def scenario(self):
        base = Scenario(
            name=self.id, chart=self.chart, fields=self.fields(),
            lengths=self.lengths,
            V=parse_coeff(self.V_text, self.coords) if self.V_text else None,
            density=(parse_coeff(self.density_text, self.coords)
                     if self.density_text else None))
        if self.psi_text is None:
            return base
        lprime = [parse_field(t, self.coords) for t in self.lprime_texts]
        return PsiScenario(name=self.id, base=base, lprime_fields=lprime,
                           psi=parse_coeff(self.psi_text, self.coords))

    def grid(self, resolution: Optional[Sequence[int]] = None):
        return build_grid(self.chart, resolution or self.resolution,
                          self.lengths)

    # -- probe grids -----------------------------------------------------

    def lam_values(self, resolution: Optional[Sequence[int]] = None):
        lo, hi, n = self.lam_grid
        cap = self.lam_cap(resolution)
        if cap is not None:
            hi = min(hi, 0.995 * cap)
        return np.geomspace(lo, hi, int(n))

    def t_values(self, resolution: Optional[Sequence[int]] = None):
        lo, hi, n = self.t_grid
        tmin = self.t_min(resolution)
        if tmin is not None:
            lo = max(lo, 0.9 * tmin)
        return np.geomspace(lo, hi, int(n))

    def lam_cap(self, resolution: Optional[Sequence[int]] = None):
        if self.lam_cap_rule is None:
            return None
        # ground level of the last resolved transverse sector
        res = resolution or self.resolution
        return math.pi * min(res)

    def t_min(self, resolution: Optional[Sequence[int]] = None):
        if self.t_min_rule is None:
            return None
        # heat content above the resolved band <= e^-4
        res = resolution or self.resolution
        return 4.0 / (math.pi * min(res))

    def row(self) -> str:
        return (f"{self.id:24s} {self.chart:13s} n={len(self.coords)} "
                f"Q_L={self.expected_Q_L} tau_L={self.expected_tau_L} "
                f"{self.coeff_kind}")


_ENTRIES = (
    ScenarioRegistryEntry(
        id="torus2-elliptic",
        description="Flat 2-torus Laplacian, the Q = n = 2 reference case",
        chart="torus", coords=("x", "y"), field_texts=("d/dx", "d/dy"),
        expected_Q_L=2, expected_tau_L=1, coeff_kind="elliptic-closed-form",
        resolution=(128, 128), audit_samples=(16, 16),
        lam_grid=(8.0, 280.0, 14), t_grid=(0.07, 0.5, 10),
        exp_tol=0.05, coeff_tol=0.10, time_budget_min=2.0),
    ScenarioRegistryEntry(
        id="torus3-elliptic",
        description="Flat 3-torus Laplacian, half-integer exponent 3/2",
        chart="torus", coords=("x", "y", "z"),
        field_texts=("d/dx", "d/dy", "d/dz"),
        expected_Q_L=3, expected_tau_L=1, coeff_kind="elliptic-closed-form",
        resolution=(48, 48, 48), audit_samples=(8, 8, 8),
        # lattice dispersion maps discrete lam=85 to continuum ~98, keeping
        # the top sample under the 5% counting cap at 48^3
        lam_grid=(4.2, 85.0, 7), t_grid=(0.24, 0.85, 8),
        exp_tol=0.07, coeff_tol=0.12, time_budget_min=15.0),
    ScenarioRegistryEntry(
        id="heisenberg-nilmanifold",
        description="Sublaplacian on the Heisenberg nilmanifold: n = 3, Q = 4",
        chart="nilmanifold3", coords=("x", "y", "z"),
        field_texts=("d/dx", "d/dy + x*d/dz"),
        expected_Q_L=4, expected_tau_L=2, coeff_kind="heisenberg-oracle",
        resolution=(32, 32, 32), audit_samples=(6, 6, 6),
        lam_grid=(32.0, 110.0, 9), lam_cap_rule="z-nyquist",
        t_grid=(0.035, 0.16, 9), t_min_rule="z-nyquist", tr_min=4.0,
        exp_tol=0.10, coeff_tol=0.25, time_budget_min=30.0),
    ScenarioRegistryEntry(
        id="grushin-torus2",
        description="Grushin-type degeneracy on T^2: Q_L = 3 on a null set",
        chart="torus", coords=("x", "y"),
        field_texts=("d/dx", "sin(x)*d/dy"),
        expected_Q_L=3, expected_tau_L=2, coeff_kind="zero-measure",
        resolution=(64, 64), audit_samples=(16, 16),
        lam_grid=(4.5, 40.0, 10), t_grid=(0.018, 0.8, 12),
        t_min_rule="z-nyquist",
        karamata=False, time_budget_min=5.0),
    ScenarioRegistryEntry(
        id="martinet-torus3",
        description="Martinet-type step-3 degeneracy on T^3 (tau_L = 3)",
        chart="torus", coords=("x", "y", "z"),
        field_texts=("d/dx", "d/dy + sin(x)**2*d/dz"),
        expected_Q_L=5, expected_tau_L=3, coeff_kind="zero-measure",
        resolution=(24, 24, 24), audit_samples=(12, 4, 4),
        lam_grid=(1.8, 8.5, 8), t_grid=(0.05, 0.8, 10),
        t_min_rule="z-nyquist",
        karamata=False, time_budget_min=10.0),
    ScenarioRegistryEntry(
        id="dirichlet-box2",
        description="Dirichlet Laplacian on a square box (interior nodes)",
        chart="box", coords=("x", "y"), field_texts=("d/dx", "d/dy"),
        expected_Q_L=2, expected_tau_L=1, coeff_kind="elliptic-closed-form",
        resolution=(96, 96), audit_samples=(16, 16),
        lam_grid=(60.0, 600.0, 12), t_grid=(0.015, 0.12, 12),
        min_count=100, exp_tol=0.07, check_coefficient=False,
        karamata=False, probe_mode="finite",
        time_budget_min=5.0),
    ScenarioRegistryEntry(
        id="psi-mixed",
        description="Cutoff-mixed operator L + psi L' psi on T^2",
        chart="torus", coords=("x", "y"), field_texts=("d/dx", "d/dy"),
        expected_Q_L=2, expected_tau_L=1, coeff_kind="unknown",
        resolution=(96, 96), audit_samples=(16, 16),
        psi_text="0.5*(1 - cos(x))", lprime_texts=("sin(y)*d/dx",),
        lam_grid=(8.0, 140.0, 12), t_grid=(0.06, 0.45, 12),
        time_budget_min=5.0),
)

REGISTRY: Dict[str, ScenarioRegistryEntry] = {e.id: e for e in _ENTRIES}


def get(scenario_id: str) -> ScenarioRegistryEntry:
    try:
        return REGISTRY[scenario_id]
    except KeyError:
        known = ", ".join(sorted(REGISTRY))
        raise KeyError(f"unknown scenario {scenario_id!r}; known: {known}") from None


def list_entries():
    return [REGISTRY[k] for k in sorted(REGISTRY)]


def listing() -> str:
    return "\n".join(e.row() for e in list_entries())


def adhoc_entry(block: dict) -> ScenarioRegistryEntry:
    """Entry from an inline scenario block (harness config path).

    Required keys: id, chart, coords, fields, expected_Q_L, expected_tau_L.
    Optional keys map 1:1 onto the entry fields.
    """
    block = dict(block)
    kwargs = {
        "id": block.pop("id"),
        "description": block.pop("description", "inline scenario"),
        "chart": block.pop("chart"),
        "coords": tuple(block.pop("coords")),
        "field_texts": tuple(block.pop("fields")),
        "expected_Q_L": int(block.pop("expected_Q_L")),
        "expected_tau_L": int(block.pop("expected_tau_L")),
        "coeff_kind": block.pop("coeff_kind", "unknown"),
    }
    for key in ("lengths", "resolution", "audit_samples", "lam_grid",
                "t_grid", "lprime_texts"):
        if key in block:
            kwargs[key] = tuple(block.pop(key))
    for key in ("V_text", "density_text", "psi_text", "lam_cap_rule",
                "t_min_rule", "tr_min", "kappa_res", "trace_method",
                "n_trace_probes", "min_count", "max_count_frac", "exp_tol",
                "coeff_tol", "karamata", "karamata_exp_tol",
                "karamata_coeff_tol", "spread_tol", "trend_slack", "margin",
                "probe_nodes", "probe_times", "time_budget_min"):
        if key in block:
            kwargs[key] = block.pop(key)
    if block:
        raise ValueError(f"unknown scenario keys: {sorted(block)}")
    return ScenarioRegistryEntry(**kwargs)
