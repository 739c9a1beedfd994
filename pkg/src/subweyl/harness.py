"""Run orchestration: validated configs, artifact persistence, caching.

A run takes a config (registry id or inline scenario block plus overrides),
drives the verification pipeline, and leaves a self-describing artifact
tree: audit.json, counts.csv, trace.csv, checks.csv, verdict.json and a
manifest with the canonical config, its hash, the seed, and library
versions.  Expensive curve computations are cached on disk keyed by
content hashes, never by timestamp, so reruns are byte-identical and
report cache hits.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema

from . import asymptotics, registry

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenario": {"type": "string"},
        "inline": {"type": "object"},
        "resolution": {"type": "array", "minItems": 1,
                       "items": {"type": "integer", "minimum": 4}},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "cache": {"type": "boolean"},
        "lam_grid": {"type": "array", "minItems": 3, "maxItems": 3,
                     "items": {"type": "number"}},
        "t_grid": {"type": "array", "minItems": 3, "maxItems": 3,
                   "items": {"type": "number"}},
        "trace_method": {"enum": ["auto", "eigsum", "stochastic"]},
        "n_trace_probes": {"type": "integer", "minimum": 8},
        "thresholds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "exp_tol": {"type": "number"},
                "coeff_tol": {"type": "number"},
                "check_coefficient": {"type": "boolean"},
                "karamata_exp_tol": {"type": "number"},
                "karamata_coeff_tol": {"type": "number"},
                "spread_tol": {"type": "number"},
                "trend_slack": {"type": "number"},
                "margin": {"type": "number"},
                "min_count": {"type": "number"},
                "max_count_frac": {"type": "number"},
                "kappa_res": {"type": "number"},
                "tr_min": {"type": "number"},
                "probe_mode": {"enum": ["spread", "trend", "finite"]},
                "probe_nodes": {"type": "integer"},
                "probe_times": {"type": "integer"},
            },
        },
    },
}


class ConfigError(ValueError):
    """Invalid run configuration; raised before any computation."""


@dataclass(frozen=True)
class RunConfig:
    scenario: Optional[str] = None
    inline: Optional[dict] = None
    resolution: Optional[tuple] = None
    seed: int = 0
    workers: int = 1
    out: str = "runs"
    cache: bool = True
    lam_grid: Optional[tuple] = None
    t_grid: Optional[tuple] = None
    trace_method: Optional[str] = None
    n_trace_probes: Optional[int] = None
    thresholds: Optional[dict] = None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            jsonschema.validate(raw, RUN_CONFIG_SCHEMA)
        except jsonschema.ValidationError as e:
            raise ConfigError(f"config rejected: {e.message}") from None
        if ("scenario" in raw) == ("inline" in raw):
            raise ConfigError("config needs exactly one of scenario|inline")
        kw = dict(raw)
        for key in ("resolution", "lam_grid", "t_grid"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        return cls.from_dict(raw)

    def canonical(self) -> str:
        body = {k: v for k, v in dataclasses.asdict(self).items()
                if v is not None}
        return json.dumps(body, sort_keys=True)

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def entry(self) -> registry.ScenarioRegistryEntry:
        base = (registry.get(self.scenario) if self.scenario
                else registry.adhoc_entry(self.inline))
        over = {}
        if self.resolution:
            over["resolution"] = self.resolution
        if self.lam_grid:
            over["lam_grid"] = self.lam_grid
        if self.t_grid:
            over["t_grid"] = self.t_grid
        if self.trace_method:
            over["trace_method"] = self.trace_method
        if self.n_trace_probes:
            over["n_trace_probes"] = self.n_trace_probes
        return dataclasses.replace(base, **over) if over else base


class DiskCache:
    """Content-addressed JSON store for curve artifacts."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _path(self, key: str) -> Path:
        return self.root / (hashlib.sha256(key.encode()).hexdigest() + ".json")

    def get(self, key: str):
        p = self._path(key)
        if p.exists():
            self.hits += 1
            with open(p) as fh:
                return json.load(fh)
        self.misses += 1
        return None

    def put(self, key: str, value: dict) -> None:
        tmp = self._path(key).with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(value, fh)
        os.replace(tmp, self._path(key))


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_artifacts(outdir: Path, verdict: asymptotics.Verdict) -> list:
    written = []

    def emit(name, writer):
        writer(outdir / name)
        written.append(name)

    emit("verdict.json", lambda p: Path(p).write_text(verdict.to_json() + "\n"))
    data = verdict.data
    if "audit" in data:
        emit("audit.json", lambda p: _write_json(p, data["audit"]))
    if "counting" in data:
        def counts_csv(p):
            with open(p, "w") as fh:
                fh.write("lambda,count\n")
                for lam, c in zip(data["counting"]["lams"],
                                  data["counting"]["counts"]):
                    fh.write(f"{lam:.17g},{c}\n")
        emit("counts.csv", counts_csv)
    if "trace" in data:
        def trace_csv(p):
            tr = data["trace"]
            with open(p, "w") as fh:
                fh.write("t,value,stderr,method\n")
                for t, v, s in zip(tr["ts"], tr["values"], tr["stderr"]):
                    fh.write(f"{t:.17g},{v:.17g},{s:.17g},{tr['method']}\n")
        emit("trace.csv", trace_csv)
    if "probe" in data:
        def probe_csv(p):
            pr = data["probe"]
            with open(p, "w") as fh:
                fh.write("node,t,renormalized_diag\n")
                for i, node in enumerate(pr["nodes"]):
                    for j, t in enumerate(pr["ts"]):
                        fh.write(f"{node},{t:.17g},{pr['values'][i][j]:.17g}\n")
        emit("probe.csv", probe_csv)
    emit("checks.csv", lambda p: asymptotics.export_checks_csv(verdict, str(p)))
    fits = {k: data[k] for k in ("count_fit", "trace_fit", "karamata", "theory")
            if k in data}
    if fits:
        emit("fits.json", lambda p: _write_json(p, fits))
    return written


def run_scenario(config: RunConfig, log=print) -> int:
    """Execute the pipeline for one config; returns the process exit code.

    0 iff every check passed.  Config errors raise ConfigError before any
    artifact is written; computation failures produce a failed verdict
    artifact and exit code 1.
    """
    entry = config.entry()
    outdir = Path(config.out) / f"{entry.id}-{config.content_hash()}"
    outdir.mkdir(parents=True, exist_ok=True)
    cache = DiskCache(Path(config.out) / ".cache") if config.cache else None

    verdict = asymptotics.verify(entry, config.thresholds,
                                 resolution=config.resolution,
                                 seed=config.seed, workers=config.workers,
                                 cache=cache)
    written = _write_artifacts(outdir, verdict)
    manifest = {
        "config": json.loads(config.canonical()),
        "config_hash": config.content_hash(),
        "scenario": entry.id,
        "seed": config.seed,
        "artifacts": sorted(written),
        "cache": ({"hits": cache.hits, "misses": cache.misses}
                  if cache else None),
        "versions": _versions(),
    }
    _write_json(outdir / "manifest.json", manifest)
    log(verdict.summary())
    if cache is not None:
        log(f"cache: {cache.hits} hits, {cache.misses} misses")
    log(f"artifacts: {outdir}")
    return 0 if verdict.overall else 1


def _versions() -> dict:
    import numpy
    import scipy

    from . import __version__
    return {"python": sys.version.split()[0], "numpy": numpy.__version__,
            "scipy": scipy.__version__, "subweyl": __version__}


def list_scenarios(log=print) -> int:
    log(f"{'id':24s} {'chart':13s} invariants")
    for e in registry.list_entries():
        log(e.row())
    return 0
