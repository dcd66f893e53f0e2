"""Scenario configs, replica generation and summary output.

A scenario config is a JSON object::

    {
      "name": "light_tail_light_traffic",
      "distribution": {"kind": "lattice_pareto", "alpha_prime": 7, "c": 3, "h": 0.1},
      "mu": 1.0,
      "params": {"m": 16, "L": 1.1, "alpha": 4, "gamma": 1.7, "delta": 0.38},
      "replicas": 100000,
      "lindley": {"length": 1000000, "batch": 25},
      "seed": 20240601,
      "threads": 1,
      "output_dir": "runs/light_tail_light_traffic"
    }

``params`` may instead be the string ``"solve"``, in which case ``solve``
(an object with ``alpha``, ``delta``, ``gamma`` and optionally ``L``/``mode``)
fixes everything except m, which is minimised. ``kind`` is ``lattice_pareto``
(increments h floor(c V / h) centered) or ``shifted_pareto`` (c V centered,
simulated through the dominating lattice walk; ``coupling.h`` sets its span).
Optional keys: ``reference_params`` (kept for reporting only), ``strict``
(default true; false records acceptance ratios above one instead of raising),
``check_feasibility`` (default true).
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import oracles
from .increments import LatticePareto, ShiftedPareto
from .lattice import CoupledSampler, build_coupling
from .params import AlgorithmParams, check_feasibility, InfeasibleParams, minimize_m
from .sampler import ExactSampler

PRESET_DIR = Path(__file__).parent / "presets"
REPLICA_COLUMNS = ("replica_id", "M0", "first_idle", "function_evals")
LINDLEY_COLUMNS = ("batch_index", "batch_mean")


@dataclass
class ScenarioConfig:
    name: str
    distribution: dict
    mu: float = 1.0
    params: dict | str = "solve"
    solve: dict = field(default_factory=dict)
    replicas: int = 1000
    lindley: dict = field(default_factory=lambda: {"length": 100000, "batch": 25})
    seed: int = 0
    threads: int = 1
    output_dir: str | None = None
    coupling: dict | None = None
    reference_params: dict | None = None
    strict: bool = True
    check_feasibility: bool = True
    description: str = ""

    def __post_init__(self):
        if int(self.replicas) < 1:
            raise ValueError("replica count must be >= 1")
        if int(self.threads) < 1:
            raise ValueError("thread count must be >= 1")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        kind = self.distribution.get("kind", "lattice_pareto")
        if kind not in ("lattice_pareto", "shifted_pareto"):
            raise ValueError(f"unknown distribution kind {kind!r}")
        if isinstance(self.params, str) and self.params != "solve":
            raise ValueError('params must be an object or "solve"')
        self.replicas = int(self.replicas)
        self.threads = int(self.threads)

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)

    def scaled(self, factor: float, **overrides) -> "ScenarioConfig":
        """Copy with replica count and chain length multiplied by ``factor``."""
        raw = self.to_dict()
        raw["replicas"] = max(1, int(round(self.replicas * factor)))
        lin = dict(self.lindley)
        lin["length"] = max(lin["batch"] * 30, int(round(lin["length"] * factor)))
        raw["lindley"] = lin
        raw.update(overrides)
        return ScenarioConfig.from_dict(raw)

    # derived objects -------------------------------------------------------

    def increment_law(self):
        dist = self.distribution
        if dist.get("kind", "lattice_pareto") == "lattice_pareto":
            return LatticePareto(dist["alpha_prime"], dist["c"], dist.get("h", 0.1))
        return ShiftedPareto(dist["alpha_prime"], dist["c"])

    def uses_coupling(self) -> bool:
        return self.distribution.get("kind", "lattice_pareto") == "shifted_pareto"

    def simulated_law(self):
        """(law driving the exact sampler, its drift, coupling or None)."""
        d = self.increment_law()
        if not self.uses_coupling():
            return d, self.mu, None
        h = (self.coupling or {}).get("h")
        cp = build_coupling(d, h, self.mu)
        return cp.lattice, cp.mu_prime, cp

    def algorithm_params(self) -> AlgorithmParams:
        law, mu, _ = self.simulated_law()
        if isinstance(self.params, dict):
            return AlgorithmParams(mu=mu, **self.params)
        s = dict(self.solve)
        return minimize_m(law, mu, s.get("alpha", 2.02), s.get("delta", 0.38), s.get("gamma", 1.0),
                          L=s.get("L", 1.1), mode=s.get("mode", "finite_variance"), eps=s.get("eps"))

    def reference_algorithm_params(self) -> AlgorithmParams | None:
        if not self.reference_params:
            return None
        _, mu, _ = self.simulated_law()
        return AlgorithmParams(mu=mu, **self.reference_params)


def load_preset(name: str) -> ScenarioConfig:
    path = PRESET_DIR / (name if name.endswith(".json") else name + ".json")
    return ScenarioConfig.load(path)


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def replica_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream fixed by (master seed, replica index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0, index))))


def chain_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(1,))))


# --------------------------------------------------------------------------
# replicas


@dataclass
class ReplicaRow:
    replica_id: int
    M0: float
    first_idle: int
    function_evals: int


def _make_sampler(cfg: ScenarioConfig, params: AlgorithmParams):
    law, _, cp = cfg.simulated_law()
    check = cfg.check_feasibility and cfg.strict
    if cp is None:
        return ExactSampler(params, law, strict=cfg.strict, check=check)
    return CoupledSampler(cp, params, strict=cfg.strict, check=check)


def _one_replica(sampler, seed: int, index: int) -> ReplicaRow:
    rng = replica_rng(seed, index)
    if isinstance(sampler, ExactSampler):
        before = sampler.stats.evals
        path = sampler.m0_path(rng)
        return ReplicaRow(index, path.maximum(), path.argmax(), sampler.stats.evals - before)
    before = sampler.inner.stats.evals
    out = sampler.sample(0, rng)
    s = out.target.s
    return ReplicaRow(index, float(out.target.M[0]), int(np.argmax(s)), sampler.inner.stats.evals - before)


def _violations(sampler):
    inner = sampler if isinstance(sampler, ExactSampler) else sampler.inner
    return list(inner.stats.violations)


def _replica_range(cfg_dict: dict, params_dict: dict, start: int, stop: int):
    cfg = ScenarioConfig.from_dict(cfg_dict)
    sampler = _make_sampler(cfg, AlgorithmParams(**params_dict))
    rows = [_one_replica(sampler, cfg.seed, i) for i in range(start, stop)]
    return rows, _violations(sampler)


def generate_replicas(cfg: ScenarioConfig, params: AlgorithmParams, start: int = 0, stop: int | None = None):
    """Rows for replica indices [start, stop) in index order, plus ratio violations seen."""
    stop = cfg.replicas if stop is None else stop
    if cfg.threads == 1 or stop - start < 2 * cfg.threads:
        return _replica_range(cfg.to_dict(), params.to_dict(), start, stop)
    # contiguous chunks, several per worker, gathered back in index order
    n_chunks = cfg.threads * 8
    edges = np.linspace(start, stop, n_chunks + 1).astype(int)
    rows, viol = [], []
    with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
        futs = [ex.submit(_replica_range, cfg.to_dict(), params.to_dict(), int(a), int(b))
                for a, b in zip(edges[:-1], edges[1:]) if b > a]
        for f in futs:
            r, v = f.result()
            rows.extend(r)
            viol.extend(v)
    return rows, viol


# --------------------------------------------------------------------------
# experiment


@dataclass
class ScenarioSummary:
    name: str
    replicas: int
    rho: float
    params: dict
    feasibility: dict | None
    exact: dict
    batch_means: dict | None
    exact_seconds: float
    lindley_seconds: float
    mean_function_evals: float
    ratio_violations: int
    max_violation_ratio: float
    overlap: bool | None
    reference_params: dict | None = None
    audit: dict | None = None
    files: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def traffic_intensity(cfg: ScenarioConfig) -> float:
    """E Y / (E Y + mu) with E Y the mean of the uncentered increment."""
    d = cfg.increment_law()
    return d.offset / (d.offset + cfg.mu)


def write_replica_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPLICA_COLUMNS)
        for r in rows:
            w.writerow((r.replica_id, repr(float(r.M0)), r.first_idle, r.function_evals))


def read_replica_csv(path):
    with open(path, newline="") as fh:
        return [ReplicaRow(int(r["replica_id"]), float(r["M0"]), int(r["first_idle"]), int(r["function_evals"]))
                for r in csv.DictReader(fh)]


def write_lindley_csv(batch_means, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LINDLEY_COLUMNS)
        for i, v in enumerate(batch_means):
            w.writerow((i, repr(float(v))))


def run_lindley(cfg: ScenarioConfig, length: int | None = None, batch: int | None = None):
    length = int(cfg.lindley["length"] if length is None else length)
    batch = int(cfg.lindley["batch"] if batch is None else batch)
    d = cfg.increment_law()
    t0 = time.perf_counter()
    w = oracles.lindley_chain(d, cfg.mu, length, chain_rng(cfg.seed))
    res = oracles.batch_means_ci(w, batch)
    nb = res.n_batches
    means = w[: nb * batch].reshape(nb, batch).mean(axis=1)
    return res, means, time.perf_counter() - t0


def run_experiment(cfg: ScenarioConfig, *, write: bool | None = None, lindley: bool = True,
                   audit: bool = False) -> ScenarioSummary:
    """Exact replicas of M_0 plus the batch-means reference, with optional files.

    Raises :class:`InfeasibleParams` before any sampling when the checker
    rejects the parameters (unless the config opts out of checking).
    """
    params = cfg.algorithm_params()
    law, _, _ = cfg.simulated_law()
    report = check_feasibility(params, law)
    if cfg.check_feasibility and cfg.strict and not report.feasible:
        raise InfeasibleParams(report)
    t0 = time.perf_counter()
    rows, viol = generate_replicas(cfg, params)
    exact_seconds = time.perf_counter() - t0
    m0 = np.array([r.M0 for r in rows])
    exact = oracles.mean_ci(m0) if m0.size > 1 else None
    exact_d = exact.to_dict() if exact else {"mean": float(m0[0]), "lower": float(m0[0]), "upper": float(m0[0])}
    bm, means, lt = (None, None, 0.0)
    if lindley:
        bm, means, lt = run_lindley(cfg)
    ref = cfg.reference_algorithm_params()
    summary = ScenarioSummary(
        name=cfg.name,
        replicas=cfg.replicas,
        rho=traffic_intensity(cfg),
        params=params.to_dict(),
        feasibility=report.to_dict(),
        exact=exact_d,
        batch_means=bm.to_dict() if bm else None,
        exact_seconds=exact_seconds,
        lindley_seconds=lt,
        mean_function_evals=float(np.mean([r.function_evals for r in rows])),
        ratio_violations=len(viol),
        max_violation_ratio=max((v[2] for v in viol), default=0.0),
        overlap=(bm.overlaps(exact_d["lower"], exact_d["upper"]) if bm else None),
        reference_params=ref.to_dict() if ref else None,
        audit=oracles.ratio_bound_audit(params, law).to_dict() if audit else None,
    )
    write = cfg.output_dir is not None if write is None else write
    if write:
        out = Path(cfg.output_dir or f"runs/{cfg.name}")
        out.mkdir(parents=True, exist_ok=True)
        rp = out / "replicas.csv"
        write_replica_csv(rows, rp)
        summary.files["replicas"] = str(rp)
        if means is not None:
            lp = out / "lindley_batches.csv"
            write_lindley_csv(means, lp)
            summary.files["lindley"] = str(lp)
        emit_summary([summary], out)
    summary._rows = rows
    return summary


# --------------------------------------------------------------------------
# summaries


def _fmt(v, width=10):
    if v is None:
        return "-".rjust(width)
    if isinstance(v, float):
        return f"{v:.4f}".rjust(width)
    return str(v).rjust(width)


def summary_table(results) -> str:
    head = ("scenario", "rho", "exact LCI", "exact UCI", "exact s", "batch LCI", "batch UCI", "batch s", "overlap")
    rows = []
    for r in results:
        bm = r.batch_means or {}
        rows.append((r.name, r.rho, r.exact["lower"], r.exact["upper"], r.exact_seconds,
                     bm.get("lower"), bm.get("upper"), r.lindley_seconds if r.batch_means else None,
                     "-" if r.overlap is None else ("yes" if r.overlap else "no")))
    name_w = max(len(head[0]), *(len(r[0]) for r in rows))
    lines = [head[0].ljust(name_w) + "".join(h.rjust(11) for h in head[1:])]
    for row in rows:
        lines.append(row[0].ljust(name_w) + "".join(" " + _fmt(v) for v in row[1:]))
    return "\n".join(lines) + "\n"


def emit_summary(results, out_dir) -> dict:
    """Write summary.json and summary.txt; returns the paths."""
    results = list(results)
    if not results:
        raise ValueError("no results to summarise")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jp, tp = out / "summary.json", out / "summary.txt"
    with open(jp, "w") as fh:
        json.dump([r.to_dict() for r in results], fh, indent=2, default=_json_default)
    with open(tp, "w") as fh:
        fh.write(summary_table(results))
    return {"json": str(jp), "text": str(tp)}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
