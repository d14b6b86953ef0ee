"""Metrics and the multi-planner, multi-domain experiment harness."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import bayes
from .actionset import DEFAULT_N_ACTIONS
from .planner import EpisodeEnvironment, Planner, run_episode


def mrr(results) -> float:
    """Mean reciprocal rank over episode results (or raw integer ranks)."""
    ranks = [r if isinstance(r, (int, np.integer)) else r.rank for r in results]
    if not ranks:
        raise ValueError("mrr of an empty result list")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks must be >= 1")
    return float(np.mean([1.0 / r for r in ranks]))


def bootstrap_ci(per_episode_rr, n_resamples: int = 1000, seed: int = 0,
                 level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap CI of the mean reciprocal rank."""
    x = np.asarray(per_episode_rr, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty sample")
    if n_resamples < 100:
        raise ValueError("n_resamples must be >= 100")
    rng = np.random.default_rng(np.random.SeedSequence([0xB007, seed]))
    idx = rng.integers(0, x.size, size=(n_resamples, x.size))
    means = x[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


@dataclass(frozen=True)
class ExperimentConfig:
    episodes: int = 5000
    T: int = 3
    n_actions: int = DEFAULT_N_ACTIONS
    seed: int = 0
    bootstrap_resamples: int = 1000
    shortlist_k: int | None = None   # optional top-k cutoff; rank beyond k scores 0
    motion_kind: str = "deterministic"
    motion_sigma_m: float = 0.5

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")

    def motion_model(self) -> bayes.MotionModel:
        return bayes.MotionModel(kind=self.motion_kind, sigma_m=self.motion_sigma_m)


@dataclass
class CellResult:
    planner: str
    domain: str
    mrr: float
    ci_lo: float
    ci_hi: float
    episodes: int
    per_episode_rr: np.ndarray = field(repr=False, default=None)


@dataclass
class ResultTable:
    cells: list[CellResult]
    planners: list[str]
    domains: list[str]

    def cell(self, planner: str, domain: str) -> CellResult:
        for c in self.cells:
            if c.planner == planner and c.domain == domain:
                return c
        raise KeyError((planner, domain))

    def write_csv(self, path) -> None:
        """Wide table: rows = planners, cols = domains, cell = mrr [lo, hi]."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["planner"] + self.domains)
            for p in self.planners:
                row = [p]
                for d in self.domains:
                    c = self.cell(p, d)
                    row.append(f"{c.mrr:.4f} [{c.ci_lo:.4f}, {c.ci_hi:.4f}]")
                writer.writerow(row)

    def write_long_csv(self, path) -> None:
        """Plot-ready long format, one row per (planner, domain)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["planner", "domain", "mrr", "ci_lo", "ci_hi", "episodes"])
            for c in self.cells:
                writer.writerow(
                    [c.planner, c.domain, f"{c.mrr:.6f}", f"{c.ci_lo:.6f}",
                     f"{c.ci_hi:.6f}", c.episodes]
                )


def episode_score(result, shortlist_k: int | None) -> float:
    """Reciprocal rank, or 0 when the truth falls outside the shortlist."""
    if shortlist_k is not None and result.rank > shortlist_k:
        return 0.0
    return result.reciprocal_rank


def _run_cell(world, name, planner, domain, cfg, provider, collect_raw):
    env = EpisodeEnvironment(
        world,
        domain,
        T=cfg.T,
        motion_model=cfg.motion_model(),
        ilc_provider=provider,
        variant=planner.variant,
        n_actions=cfg.n_actions,
        seed=cfg.seed,
    )
    rrs = np.zeros(cfg.episodes)
    raw = []
    for ep in range(cfg.episodes):
        result = run_episode(env, planner, episode=ep, keep_trace=False)
        rrs[ep] = episode_score(result, cfg.shortlist_k)
        if collect_raw:
            rec = result.to_json_dict()
            rec.update({"planner": name, "domain": domain.id, "episode": ep})
            raw.append(rec)
    lo, hi = bootstrap_ci(rrs, cfg.bootstrap_resamples, seed=cfg.seed)
    cell = CellResult(
        planner=name, domain=domain.id, mrr=float(rrs.mean()),
        ci_lo=lo, ci_hi=hi, episodes=cfg.episodes, per_episode_rr=rrs,
    )
    return cell, raw


def run_experiment(
    world,
    planners: dict[str, Planner],
    domains,
    cfg: ExperimentConfig,
    ilc_providers: dict[str, object] | None = None,
    raw_sink=None,
    jobs: int = 1,
) -> ResultTable:
    """Evaluate every planner on every domain; deterministic per (cfg, world).

    `ilc_providers` maps planner name -> ILC provider for variants that
    need one. `raw_sink`, when given, receives one JSON-serializable dict
    per episode. Episodes are seeded independently of execution order, so
    results do not depend on `jobs` (parallelism over table cells).
    """
    ilc_providers = ilc_providers or {}
    tasks = [
        (name, planner, d) for name, planner in planners.items() for d in domains
    ]
    collect_raw = raw_sink is not None
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(
                    _run_cell, world, name, planner, d, cfg,
                    ilc_providers.get(name), collect_raw,
                )
                for name, planner, d in tasks
            ]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [
            _run_cell(world, name, planner, d, cfg, ilc_providers.get(name), collect_raw)
            for name, planner, d in tasks
        ]
    cells = []
    for (cell, raw) in outcomes:
        cells.append(cell)
        for rec in raw:
            raw_sink(rec)
    return ResultTable(
        cells=cells,
        planners=list(planners.keys()),
        domains=[d.id for d in domains],
    )


def write_raw_jsonl(path):
    """Returns (sink, close) writing one JSON line per episode record."""
    fh = open(path, "w")

    def sink(record: dict):
        fh.write(json.dumps(record, sort_keys=True) + "\n")

    return sink, fh.close
