"""Active-learning orchestration: the round loop, presets, sweeps, resume.

Each run alternates experiment design, data collection from the ground
truth, particle resampling/SVGD inference and metric evaluation, emitting one
CSV row per round (row t=0 reports post-initialization metrics). All
randomness flows through named streams derived from (seed, concern, round),
so a resumed run consumes exactly the same draws as an uninterrupted one.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import dibs, metrics as metrics_mod, stateio
from .design import DesignConfig, DesignOutcome, design_experiment
from .dibs import DibsConfig, GraphPosterior
from .gp import GpHyperParams, OptConfig
from .graphs import Dag, GraphGenConfig, sample_graph
from .likelihood import MechanismCache, MechanismKey, MechanismRecord
from .metrics import EvalFixture, MetricConfig, build_fixture, compute_metrics
from .scm import (
    Batch,
    Dataset,
    GroundTruthScm,
    InterventionSpec,
    MechanismDraw,
    ScmPriorConfig,
    sample_batch,
    sample_ground_truth,
)
from .utilities import (
    CD_CML_BUDGET,
    CR_BUDGET,
    McBudget,
    QuerySpec,
    UtilityEvaluator,
    freeze_samples,
)

STRATEGIES = ("U_CD", "U_CML", "U_CR", "OBS", "RAND", "RAND_FIXED")

CSV_COLUMNS = [
    "run_id",
    "strategy",
    "t",
    "intervention_target",
    "intervention_value",
    "eshd",
    "auprc",
    "avg_ikld",
    "query_kld",
    "utility_of_chosen",
    "wall_seconds",
    "cache_hits",
    "svgd_iters",
    "cyclic_rejections",
]

_CONCERNS = {"ground_truth": 0, "design": 1, "inference": 2, "metrics": 3}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def rng_stream(seed: int, concern: str, t: int, sub: int = 0) -> np.random.Generator:
    """Named, round-scoped random stream.

    Streams are derived from (seed, concern, round, sub-phase), so any round
    can be replayed without tracking generator positions across rounds.
    """
    key = (_CONCERNS[concern], t, sub)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


FIXED_GRAPH_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 4), (3, 4))


def fixed_graph_preset() -> Dag:
    """The 5-node benchmark graph used for causal-reasoning experiments."""
    return Dag.from_edges(5, FIXED_GRAPH_EDGES)


@dataclass(frozen=True)
class RunConfig:
    # [run]
    run_id: str = "run"
    seed: int = 0
    strategy: str = "OBS"
    n_rounds: int = 20
    batch_size: int = 3
    n_init_obs: int = 5
    out_dir: str = "."
    hp_refit_every: int = 1
    # [graph]
    graph_kind: str = "scale-free"  # scale-free | erdos-renyi | fixed
    d: int = 5
    sf_attach: int = 2
    er_edge_prob: float = -1.0  # <0 means the 4/(d-1) default
    # [query]
    query_enabled: bool = False
    query_treatment: int = 2
    query_outcome: int = 4
    query_psi_low: float = 2.0
    query_psi_high: float = 5.0
    # [budget] (<1 means the per-strategy default)
    n_outer: int = -1
    n_inner: int = -1
    n_outcomes: int = -1
    n_psi: int = -1
    n_y: int = -1
    n_anc: int = -1
    budget_halved: bool = False
    # [dibs]
    n_particles: int = 5
    n_graph_samples: int = 40
    svgd_max_iters: int = 300
    svgd_tol: float = 1e-3
    dibs_beta: float = 100.0
    svgd_step: float = 0.05
    # [design]
    gamma: float = 1.0
    n_bo_rounds: int = 8
    grid_size: int = 512
    domain_low: float = -7.0
    domain_high: float = 7.0
    # [metrics]
    metrics_reduced: bool = False
    # [gp]
    hp_opt_iters: int = 60

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.graph_kind not in ("scale-free", "erdos-renyi", "fixed"):
            raise ConfigError(f"unknown graph kind {self.graph_kind!r}")
        if self.graph_kind == "fixed" and self.d != 5:
            raise ConfigError("the fixed benchmark graph has d=5")
        if self.strategy == "U_CR" and not self.query_enabled:
            raise ConfigError("strategy U_CR requires an enabled query")
        if self.n_rounds < 0 or self.batch_size < 1 or self.n_init_obs < 1:
            raise ConfigError("n_rounds, batch_size, n_init_obs out of range")
        if self.query_enabled and not (
            0 <= self.query_treatment < self.d
            and 0 <= self.query_outcome < self.d
            and self.query_treatment != self.query_outcome
        ):
            raise ConfigError("query nodes out of range")

    # -- derived sub-configurations ----------------------------------------

    def query(self) -> QuerySpec | None:
        if not self.query_enabled:
            return None
        return QuerySpec(
            treatment=self.query_treatment,
            outcome=self.query_outcome,
            psi_low=self.query_psi_low,
            psi_high=self.query_psi_high,
        )

    def budget(self) -> McBudget:
        base = CR_BUDGET if self.strategy == "U_CR" else CD_CML_BUDGET
        kwargs = {}
        for name in ("n_outer", "n_inner", "n_outcomes", "n_psi", "n_y", "n_anc"):
            v = getattr(self, name)
            if v >= 1:
                kwargs[name] = v
        b = replace(base, **kwargs)
        return b.halved() if self.budget_halved else b

    def dibs_config(self) -> DibsConfig:
        return DibsConfig(
            d=self.d,
            n_particles=self.n_particles,
            n_graph_samples=self.n_graph_samples,
            max_iters=self.svgd_max_iters,
            tol=self.svgd_tol,
            beta=self.dibs_beta,
            step=self.svgd_step,
        )

    def design_config(self) -> DesignConfig:
        return DesignConfig(
            gamma=self.gamma,
            n_bo_rounds=self.n_bo_rounds,
            grid_size=self.grid_size,
            domain=(self.domain_low, self.domain_high),
        )

    def metric_config(self) -> MetricConfig:
        cfg = MetricConfig()
        return cfg.reduced() if self.metrics_reduced else cfg

    def graph_gen(self) -> GraphGenConfig | None:
        if self.graph_kind == "fixed":
            return None
        return GraphGenConfig(
            kind=self.graph_kind,
            d=self.d,
            er_edge_prob=self.er_edge_prob if self.er_edge_prob >= 0 else None,
            sf_attach=self.sf_attach,
        )

    def opt_config(self) -> OptConfig:
        return OptConfig(max_iters=self.hp_opt_iters)


_SECTION_FIELDS = {
    "run": (
        "run_id",
        "seed",
        "strategy",
        "n_rounds",
        "batch_size",
        "n_init_obs",
        "out_dir",
        "hp_refit_every",
    ),
    "graph": ("graph_kind", "d", "sf_attach", "er_edge_prob"),
    "query": (
        "query_enabled",
        "query_treatment",
        "query_outcome",
        "query_psi_low",
        "query_psi_high",
    ),
    "budget": (
        "n_outer",
        "n_inner",
        "n_outcomes",
        "n_psi",
        "n_y",
        "n_anc",
        "budget_halved",
    ),
    "dibs": (
        "n_particles",
        "n_graph_samples",
        "svgd_max_iters",
        "svgd_tol",
        "dibs_beta",
        "svgd_step",
    ),
    "design": ("gamma", "n_bo_rounds", "grid_size", "domain_low", "domain_high"),
    "metrics": ("metrics_reduced",),
    "gp": ("hp_opt_iters",),
}


def save_config(cfg: RunConfig, path: str):
    parser = configparser.ConfigParser()
    for section, names in _SECTION_FIELDS.items():
        parser[section] = {name: str(getattr(cfg, name)) for name in names}
    with open(path, "w") as f:
        parser.write(f)


def load_config(path: str) -> RunConfig:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path!r}")
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    kwargs = {}
    known = {name for names in _SECTION_FIELDS.values() for name in names}
    for section in parser.sections():
        if section not in _SECTION_FIELDS:
            raise ConfigError(f"unknown config section [{section}]")
        for name, raw in parser[section].items():
            if name not in known:
                raise ConfigError(f"unknown config key {name!r} in [{section}]")
            t = types[name]
            try:
                if t == "bool":
                    kwargs[name] = raw.strip().lower() in ("1", "true", "yes", "on")
                elif t == "int":
                    kwargs[name] = int(raw)
                elif t == "float":
                    kwargs[name] = float(raw)
                else:
                    kwargs[name] = raw
            except ValueError as exc:
                raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return RunConfig(**kwargs)


def config_hash(cfg: RunConfig) -> str:
    """Hash of everything that affects run results (output paths excluded)."""
    items = [
        f"{f.name}={getattr(cfg, f.name)!r}"
        for f in dataclasses.fields(RunConfig)
        if f.name != "out_dir"
    ]
    return hashlib.sha256("\n".join(items).encode()).hexdigest()


def preset(name: str, **overrides) -> RunConfig:
    """Named configurations; keyword overrides are applied on top."""
    if name == "small":
        base = RunConfig(
            run_id="small",
            graph_kind="scale-free",
            d=5,
            n_rounds=20,
            batch_size=3,
            n_init_obs=5,
            budget_halved=True,
            metrics_reduced=True,
            svgd_max_iters=600,
        )
    elif name == "small-cr":
        base = RunConfig(
            run_id="small-cr",
            graph_kind="fixed",
            d=5,
            n_rounds=20,
            batch_size=3,
            n_init_obs=5,
            budget_halved=True,
            metrics_reduced=True,
            svgd_max_iters=600,
            query_enabled=True,
        )
    elif name == "cd":
        base = RunConfig(
            run_id="cd",
            graph_kind="scale-free",
            d=20,
            n_rounds=35,
            batch_size=5,
            n_init_obs=50,
        )
    elif name == "cr":
        base = RunConfig(
            run_id="cr",
            graph_kind="fixed",
            d=5,
            n_rounds=30,
            batch_size=3,
            n_init_obs=5,
            query_enabled=True,
        )
    else:
        raise ConfigError(f"unknown preset {name!r}")
    return replace(base, **overrides)


def preset_names() -> tuple[str, ...]:
    return ("small", "small-cr", "cd", "cr")


# ---------------------------------------------------------------------------
# run state


@dataclass
class RunState:
    config: RunConfig
    scm_star: GroundTruthScm
    data: Dataset
    z: np.ndarray
    cache: MechanismCache
    fixture: EvalFixture
    completed_t: int
    rows: list[dict]


def _state_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.out_dir, f"{cfg.run_id}.state")


def _csv_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.out_dir, f"{cfg.run_id}.csv")


def save_state(state: RunState, path: str):
    cfg = state.config
    meta: dict = {
        "config_hash": config_hash(cfg),
        "config": {f.name: getattr(cfg, f.name) for f in dataclasses.fields(RunConfig)},
        "completed_t": state.completed_t,
        "rows": state.rows,
    }
    arrays: dict[str, np.ndarray] = {"z": state.z}
    # ground truth
    g = state.scm_star
    arrays["g_star"] = g.graph.adjacency
    roots_sorted = sorted(g.root_params)
    meta["root_nodes"] = roots_sorted
    arrays["root_params"] = np.array([g.root_params[i] for i in roots_sorted])
    nonroots = sorted(g.mechanisms)
    meta["nonroot_nodes"] = nonroots
    arrays["noise_vars"] = np.array([g.noise_vars[i] for i in nonroots])
    for i in nonroots:
        m = g.mechanisms[i]
        arrays[f"mech_{i}_hp"] = np.array(
            [m.hp.lengthscale, m.hp.outputscale, m.hp.noise]
        )
        arrays[f"mech_{i}_points"] = m.points
        arrays[f"mech_{i}_values"] = m.values
    # dataset
    meta["batches"] = [
        {"targets": list(map(list, b.spec.targets)), "t": b.t} for b in state.data.batches
    ]
    for k, b in enumerate(state.data.batches):
        arrays[f"batch_{k}"] = b.data
    # fitted hyperparameters per mechanism key
    keys = sorted(
        (k for k, rec in state.cache.records.items() if rec.hp is not None),
        key=lambda k: (k.node, k.parents),
    )
    meta["cache_keys"] = [
        {"node": k.node, "parents": list(k.parents), "version": state.cache.records[k].hp_version}
        for k in keys
    ]
    if keys:
        arrays["cache_hps"] = np.array(
            [
                [r.hp.lengthscale, r.hp.outputscale, r.hp.noise]
                for r in (state.cache.records[k] for k in keys)
            ]
        )
    # metric fixture
    fx = state.fixture
    meta["fixture"] = {
        "anc_seed": fx.anc_seed,
        "cfg": dataclasses.asdict(fx.cfg),
        "has_query": fx.query is not None,
    }
    arrays["fx_psi_query"] = fx.psi_query
    arrays["fx_y_query"] = fx.y_query
    arrays["fx_logp_true_y"] = fx.logp_true_y
    arrays["fx_psi_ikld"] = fx.psi_ikld
    arrays["fx_x_ikld"] = fx.x_ikld
    arrays["fx_logp_true_x"] = fx.logp_true_x
    stateio.write_state(path, meta, arrays)


def load_state(path: str, cfg: RunConfig) -> RunState:
    meta, arrays = stateio.read_state(path)
    if meta["config_hash"] != config_hash(cfg):
        raise ConfigError("state file was produced by a different configuration")
    prior_cfg = ScmPriorConfig()
    graph = Dag(arrays["g_star"].astype(np.int8))
    root_params = {
        int(i): (float(mu), float(var))
        for i, (mu, var) in zip(meta["root_nodes"], arrays["root_params"])
    }
    mechanisms: dict[int, MechanismDraw] = {}
    noise_vars: dict[int, float] = {}
    for idx, i in enumerate(meta["nonroot_nodes"]):
        i = int(i)
        noise_vars[i] = float(arrays["noise_vars"][idx])
        ls, os_, nv = arrays[f"mech_{i}_hp"]
        m = MechanismDraw(GpHyperParams(float(ls), float(os_), float(nv)))
        m.points = arrays[f"mech_{i}_points"]
        m.values = arrays[f"mech_{i}_values"]
        m.rebuild_index()
        mechanisms[i] = m
    scm_star = GroundTruthScm(graph, root_params, mechanisms, noise_vars)
    batches = []
    for k, info in enumerate(meta["batches"]):
        spec = InterventionSpec(tuple((int(i), float(v)) for i, v in info["targets"]))
        batches.append(Batch(spec=spec, data=arrays[f"batch_{k}"], t=int(info["t"])))
    data = Dataset(batches)
    cache = MechanismCache(prior_cfg, opt=cfg.opt_config())
    for entry, hp in zip(meta["cache_keys"], arrays.get("cache_hps", np.zeros((0, 3)))):
        key = MechanismKey(int(entry["node"]), tuple(int(p) for p in entry["parents"]))
        # build the record directly; record_for would trigger a fresh fit
        rec = MechanismRecord(key, prior_cfg)
        rec.hp = GpHyperParams(float(hp[0]), float(hp[1]), float(hp[2]))
        rec.hp_version = int(entry["version"])
        cache.records[key] = rec
    fxmeta = meta["fixture"]
    fixture = EvalFixture(
        query=cfg.query() if fxmeta["has_query"] else None,
        psi_query=arrays["fx_psi_query"],
        y_query=arrays["fx_y_query"],
        logp_true_y=arrays["fx_logp_true_y"],
        psi_ikld=arrays["fx_psi_ikld"],
        x_ikld=arrays["fx_x_ikld"],
        logp_true_x=arrays["fx_logp_true_x"],
        anc_seed=int(fxmeta["anc_seed"]),
        cfg=MetricConfig(**fxmeta["cfg"]),
    )
    return RunState(
        config=cfg,
        scm_star=scm_star,
        data=data,
        z=arrays["z"],
        cache=cache,
        fixture=fixture,
        completed_t=int(meta["completed_t"]),
        rows=list(meta["rows"]),
    )


def write_csv(rows: list[dict], path: str):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in CSV_COLUMNS})


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return v


# ---------------------------------------------------------------------------
# the round loop


def _rebuild_posterior(state: RunState, t: int) -> GraphPosterior:
    """The posterior draw of round t, reproducible from its named stream."""
    state.cache.begin_round()
    return dibs.sample_posterior(
        state.z,
        state.cache,
        state.data,
        state.config.dibs_config().n_graph_samples,
        rng_stream(state.config.seed, "inference", t, sub=1),
    )


def _design(
    state: RunState, posterior: GraphPosterior, t: int
) -> tuple[InterventionSpec, float]:
    cfg = state.config
    rng = rng_stream(cfg.seed, "design", t)
    strategy = cfg.strategy
    lo, hi = cfg.domain_low, cfg.domain_high
    if strategy == "OBS":
        return InterventionSpec.observational(), float("nan")
    if strategy in ("RAND", "RAND_FIXED"):
        pick = int(rng.integers(0, cfg.d + 1))
        if pick == cfg.d:
            return InterventionSpec.observational(), float("nan")
        value = float(rng.uniform(lo, hi)) if strategy == "RAND" else 0.0
        return InterventionSpec.single(pick, value), float("nan")
    budget = cfg.budget()
    query = cfg.query() if strategy == "U_CR" else None
    frozen = freeze_samples(posterior, budget, rng, query=query)
    evaluator = UtilityEvaluator(
        state.cache, state.data, frozen, budget, query=cfg.query()
    )
    outcome = design_experiment(
        lambda spec: evaluator.evaluate(strategy, spec, cfg.batch_size).value,
        cfg.d,
        cfg.design_config(),
        rng,
    )
    return outcome.spec, outcome.utility


def _metrics_row(
    state: RunState,
    posterior: GraphPosterior,
    t: int,
    spec: InterventionSpec | None,
    utility: float,
    wall: float,
    svgd_iters: int,
    cyclic: int,
) -> dict:
    cfg = state.config
    m = compute_metrics(
        posterior, state.cache, state.data, state.scm_star.graph, state.fixture
    )
    if spec is None or spec.is_observational:
        target, value = -1, 0.0
    else:
        target, value = spec.targets[0]
    return {
        "run_id": cfg.run_id,
        "strategy": cfg.strategy,
        "t": t,
        "intervention_target": target,
        "intervention_value": value,
        "eshd": m.eshd,
        "auprc": m.auprc,
        "avg_ikld": m.avg_ikld,
        "query_kld": m.query_kld,
        "utility_of_chosen": utility,
        "wall_seconds": wall,
        "cache_hits": state.cache.hits,
        "svgd_iters": svgd_iters,
        "cyclic_rejections": cyclic,
    }


def initialize_run(cfg: RunConfig) -> RunState:
    """Sample the ground truth, collect initial observations, round-0 inference."""
    prior_cfg = ScmPriorConfig()
    rng_gt = rng_stream(cfg.seed, "ground_truth", 0)
    if cfg.graph_kind == "fixed":
        graph = fixed_graph_preset()
    else:
        graph = sample_graph(cfg.graph_gen(), rng_gt)
    scm_star = sample_ground_truth(graph, prior_cfg, rng_gt)
    data = Dataset()
    data.append(
        sample_batch(scm_star, InterventionSpec.observational(), cfg.n_init_obs, rng_gt, t=0)
    )
    cache = MechanismCache(prior_cfg, opt=cfg.opt_config())
    z = dibs.init_particles(cfg.dibs_config(), rng_stream(cfg.seed, "inference", 0, sub=3))
    fixture = build_fixture(
        scm_star, cfg.query(), cfg.metric_config(), rng_stream(cfg.seed, "metrics", 0)
    )
    return RunState(
        config=cfg,
        scm_star=scm_star,
        data=data,
        z=z,
        cache=cache,
        fixture=fixture,
        completed_t=-1,
        rows=[],
    )


def run_round(state: RunState, t: int, posterior: GraphPosterior | None) -> GraphPosterior:
    """Execute round t (t=0: inference on initial data only) and log its row."""
    cfg = state.config
    start = time.perf_counter()
    spec: InterventionSpec | None = None
    utility = float("nan")
    if t > 0:
        spec, utility = _design(state, posterior, t)
        rng_gt = rng_stream(cfg.seed, "ground_truth", t)
        state.data.append(sample_batch(state.scm_star, spec, cfg.batch_size, rng_gt, t=t))
    state.cache.begin_round()
    dibs_cfg = cfg.dibs_config()
    cyclic = 0
    if t > 0 and dibs.resample_round(t):
        state.z = dibs.resample_particles(
            state.z,
            state.cache,
            state.data,
            dibs_cfg,
            rng_stream(cfg.seed, "inference", t, sub=2),
        )
    if t == 0 or cfg.hp_refit_every < 1 or t % cfg.hp_refit_every == 0:
        state.cache.refit_all(state.data)
    svgd = dibs.svgd_fit(
        state.z, state.cache, state.data, dibs_cfg, rng_stream(cfg.seed, "inference", t, sub=0)
    )
    state.z = svgd.z
    cyclic += svgd.n_cyclic_rejections
    posterior = dibs.sample_posterior(
        state.z,
        state.cache,
        state.data,
        dibs_cfg.n_graph_samples,
        rng_stream(cfg.seed, "inference", t, sub=1),
    )
    cyclic += posterior.n_cyclic_rejections
    wall = time.perf_counter() - start
    state.rows.append(
        _metrics_row(state, posterior, t, spec, utility, wall, svgd.n_iters, cyclic)
    )
    state.completed_t = t
    return posterior


def run(cfg: RunConfig, resume_from: str | None = None) -> list[dict]:
    """Execute a full run (optionally resuming) and write CSV plus state."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    if resume_from is not None:
        state = load_state(resume_from, cfg)
        if state.completed_t >= cfg.n_rounds:
            write_csv(state.rows, _csv_path(cfg))
            return state.rows
        posterior = _rebuild_posterior(state, state.completed_t)
        start_t = state.completed_t + 1
    else:
        state = initialize_run(cfg)
        posterior = None
        start_t = 0
    for t in range(start_t, cfg.n_rounds + 1):
        try:
            posterior = run_round(state, t, posterior)
        except Exception:
            save_state(state, _state_path(cfg))
            raise
        save_state(state, _state_path(cfg))
        write_csv(state.rows, _csv_path(cfg))
    return state.rows


# ---------------------------------------------------------------------------
# sweeps


def _sweep_one(args):
    cfg, = args
    rows = run(cfg)
    return cfg.run_id, rows


def sweep(
    base: RunConfig,
    seeds: list[int],
    strategies: list[str],
    n_workers: int | None = None,
) -> dict[str, list[dict]]:
    """Run seeds x strategies as independent processes; returns rows per run."""
    jobs = []
    for strategy in strategies:
        for seed in seeds:
            cfg = replace(
                base,
                seed=seed,
                strategy=strategy,
                run_id=f"{base.run_id}_{strategy}_s{seed}",
            )
            jobs.append((cfg,))
    if n_workers is None:
        n_workers = int(os.environ.get("CAUSALBED_WORKERS", os.cpu_count() or 1))
    results: dict[str, list[dict]] = {}
    if n_workers <= 1 or len(jobs) == 1:
        for job in jobs:
            run_id, rows = _sweep_one(job)
            results[run_id] = rows
    else:
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        with ctx.Pool(min(n_workers, len(jobs))) as pool:
            for run_id, rows in pool.map(_sweep_one, jobs):
                results[run_id] = rows
    return results
