"""Config-driven experiment runner: training, evaluation, comparison.

Methods
-------
ADRL     two-stage multi-view training with attention fusion
DDPG     single-view baseline (one learner on one view)
ACT-AVG  multi-view ensemble executing the mean of the workers' actions
ACT-CNT  ensemble executing the medoid action
ACT-MJV  ensemble executing the per-dimension binned majority action
FT-COMB  one learner on the concatenation of all views

Every run is driven by one master seed; the environment, network init,
exploration noise and replay sampling each consume their own named stream.
A run directory holds ``config.json``, ``episodes.csv``, ``attention.csv``
(fused methods only), ``eval.csv``, ``summary.json`` and ``models/``.

CSV schemas (columns in order):

* episodes.csv: phase, iteration, stage, episode, agent, steps, return,
  shaped_return, mean_deviation, eps_global, eps_w<i>..., att_w<i>...
* attention.csv: phase, episode, step, p_w<i>...
* eval.csv: episode, steps, return, time_sec, distance_m
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .combiners import COMBINERS, concat_features
from .coordinator import (AdrlTrainer, EpisodeStats, ExplorationSchedule,
                          TrainingSchedule, deviation, load_adrl_bundle,
                          save_adrl_bundle)
from .attention import AttentionEncoder, AttentionGate
from .ddpg import AgentHyper, ConcatEncoder, DDPGAgent, IdentityEncoder, Transition
from .nn import load_net, save_net
from .seeding import stream_rng, stream_seed
from .workers import WorkerAgent

METHODS = ("ADRL", "DDPG", "ACT-AVG", "ACT-CNT", "ACT-MJV", "FT-COMB")

DEFAULT_OUTPUT_ENV = "MVRL_OUT"


def output_root(explicit=None):
    return explicit or os.environ.get(DEFAULT_OUTPUT_ENV) or "runs"


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; defaults follow the reference setup."""

    method: str = "ADRL"
    env: dict = field(default_factory=dict)
    iterations: int = 30
    episodes_per_iteration: int = 20
    gamma: float = 0.99
    gamma_r: float = 0.1
    deviation_window: int = 1000
    kappa: float = 1.0
    eps_min: float = 0.05
    eps_max: float = 0.5
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 32
    replay_capacity: int = 100_000
    tau: float = 0.001
    warmup: int = 1000
    seeds: tuple = (0, 1, 2, 3, 4)
    eval_episodes: int = 20
    max_env_steps: int | None = None
    perturb_view: tuple | None = None     # (view index, sigma2), applied at test time
    irrelevant_views: tuple = ()          # view indices, applied at test time
    adaptation_steps: int = 0             # extra joint-training steps after the switch
    checkpoint_every: int = 1             # 0 disables per-iteration checkpoints
    view_index: int = 0                   # the view single-view baselines consume

    def validate(self):
        """Collect every problem before aborting."""
        problems = []
        if self.method not in METHODS:
            problems.append(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.iterations < 1 or self.episodes_per_iteration < 1:
            problems.append("iterations and episodes_per_iteration must be positive")
        if not 0.0 <= self.gamma < 1.0:
            problems.append(f"gamma must be in [0, 1), got {self.gamma}")
        if self.gamma_r < 0:
            problems.append("gamma_r must be nonnegative")
        if self.deviation_window < 1:
            problems.append("deviation_window must be positive")
        if not 0 <= self.eps_min <= self.eps_max:
            problems.append("need 0 <= eps_min <= eps_max")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            problems.append("learning rates must be positive")
        if self.batch_size < 1:
            problems.append("batch_size must be at least 1")
        if self.replay_capacity < 1:
            problems.append("replay_capacity must be at least 1")
        if not 0.0 < self.tau <= 1.0:
            problems.append("tau must be in (0, 1]")
        if not self.seeds:
            problems.append("at least one seed is required")
        if self.eval_episodes < 1:
            problems.append("eval_episodes must be at least 1")
        if self.max_env_steps is not None and self.max_env_steps < 0:
            problems.append("max_env_steps must be nonnegative")
        if self.perturb_view is not None:
            if len(self.perturb_view) != 2 or self.perturb_view[1] < 0:
                problems.append("perturb_view must be (view index, nonnegative sigma2)")
        if self.adaptation_steps < 0:
            problems.append("adaptation_steps must be nonnegative")
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))
        return self

    def hyper(self):
        return AgentHyper(gamma=self.gamma, actor_lr=self.actor_lr,
                          critic_lr=self.critic_lr, batch_size=self.batch_size,
                          tau=self.tau, replay_capacity=self.replay_capacity,
                          warmup=self.warmup, eps=self.eps_min)

    def schedule(self):
        return TrainingSchedule(iterations=self.iterations,
                                episodes_per_iteration=self.episodes_per_iteration)

    def build_env(self):
        from .env import TrackEnv

        return TrackEnv.from_config(self.env)

    def to_dict(self):
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["irrelevant_views"] = list(self.irrelevant_views)
        d["perturb_view"] = list(self.perturb_view) if self.perturb_view else None
        return d

    @classmethod
    def from_dict(cls, data):
        d = dict(data)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        if "irrelevant_views" in d:
            d["irrelevant_views"] = tuple(d["irrelevant_views"])
        if d.get("perturb_view"):
            d["perturb_view"] = tuple(d["perturb_view"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


class RunLogger:
    """Streams the per-episode and per-step CSV logs of one run."""

    def __init__(self, run_dir, n_views, log_attention=True):
        self.n_views = n_views
        os.makedirs(run_dir, exist_ok=True)
        self._ep = open(os.path.join(run_dir, "episodes.csv"), "w")
        cols = ["phase", "iteration", "stage", "episode", "agent", "steps",
                "return", "shaped_return", "mean_deviation", "eps_global"]
        cols += [f"eps_w{i}" for i in range(n_views)]
        cols += [f"att_w{i}" for i in range(n_views)]
        self._ep.write(",".join(cols) + "\n")
        self._att = None
        if log_attention:
            self._att = open(os.path.join(run_dir, "attention.csv"), "w")
            self._att.write(
                ",".join(["phase", "episode", "step"]
                         + [f"p_w{i}" for i in range(n_views)]) + "\n")

    def episode(self, ep: EpisodeStats, phase="train"):
        row = [phase, ep.iteration, ep.stage, ep.episode, ep.agent, ep.steps,
               _fmt(ep.ret), _fmt(ep.shaped_ret), _fmt(ep.mean_deviation),
               _fmt(ep.eps_global)]
        eps_w = list(ep.eps_workers) + [float("nan")] * (self.n_views - len(ep.eps_workers))
        row += [_fmt(float(e)) for e in eps_w]
        if ep.att_means is None:
            row += [""] * self.n_views
        else:
            row += [_fmt(float(a)) for a in ep.att_means]
        self._ep.write(",".join(str(c) for c in row) + "\n")

    def attention(self, phase, episode, step, p):
        if self._att is None:
            return
        self._att.write(",".join([phase, str(episode), str(step)]
                                 + [_fmt(float(v)) for v in p]) + "\n")

    def close(self):
        self._ep.close()
        if self._att is not None:
            self._att.close()


@dataclass
class TrainedModel:
    """A trained policy plus the pieces needed to save or adapt it."""

    method: str
    act: callable                  # obs list -> (action, attention weights | None)
    components: dict
    trainer: AdrlTrainer | None = None
    encoder: object | None = None


@dataclass
class RunRecord:
    method: str
    seed: int
    run_dir: str
    eval_rows: list
    train_rows: list
    summary: dict


# -- training loops per method ----------------------------------------------------


def _single_agent_policy(agent, encoder):
    def act(obs):
        return agent.policy(encoder.encode_one(obs)), None

    return act


def _train_single_agent(env, cfg, seed, logger, encoder, agent_label, store_all_views):
    """Shared loop for the DDPG and FT-COMB baselines: one learner, plain episodes."""
    hyper = cfg.hyper()
    agent = DDPGAgent(encoder.state_dim, env.action_dim, hyper,
                      stream_rng(seed, "init", agent_label))
    explore_rng = stream_rng(seed, "explore")
    replay_rng = stream_rng(seed, "replay")
    eps = cfg.eps_min
    total_steps = 0
    vi = cfg.view_index
    for ep_index in range(cfg.iterations * cfg.episodes_per_iteration):
        if cfg.max_env_steps is not None and total_steps >= cfg.max_env_steps:
            break
        result = env.reset(stream_seed(seed, "env", ep_index))
        obs = result.observations
        ret = 0.0
        steps = 0
        while True:
            action = agent.select_action(encoder.encode_one(obs), eps, explore_rng)
            result = env.step(action)
            views = list(obs) if store_all_views else [obs[vi]]
            next_views = (list(result.observations) if store_all_views
                          else [result.observations[vi]])
            agent.buffer.store(Transition(views=views, action=action,
                                          reward=result.reward,
                                          next_views=next_views,
                                          terminal=result.terminal))
            if len(agent.buffer) >= max(hyper.warmup, hyper.batch_size):
                batch = agent.buffer.sample(hyper.batch_size, replay_rng)
                agent.critic_update(batch, encoder)
                agent.actor_update(batch, encoder)
                agent.update_targets()
            ret += result.reward
            steps += 1
            obs = result.observations
            if result.terminal:
                break
        total_steps += steps
        if logger is not None:
            logger.episode(EpisodeStats(
                iteration=ep_index // cfg.episodes_per_iteration + 1, stage=1,
                episode=ep_index, agent=agent_label, steps=steps, ret=ret,
                shaped_ret=ret, mean_deviation=0.0,
                eps_workers=np.array([eps]), eps_global=eps))
    return agent, total_steps


def train_ddpg(env, cfg, seed, logger):
    vi = cfg.view_index
    # Transitions store only the consumed view, so the stored-side encoder
    # reads index 0 while live observations are read at the configured index.
    encoder = _StoredViewEncoder(IdentityEncoder(env.view_dims[vi], view_index=0), vi)
    agent, steps = _train_single_agent(env, cfg, seed, logger, encoder,
                                       "ddpg", store_all_views=False)
    return TrainedModel(method="DDPG", act=_single_agent_policy(agent, encoder),
                        components={"kind": "single", "agent": agent,
                                    "view_index": vi, "env_steps": steps})


class _StoredViewEncoder:
    """Encoder over stored singleton views that reads live observations at index vi."""

    def __init__(self, inner, live_index):
        self.inner = inner
        self.live_index = live_index
        self.state_dim = inner.state_dim

    def encode(self, views):
        return self.inner.encode(views)

    def encode_training(self, views):
        return self.inner.encode_training(views)

    def backward_and_step(self, dstate):
        self.inner.backward_and_step(dstate)

    def encode_one(self, obs_list):
        return np.asarray(obs_list[self.live_index], dtype=np.float64)


def train_ftcomb(env, cfg, seed, logger):
    encoder = ConcatEncoder(env.view_dims)
    agent, steps = _train_single_agent(env, cfg, seed, logger, encoder,
                                       "ftcomb", store_all_views=True)
    return TrainedModel(method="FT-COMB", act=_single_agent_policy(agent, encoder),
                        components={"kind": "single", "agent": agent,
                                    "view_index": None, "env_steps": steps})


def train_ensemble(env, cfg, seed, logger, method):
    """Workers trained like stage-1 multi-view workers, raw rewards only;
    the executed action is the combination of the workers' noisy selections."""
    combine = COMBINERS[method]
    hyper = cfg.hyper()
    n = env.n_views
    workers = [WorkerAgent(env.view_dims[w], env.action_dim, hyper,
                           stream_rng(seed, "init", "worker", w))
               for w in range(n)]
    sched = ExplorationSchedule(n, window=cfg.deviation_window, kappa=cfg.kappa,
                                eps_min=cfg.eps_min, eps_max=cfg.eps_max)
    explore_rng = stream_rng(seed, "explore")
    replay_rng = stream_rng(seed, "replay")
    total_steps = 0
    for ep_index in range(cfg.iterations * cfg.episodes_per_iteration):
        if cfg.max_env_steps is not None and total_steps >= cfg.max_env_steps:
            break
        result = env.reset(stream_seed(seed, "env", ep_index))
        obs = result.observations
        ret = 0.0
        dev_sum = 0.0
        steps = 0
        while True:
            proposals = [w.propose(obs[v]) for v, w in enumerate(workers)]
            noisy = [np.clip(proposals[v]
                             + sched.eps_worker(v) * explore_rng.standard_normal(env.action_dim),
                             -1.0, 1.0)
                     for v in range(n)]
            action = np.clip(combine(noisy), -1.0, 1.0)
            dev_vec, dev_mean = deviation(np.column_stack(proposals))
            sched.update(dev_vec)
            result = env.step(action)
            for v, w in enumerate(workers):
                w.agent.buffer.store(Transition(
                    views=[obs[v]], action=action, reward=result.reward,
                    next_views=[result.observations[v]], terminal=result.terminal))
            for w in workers:
                if len(w.agent.buffer) >= max(hyper.warmup, hyper.batch_size):
                    w.update(replay_rng)
            ret += result.reward
            dev_sum += dev_mean
            steps += 1
            obs = result.observations
            if result.terminal:
                break
        total_steps += steps
        if logger is not None:
            logger.episode(EpisodeStats(
                iteration=ep_index // cfg.episodes_per_iteration + 1, stage=1,
                episode=ep_index, agent="ensemble", steps=steps, ret=ret,
                shaped_ret=ret, mean_deviation=dev_sum / steps,
                eps_workers=sched.eps_workers.copy(), eps_global=sched.eps_global))

    def act(obs):
        return combine([w.propose(obs[v]) for v, w in enumerate(workers)]), None

    return TrainedModel(method=method, act=act,
                        components={"kind": "ensemble", "workers": workers,
                                    "env_steps": total_steps})


def train_adrl(env, cfg, seed, logger, checkpoint_dir=None):
    trainer = AdrlTrainer(
        env, hyper=cfg.hyper(), schedule=cfg.schedule(), gamma_r=cfg.gamma_r,
        window=cfg.deviation_window, kappa=cfg.kappa, eps_min=cfg.eps_min,
        eps_max=cfg.eps_max, master_seed=seed, logger=logger,
        checkpoint_dir=checkpoint_dir, checkpoint_every=cfg.checkpoint_every,
        max_env_steps=cfg.max_env_steps,
    )
    trainer.train()

    def act(obs):
        state, p = trainer.encoder.encode_one(obs)
        return trainer.global_agent.policy(state), p

    return TrainedModel(method="ADRL", act=act,
                        components={"kind": "adrl", "workers": trainer.workers,
                                    "gate": trainer.gate,
                                    "global_agent": trainer.global_agent,
                                    "env_steps": trainer.total_env_steps},
                        trainer=trainer, encoder=trainer.encoder)


def train_model(env, cfg, seed, logger, checkpoint_dir=None):
    method = cfg.method
    if method == "ADRL" and env.n_views == 1:
        # A single view needs no attention: the pipeline reduces to the plain
        # single-view learner, bit for bit.
        return train_ddpg(env, cfg, seed, logger)
    if method == "ADRL":
        return train_adrl(env, cfg, seed, logger, checkpoint_dir=checkpoint_dir)
    if method == "DDPG":
        return train_ddpg(env, cfg, seed, logger)
    if method == "FT-COMB":
        return train_ftcomb(env, cfg, seed, logger)
    if method in COMBINERS:
        return train_ensemble(env, cfg, seed, logger, method)
    raise ValueError(f"unknown method {method!r}")


# -- evaluation ---------------------------------------------------------------------


def evaluate_policy(env, act, episodes, master_seed, logger=None):
    """Noise-free rollouts; returns one row per episode."""
    rows = []
    for i in range(episodes):
        result = env.reset(stream_seed(master_seed, "eval-env", i))
        obs = result.observations
        ret = 0.0
        steps = 0
        info = result.info
        while True:
            action, p = act(obs)
            if p is not None and logger is not None:
                logger.attention("eval", i, steps, p)
            result = env.step(np.clip(action, -1.0, 1.0))
            ret += result.reward
            steps += 1
            obs = result.observations
            info = result.info
            if result.terminal:
                break
        rows.append({"episode": i, "steps": steps, "return": ret,
                     "time_sec": info["time"], "distance_m": info["distance"]})
    return rows


def _summary_stats(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


# -- single run ---------------------------------------------------------------------


def run_single(cfg, seed, run_dir):
    """Train one method with one seed, apply the test protocol, evaluate."""
    cfg.validate()
    os.makedirs(run_dir, exist_ok=True)
    env = cfg.build_env()
    fused = cfg.method == "ADRL" and env.n_views > 1
    logger = RunLogger(run_dir, env.n_views, log_attention=fused)
    checkpoint_dir = (os.path.join(run_dir, "checkpoints")
                      if fused and cfg.checkpoint_every else None)
    resolved = cfg.to_dict()
    resolved["seed"] = seed
    resolved["env"] = env.to_config()
    with open(os.path.join(run_dir, "config.json"), "w") as fh:
        json.dump(resolved, fh, indent=2)

    model = train_model(env, cfg, seed, logger, checkpoint_dir=checkpoint_dir)

    if cfg.perturb_view is not None:
        env.perturb_view(int(cfg.perturb_view[0]), float(cfg.perturb_view[1]))
    if cfg.irrelevant_views:
        env.make_irrelevant([int(i) for i in cfg.irrelevant_views])
    if cfg.adaptation_steps and model.trainer is not None:
        model.trainer.adapt(cfg.adaptation_steps)

    eval_rows = evaluate_policy(env, model.act, cfg.eval_episodes, seed, logger=logger)
    logger.close()

    with open(os.path.join(run_dir, "eval.csv"), "w") as fh:
        fh.write("episode,steps,return,time_sec,distance_m\n")
        for r in eval_rows:
            fh.write(",".join([str(r["episode"]), str(r["steps"]), _fmt(r["return"]),
                               _fmt(r["time_sec"]), _fmt(r["distance_m"])]) + "\n")

    ret_mu, ret_sd = _summary_stats([r["return"] for r in eval_rows])
    t_mu, t_sd = _summary_stats([r["time_sec"] for r in eval_rows])
    d_mu, d_sd = _summary_stats([r["distance_m"] for r in eval_rows])
    summary = {
        "method": cfg.method,
        "seed": seed,
        "train_env_steps": model.components.get("env_steps"),
        "eval": {
            "episodes": len(eval_rows),
            "return_mean": ret_mu, "return_std": ret_sd,
            "time_mean": t_mu, "time_std": t_sd,
            "distance_mean": d_mu, "distance_std": d_sd,
        },
    }
    with open(os.path.join(run_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)

    save_model(model, os.path.join(run_dir, "models"))
    train_rows = _read_csv(os.path.join(run_dir, "episodes.csv"))
    return RunRecord(method=cfg.method, seed=seed, run_dir=run_dir,
                     eval_rows=eval_rows, train_rows=train_rows, summary=summary)


def _run_single_job(cfg_dict, seed, run_dir):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return run_single(cfg, seed, run_dir)


def run(cfg, out_dir, jobs=1):
    """All seeds of one config; one subdirectory per seed."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    dirs = [os.path.join(out_dir, f"{cfg.method}-seed{s}") for s in cfg.seeds]
    if jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_single_job, cfg.to_dict(), s, d)
                       for s, d in zip(cfg.seeds, dirs)]
            return [f.result() for f in futures]
    return [run_single(cfg, s, d) for s, d in zip(cfg.seeds, dirs)]


# -- comparison ---------------------------------------------------------------------


def compare(configs, out_dir, jobs=1):
    """Run several configs on one environment and tabulate normalized metrics.

    Every metric is normalized by the maximum over all evaluation episodes of
    all runs in the comparison set, following the maximum-travel convention.
    """
    if len(configs) < 2:
        raise ValueError("need at least two configs to compare")
    env_ref = json.dumps(_resolved_env(configs[0]), sort_keys=True)
    for c in configs[1:]:
        if json.dumps(_resolved_env(c), sort_keys=True) != env_ref:
            raise ValueError("configs do not share one environment")
    os.makedirs(out_dir, exist_ok=True)
    records = {}
    for cfg in configs:
        records[cfg.method] = run(cfg, os.path.join(out_dir, cfg.method), jobs=jobs)
    table, per_seed = aggregate(records)
    with open(os.path.join(out_dir, "comparison.csv"), "w") as fh:
        fh.write("method,time_mean,time_std,distance_mean,distance_std\n")
        for row in table:
            fh.write(",".join([row["method"]] + [_fmt(row[k]) for k in
                                                 ("time_mean", "time_std",
                                                  "distance_mean", "distance_std")]) + "\n")
    with open(os.path.join(out_dir, "curves.csv"), "w") as fh:
        fh.write("method,seed,episode,return\n")
        for method, recs in records.items():
            for rec in recs:
                for row in rec.train_rows:
                    fh.write(f"{method},{rec.seed},{row['episode']},{row['return']}\n")
    return {"table": table, "per_seed": per_seed, "records": records}


def aggregate(records):
    """Normalized mean/std per method plus per-seed normalized means."""
    all_times, all_dists = [], []
    for recs in records.values():
        for rec in recs:
            all_times += [r["time_sec"] for r in rec.eval_rows]
            all_dists += [r["distance_m"] for r in rec.eval_rows]
    t_div = max(max(all_times), 1e-12)
    d_div = max(max(all_dists), 1e-12)
    table, per_seed = [], {}
    for method, recs in records.items():
        times = np.array([r["time_sec"] for rec in recs for r in rec.eval_rows]) / t_div
        dists = np.array([r["distance_m"] for rec in recs for r in rec.eval_rows]) / d_div
        table.append({"method": method,
                      "time_mean": float(times.mean()), "time_std": float(times.std()),
                      "distance_mean": float(dists.mean()),
                      "distance_std": float(dists.std())})
        per_seed[method] = {
            "time": [float(np.mean([r["time_sec"] for r in rec.eval_rows]) / t_div)
                     for rec in recs],
            "distance": [float(np.mean([r["distance_m"] for r in rec.eval_rows]) / d_div)
                         for rec in recs],
        }
    return table, per_seed


def _resolved_env(cfg):
    return cfg.build_env().to_config()


# -- attention report -----------------------------------------------------------------


def attention_report(run_dir):
    """Per-view attention summary over the evaluation steps of a fused run."""
    path = os.path.join(run_dir, "attention.csv")
    if not os.path.exists(path):
        raise ValueError(f"{run_dir} has no attention log")
    rows = _read_csv(path)
    if not rows:
        raise ValueError("attention log is empty")
    cols = [k for k in rows[0] if k.startswith("p_w")]
    if not cols:
        raise ValueError("attention log is missing weight columns")
    eval_rows = [r for r in rows if r["phase"] == "eval"]
    if not eval_rows:
        raise ValueError("attention log has no evaluation rows")
    weights = np.array([[float(r[c]) for c in cols] for r in eval_rows])
    n_views = weights.shape[1]
    report = {
        "n_steps": len(eval_rows),
        "view_means": [float(m) for m in weights.mean(axis=0)],
        "view_stds": [float(s) for s in weights.std(axis=0)],
        "below_uniform": [i for i in range(n_views)
                          if weights[:, i].mean() < 1.0 / n_views],
    }
    return report


# -- persistence ------------------------------------------------------------------------


def save_model(model, path):
    os.makedirs(path, exist_ok=True)
    kind = model.components["kind"]
    if kind == "adrl":
        save_adrl_bundle(path, model.components["workers"], model.components["gate"],
                         model.components["global_agent"])
        return
    if kind == "single":
        agent = model.components["agent"]
        manifest = {"kind": "single", "method": model.method,
                    "state_dim": agent.state_dim, "action_dim": agent.action_dim,
                    "view_index": model.components["view_index"],
                    "actor_hidden": list(agent.actor.sizes[1:-1]),
                    "critic_hidden": list(agent.critic.sizes[1:-1])}
        with open(os.path.join(path, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)
        save_net(agent.actor, os.path.join(path, "actor.net"))
        save_net(agent.critic, os.path.join(path, "critic.net"))
        return
    if kind == "ensemble":
        workers = model.components["workers"]
        manifest = {"kind": "ensemble", "method": model.method,
                    "n_workers": len(workers),
                    "view_dims": [w.view_dim for w in workers],
                    "action_dim": workers[0].action_dim,
                    "feature_sizes": list(workers[0].features.sizes[1:]),
                    "head_hidden": list(workers[0].agent.actor.sizes[1:-1])}
        with open(os.path.join(path, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)
        for i, w in enumerate(workers):
            save_net(w.features, os.path.join(path, f"worker{i}_features.net"))
            save_net(w.agent.actor, os.path.join(path, f"worker{i}_actor.net"))
            save_net(w.agent.critic, os.path.join(path, f"worker{i}_critic.net"))
        return
    raise ValueError(f"cannot save model kind {kind!r}")


def load_model(run_dir):
    """Rebuild the evaluation policy of a finished run from its artifacts."""
    with open(os.path.join(run_dir, "config.json")) as fh:
        stored = json.load(fh)
    seed = stored.pop("seed", 0)
    cfg = ExperimentConfig.from_dict(stored)
    path = os.path.join(run_dir, "models")
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    kind = manifest["kind"]
    if kind == "adrl":
        workers, gate, global_agent = load_adrl_bundle(path, cfg.hyper())
        encoder = AttentionEncoder(workers, gate)

        def act(obs):
            state, p = encoder.encode_one(obs)
            return global_agent.policy(state), p

        return cfg, seed, TrainedModel(method=cfg.method, act=act,
                                       components={"kind": "adrl", "workers": workers,
                                                   "gate": gate,
                                                   "global_agent": global_agent},
                                       encoder=encoder)
    if kind == "single":
        hyper = cfg.hyper()
        rng = np.random.default_rng(0)
        agent = DDPGAgent(manifest["state_dim"], manifest["action_dim"], hyper, rng,
                          actor_hidden=tuple(manifest["actor_hidden"]),
                          critic_hidden=tuple(manifest["critic_hidden"]))
        agent.actor.load_state_from(load_net(os.path.join(path, "actor.net")))
        agent.critic.load_state_from(load_net(os.path.join(path, "critic.net")))
        vi = manifest.get("view_index")
        if vi is None:
            encoder = ConcatEncoder([manifest["state_dim"]])
            encoder.state_dim = manifest["state_dim"]

            def act(obs):
                return agent.policy(np.concatenate([np.asarray(o) for o in obs])), None
        else:
            def act(obs):
                return agent.policy(np.asarray(obs[vi], dtype=np.float64)), None
        return cfg, seed, TrainedModel(method=cfg.method, act=act,
                                       components={"kind": "single", "agent": agent,
                                                   "view_index": vi})
    if kind == "ensemble":
        hyper = cfg.hyper()
        rng = np.random.default_rng(0)
        workers = []
        for i in range(manifest["n_workers"]):
            w = WorkerAgent(manifest["view_dims"][i], manifest["action_dim"], hyper,
                            rng, feature_sizes=tuple(manifest["feature_sizes"]),
                            head_hidden=tuple(manifest["head_hidden"]))
            w.features.load_state_from(
                load_net(os.path.join(path, f"worker{i}_features.net")))
            w.agent.actor.load_state_from(
                load_net(os.path.join(path, f"worker{i}_actor.net")))
            w.agent.critic.load_state_from(
                load_net(os.path.join(path, f"worker{i}_critic.net")))
            workers.append(w)
        combine = COMBINERS[manifest["method"]]

        def act(obs):
            return combine([w.propose(obs[v]) for v, w in enumerate(workers)]), None

        return cfg, seed, TrainedModel(method=cfg.method, act=act,
                                       components={"kind": "ensemble",
                                                   "workers": workers})
    raise ValueError(f"cannot load model kind {kind!r}")


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
