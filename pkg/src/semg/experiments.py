"""Experiment driver: config resolution, data protocols, and run output.

Every run resolves a JSON config over package defaults plus flat
`section.key=value` overrides, derives all randomness from one run seed
through named streams, writes artifacts into a fresh
`<experiment>-<seed>-<timestamp>` directory, and finishes with an atomic
manifest listing every produced file.  Re-running any experiment with the
same config and seed reproduces the CSV and PGM outputs byte for byte.
"""

import copy
import hashlib
import json
import os
import time
from dataclasses import replace

import numpy as np

from . import baselines, gridio, nn, policy
from .diffusion import (
    DiffusionConfig,
    TrainingSet,
    denoiser_spec,
    estimate_map,
    make_schedule,
    masked_rmse,
    sample_conditional_batch,
    train_denoiser,
    unit_observations,
)
from .errors import ConfigurationError, MissingArtifactError
from .mission import EnergyModel, execute_mission, plan_lawnmower
from .rf_env import EnvConfig, build_environment, ground_truth_map, to_unit
from .rng import child_seed, stream

__all__ = [
    "DEFAULT_CONFIG",
    "EXPERIMENTS",
    "load_config",
    "parse_overrides",
    "resolve_config",
    "config_hash",
    "run_experiment",
]

DEFAULT_CONFIG = {
    "run": {
        "seed": 0,
    },
    "env": {
        "width_cells": 32,
        "height_cells": 32,
        "cell_size_m": 10.0,
        "n_transmitters": 3,
        "tx_power_dbm": 30.0,
        "path_loss_exponent": 3.0,
        "ref_loss_db": 40.0,
        "ref_distance_m": 1.0,
        "shadowing_sigma_db": 6.0,
        "shadowing_corr_cells": 3.0,
        "noise_floor_dbm": -100.0,
        "snr_clamp": [-20.0, 60.0],
    },
    "energy": {
        "fly_j_per_m": 20.0,
        "sense_j_per_sample": 5.0,
        "tx_power_w": 40.0,
        "total_budget_j": 200000.0,
    },
    "protocol": {
        "n_train_envs": 2000,
        "train_rho_min": 0.05,
        "train_rho_max": 0.55,
        "train_spacing_choices": [1, 2, 3, 4, 5, 6, 7, 8],
        "meas_noise_sigma_db": 1.0,
        "n_eval_envs": 8,
        "eval_row_spacing": 4,
        "eval_rho": 0.35,
    },
    "diffusion": {
        "T": 200,
        "beta_start": 1e-4,
        "beta_end": 0.02,
        "hidden": [512, 512],
        "activation": "silu",
        "time_embed_dim": 16,
        "batch_size": 16,
        "train_steps": 5000,
        "lr": 1e-3,
        "lr_final": 1e-4,
        "n_avg": 4,
        "eval_every": 500,
        "skip_prior_scale": 0.25,
    },
    "recurrent": {
        "hidden": 64,
        "readout_hidden": [256],
        "readout_activation": "silu",
        "cell_variant": "single-gate",
    },
    "gen_env": {
        "count": 1,
    },
    "eval": {
        "checkpoint": None,
        "n_avg": 4,
    },
    "compare": {
        "n_avg": 32,
    },
    "sweep": {
        "checkpoint": None,
        "rho_grid": [round(0.05 * k, 2) for k in range(1, 19)],
        "spacing": 1,
        "n_envs": 20,
        "n_reps": 3,
        "n_avg": 1,
    },
    "policy": {
        "checkpoint": None,
        "candidates": 16,
        "temperature": 0.5,
        "iterations": 30,
        "eval_scenarios": 4,
        "action_T": 50,
        "hidden": [64, 64],
        "updates_per_iter": 8,
        "lr": 3e-3,
        "n_avg": 1,
        "oracle_rho_grid": [round(0.1 * k, 1) for k in range(1, 10)],
        "oracle_spacing_grid": [1, 2, 4, 8],
        "ddpg_episodes": None,
        "ddpg_collect_batch": 8,
        "random_actions": None,
        "run_random": True,
    },
}


def _deep_merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigurationError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config does not parse: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError("config root must be a JSON object")
    return cfg


def parse_overrides(pairs):
    """`section.key=value` strings; values parse as JSON, else raw text."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"override {pair!r} is not key=value")
        key, _, raw = pair.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override path conflict at {key!r}")
        node[parts[-1]] = value
    return out


def resolve_config(config_path=None, overrides=(), seed=None):
    cfg = _deep_merge(DEFAULT_CONFIG, load_config(config_path))
    cfg = _deep_merge(cfg, parse_overrides(list(overrides)))
    if seed is not None:
        cfg["run"]["seed"] = int(seed)
    return cfg


def config_hash(cfg) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def code_hash() -> str:
    root = os.path.dirname(os.path.abspath(__file__))
    digest = hashlib.sha256()
    for name in sorted(os.listdir(root)):
        if name.endswith(".py"):
            with open(os.path.join(root, name), "rb") as fh:
                digest.update(name.encode())
                digest.update(fh.read())
    return digest.hexdigest()


def _env_config(cfg, seed) -> EnvConfig:
    e = cfg["env"]
    return EnvConfig(
        width_cells=int(e["width_cells"]),
        height_cells=int(e["height_cells"]),
        cell_size_m=float(e["cell_size_m"]),
        n_transmitters=int(e["n_transmitters"]),
        tx_power_dbm=float(e["tx_power_dbm"]),
        path_loss_exponent=float(e["path_loss_exponent"]),
        ref_loss_db=float(e["ref_loss_db"]),
        ref_distance_m=float(e["ref_distance_m"]),
        shadowing_sigma_db=float(e["shadowing_sigma_db"]),
        shadowing_corr_cells=float(e["shadowing_corr_cells"]),
        noise_floor_dbm=float(e["noise_floor_dbm"]),
        snr_clamp=tuple(float(v) for v in e["snr_clamp"]),
        seed=int(seed),
    ).validate()


def _energy_model(cfg) -> EnergyModel:
    e = cfg["energy"]
    return EnergyModel(
        fly_j_per_m=float(e["fly_j_per_m"]),
        sense_j_per_sample=float(e["sense_j_per_sample"]),
        tx_power_w=float(e["tx_power_w"]),
        total_budget_j=float(e["total_budget_j"]),
    ).validate()


def _diffusion_config(cfg, seed) -> DiffusionConfig:
    d = cfg["diffusion"]
    return DiffusionConfig(
        T=int(d["T"]),
        beta_start=float(d["beta_start"]),
        beta_end=float(d["beta_end"]),
        hidden=[int(v) for v in d["hidden"]],
        activation=str(d["activation"]),
        time_embed_dim=int(d["time_embed_dim"]),
        batch_size=int(d["batch_size"]),
        train_steps=int(d["train_steps"]),
        lr=float(d["lr"]),
        lr_final=float(d["lr_final"]),
        n_avg=int(d["n_avg"]),
        eval_every=int(d["eval_every"]),
        skip_prior_scale=float(d["skip_prior_scale"]),
        seed=int(seed),
    ).validate()


def _recurrent_spec(cfg) -> baselines.RecurrentSpec:
    r = cfg["recurrent"]
    return baselines.RecurrentSpec(
        hidden=int(r["hidden"]),
        cell_variant=str(r["cell_variant"]),
        readout_hidden=[int(v) for v in r["readout_hidden"]],
        readout_activation=str(r["readout_activation"]),
    ).validate()


# ---------------------------------------------------------------------------
# Data protocols


def build_training_data(cfg, run_seed):
    """Missions over the training seed range; one measurement pass per
    environment with spacing and rho drawn per mission.

    Returns (TrainingSet, sequences) built from the same measurement sets
    so the diffusion and recurrent estimators train on identical data.
    """
    p = cfg["protocol"]
    em = _energy_model(cfg)
    n = int(p["n_train_envs"])
    choices = [int(s) for s in p["train_spacing_choices"]]
    sigma = float(p["meas_noise_sigma_db"])
    x0s, masks, obss, seqs = [], [], [], []
    for i in range(n):
        env_cfg = _env_config(cfg, child_seed(run_seed, "train-env", i))
        env = build_environment(env_cfg)
        truth = ground_truth_map(env)
        mission_rng = stream(run_seed, "mission", i)
        spacing = choices[mission_rng.integers(0, len(choices))]
        rho = mission_rng.uniform(float(p["train_rho_min"]), float(p["train_rho_max"]))
        traj = plan_lawnmower(env_cfg.width_cells, env_cfg.height_cells, spacing)
        meas, _ = execute_mission(env, traj, em, rho, sigma, mission_rng)
        mask, obs = unit_observations(meas, env_cfg)
        x0s.append(to_unit(truth, env_cfg).ravel())
        masks.append(mask)
        obss.append(obs)
        seqs.append(baselines.measurement_sequence(meas, env_cfg))
    data = TrainingSet(np.array(x0s), np.array(masks), np.array(obss))
    return data, seqs


def build_eval_sets(cfg, run_seed):
    """Held-out environments with a frozen measurement pass each."""
    p = cfg["protocol"]
    em = _energy_model(cfg)
    sigma = float(p["meas_noise_sigma_db"])
    sets = []
    for j in range(int(p["n_eval_envs"])):
        env_cfg = _env_config(cfg, child_seed(run_seed, "eval-env", j))
        env = build_environment(env_cfg)
        truth = ground_truth_map(env)
        traj = plan_lawnmower(
            env_cfg.width_cells, env_cfg.height_cells, int(p["eval_row_spacing"])
        )
        meas, _ = execute_mission(
            env, traj, em, float(p["eval_rho"]), sigma, stream(run_seed, "eval-mission", j)
        )
        sets.append((env_cfg, env, truth, meas))
    return sets


def _eval_rmse(params, cfg, run_seed, eval_sets, diff_cfg, schedule, tag, n_avg=1):
    """Mean held-out masked RMSE of a denoiser over the eval sets."""
    spec = denoiser_spec(eval_sets[0][0], diff_cfg)
    cells = eval_sets[0][0].width_cells * eval_sets[0][0].height_cells
    n = len(eval_sets) * n_avg
    masks = np.empty((n, cells))
    obs = np.empty((n, cells))
    rngs = []
    row = 0
    for j, (env_cfg, _, _, meas) in enumerate(eval_sets):
        m, o = unit_observations(meas, env_cfg)
        for i in range(n_avg):
            masks[row] = m
            obs[row] = o
            rngs.append(stream(run_seed, tag, j, i))
            row += 1
    units = sample_conditional_batch(
        spec, params, masks, obs, schedule, rngs, diff_cfg.time_embed_dim,
        diff_cfg.skip_prior_scale
    )
    errs = []
    for j, (env_cfg, _, truth, meas) in enumerate(eval_sets):
        unit = units[j * n_avg:(j + 1) * n_avg].mean(axis=0)
        from .rf_env import from_unit

        est = from_unit(unit.reshape(env_cfg.height_cells, env_cfg.width_cells), env_cfg)
        errs.append(masked_rmse(est, truth, meas.mask))
    return float(np.mean(errs)), errs


# ---------------------------------------------------------------------------
# Run bookkeeping


class RunContext:
    def __init__(self, experiment, cfg, out_root):
        self.experiment = experiment
        self.cfg = cfg
        self.seed = int(cfg["run"]["seed"])
        self.t0 = time.monotonic()
        stamp = time.strftime("%Y%m%d-%H%M%S")
        base = os.path.join(out_root, f"{experiment}-{self.seed}-{stamp}")
        path = base
        k = 1
        while True:
            try:
                os.makedirs(path)
                break
            except FileExistsError:
                path = f"{base}-{k}"
                k += 1
        self.dir = path

    def path(self, name):
        return os.path.join(self.dir, name)

    def finalize(self, seed_labels):
        files = sorted(n for n in os.listdir(self.dir) if n != "manifest.json")
        manifest = {
            "schema_version": 1,
            "experiment": self.experiment,
            "config": self.cfg,
            "seeds": {label: child_seed(self.seed, label) for label in seed_labels},
            "config_hash": config_hash(self.cfg),
            "code_hash": code_hash(),
            "outputs": files,
            "duration_s": round(time.monotonic() - self.t0, 3),
        }
        gridio.write_json_atomic(manifest, self.path("manifest.json"))
        return self.dir


# ---------------------------------------------------------------------------
# Experiments


def _exp_gen_env(ctx: RunContext):
    cfg = ctx.cfg
    for i in range(int(cfg["gen_env"]["count"])):
        env_cfg = _env_config(cfg, child_seed(ctx.seed, "gen-env", i))
        env = build_environment(env_cfg)
        truth = ground_truth_map(env)
        gridio.export_map_csv(truth, ctx.path(f"env-{i:03d}-truth.csv"))
        gridio.export_pgm(truth, env_cfg, ctx.path(f"env-{i:03d}-truth.pgm"))
    return ctx.finalize(["gen-env"])


def _write_loss_csv(path, losses):
    writer = gridio.MetricsWriter(path, ["step", "loss"])
    for step, loss in enumerate(losses, start=1):
        writer.append([step, float(loss)])


def _exp_train_est(ctx: RunContext):
    cfg = ctx.cfg
    diff_cfg = _diffusion_config(cfg, child_seed(ctx.seed, "train"))
    schedule = make_schedule(diff_cfg)
    data, _ = build_training_data(cfg, ctx.seed)
    eval_sets = build_eval_sets(cfg, ctx.seed)
    env_cfg = eval_sets[0][0]
    eval_writer = gridio.MetricsWriter(ctx.path("eval.csv"), ["step", "masked_rmse_db"])

    def hook(step, params):
        rmse, _ = _eval_rmse(params, cfg, ctx.seed, eval_sets, diff_cfg, schedule,
                             "ckpt-eval")
        eval_writer.append([step, rmse])

    params, losses = train_denoiser(env_cfg, diff_cfg, data, checkpoint_hook=hook)
    _write_loss_csv(ctx.path("loss.csv"), losses)
    nn.save_checkpoint(params, ctx.path("denoiser" + nn.CKPT_SUFFIX))
    return ctx.finalize(["train", "train-env", "eval-env", "mission", "eval-mission",
                         "ckpt-eval"])


def _load_denoiser(cfg, key):
    path = cfg[key]["checkpoint"]
    if not path:
        raise MissingArtifactError(
            f"experiment needs a trained denoiser: set {key}.checkpoint"
        )
    env_cfg = _env_config(cfg, 0)
    diff_cfg = _diffusion_config(cfg, 0)
    spec = denoiser_spec(env_cfg, diff_cfg)
    manifest = spec.manifest() + [("gate", (1,))]
    return nn.load_checkpoint(path, expected_manifest=manifest)


def _exp_eval_est(ctx_factory, cfg, out_root):
    # Load before creating the run directory: a missing checkpoint must
    # leave no partial outputs behind.
    params = _load_denoiser(cfg, "eval")
    ctx = ctx_factory()
    diff_cfg = _diffusion_config(cfg, child_seed(ctx.seed, "train"))
    schedule = make_schedule(diff_cfg)
    eval_sets = build_eval_sets(cfg, ctx.seed)
    n_avg = int(cfg["eval"]["n_avg"])
    writer = gridio.MetricsWriter(
        ctx.path("metrics.csv"), ["env_index", "masked_rmse_db", "mean_abs_db"]
    )
    for j, (env_cfg, env, truth, meas) in enumerate(eval_sets):
        est = estimate_map(params, meas, env_cfg, diff_cfg, schedule,
                           stream(ctx.seed, "eval-sample", j), n_avg)
        rmse = masked_rmse(est, truth, meas.mask)
        mad = float(np.mean(np.abs(est.values - truth.values)))
        writer.append([j, rmse, mad])
        gridio.export_map_csv(est, ctx.path(f"estimate-{j:03d}.csv"))
        gridio.export_pgm(est, env_cfg, ctx.path(f"estimate-{j:03d}.pgm"))
        gridio.export_map_csv(truth, ctx.path(f"truth-{j:03d}.csv"))
    return ctx.finalize(["eval-env", "eval-mission", "eval-sample"])


def _exp_compare_baselines(ctx: RunContext):
    cfg = ctx.cfg
    diff_cfg = _diffusion_config(cfg, child_seed(ctx.seed, "train"))
    schedule = make_schedule(diff_cfg)
    data, seqs = build_training_data(cfg, ctx.seed)
    eval_sets = build_eval_sets(cfg, ctx.seed)
    env_cfg = eval_sets[0][0]

    diff_params, diff_losses = train_denoiser(env_cfg, diff_cfg, data)
    _write_loss_csv(ctx.path("loss-diffusion.csv"), diff_losses)
    nn.save_checkpoint(diff_params, ctx.path("denoiser" + nn.CKPT_SUFFIX))

    rspec = _recurrent_spec(cfg)
    budget = baselines.TrainBudget(
        steps=diff_cfg.train_steps, batch_size=diff_cfg.batch_size,
        lr=diff_cfg.lr, seed=child_seed(ctx.seed, "recurrent"),
    )
    rec_params, rec_losses = baselines.train_recurrent(
        rspec, env_cfg, budget, seqs, data.x0
    )
    _write_loss_csv(ctx.path("loss-recurrent.csv"), rec_losses)
    nn.save_checkpoint(rec_params, ctx.path("recurrent" + nn.CKPT_SUFFIX))

    writer = gridio.MetricsWriter(
        ctx.path("metrics.csv"), ["method", "env_index", "masked_rmse_db"]
    )
    sums = {}
    # Comparison protocol averages more chains than the estimator default;
    # posterior-sampling variance would otherwise dominate the method gap.
    n_avg = int(cfg["compare"]["n_avg"])
    for j, (ecfg, env, truth, meas) in enumerate(eval_sets):
        ests = {
            "diffusion": estimate_map(diff_params, meas, ecfg, diff_cfg, schedule,
                                      stream(ctx.seed, "cmp-sample", j), n_avg),
            "recurrent": baselines.recurrent_predict(rspec, rec_params, meas, ecfg),
            "mean_fill": baselines.mean_fill(meas, ecfg),
            "idw": baselines.idw_interpolate(meas, ecfg),
        }
        for method, est in ests.items():
            rmse = masked_rmse(est, truth, meas.mask)
            writer.append([method, j, rmse])
            sums.setdefault(method, []).append(rmse)
    summary = gridio.MetricsWriter(
        ctx.path("summary.csv"), ["method", "masked_rmse_db_mean"]
    )
    for method in ("diffusion", "recurrent", "mean_fill", "idw"):
        summary.append([method, float(np.mean(sums[method]))])
    return ctx.finalize(["train", "recurrent", "train-env", "eval-env", "mission",
                         "eval-mission", "cmp-sample"])


def _make_evaluator(cfg, ctx_seed, params, n_envs, env_label, n_reps, n_avg):
    env_cfg = _env_config(cfg, 0)
    diff_cfg = _diffusion_config(cfg, 0)
    schedule = make_schedule(diff_cfg)
    em = _energy_model(cfg)
    envs = []
    for i in range(n_envs):
        ecfg = replace(env_cfg, seed=child_seed(ctx_seed, env_label, i))
        envs.append(build_environment(ecfg))
    return policy.ObjectiveEvaluator(
        envs, params, env_cfg, diff_cfg, schedule, em,
        base_seed=child_seed(ctx_seed, "objective"),
        meas_noise_sigma_db=float(cfg["protocol"]["meas_noise_sigma_db"]),
        n_reps=n_reps, n_avg=n_avg,
    )


def _exp_sweep_energy(ctx_factory, cfg, out_root):
    params = _load_denoiser(cfg, "sweep")
    ctx = ctx_factory()
    s = cfg["sweep"]
    evaluator = _make_evaluator(
        cfg, ctx.seed, params, int(s["n_envs"]), "sweep-env",
        int(s["n_reps"]), int(s["n_avg"]),
    )
    rows = policy.sweep_energy_fraction(
        evaluator, [float(r) for r in s["rho_grid"]], int(s["spacing"])
    )
    writer = gridio.MetricsWriter(
        ctx.path("sweep.csv"),
        ["rho", "est_diff_db_mean", "est_diff_db_std", "rate_bits_mean", "rate_bits_std"],
    )
    for row in rows:
        writer.append([row["rho"], row["est_diff_db_mean"], row["est_diff_db_std"],
                       row["rate_bits_mean"], row["rate_bits_std"]])
    return ctx.finalize(["sweep-env", "objective"])


def _exp_train_policy(ctx_factory, cfg, out_root):
    params = _load_denoiser(cfg, "policy")
    ctx = ctx_factory()
    p = cfg["policy"]
    pcfg = policy.PolicyConfig(
        candidates=int(p["candidates"]),
        temperature=float(p["temperature"]),
        iterations=int(p["iterations"]),
        eval_scenarios=int(p["eval_scenarios"]),
        action_T=int(p["action_T"]),
        hidden=[int(v) for v in p["hidden"]],
        updates_per_iter=int(p["updates_per_iter"]),
        lr=float(p["lr"]),
        seed=child_seed(ctx.seed, "policy"),
    ).validate()
    evaluator = _make_evaluator(
        cfg, ctx.seed, params, pcfg.eval_scenarios, "scenario-env", 1, int(p["n_avg"])
    )
    budget_evals = pcfg.iterations * pcfg.candidates * pcfg.eval_scenarios

    best_action_oracle, table = policy.exhaustive_grid(
        evaluator, [float(r) for r in p["oracle_rho_grid"]],
        [int(s) for s in p["oracle_spacing_grid"]],
    )
    w = gridio.MetricsWriter(ctx.path("oracle.csv"),
                             ["rho", "spacing", "J", "est_diff_db"])
    for row in table:
        w.append([row["rho"], row["spacing"], row["J"], row["est_diff_db"]])

    gdm = policy.run_gdm_policy(pcfg, evaluator)
    w = gridio.MetricsWriter(
        ctx.path("gdm_curve.csv"),
        ["iteration", "iter_best_J", "mean_J", "best_J_so_far", "best_rho",
         "best_spacing_u"],
    )
    for row in gdm["history"]:
        w.append([row["iteration"], row["iter_best_J"], row["mean_J"],
                  row["best_J_so_far"], row["best_rho"], row["best_spacing_u"]])

    episodes = p["ddpg_episodes"]
    episodes = budget_evals if episodes is None else int(episodes)
    dcfg = policy.DdpgConfig(
        episodes=episodes,
        collect_batch=int(p["ddpg_collect_batch"]),
        seed=child_seed(ctx.seed, "ddpg"),
    ).validate()
    ddpg = policy.ddpg_baseline(evaluator, dcfg)
    w = gridio.MetricsWriter(ctx.path("ddpg_curve.csv"),
                             ["episode", "J", "best_J_so_far"])
    for row in ddpg["history"]:
        w.append([row["episode"], row["J"], row["best_J_so_far"]])

    methods = {
        "oracle": best_action_oracle,
        "gdm": gdm["best_action"],
        "ddpg": ddpg["best_action"],
    }
    rand = None
    if p["run_random"]:
        n_rand = p["random_actions"]
        n_rand = max(budget_evals // evaluator.evals_per_action, 1) if n_rand is None \
            else int(n_rand)
        rand = policy.random_search(evaluator, n_rand, stream(ctx.seed, "random-search"))
        w = gridio.MetricsWriter(ctx.path("random_curve.csv"),
                                 ["index", "J", "best_J_so_far"])
        for row in rand["history"]:
            w.append([row["index"], row["J"], row["best_J_so_far"]])
        methods["random"] = rand["best_action"]

    shared = policy_compare(evaluator, methods)
    comparison = {
        "budget_evals": budget_evals,
        "methods": shared,
    }
    gridio.write_json_atomic(comparison, ctx.path("comparison.json"))
    return ctx.finalize(["scenario-env", "objective", "policy", "ddpg", "random-search"])


def policy_compare(evaluator, methods):
    """Re-evaluate each method's best action under the shared protocol."""
    names = list(methods)
    result = evaluator.evaluate_actions([methods[n] for n in names])
    out = {}
    for i, name in enumerate(names):
        a = methods[name]
        out[name] = {
            "action": {"rho": a.rho, "spacing_u": a.spacing_u,
                       "row_spacing": a.row_spacing},
            "J_shared": float(result["J"][i]),
            "est_diff_db": float(result["est_diff"][i]),
        }
    return out


EXPERIMENTS = (
    "gen-env",
    "train-est",
    "eval-est",
    "compare-baselines",
    "sweep-energy",
    "train-policy",
)


def run_experiment(experiment, config_path=None, overrides=(), seed=None,
                   out_root=None):
    """Resolve config, execute, and return the output directory path."""
    if experiment not in EXPERIMENTS:
        raise ConfigurationError(
            f"unknown experiment {experiment!r}; choose one of {', '.join(EXPERIMENTS)}"
        )
    cfg = resolve_config(config_path, overrides, seed)
    if out_root is None:
        out_root = os.environ.get("SEMG_OUT", "semg-runs")
    os.makedirs(out_root, exist_ok=True)

    def ctx_factory():
        return RunContext(experiment, cfg, out_root)

    if experiment == "gen-env":
        return _exp_gen_env(ctx_factory())
    if experiment == "train-est":
        return _exp_train_est(ctx_factory())
    if experiment == "eval-est":
        return _exp_eval_est(ctx_factory, cfg, out_root)
    if experiment == "compare-baselines":
        return _exp_compare_baselines(ctx_factory())
    if experiment == "sweep-energy":
        return _exp_sweep_energy(ctx_factory, cfg, out_root)
    return _exp_train_policy(ctx_factory, cfg, out_root)
