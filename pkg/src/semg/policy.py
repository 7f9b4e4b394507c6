"""Joint choice of estimation energy and sweep density.

An action is the pair (rho, spacing_u): the fraction of the energy budget
spent on estimation and a control in [0, 1] mapped to the lawnmower row
spacing {1..8}.  Its objective is the transmission payload achievable at
the serving cell the estimate picks: the UAV transmits for
transmission_j / tx_power_w seconds at the Shannon rate over 1 MHz for
the true SNR of that cell.  Optimizers share one evaluation protocol with
common random numbers keyed by (environment, repetition), never by the
action, so every method sees the same deterministic objective function
and the exhaustive grid is a true oracle.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import nn
from .diffusion import (
    DiffusionConfig,
    NoiseSchedule,
    make_schedule,
    q_sample,
    sample_conditional_batch,
    time_embedding,
    unit_observations,
)
from .errors import ConfigurationError, ContractViolation, NumericError
from .mission import EnergyModel, MeasurementSet, execute_mission, plan_lawnmower
from .rf_env import EnvConfig, build_environment, from_unit, ground_truth_map
from .rng import stream

__all__ = [
    "BANDWIDTH_HZ",
    "Action",
    "Objective",
    "PolicyConfig",
    "DdpgConfig",
    "spacing_from_u",
    "u_from_spacing",
    "serving_cell",
    "shannon_rate_bits",
    "objective_from_estimate",
    "evaluate_objective",
    "ObjectiveEvaluator",
    "softmax_weights",
    "action_denoiser_spec",
    "sample_actions",
    "gdm_policy_iterate",
    "run_gdm_policy",
    "exhaustive_grid",
    "random_search",
    "ddpg_baseline",
    "sweep_energy_fraction",
]

BANDWIDTH_HZ = 1.0e6


def spacing_from_u(u) -> int:
    """[0, 1] -> row spacing in {1..8}; the top edge folds into 8."""
    return min(8, 1 + int(float(u) * 8.0))


def u_from_spacing(spacing: int) -> float:
    """Interval midpoint of the u-range that maps onto this spacing."""
    return (spacing - 0.5) / 8.0


@dataclass
class Action:
    rho: float
    spacing_u: float

    def validate(self):
        if not (0.0 <= self.rho <= 1.0 and 0.0 <= self.spacing_u <= 1.0):
            raise ContractViolation(f"action components outside [0, 1]: {self}")
        return self

    @property
    def row_spacing(self) -> int:
        return spacing_from_u(self.spacing_u)


@dataclass
class Objective:
    rate_bits: float
    est_diff_db: float


@dataclass
class PolicyConfig:
    candidates: int = 16
    temperature: float = 0.5
    iterations: int = 30
    eval_scenarios: int = 4
    action_T: int = 50
    hidden: list = field(default_factory=lambda: [64, 64])
    activation: str = "silu"
    time_embed_dim: int = 16
    updates_per_iter: int = 8
    lr: float = 3e-3
    seed: int = 0

    def validate(self):
        if self.candidates < 2:
            raise ConfigurationError("need at least 2 candidates per iteration")
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be > 0")
        if self.action_T < 2:
            raise ConfigurationError("action_T must be >= 2")
        if self.iterations < 1 or self.eval_scenarios < 1 or self.updates_per_iter < 1:
            raise ConfigurationError("iterations, scenarios, updates must be >= 1")
        return self


@dataclass
class DdpgConfig:
    episodes: int = 1920
    collect_batch: int = 8
    hidden: list = field(default_factory=lambda: [64, 64])
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    batch_size: int = 64
    replay_capacity: int = 10000
    soft_tau: float = 0.005
    noise_sigma: float = 0.1
    warmup: int = 64
    seed: int = 0

    def validate(self):
        if self.episodes < 1 or self.collect_batch < 1:
            raise ConfigurationError("episodes and collect_batch must be >= 1")
        if self.replay_capacity < self.batch_size:
            raise ConfigurationError("replay capacity below batch size")
        if not 0 < self.soft_tau <= 1:
            raise ConfigurationError("soft_tau must lie in (0, 1]")
        return self


def serving_cell(est_values: np.ndarray):
    """Row-major argmax; ties resolve to the smallest flat index."""
    flat = int(np.argmax(est_values))
    h, w = est_values.shape
    cy, cx = divmod(flat, w)
    return cx, cy


def shannon_rate_bits(transmission_j, em: EnergyModel, snr_db):
    t_tx = transmission_j / em.tx_power_w
    return t_tx * BANDWIDTH_HZ * np.log2(1.0 + 10.0 ** (snr_db / 10.0))


def objective_from_estimate(est_values, truth_values, transmission_j,
                            em: EnergyModel) -> Objective:
    cx, cy = serving_cell(est_values)
    rate = float(shannon_rate_bits(transmission_j, em, truth_values[cy, cx]))
    diff = float(np.mean(np.abs(est_values - truth_values)))
    return Objective(rate, diff)


def evaluate_objective(action: Action, env, est_params, env_cfg: EnvConfig,
                       diff_cfg: DiffusionConfig, schedule: NoiseSchedule,
                       em: EnergyModel, rng, meas_noise_sigma_db: float = 1.0,
                       n_avg: int = 1, estimate=None) -> Objective:
    """Single-scenario objective: mission, estimate, serving-cell rate.

    estimate, when given, is injected in place of the diffusion estimate
    (oracle testing); the mission still decides the energy split.
    """
    from .diffusion import estimate_map

    action.validate()
    traj = plan_lawnmower(env_cfg.width_cells, env_cfg.height_cells, action.row_spacing)
    meas, ledger = execute_mission(env, traj, em, action.rho, meas_noise_sigma_db, rng)
    if estimate is None:
        est = estimate_map(est_params, meas, env_cfg, diff_cfg, schedule, rng, n_avg)
        est_values = est.values
    else:
        est_values = estimate.values
    truth = ground_truth_map(env)
    return objective_from_estimate(est_values, truth.values, ledger.transmission_j, em)


def softmax_weights(J, temperature: float):
    """Softmax over standardized objectives.

    Raw objectives here are payload bit counts (1e9 and up); softmax on
    raw values would saturate to one-hot at any usable temperature, so
    the scores are z-scored first.  Standardizing preserves the softmax
    contracts: weights sum to one, a constant shift of every J changes
    nothing, temperature -> infinity flattens to uniform, and a dominant
    candidate at small temperature takes all the mass.
    """
    if temperature <= 0:
        raise ConfigurationError("temperature must be > 0")
    J = np.asarray(J, dtype=np.float64)
    if not np.all(np.isfinite(J)):
        raise NumericError("non-finite objective values")
    std = float(J.std())
    z = (J - J.mean()) / std if std > 0 else np.zeros_like(J)
    logit = z / temperature
    e = np.exp(logit - logit.max())
    return e / e.sum()


# ---------------------------------------------------------------------------
# Shared evaluation protocol


class ObjectiveEvaluator:
    """Fixed scenario set with common random numbers per (env, repetition).

    Measurement noise comes from pre-drawn per-cell fields and sampler
    chains from streams keyed by (env, rep, chain), never by the action,
    so J(action) carries no optimizer-dependent randomness and repeated
    calls with the same action list reproduce bitwise.  Every optimizer
    (exhaustive grid, diffusion policy, DDPG, random search) evaluates
    through this object, which puts their comparison on one protocol.
    """

    def __init__(self, envs, est_params, env_cfg: EnvConfig,
                 diff_cfg: DiffusionConfig, schedule: NoiseSchedule,
                 em: EnergyModel, base_seed: int, meas_noise_sigma_db: float = 1.0,
                 n_reps: int = 1, n_avg: int = 1, chunk: int = 256):
        if len(envs) == 0:
            raise ConfigurationError("evaluator needs at least one environment")
        self.envs = list(envs)
        self.est_params = est_params
        self.env_cfg = env_cfg
        self.diff_cfg = diff_cfg
        self.schedule = schedule
        self.em = em
        self.base_seed = int(base_seed)
        self.sigma = float(meas_noise_sigma_db)
        self.n_reps = int(n_reps)
        self.n_avg = int(n_avg)
        self.chunk = int(chunk)
        self.spec = None  # denoiser spec built lazily from configs
        from .diffusion import denoiser_spec
        self.spec = denoiser_spec(env_cfg, diff_cfg)
        self.truths = [ground_truth_map(e).values for e in self.envs]
        h, w = env_cfg.height_cells, env_cfg.width_cells
        self.noise_fields = [
            [
                stream(self.base_seed, "obj-meas", e, r).normal(0.0, self.sigma, (h, w))
                if self.sigma > 0 else np.zeros((h, w))
                for r in range(self.n_reps)
            ]
            for e in range(len(self.envs))
        ]
        self._traj_cache = {}

    @property
    def n_envs(self):
        return len(self.envs)

    @property
    def evals_per_action(self):
        return self.n_envs * self.n_reps

    @property
    def j_scale(self):
        """Payload bits of a full-budget transmission at the clamp ceiling;
        an upper bound used to normalize rewards."""
        hi = self.env_cfg.snr_clamp[1]
        return float(shannon_rate_bits(self.em.total_budget_j, self.em, hi))

    def _trajectory(self, spacing):
        if spacing not in self._traj_cache:
            self._traj_cache[spacing] = plan_lawnmower(
                self.env_cfg.width_cells, self.env_cfg.height_cells, spacing
            )
        return self._traj_cache[spacing]

    def _mission_geometry(self, action: Action, env_index: int):
        traj = self._trajectory(action.row_spacing)
        return execute_mission(
            self.envs[env_index], traj, self.em, action.rho, 0.0, None
        )

    def _sample_units(self, masks, obs, rngs):
        out = np.empty_like(masks)
        for lo in range(0, masks.shape[0], self.chunk):
            hi = lo + self.chunk
            out[lo:hi] = sample_conditional_batch(
                self.spec, self.est_params, masks[lo:hi], obs[lo:hi],
                self.schedule, rngs[lo:hi], self.diff_cfg.time_embed_dim,
                self.diff_cfg.skip_prior_scale,
            )
        return out

    def _evaluate_pairs(self, pairs):
        """pairs: list of (Action, env_index).  Returns (rate, est_diff)
        arrays aligned with pairs, averaged over reps."""
        cells = self.env_cfg.width_cells * self.env_cfg.height_cells
        n_chain = len(pairs) * self.n_reps * self.n_avg
        masks = np.empty((n_chain, cells))
        obs = np.empty((n_chain, cells))
        rngs = []
        meta = []
        geo = {}
        row = 0
        for p, (action, e) in enumerate(pairs):
            key = (action.rho, action.row_spacing, e)
            if key not in geo:
                geo[key] = self._mission_geometry(action, e)
            meas0, ledger = geo[key]
            for r in range(self.n_reps):
                values = np.where(
                    meas0.mask, meas0.values + self.noise_fields[e][r], np.nan
                )
                meas = MeasurementSet(meas0.mask, values, meas0.order)
                mask_f, obs_f = unit_observations(meas, self.env_cfg)
                for i in range(self.n_avg):
                    masks[row] = mask_f
                    obs[row] = obs_f
                    rngs.append(stream(self.base_seed, "obj-sample", e, r, i))
                    row += 1
                meta.append((p, e, ledger.transmission_j))
        units = self._sample_units(masks, obs, rngs)
        h, w = self.env_cfg.height_cells, self.env_cfg.width_cells
        rate = np.zeros((len(pairs), self.n_reps))
        diff = np.zeros((len(pairs), self.n_reps))
        for j, (p, e, tx_j) in enumerate(meta):
            chunk = units[j * self.n_avg:(j + 1) * self.n_avg]
            est = from_unit(chunk.mean(axis=0).reshape(h, w), self.env_cfg)
            r = j % self.n_reps
            ob = objective_from_estimate(est.values, self.truths[e], tx_j, self.em)
            rate[p, r] = ob.rate_bits
            diff[p, r] = ob.est_diff_db
        return rate, diff

    def evaluate_actions(self, actions):
        """Full protocol: each action on every (env, rep); returns a dict
        with mean J per action plus the per-pair tables."""
        for a in actions:
            a.validate()
        pairs = [(a, e) for a in actions for e in range(self.n_envs)]
        rate, diff = self._evaluate_pairs(pairs)
        k = len(actions)
        rate = rate.reshape(k, self.n_envs * self.n_reps)
        diff = diff.reshape(k, self.n_envs * self.n_reps)
        return {
            "J": rate.mean(axis=1),
            "est_diff": diff.mean(axis=1),
            "rate_per": rate,
            "est_diff_per": diff,
        }

    def evaluate_on_envs(self, actions, env_indices):
        """One (action, env) pair each, rep 0 streams; the per-episode
        protocol used by the bandit baseline."""
        for a in actions:
            a.validate()
        saved = self.n_reps
        if saved != 1:
            raise ContractViolation("single-env evaluation requires n_reps == 1")
        pairs = list(zip(actions, env_indices))
        rate, diff = self._evaluate_pairs(pairs)
        return rate[:, 0], diff[:, 0]


def make_scenario_envs(env_cfg: EnvConfig, n: int, run_seed: int):
    """Scenario environments on their own seed range."""
    from dataclasses import replace

    from .rng import child_seed

    envs = []
    for i in range(n):
        cfg = replace(env_cfg, seed=child_seed(run_seed, "scenario-env", i))
        envs.append(build_environment(cfg))
    return envs


# ---------------------------------------------------------------------------
# Diffusion-as-optimizer policy


def action_denoiser_spec(pcfg: PolicyConfig) -> nn.NetSpec:
    sizes = [2 + pcfg.time_embed_dim] + list(pcfg.hidden) + [2]
    return nn.NetSpec(sizes, pcfg.activation).validate()


def action_schedule(pcfg: PolicyConfig) -> NoiseSchedule:
    return make_schedule(DiffusionConfig(T=pcfg.action_T))


def sample_actions(spec, params, n, schedule: NoiseSchedule, rng, embed_dim):
    """Unconditional reverse diffusion over 2-D action vectors, clamped to
    the unit square."""
    x = rng.standard_normal((n, 2))
    for t in range(schedule.T, 0, -1):
        beta_t = schedule.beta[t - 1]
        alpha_t = schedule.alpha[t - 1]
        ab_t = schedule.alpha_bar[t]
        emb = np.broadcast_to(time_embedding(float(t), embed_dim), (n, embed_dim))
        eps_pred, _ = nn.forward(spec, params, np.concatenate([x, emb], axis=1))
        x = (x - (beta_t / np.sqrt(1.0 - ab_t)) * eps_pred) / np.sqrt(alpha_t)
        if t > 1:
            x = x + np.sqrt(beta_t) * rng.standard_normal((n, 2))
    return np.clip(x, 0.0, 1.0)


def gdm_policy_iterate(policy_params, pcfg: PolicyConfig,
                       evaluator: ObjectiveEvaluator, schedule: NoiseSchedule,
                       adam, sample_rng, train_rng):
    """One generate-evaluate-update round.

    N candidate actions come from the current action-diffusion model; the
    evaluator scores them; softmax weights over the scores drive a
    weighted denoising regression pulling the model toward high-objective
    actions.  Returns (params', adam', stats).
    """
    pcfg.validate()
    spec = action_denoiser_spec(pcfg)
    raw = sample_actions(spec, policy_params, pcfg.candidates, schedule,
                         sample_rng, pcfg.time_embed_dim)
    actions = [Action(float(r), float(u)) for r, u in raw]
    result = evaluator.evaluate_actions(actions)
    J = result["J"]
    if not np.all(np.isfinite(J)):
        raise NumericError("non-finite objective in policy iteration")
    weights = softmax_weights(J, pcfg.temperature)
    for _ in range(pcfg.updates_per_iter):
        t = train_rng.integers(1, schedule.T + 1, size=pcfg.candidates)
        eps = train_rng.standard_normal((pcfg.candidates, 2))
        x_t = q_sample(raw, t, eps, schedule)
        emb = time_embedding(t, pcfg.time_embed_dim)
        pred, cache = nn.forward(spec, policy_params,
                                 np.concatenate([x_t, emb], axis=1))
        resid = pred - eps
        # d/dpred of sum_k w_k * mean_j(resid_kj^2)
        gout = weights[:, None] * resid / resid.shape[1] * 2.0
        grads, _ = nn.backward(spec, policy_params, cache, gout)
        policy_params, adam = nn.adam_step(policy_params, grads, adam)
    best = int(np.argmax(J))
    stats = {
        "iter_best_J": float(J[best]),
        "mean_J": float(J.mean()),
        "best_action": actions[best],
        "actions": actions,
        "J": J,
    }
    return policy_params, adam, stats


def run_gdm_policy(pcfg: PolicyConfig, evaluator: ObjectiveEvaluator):
    """Full policy optimization; returns the running-best result and the
    per-iteration history."""
    pcfg.validate()
    spec = action_denoiser_spec(pcfg)
    schedule = action_schedule(pcfg)
    params = nn.init_params(spec, stream(pcfg.seed, "policy-init").integers(2**63))
    adam = nn.init_adam(params.size, lr=pcfg.lr)
    sample_rng = stream(pcfg.seed, "policy-sample")
    train_rng = stream(pcfg.seed, "policy-train")
    best_J = -np.inf
    best_action = None
    history = []
    for it in range(1, pcfg.iterations + 1):
        params, adam, stats = gdm_policy_iterate(
            params, pcfg, evaluator, schedule, adam, sample_rng, train_rng
        )
        if stats["iter_best_J"] > best_J:
            best_J = stats["iter_best_J"]
            best_action = stats["best_action"]
        history.append({
            "iteration": it,
            "iter_best_J": stats["iter_best_J"],
            "mean_J": stats["mean_J"],
            "best_J_so_far": best_J,
            "best_rho": best_action.rho,
            "best_spacing_u": best_action.spacing_u,
        })
    return {"best_action": best_action, "best_J": float(best_J),
            "history": history, "params": params}


# ---------------------------------------------------------------------------
# Reference optimizers


def exhaustive_grid(evaluator: ObjectiveEvaluator, rho_grid, spacing_grid):
    """Evaluate every (rho, spacing) pair; returns (best action, table).

    Ties go to the earliest row, so the table and the winner are pure
    functions of the evaluator streams.
    """
    if len(rho_grid) == 0 or len(spacing_grid) == 0:
        raise ConfigurationError("grids must be non-empty")
    actions = [
        Action(float(r), u_from_spacing(int(s)))
        for r in rho_grid for s in spacing_grid
    ]
    result = evaluator.evaluate_actions(actions)
    table = []
    for a, j, d in zip(actions, result["J"], result["est_diff"]):
        table.append({
            "rho": a.rho,
            "spacing": a.row_spacing,
            "J": float(j),
            "est_diff_db": float(d),
        })
    best = int(np.argmax(result["J"]))
    return actions[best], table


def random_search(evaluator: ObjectiveEvaluator, n_actions: int, rng,
                  batch: int = 32):
    """Uniform actions under the shared protocol; prefix-monotone best."""
    if n_actions < 1:
        raise ConfigurationError("budget must be >= 1")
    draws = rng.uniform(size=(n_actions, 2))
    history = []
    best_J = -np.inf
    best_action = None
    for lo in range(0, n_actions, batch):
        chunk = [Action(float(r), float(u)) for r, u in draws[lo:lo + batch]]
        result = evaluator.evaluate_actions(chunk)
        for k, (a, j) in enumerate(zip(chunk, result["J"])):
            if j > best_J:
                best_J = float(j)
                best_action = a
            history.append({
                "index": lo + k,
                "J": float(j),
                "best_J_so_far": best_J,
            })
    return {"best_action": best_action, "best_J": best_J, "history": history}


# ---------------------------------------------------------------------------
# DDPG baseline (one-step bandit)


def _scenario_state(truth_values, env_cfg: EnvConfig):
    """Mean/std of a 4x4 block-average probe, scaled by the clamp span."""
    h, w = truth_values.shape
    bh, bw = max(h // 4, 1), max(w // 4, 1)
    probe = truth_values[:bh * 4, :bw * 4].reshape(4, bh, 4, bw).mean(axis=(1, 3))
    lo, hi = env_cfg.snr_clamp
    span = hi - lo
    return np.array([(probe.mean() - lo) / span, probe.std() / span])


class _Replay:
    def __init__(self, capacity):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, 2))
        self.a = np.zeros((self.capacity, 2))
        self.r = np.zeros(self.capacity)
        self.ptr = 0
        self.size = 0

    def push(self, s, a, r):
        i = self.ptr
        self.s[i], self.a[i], self.r[i] = s, a, r
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n, rng):
        idx = rng.integers(0, self.size, size=n)
        return self.s[idx], self.a[idx], self.r[idx]


def _soft_update(target: nn.FlatParams, source: nn.FlatParams, tau: float):
    target.values *= 1.0 - tau
    target.values += tau * source.values


def ddpg_baseline(evaluator: ObjectiveEvaluator, dcfg: DdpgConfig):
    """Deterministic actor-critic on one-step episodes.

    Episodes cycle the evaluator's environments; the reward is the
    episode's payload normalized by the evaluator's j_scale bound.  With
    one-step episodes the critic target is the observed reward itself, so
    the target networks (kept and soft-updated each step for protocol
    fidelity) never enter the fit.  Returns the best action encountered
    and the per-episode learning curve.
    """
    dcfg.validate()
    actor_spec = nn.NetSpec([2] + list(dcfg.hidden) + [2], "relu").validate()
    critic_spec = nn.NetSpec([4] + list(dcfg.hidden) + [1], "relu").validate()
    init_rng = stream(dcfg.seed, "ddpg-init")
    actor = nn.init_params(actor_spec, init_rng.integers(2**63))
    critic = nn.init_params(critic_spec, init_rng.integers(2**63))
    actor_t = nn.FlatParams(actor.values.copy(), actor.manifest, actor.seed)
    critic_t = nn.FlatParams(critic.values.copy(), critic.manifest, critic.seed)
    adam_a = nn.init_adam(actor.size, lr=dcfg.actor_lr)
    adam_c = nn.init_adam(critic.size, lr=dcfg.critic_lr)
    replay = _Replay(dcfg.replay_capacity)
    noise_rng = stream(dcfg.seed, "ddpg-noise")
    batch_rng = stream(dcfg.seed, "ddpg-replay")
    j_scale = evaluator.j_scale

    states = [
        _scenario_state(t, evaluator.env_cfg) for t in evaluator.truths
    ]
    best_J = -np.inf
    best_action = None
    history = []

    def policy_actions(s_batch, actor_params):
        y, _ = nn.forward(actor_spec, actor_params, s_batch)
        return expit(y)

    episode = 0
    while episode < dcfg.episodes:
        cb = min(dcfg.collect_batch, dcfg.episodes - episode)
        env_idx = [(episode + i) % evaluator.n_envs for i in range(cb)]
        s_batch = np.array([states[e] for e in env_idx])
        greedy = policy_actions(s_batch, actor)
        decay = 1.0 - (episode + np.arange(cb)) / max(dcfg.episodes - 1, 1)
        sigma = dcfg.noise_sigma * np.maximum(decay, 0.0)
        noisy = greedy + noise_rng.standard_normal((cb, 2)) * sigma[:, None]
        acts = np.clip(noisy, 0.0, 1.0)
        actions = [Action(float(r), float(u)) for r, u in acts]
        J, _ = evaluator.evaluate_on_envs(actions, env_idx)
        for i in range(cb):
            replay.push(s_batch[i], acts[i], J[i] / j_scale)
            if J[i] > best_J:
                best_J = float(J[i])
                best_action = actions[i]
            history.append({
                "episode": episode + i,
                "J": float(J[i]),
                "best_J_so_far": best_J,
            })
        episode += cb

        if replay.size < max(dcfg.warmup, dcfg.batch_size):
            continue
        for _ in range(cb):
            s, a, r = replay.sample(dcfg.batch_size, batch_rng)
            # Critic regression: one-step episodes make r the exact target.
            q_in = np.concatenate([s, a], axis=1)
            q, cache = nn.forward(critic_spec, critic, q_in)
            resid = q - r[:, None]
            closs = float(np.mean(resid * resid))
            if not np.isfinite(closs):
                raise NumericError("critic loss diverged")
            grads, _ = nn.backward(critic_spec, critic, cache,
                                   (2.0 / resid.size) * resid)
            critic, adam_c = nn.adam_step(critic, grads, adam_c)
            # Actor ascent on the live critic.
            y, acache = nn.forward(actor_spec, actor, s)
            a_pred = expit(y)
            q_in = np.concatenate([s, a_pred], axis=1)
            _, qcache = nn.forward(critic_spec, critic, q_in)
            _, dq_in = nn.backward(critic_spec, critic, qcache,
                                   np.full((len(s), 1), -1.0 / len(s)))
            da = dq_in[:, 2:]
            dy = da * a_pred * (1.0 - a_pred)
            agrads, _ = nn.backward(actor_spec, actor, acache, dy)
            actor, adam_a = nn.adam_step(actor, agrads, adam_a)
            _soft_update(critic_t, critic, dcfg.soft_tau)
            _soft_update(actor_t, actor, dcfg.soft_tau)

    return {
        "best_action": best_action,
        "best_J": float(best_J),
        "history": history,
        "actor": actor,
        "critic": critic,
    }


# ---------------------------------------------------------------------------
# Energy-fraction sweep


def sweep_energy_fraction(evaluator: ObjectiveEvaluator, rho_grid,
                          spacing: int = 1):
    """Mean and std of est_diff and rate per rho at fixed sweep spacing.

    One evaluator call per rho reuses the same (env, rep) streams, so the
    whole curve shares its random numbers and differences between rows
    come from rho alone."""
    rho_grid = list(rho_grid)
    if len(rho_grid) == 0:
        raise ConfigurationError("rho grid must be non-empty")
    if sorted(rho_grid) != rho_grid:
        raise ConfigurationError("rho grid must be sorted ascending")
    u = u_from_spacing(int(spacing))
    rows = []
    for rho in rho_grid:
        result = evaluator.evaluate_actions([Action(float(rho), u)])
        rate = result["rate_per"][0]
        diff = result["est_diff_per"][0]
        rows.append({
            "rho": float(rho),
            "est_diff_db_mean": float(diff.mean()),
            "est_diff_db_std": float(diff.std()),
            "rate_bits_mean": float(rate.mean()),
            "rate_bits_std": float(rate.std()),
        })
    return rows
