"""Conditional denoising-diffusion estimator for SNR maps.

The forward process follows the standard closed-form marginal
x_t = sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps over a linear
beta schedule.  A dense noise-prediction network sees the noisy map
concatenated with the measurement mask, the masked observations, and a
sinusoidal time embedding.  Sampling runs the ancestral reverse loop with
replacement conditioning: after every step the observed cells are
overwritten with the forward-noised observations at the new timestep, so
at t = 0 the sample agrees with the measurements exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigurationError, ContractViolation, NumericError
from .mission import MeasurementSet
from .rf_env import EnvConfig, SnrMap, from_unit, to_unit

__all__ = [
    "NoiseSchedule",
    "DiffusionConfig",
    "make_schedule",
    "time_embedding",
    "denoiser_spec",
    "unit_observations",
    "q_sample",
    "skip_coefficient",
    "init_denoiser_params",
    "train_step",
    "train_denoiser",
    "sample_conditional",
    "sample_conditional_batch",
    "estimate_map",
    "masked_rmse",
    "TrainingSet",
]


@dataclass
class NoiseSchedule:
    T: int
    beta: np.ndarray       # beta[t-1] is the step-t coefficient, t in [1, T]
    alpha: np.ndarray      # 1 - beta
    alpha_bar: np.ndarray  # length T+1, alpha_bar[0] = 1, cumulative product

    def validate(self):
        if self.T < 2:
            raise ConfigurationError("schedule needs T >= 2")
        if np.any(self.beta <= 0) or np.any(self.beta >= 1):
            raise ConfigurationError("beta must lie in (0, 1)")
        if np.any(np.diff(self.beta) < 0):
            raise ConfigurationError("beta must be non-decreasing")
        if self.alpha_bar[0] != 1.0 or np.any(np.diff(self.alpha_bar) >= 0):
            raise ConfigurationError("alpha_bar must start at 1 and strictly decrease")
        return self


@dataclass
class DiffusionConfig:
    T: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02
    hidden: list = field(default_factory=lambda: [512, 512])
    activation: str = "silu"
    time_embed_dim: int = 16
    batch_size: int = 16
    train_steps: int = 5000
    lr: float = 1e-3
    lr_final: float = 1e-4
    n_avg: int = 4
    eval_every: int = 500
    skip_prior_scale: float = 0.25
    seed: int = 0

    def validate(self):
        if self.T < 2:
            raise ConfigurationError("T must be >= 2")
        if not 0 < self.beta_start <= self.beta_end < 1:
            raise ConfigurationError("beta range must satisfy 0 < start <= end < 1")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ConfigurationError("time_embed_dim must be a positive even number")
        if self.batch_size < 1 or self.train_steps < 1:
            raise ConfigurationError("batch_size and train_steps must be >= 1")
        if self.n_avg < 1:
            raise ConfigurationError("n_avg must be >= 1")
        if self.skip_prior_scale <= 0:
            raise ConfigurationError("skip_prior_scale must be > 0")
        if not 0 < self.lr_final <= self.lr:
            raise ConfigurationError("lr_final must satisfy 0 < lr_final <= lr")
        return self


def make_schedule(config: DiffusionConfig) -> NoiseSchedule:
    config.validate()
    beta = np.linspace(config.beta_start, config.beta_end, config.T)
    alpha = 1.0 - beta
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha)])
    return NoiseSchedule(config.T, beta, alpha, alpha_bar).validate()


def time_embedding(t, dim, max_period: float = 10000.0):
    """Sinusoidal embedding; t may be a scalar or an integer array."""
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    angles = np.asarray(t, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def denoiser_spec(env_cfg: EnvConfig, diff_cfg: DiffusionConfig) -> nn.NetSpec:
    cells = env_cfg.width_cells * env_cfg.height_cells
    sizes = [3 * cells + diff_cfg.time_embed_dim] + list(diff_cfg.hidden) + [cells]
    return nn.NetSpec(sizes, diff_cfg.activation).validate()


def skip_coefficient(t, schedule: NoiseSchedule, prior_scale: float):
    """Per-cell optimal linear coefficient for reading eps off x_t.

    The denoiser predicts eps as gate * c_t * x_t plus the network output.
    For a zero-mean cell prior with standard deviation s, the least-squares
    linear predictor of eps given x_t = sqrt(ab)*x0 + sqrt(1-ab)*eps is

        c_t = sqrt(1 - ab) / ((1 - ab) + ab * s^2).

    Carrying the full-rank component of the target through this analytic
    head leaves the network a low-rank residual it can actually represent;
    without it a hidden layer narrower than the cell count caps how much of
    the white noise the model can ever explain.
    """
    ab = schedule.alpha_bar[np.asarray(t)]
    return np.sqrt(1.0 - ab) / ((1.0 - ab) + ab * prior_scale**2)


def init_denoiser_params(spec: nn.NetSpec, seed) -> nn.FlatParams:
    """Network init plus a zero-initialized scalar gate on the analytic head.

    The gate starts cold, so a fresh model predicts ~0 and training has to
    earn the linear term; it converges toward 1 within the first thousand
    steps or so.
    """
    net = nn.init_params(spec, seed)
    manifest = net.manifest + [("gate", (1,))]
    values = np.concatenate([net.values, [0.0]])
    return nn.FlatParams(values, manifest, int(seed))


def _head_gate(params: nn.FlatParams) -> float:
    # Plain network params (no gate entry) run with the head fully on.
    for name, _ in params.manifest:
        if name == "gate":
            return float(params.view("gate")[0])
    return 1.0


def unit_observations(measurements: MeasurementSet, env_cfg: EnvConfig):
    """Flattened (mask, observation) pair in unit scale; observations are
    zero at unmasked cells and clamped to [-1, 1] at masked ones."""
    mask = measurements.mask.astype(np.float64).ravel()
    values = np.where(measurements.mask, np.nan_to_num(measurements.values), 0.0)
    snr = SnrMap(env_cfg.width_cells, env_cfg.height_cells, env_cfg.cell_size_m, values)
    obs = np.clip(to_unit(snr, env_cfg), -1.0, 1.0).ravel() * mask
    return mask, obs


def q_sample(x0, t, eps, schedule: NoiseSchedule):
    """Forward-marginal draw x_t; t = 0 returns x0 exactly."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ContractViolation("eps shape must match x0")
    t_arr = np.asarray(t)
    if np.any(t_arr < 0) or np.any(t_arr > schedule.T):
        raise ContractViolation(f"t outside [0, {schedule.T}]")
    ab = schedule.alpha_bar[t_arr]
    if t_arr.ndim > 0:
        ab = ab.reshape(t_arr.shape + (1,) * (x0.ndim - t_arr.ndim))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


@dataclass
class TrainingSet:
    x0: np.ndarray    # (N, H*W) unit maps
    mask: np.ndarray  # (N, H*W) 0/1
    obs: np.ndarray   # (N, H*W) unit observations, zero where unmasked

    def __len__(self):
        return self.x0.shape[0]


def train_step(spec, params, batch, schedule: NoiseSchedule, rng, adam_state,
               embed_dim, skip_prior_scale: float = 0.25):
    """One noise-prediction update on a (x0, mask, obs) batch.

    Per sample: t ~ uniform over [1, T], eps ~ standard normal, the network
    output plus the analytic skip term predicts eps, loss is the mean squared
    eps-prediction error over all cells, optimized with one Adam step on the
    mean-batch gradient.
    """
    x0, mask, obs = batch
    b = x0.shape[0]
    t = rng.integers(1, schedule.T + 1, size=b)
    eps = rng.standard_normal(x0.shape)
    x_t = q_sample(x0, t, eps, schedule)
    emb = time_embedding(t, embed_dim)
    net_in = np.concatenate([x_t, mask, obs, emb], axis=1)
    out, cache = nn.forward(spec, params, net_in)
    c = skip_coefficient(t, schedule, skip_prior_scale)
    head = c[:, None] * x_t
    pred = out + _head_gate(params) * head
    resid = pred - eps
    loss = float(np.mean(resid * resid))
    if not np.isfinite(loss):
        raise NumericError(f"non-finite training loss {loss}")
    dpred = (2.0 / resid.size) * resid
    grads, _ = nn.backward(spec, params, cache, dpred)
    if params.manifest and params.manifest[-1][0] == "gate":
        grads[-1] = float(np.sum(dpred * head))
    params, adam_state = nn.adam_step(params, grads, adam_state)
    return params, adam_state, loss


def train_denoiser(env_cfg: EnvConfig, diff_cfg: DiffusionConfig,
                   data: TrainingSet, checkpoint_hook=None):
    """Full training loop; returns (params, per-step losses).

    Batches are drawn with replacement from a single named stream, so two
    runs with the same seed produce identical loss sequences.  The learning
    rate follows a cosine ramp from lr down to lr_final.  The hook, when
    given, fires every eval_every steps and at the last step with
    (step, params).
    """
    from .rng import child_seed, stream

    diff_cfg.validate()
    if len(data) == 0:
        raise ConfigurationError("empty training set")
    spec = denoiser_spec(env_cfg, diff_cfg)
    schedule = make_schedule(diff_cfg)
    params = init_denoiser_params(spec, child_seed(diff_cfg.seed, "init"))
    adam = nn.init_adam(params.size, lr=diff_cfg.lr)
    rng = stream(diff_cfg.seed, "train")
    losses = np.empty(diff_cfg.train_steps)
    span = max(diff_cfg.train_steps - 1, 1)
    for step in range(1, diff_cfg.train_steps + 1):
        frac = (step - 1) / span
        adam.lr = diff_cfg.lr_final + 0.5 * (diff_cfg.lr - diff_cfg.lr_final) * (
            1.0 + np.cos(np.pi * frac)
        )
        idx = rng.integers(0, len(data), size=diff_cfg.batch_size)
        batch = (data.x0[idx], data.mask[idx], data.obs[idx])
        params, adam, loss = train_step(
            spec, params, batch, schedule, rng, adam, diff_cfg.time_embed_dim,
            diff_cfg.skip_prior_scale
        )
        losses[step - 1] = loss
        if checkpoint_hook is not None and (
            step % diff_cfg.eval_every == 0 or step == diff_cfg.train_steps
        ):
            checkpoint_hook(step, params)
    return params, losses


def sample_conditional_batch(spec, params, masks, obs, schedule: NoiseSchedule,
                             rngs, embed_dim, skip_prior_scale: float = 0.25):
    """Ancestral reverse loop over a batch of chains with per-chain masks.

    Each chain draws from its own generator (init noise, then per step the
    ancestral z followed by the replacement noise), so a chain's random
    draws never depend on who shares the batch.  For a fixed batch shape
    the outputs are bit-reproducible; across batch shapes the underlying
    matrix kernels may differ in the last ulp.
    """
    if not np.all(np.isfinite(params.values)):
        raise NumericError("denoiser parameters contain non-finite values")
    masks = np.atleast_2d(np.asarray(masks, dtype=np.float64))
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    b, cells = masks.shape
    if obs.shape != masks.shape or len(rngs) != b:
        raise ContractViolation("masks, obs, and rngs must agree on batch size")

    x = np.empty((b, cells))
    for i, r in enumerate(rngs):
        x[i] = r.standard_normal(cells)
    bool_masks = masks > 0.5
    gate = _head_gate(params)

    # Per chain the draw schedule is fixed regardless of mask content or
    # batch composition: init noise, then per step the ancestral z (t > 1)
    # followed by the replacement noise (t > 1).
    for t in range(schedule.T, 0, -1):
        beta_t = schedule.beta[t - 1]
        alpha_t = schedule.alpha[t - 1]
        ab_t = schedule.alpha_bar[t]
        ab_prev = schedule.alpha_bar[t - 1]
        emb = np.broadcast_to(time_embedding(float(t), embed_dim), (b, embed_dim))
        net_in = np.concatenate([x, masks, obs, emb], axis=1)
        out, _ = nn.forward(spec, params, net_in)
        eps_pred = out + gate * skip_coefficient(t, schedule, skip_prior_scale) * x
        # Clamp the implied clean map before forming the posterior mean;
        # without this the chain can drift outside the data range and the
        # clamp at the end cannot recover it.
        x0_hat = (x - np.sqrt(1.0 - ab_t) * eps_pred) / np.sqrt(ab_t)
        np.clip(x0_hat, -1.0, 1.0, out=x0_hat)
        mean = (
            (np.sqrt(ab_prev) * beta_t / (1.0 - ab_t)) * x0_hat
            + (np.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)) * x
        )
        if t > 1:
            z = np.empty((b, cells))
            for i, r in enumerate(rngs):
                z[i] = r.standard_normal(cells)
            x = mean + np.sqrt(beta_t) * z
            rep = np.empty((b, cells))
            for i, r in enumerate(rngs):
                rep[i] = r.standard_normal(cells)
            noisy = np.sqrt(ab_prev) * obs + np.sqrt(1.0 - ab_prev) * rep
        else:
            x = mean
            noisy = obs
        x = np.where(bool_masks, noisy, x)
    out = np.clip(x, -1.0, 1.0)
    # Replacement at t=0 wrote the observations verbatim; keep them
    # bit-exact through the final clamp.
    out = np.where(bool_masks, obs, out)
    if not np.all(np.isfinite(out)):
        raise NumericError("sampler produced non-finite values")
    return out


def sample_conditional(spec, params, measurements: MeasurementSet,
                       env_cfg: EnvConfig, schedule: NoiseSchedule, rng,
                       embed_dim, skip_prior_scale: float = 0.25):
    """Single conditioned chain; returns a flat unit map."""
    mask, obs = unit_observations(measurements, env_cfg)
    out = sample_conditional_batch(
        spec, params, mask[None, :], obs[None, :], schedule, [rng], embed_dim,
        skip_prior_scale
    )
    return out[0]


def estimate_map(params, measurements: MeasurementSet, env_cfg: EnvConfig,
                 diff_cfg: DiffusionConfig, schedule: NoiseSchedule, rng,
                 n_avg=None) -> SnrMap:
    """Mean of n_avg conditioned samples, mapped back to dB."""
    n = diff_cfg.n_avg if n_avg is None else int(n_avg)
    if n < 1:
        raise ConfigurationError("n_avg must be >= 1")
    spec = denoiser_spec(env_cfg, diff_cfg)
    mask, obs = unit_observations(measurements, env_cfg)
    masks = np.repeat(mask[None, :], n, axis=0)
    obs_b = np.repeat(obs[None, :], n, axis=0)
    chains = sample_conditional_batch(
        spec, params, masks, obs_b, schedule, rng.spawn(n),
        diff_cfg.time_embed_dim, diff_cfg.skip_prior_scale
    )
    unit = chains.mean(axis=0).reshape(env_cfg.height_cells, env_cfg.width_cells)
    return from_unit(unit, env_cfg)


def masked_rmse(estimate: SnrMap, truth: SnrMap, exclude_mask=None):
    """RMS dB error over cells outside exclude_mask (all cells when the
    mask is empty or None)."""
    if estimate.values.shape != truth.values.shape:
        raise ContractViolation("estimate and truth grids differ")
    diff = estimate.values - truth.values
    if exclude_mask is not None:
        keep = ~np.asarray(exclude_mask, dtype=bool)
        if not keep.any():
            raise NumericError("masked RMSE undefined: no cells to evaluate")
        diff = diff[keep]
    return float(np.sqrt(np.mean(diff * diff)))
