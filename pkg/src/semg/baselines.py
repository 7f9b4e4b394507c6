"""Comparison estimators for the sparse-measurement map problem.

Two non-learned interpolators (inverse-distance weighting and mean fill)
serve as oracles and floors, and a gated recurrent model stands in for a
sequence-learning baseline: a single-gate cell consumes the visit-ordered
measurement triples (normalized x, normalized y, unit value) and a dense
readout of the final hidden state produces the full unit map.  Training
uses the same optimizer, step count, and batch size as the diffusion
estimator so comparisons happen at equal budget.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import nn
from .errors import ConfigurationError, ContractViolation, NumericError
from .mission import MeasurementSet
from .rf_env import EnvConfig, SnrMap, from_unit, to_unit

__all__ = [
    "idw_interpolate",
    "mean_fill",
    "RecurrentSpec",
    "TrainBudget",
    "measurement_sequence",
    "init_recurrent_params",
    "recurrent_forward",
    "recurrent_backward",
    "train_recurrent",
    "recurrent_predict",
    "recurrent_fit_predict",
]


def _observed(measurements: MeasurementSet):
    if measurements.count == 0:
        raise NumericError("estimate undefined: no measurements")
    ys, xs = np.nonzero(measurements.mask)
    vals = measurements.values[ys, xs]
    return xs, ys, vals


def idw_interpolate(measurements: MeasurementSet, env_cfg: EnvConfig,
                    power: float = 2.0) -> SnrMap:
    """Inverse-distance-weighted mean in cell-index space; observed cells
    keep their measured values untouched."""
    if power <= 0:
        raise ConfigurationError("idw power must be > 0")
    xs, ys, vals = _observed(measurements)
    h, w = env_cfg.height_cells, env_cfg.width_cells
    gy, gx = np.mgrid[0:h, 0:w]
    d2 = (gx.ravel()[:, None] - xs[None, :]) ** 2 + (gy.ravel()[:, None] - ys[None, :]) ** 2
    out = np.empty(h * w)
    observed_flat = measurements.mask.ravel()
    free = ~observed_flat
    weights = d2[free].astype(np.float64) ** (-power / 2.0)
    out[free] = weights @ vals / weights.sum(axis=1)
    out[observed_flat] = measurements.values.ravel()[observed_flat]
    return SnrMap(w, h, env_cfg.cell_size_m, out.reshape(h, w))


def mean_fill(measurements: MeasurementSet, env_cfg: EnvConfig) -> SnrMap:
    """Unobserved cells get the arithmetic mean of the measured values;
    each observed cell counts once regardless of revisits."""
    _, _, vals = _observed(measurements)
    h, w = env_cfg.height_cells, env_cfg.width_cells
    out = np.full((h, w), vals.mean())
    out[measurements.mask] = measurements.values[measurements.mask]
    return SnrMap(w, h, env_cfg.cell_size_m, out)


# ---------------------------------------------------------------------------
# Gated recurrent baseline


@dataclass
class RecurrentSpec:
    input_size: int = 3
    hidden: int = 64
    cell_variant: str = "single-gate"
    readout_hidden: list = field(default_factory=lambda: [256])
    readout_activation: str = "silu"

    def validate(self):
        if self.input_size != 3:
            raise ConfigurationError("recurrent input is the (x, y, value) triple")
        if self.hidden <= 0:
            raise ConfigurationError("hidden size must be positive")
        return self

    def readout_spec(self, cells: int) -> nn.NetSpec:
        sizes = [self.hidden] + list(self.readout_hidden) + [cells]
        return nn.NetSpec(sizes, self.readout_activation).validate()


@dataclass
class TrainBudget:
    steps: int = 5000
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0


def measurement_sequence(measurements: MeasurementSet, env_cfg: EnvConfig) -> np.ndarray:
    """Visit-ordered (L, 3) triples: x/(W-1), y/(H-1), unit value."""
    k = len(measurements.order)
    seq = np.zeros((k, 3))
    if k == 0:
        return seq
    xs = measurements.order[:, 0]
    ys = measurements.order[:, 1]
    vals = measurements.values[ys, xs]
    lo, hi = env_cfg.snr_clamp
    unit = np.clip((vals - lo) / (hi - lo) * 2.0 - 1.0, -1.0, 1.0)
    seq[:, 0] = xs / max(env_cfg.width_cells - 1, 1)
    seq[:, 1] = ys / max(env_cfg.height_cells - 1, 1)
    seq[:, 2] = unit
    return seq


def init_recurrent_params(rspec: RecurrentSpec, env_cfg: EnvConfig, seed: int) -> nn.FlatParams:
    rspec.validate()
    cells = env_cfg.width_cells * env_cfg.height_cells
    h, i = rspec.hidden, rspec.input_size
    manifest = [
        ("wf", (h, h + i)),
        ("bf", (h,)),
        ("wc", (h, h + i)),
        ("bc", (h,)),
    ] + rspec.readout_spec(cells).manifest()
    total = sum(int(np.prod(s)) for _, s in manifest)
    params = nn.FlatParams(np.zeros(total), manifest, int(seed))
    rng = np.random.default_rng(int(seed))
    for name, shape in manifest:
        if name.startswith("w"):
            v = params.view(name)
            v[:] = rng.standard_normal(shape) / np.sqrt(shape[1])
    return params


@dataclass
class _RecurrentCache:
    params: nn.FlatParams
    inputs: np.ndarray      # (B, L, 3) padded
    step_active: np.ndarray  # (B, L) 1.0 while the sequence is running
    h_prev: list            # per step (B, hidden) state entering the cell
    f: list                 # per step gate output
    c: list                 # per step candidate state
    h_final: np.ndarray
    readout_cache: object


def recurrent_forward(rspec: RecurrentSpec, params: nn.FlatParams,
                      inputs: np.ndarray, lengths, env_cfg: EnvConfig):
    """Run the gated cell over padded sequences and read out unit maps.

    The single gate f both blends the candidate state and scales the
    recurrent candidate input: f = sigmoid(Wf [h, x] + bf),
    c = tanh(Wc [f*h, x] + bc), h' = (1 - f) * h + f * c.  Steps beyond a
    sequence's length leave its hidden state frozen.
    """
    cells = env_cfg.width_cells * env_cfg.height_cells
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3 or inputs.shape[2] != rspec.input_size:
        raise ContractViolation("inputs must be (batch, steps, 3)")
    b, max_len, _ = inputs.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    step_active = (np.arange(max_len)[None, :] < lengths[:, None]).astype(np.float64)

    views = params.views()
    wf, bf, wc, bc = views["wf"], views["bf"], views["wc"], views["bc"]
    h = np.zeros((b, rspec.hidden))
    h_prev_list, f_list, c_list = [], [], []
    for t in range(max_len):
        x_t = inputs[:, t, :]
        s = step_active[:, t][:, None]
        cat = np.concatenate([h, x_t], axis=1)
        f = expit(cat @ wf.T + bf)
        cat2 = np.concatenate([f * h, x_t], axis=1)
        c = np.tanh(cat2 @ wc.T + bc)
        h_new = (1.0 - f) * h + f * c
        h_prev_list.append(h)
        f_list.append(f)
        c_list.append(c)
        h = s * h_new + (1.0 - s) * h
    rspec_net = rspec.readout_spec(cells)
    pred, rcache = nn.forward(rspec_net, params, h)
    cache = _RecurrentCache(params, inputs, step_active, h_prev_list, f_list,
                            c_list, h, rcache)
    return pred, cache


def recurrent_backward(rspec: RecurrentSpec, params: nn.FlatParams,
                       cache: _RecurrentCache, pred_grad, env_cfg: EnvConfig):
    """Backpropagation through time; returns one flat gradient array."""
    if cache.params is not params:
        raise ContractViolation("cache does not belong to these params")
    cells = env_cfg.width_cells * env_cfg.height_cells
    rnet = rspec.readout_spec(cells)
    grads, dh = nn.backward(rnet, params, cache.readout_cache, pred_grad)
    gviews = nn.FlatParams(grads, params.manifest).views()
    views = params.views()
    wf, wc = views["wf"], views["wc"]
    hid = rspec.hidden
    for t in range(len(cache.f) - 1, -1, -1):
        s = cache.step_active[:, t][:, None]
        h_prev, f, c = cache.h_prev[t], cache.f[t], cache.c[t]
        x_t = cache.inputs[:, t, :]
        dh_new = dh * s
        dh_prev = dh * (1.0 - s)
        # h' = (1 - f) h + f c
        dc = dh_new * f
        df = dh_new * (c - h_prev)
        dh_prev = dh_prev + dh_new * (1.0 - f)
        # c = tanh(Wc [f h, x] + bc)
        dzc = dc * (1.0 - c * c)
        cat2 = np.concatenate([f * h_prev, x_t], axis=1)
        gviews["wc"] += dzc.T @ cat2
        gviews["bc"] += dzc.sum(axis=0)
        dcat2 = dzc @ wc
        dfh = dcat2[:, :hid]
        df = df + dfh * h_prev
        dh_prev = dh_prev + dfh * f
        # f = sigmoid(Wf [h, x] + bf)
        dzf = df * f * (1.0 - f)
        cat = np.concatenate([h_prev, x_t], axis=1)
        gviews["wf"] += dzf.T @ cat
        gviews["bf"] += dzf.sum(axis=0)
        dh_prev = dh_prev + (dzf @ wf)[:, :hid]
        dh = dh_prev
    return grads


def _pad_batch(sequences):
    max_len = max((len(s) for s in sequences), default=0)
    b = len(sequences)
    out = np.zeros((b, max(max_len, 1), 3))
    lengths = np.zeros(b, dtype=np.int64)
    for i, s in enumerate(sequences):
        lengths[i] = len(s)
        if len(s):
            out[i, :len(s)] = s
    return out, lengths


def train_recurrent(rspec: RecurrentSpec, env_cfg: EnvConfig, budget: TrainBudget,
                    sequences, targets, checkpoint_hook=None, eval_every: int = 500):
    """MSE training of the sequence-to-map model; returns (params, losses).

    sequences is a list of (L_i, 3) arrays, targets the matching (N, H*W)
    unit maps.  Batch draws come from the same named-stream discipline as
    the diffusion trainer.
    """
    from .rng import child_seed, stream

    if len(sequences) != targets.shape[0] or len(sequences) == 0:
        raise ConfigurationError("sequences and targets must be non-empty and congruent")
    params = init_recurrent_params(rspec, env_cfg, child_seed(budget.seed, "init"))
    adam = nn.init_adam(params.size, lr=budget.lr)
    rng = stream(budget.seed, "train")
    losses = np.empty(budget.steps)
    for step in range(1, budget.steps + 1):
        idx = rng.integers(0, len(sequences), size=budget.batch_size)
        batch_x, lengths = _pad_batch([sequences[i] for i in idx])
        pred, cache = recurrent_forward(rspec, params, batch_x, lengths, env_cfg)
        resid = pred - targets[idx]
        loss = float(np.mean(resid * resid))
        if not np.isfinite(loss):
            raise NumericError(f"non-finite recurrent loss at step {step}")
        grads = recurrent_backward(rspec, params, cache, (2.0 / resid.size) * resid, env_cfg)
        params, adam = nn.adam_step(params, grads, adam)
        losses[step - 1] = loss
        if checkpoint_hook is not None and (step % eval_every == 0 or step == budget.steps):
            checkpoint_hook(step, params)
    return params, losses


def recurrent_predict(rspec: RecurrentSpec, params: nn.FlatParams,
                      measurements: MeasurementSet, env_cfg: EnvConfig) -> SnrMap:
    seq = measurement_sequence(measurements, env_cfg)
    batch_x, lengths = _pad_batch([seq])
    pred, _ = recurrent_forward(rspec, params, batch_x, lengths, env_cfg)
    unit = np.clip(pred[0], -1.0, 1.0)
    return from_unit(unit.reshape(env_cfg.height_cells, env_cfg.width_cells), env_cfg)


def recurrent_fit_predict(rspec: RecurrentSpec, env_cfg: EnvConfig,
                          budget: TrainBudget, sequences, targets,
                          measurements: MeasurementSet) -> SnrMap:
    """Train on the shared protocol data, then predict one measurement set."""
    params, _ = train_recurrent(rspec, env_cfg, budget, sequences, targets)
    return recurrent_predict(rspec, params, measurements, env_cfg)
