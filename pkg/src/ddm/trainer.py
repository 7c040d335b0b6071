"""Initialisation, layerwise pretraining and block-coordinate fine-tuning."""

from dataclasses import dataclass, field, fields, replace
import logging
import math
import warnings

import numpy as np

from .beta import BetaParams, TargetSchedule, schedule_next
from .network import Decoder, Encoder, Layer, condition_penalty, encoder_forward, sigmoid
from .objective import PenaltyWeights, evaluate

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "TrainConfig",
    "TrainState",
    "init_params",
    "pretrain",
    "finetune",
    "train",
    "armijo_step",
    "adapt_weights",
    "make_minibatches",
    "apply_masking_noise",
    "random_orthonormal",
    "EPOCH_LOG_HEADER",
]

EPOCH_LOG_HEADER = "\t".join(
    ["stage", "epoch", "D", "I", "R", "C", "alpha", "beta", "accepted", "rejected", "mean_step", "mu_D", "mu_I", "mu_R"]
)


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    decoder_layers: int = 2
    encoder_widths: tuple = None
    initial_target: tuple = (2.0, 20.0)
    final_target: tuple = (0.02, 0.2)
    advance_tolerance: float = 0.1
    interpolation_steps: int = 12
    noise_rate: float = 0.1
    window_size: int = 64
    window_stride: int = None
    armijo_c: float = 1e-4
    armijo_backtrack: float = 0.5
    max_backtracks: int = 30
    initial_step: float = 1.0
    initial_weights: tuple = (1.0, 0.1, 1.0)
    weight_ratios: tuple = (1.0, 0.1, 1.0)
    ratio_update_period: int = 50
    epochs: int = 50
    pretrain_epochs: int = 10
    seed: int = 0
    epsilon_threshold: float = 0.01
    per_example_divergence: bool = True

    def __post_init__(self):
        if self.window_stride is None:
            self.window_stride = max(1, self.window_size // 4)
        self.initial_target = tuple(float(v) for v in self.initial_target)
        self.final_target = tuple(float(v) for v in self.final_target)
        self.initial_weights = tuple(float(v) for v in self.initial_weights)
        self.weight_ratios = tuple(float(v) for v in self.weight_ratios)
        if self.encoder_widths is not None:
            self.encoder_widths = tuple(int(v) for v in self.encoder_widths)
        self.validate()

    def validate(self):
        if self.decoder_layers < 1:
            raise ConfigError("decoder_layers must be >= 1")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError("noise_rate must lie in [0, 1)")
        if self.window_size < 1 or self.window_stride < 1:
            raise ConfigError("window_size and window_stride must be positive")
        if self.window_stride > self.window_size:
            raise ConfigError("window_stride must not exceed window_size")
        if not 0.0 < self.armijo_c < 1.0 or not 0.0 < self.armijo_backtrack < 1.0:
            raise ConfigError("armijo_c and armijo_backtrack must lie in (0, 1)")
        if self.max_backtracks < 0 or self.ratio_update_period < 1:
            raise ConfigError("max_backtracks >= 0 and ratio_update_period >= 1 required")
        if not 0.0 <= self.epsilon_threshold < 0.5:
            raise ConfigError("epsilon_threshold must lie in [0, 0.5)")
        if len(self.initial_weights) != 3 or len(self.weight_ratios) != 3:
            raise ConfigError("initial_weights and weight_ratios take three values (D, I, R)")
        if any(r < 0 for r in self.weight_ratios) or self.weight_ratios[2] <= 0:
            raise ConfigError("weight ratios must be nonnegative with a positive reconstruction ratio")
        try:
            self.make_schedule()
            PenaltyWeights(*self.initial_weights)
        except ValueError as err:
            raise ConfigError(str(err)) from None

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def make_schedule(self):
        return TargetSchedule(
            BetaParams(*self.initial_target),
            BetaParams(*self.final_target),
            advance_tolerance=self.advance_tolerance,
            interpolation_steps=self.interpolation_steps,
        )

    @property
    def schedule(self):
        return self.make_schedule()

    def widths_for(self, k):
        widths = self.encoder_widths or (k,) * self.decoder_layers
        if widths[-1] != k:
            raise ConfigError(f"last encoder width must equal the data dimension {k}")
        return widths


@dataclass
class TrainState:
    encoder: Encoder
    decoder: Decoder
    schedule: TargetSchedule
    weights: PenaltyWeights
    step_count: int = 0
    objective_history: list = field(default_factory=list)
    epoch_log: list = field(default_factory=list)
    condition_history: list = field(default_factory=list)
    step_sizes: dict = field(default_factory=dict)
    norm_buffer: list = field(default_factory=list)

    @property
    def current_target(self):
        return self.schedule.current


def random_orthonormal(n_out, n_in, rng):
    """Random matrix with orthonormal rows or columns (QR with a sign fix)."""
    big, small = max(n_out, n_in), min(n_out, n_in)
    q, r = np.linalg.qr(rng.standard_normal((big, small)))
    q = q * np.sign(np.diag(r))
    return q if n_out >= n_in else q.T


def _mean_variance(h):
    return float(np.mean(np.var(h, axis=0)))


def _calibrate_scale(base, bias, inputs, target_var, max_steps=50):
    """Bisect a scalar so ``sigmoid(s * inputs @ base.T + bias)`` hits ``target_var``."""
    def var_at(s):
        return _mean_variance(sigmoid(s * (inputs @ base.T) + bias))

    lo, hi = 0.0, 1.0
    while var_at(hi) < target_var and hi < 1e6:
        hi *= 2.0
    if var_at(hi) < target_var:
        warnings.warn("weight-scale calibration failed; falling back to scale 1", RuntimeWarning)
        return 1.0
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        if var_at(mid) < target_var:
            lo = mid
        else:
            hi = mid
        if abs(var_at(hi) - target_var) <= 0.01 * target_var:
            break
    s = hi
    if abs(var_at(s) - target_var) > 0.1 * target_var:
        warnings.warn("weight-scale calibration failed; falling back to scale 1", RuntimeWarning)
        return 1.0
    return s


def init_params(config, data_sample, rng=None):
    """Scaled random orthonormal weights and biases of ln(alpha0 / beta0).

    Each encoder layer's scale is bisected so its output variance on the
    propagated sample matches the initial target variance. Decoder layers
    share one scale chosen so the decoder's output variance on the encoded
    sample matches the data's.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    data_sample = np.asarray(data_sample, dtype=float)
    if data_sample.ndim != 2 or data_sample.shape[0] == 0:
        raise ValueError("data_sample must be a nonempty 2-D array")
    k = data_sample.shape[1]
    widths = config.widths_for(k)
    a0, b0 = config.initial_target
    target = BetaParams(a0, b0)
    bias_value = math.log(a0 / b0)

    enc_layers = []
    h = data_sample
    n_in = k
    for width in widths:
        base = random_orthonormal(width, n_in, rng)
        bias = np.full(width, bias_value)
        s = _calibrate_scale(base, bias, h, target.variance)
        layer = Layer(s * base, bias)
        enc_layers.append(layer)
        h = layer(h)
        n_in = width
    encoder = Encoder(enc_layers, threshold=config.epsilon_threshold)

    bases = [random_orthonormal(k, k, rng) for _ in range(config.decoder_layers)]
    bias = np.full(k, bias_value)
    latents = encoder(data_sample)
    data_var = _mean_variance(data_sample)

    def build(s):
        return Decoder([Layer(s * b, bias.copy()) for b in bases])

    def out_var(s):
        return _mean_variance(build(s)(latents))

    lo, hi = 0.0, 1.0
    while out_var(hi) < data_var and hi < 1e6:
        hi *= 2.0
    scale = 1.0
    if out_var(hi) >= data_var:
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if out_var(mid) < data_var:
                lo = mid
            else:
                hi = mid
        scale = hi if hi > 0 else 1.0
    return encoder, build(scale)


def make_minibatches(n_examples, window_size, stride, rng):
    """Overlapping windows swept over one shuffle of the indices (with wraparound)."""
    if not (1 <= stride <= window_size <= n_examples):
        raise ConfigError(
            f"need 1 <= stride ({stride}) <= window_size ({window_size}) <= n_examples ({n_examples})"
        )
    perm = rng.permutation(n_examples)
    count = math.ceil(n_examples / stride)
    offsets = np.arange(window_size)
    return [perm[(i * stride + offsets) % n_examples] for i in range(count)]


def apply_masking_noise(batch, noise_rate, rng):
    """Zero each entry independently with probability ``noise_rate``."""
    batch = np.asarray(batch, dtype=float)
    if noise_rate <= 0.0:
        return batch.copy()
    mask = rng.random(batch.shape) < noise_rate
    return np.where(mask, 0.0, batch)


def armijo_step(loss_fn, params, gradient, config, initial_step=None, loss0=None):
    """Backtracking line search along ``-gradient``.

    ``params`` and ``gradient`` are matching sequences of arrays. Accepts the
    first ``t`` with ``loss(params - t g) <= loss(params) - c t ||g||^2``.
    Returns ``(new_params, t)``; ``t == 0`` means no step was taken.
    """
    t = config.initial_step if initial_step is None else initial_step
    gnorm2 = float(sum(np.sum(g * g) for g in gradient))
    if gnorm2 == 0.0 or not math.isfinite(gnorm2):
        return [np.array(p, copy=True) for p in params], 0.0
    f0 = loss_fn(params) if loss0 is None else loss0
    for _ in range(config.max_backtracks + 1):
        trial = [p - t * g for p, g in zip(params, gradient)]
        try:
            f = loss_fn(trial)
        except (ArithmeticError, ValueError):
            f = math.inf
        if math.isfinite(f) and f <= f0 - config.armijo_c * t * gnorm2:
            return trial, t
        t *= config.armijo_backtrack
    return [np.array(p, copy=True) for p in params], 0.0


def adapt_weights(norms, config, current=None):
    """Reweight penalties so that ``mu_T * ||grad T||`` follow the configured ratios.

    ``norms`` are averaged gradient norms for (D, I, R). Weights are normalised
    to ``mu_R = 1``; a term with zero norm keeps its weight and a zero ratio
    disables its term.
    """
    if current is None:
        current = PenaltyWeights(*config.initial_weights)
    n_d, n_i, n_r = (float(v) for v in norms)
    r_d, r_i, r_r = config.weight_ratios
    if n_r <= 0.0 or not math.isfinite(n_r):
        return current
    ref = n_r / r_r

    def pick(ratio, norm, old):
        if ratio == 0.0:
            return 0.0
        if norm <= 0.0 or not math.isfinite(norm):
            return old
        return min(max(ratio * ref / norm, 1e-8), 1e8)

    return PenaltyWeights(pick(r_d, n_d, current.mu_D), pick(r_i, n_i, current.mu_I), 1.0)


def _with_layer(enc, dec, key, params):
    stack, idx = key
    layer = Layer(params[0], params[1])
    if stack == "encoder":
        layers = list(enc.layers)
        layers[idx] = layer
        return Encoder(layers, enc.threshold), dec
    layers = list(dec.layers)
    layers[idx] = layer
    return enc, Decoder(layers)


def _block_keys(enc, dec):
    return [("encoder", j) for j in range(len(enc.layers))] + [
        ("decoder", m) for m in range(len(dec.layers))
    ]


def _fmt(v):
    return format(float(v), ".17g")


def _log_epoch(state, stage, epoch, report, accepted, rejected, steps):
    tgt = state.current_target
    w = state.weights
    mean_step = float(np.mean(steps)) if steps else 0.0
    line = "\t".join(
        [stage, str(epoch), _fmt(report.divergence), _fmt(report.invertibility),
         _fmt(report.reconstruction), _fmt(report.total), _fmt(tgt.alpha), _fmt(tgt.beta),
         str(accepted), str(rejected), _fmt(mean_step), _fmt(w.mu_D), _fmt(w.mu_I), _fmt(w.mu_R)]
    )
    state.epoch_log.append(line)
    log.info(line)
    return line


def finetune(state, config, data, rng=None, epochs=None, advance=True, blocks=None,
             extra_terms_fn=None, stage="finetune", on_epoch=None):
    """Block-coordinate descent with one Armijo step per layer per minibatch.

    ``blocks`` restricts which layers are updated (default: every encoder
    layer input-side first, then every decoder layer). ``extra_terms_fn(idx)``
    may supply additional objective terms per minibatch.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    window = min(config.window_size, n)
    stride = min(config.window_stride, window)
    per_example = config.per_example_divergence and data.shape[1] >= 2
    epochs = config.epochs if epochs is None else epochs
    keys = blocks if blocks is not None else _block_keys(state.encoder, state.decoder)

    for epoch in range(epochs):
        accepted = rejected = 0
        steps = []
        for idx in make_minibatches(n, window, stride, rng):
            batch = data[idx]
            noisy = apply_masking_noise(batch, config.noise_rate, rng)
            target = state.current_target
            extra = extra_terms_fn(idx) if extra_terms_fn is not None else ()
            first = True
            for key in keys:
                ev = evaluate(batch, state.encoder, state.decoder, target, state.weights,
                              noisy=noisy, per_example=per_example, strict=False,
                              need_grad=True, extra_terms=extra)
                if first:
                    state.objective_history.append(ev.report)
                    state.norm_buffer.append((ev.grad_D.norm(), ev.grad_I.norm(), ev.grad_R.norm()))
                    first = False
                gw, gb = ev.total_grad.block(key)
                layer = (state.encoder.layers if key[0] == "encoder" else state.decoder.layers)[key[1]]
                enc0, dec0, weights0 = state.encoder, state.decoder, state.weights

                def loss_fn(params):
                    e, d = _with_layer(enc0, dec0, key, params)
                    r = evaluate(batch, e, d, target, weights0, noisy=noisy,
                                 per_example=per_example, strict=False, extra_terms=extra).report
                    return r.total

                t0 = state.step_sizes.get(key, config.initial_step)
                new, t = armijo_step(loss_fn, [layer.weights, layer.bias], [gw, gb], config,
                                     initial_step=t0, loss0=ev.report.total)
                if t > 0.0:
                    state.encoder, state.decoder = _with_layer(enc0, dec0, key, new)
                    state.step_sizes[key] = 2.0 * t
                    accepted += 1
                    steps.append(t)
                else:
                    state.step_sizes[key] = max(t0 * config.armijo_backtrack ** config.max_backtracks, 1e-12)
                    rejected += 1
            state.step_count += 1
            if state.step_count % config.ratio_update_period == 0 and state.norm_buffer:
                avg = np.mean(np.array(state.norm_buffer), axis=0)
                state.weights = adapt_weights(avg, config, state.weights)
                state.norm_buffer.clear()

        full = evaluate(data, state.encoder, state.decoder, state.current_target, state.weights,
                        per_example=per_example, strict=False, extra_terms=()).report
        state.condition_history.append(full.invertibility)
        _log_epoch(state, stage, epoch, full, accepted, rejected, steps)
        if advance:
            schedule_next(state.schedule, float(np.mean(full.per_dimension_divergences)))
        if on_epoch is not None:
            on_epoch(state, epoch, full)
    return state


def _initial_weights(config):
    return PenaltyWeights(*config.initial_weights)


def pretrain(config, data, rng=None):
    """Greedy layerwise pretraining of single-layer models, then stacking.

    Level ``m`` trains a one-layer encoder/decoder pair on the codes produced
    by level ``m - 1`` against the schedule's initial target. Encoder layers
    are stacked in order, decoder layers in reverse.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    data = np.asarray(data, dtype=float)
    k = data.shape[1]
    widths = config.widths_for(k)
    if any(w != k for w in widths) or len(widths) != config.decoder_layers:
        raise ConfigError("pretraining needs encoder_widths equal to the data dimension, one per decoder layer")
    level_config = _single_level(config)
    enc_layers = []
    dec_layers = []
    logs = []
    codes = data
    for level in range(config.decoder_layers):
        enc, dec = init_params(level_config, codes, rng)
        state = TrainState(enc, dec, config.make_schedule(), _initial_weights(config))
        state = finetune(state, level_config, codes, rng, epochs=config.pretrain_epochs,
                         advance=False, stage=f"pretrain{level}")
        enc_layers.append(state.encoder.layers[0])
        dec_layers.insert(0, state.decoder.layers[0])
        codes = state.encoder(codes)
        logs.extend(state.epoch_log)
    encoder = Encoder(enc_layers, threshold=config.epsilon_threshold)
    decoder = Decoder(dec_layers)
    out = TrainState(encoder, decoder, config.make_schedule(), _initial_weights(config))
    out.epoch_log.extend(logs)
    return out


def _single_level(config):
    return replace(config, decoder_layers=1, encoder_widths=None)


def train(config, data, on_epoch=None, extra_terms_fn=None):
    """Full pipeline on preprocessed ``data``: init or pretrain, then fine-tune.

    ``extra_terms_fn`` is forwarded to the fine-tuning stage only.
    """
    rng = np.random.default_rng(config.seed)
    data = np.asarray(data, dtype=float)
    k = data.shape[1]
    widths = config.widths_for(k)
    can_pretrain = len(widths) == config.decoder_layers and all(w == k for w in widths)
    if config.pretrain_epochs > 0 and can_pretrain:
        state = pretrain(config, data, rng)
    else:
        if config.pretrain_epochs > 0:
            log.warning("encoder widths differ from the data dimension; skipping pretraining")
        enc, dec = init_params(config, data, rng)
        state = TrainState(enc, dec, config.make_schedule(), _initial_weights(config))
    return finetune(state, config, data, rng, on_epoch=on_epoch, extra_terms_fn=extra_terms_fn)
