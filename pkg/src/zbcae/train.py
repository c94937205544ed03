"""Optimization and training orchestration.

SGD uses classical (heavy-ball) momentum with weight decay folded into the
gradient: v <- mu*v - lr*(g + wd*w); w <- w + v. The learning rate is never
annealed; when a phase does not pin one, a short probe picks the largest
candidate whose loss stays finite and below 10x its starting value.

All stochasticity (batch order, augmentation draws, dropout masks) is keyed
by (seed, phase, depth/epoch, batch), never by mutable generator state, so a
run interrupted at an epoch boundary and resumed from a checkpoint replays
the uninterrupted run bit for bit.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from zbcae import augment as aug
from zbcae import data as datamod
from zbcae.errors import DivergenceError, NoViableRateError, ShapeError

DIVERGENCE_FACTOR = 10.0
DEFAULT_LR_GRID = tuple(10.0 ** -i for i in range(6))  # 1e0 .. 1e-5

_PHASE_IDS = {"pretrain": 1, "finetune": 2, "probe": 3, "augment": 4}


def stream_seed(master, phase, *key):
    """Stable RNG entropy for a named random stream."""
    return [int(master), _PHASE_IDS[phase], *[int(k) for k in key]]


class OptimizerState:
    """Per-parameter velocity buffers plus the SGD hyperparameters."""

    def __init__(self, params, learning_rate, momentum=0.9, weight_decay=1e-5):
        if learning_rate <= 0 or momentum < 0 or weight_decay < 0:
            raise ValueError("optimizer hyperparameters must be positive")
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocities = {k: np.zeros_like(v) for k, v in params.items()}


def sgd_step(params, grads, state):
    """One momentum step, updating `params` in place.

    Raises DivergenceError on any non-finite gradient or resulting weight.
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient in {name}")
        w = params[name]
        v = state.velocities[name]
        v *= w.dtype.type(state.momentum)
        v -= w.dtype.type(state.learning_rate) * (
            g + w.dtype.type(state.weight_decay) * w
        )
        w += v
        if not np.isfinite(w).all():
            raise DivergenceError(f"non-finite weights in {name}")
    return params


def probe_learning_rate(params, step_fn, candidates=DEFAULT_LR_GRID, steps=8,
                        momentum=0.9, weight_decay=1e-5,
                        divergence_factor=DIVERGENCE_FACTOR):
    """Largest candidate rate whose probe losses stay finite and bounded.

    `step_fn(i)` returns (loss, grads) for probe step i against the current
    parameter values. Parameters are snapshotted before probing and restored
    afterwards, so the caller's model is left untouched.
    """
    snapshot = {k: v.copy() for k, v in params.items()}

    def restore():
        for k in params:
            params[k][...] = snapshot[k]

    try:
        for lr in sorted(candidates, reverse=True):
            restore()
            state = OptimizerState(params, lr, momentum, weight_decay)
            initial, ok = None, True
            for i in range(steps):
                try:
                    loss, grads = step_fn(i)
                except (DivergenceError, FloatingPointError, OverflowError):
                    ok = False
                    break
                if not np.isfinite(loss):
                    ok = False
                    break
                if initial is None:
                    initial = max(abs(loss), 1e-12)
                if loss > divergence_factor * initial:
                    ok = False
                    break
                try:
                    sgd_step(params, grads, state)
                except DivergenceError:
                    ok = False
                    break
            if ok:
                return lr
        raise NoViableRateError(
            f"all candidate learning rates diverged: {sorted(candidates, reverse=True)}"
        )
    finally:
        restore()


@dataclass
class MetricsRow:
    phase: str
    epoch: int
    loss: float
    accuracy: float  # nan where not applicable
    seconds: float
    diverged: bool = False


@dataclass
class TrainState:
    """Resume point: which unit is training, how far it got, and optimizer state."""

    phase: str = "pretrain"
    depth: int = 1
    epoch: int = 0  # epochs completed within the current unit
    learning_rate: float = 0.0  # 0 means not yet chosen
    velocities: dict = field(default_factory=dict)


def _pretrain_lr(stack, images, phase, seed, depth):
    params = {f"conv{depth}.filters": stack.encoders[depth - 1].filters}
    n = images.shape[0]
    batches = datamod.batch_indices(
        n, phase.batch_size, stream_seed(seed, "probe", depth), 0
    )

    def step(i):
        x = images[batches[i % len(batches)]]
        return stack.cost_and_grads(x, depth)

    steps = max(1, phase.probe_epochs * len(batches))
    return probe_learning_rate(
        params, step, steps=steps, momentum=phase.momentum,
        weight_decay=phase.weight_decay,
    )


def greedy_pretrain(stack, images, phase, seed, state=None, epoch_budget=None,
                    metrics=None, timer=time.perf_counter):
    """Train each encoder/decoder pair in turn, shallowest first.

    While depth d trains, only layer d's filters move; everything shallower
    is bit-frozen. `images` must already be standardized. Returns the
    TrainState; pass it back (after reloading weights) to resume. Raises
    DivergenceError naming the epoch and rate if the loss leaves the reals.
    """
    state = state or TrainState(phase="pretrain", depth=1, epoch=0)
    metrics = metrics if metrics is not None else []
    budget = epoch_budget if epoch_budget is not None else float("inf")
    n = images.shape[0]

    for depth in range(state.depth, len(stack) + 1):
        if depth != state.depth:
            state = TrainState(phase="pretrain", depth=depth, epoch=0)
        if phase.epochs == 0:
            stack.trained_depth = depth
            continue
        if state.learning_rate == 0.0:
            state.learning_rate = (
                phase.learning_rate
                if phase.learning_rate is not None
                else _pretrain_lr(stack, images, phase, seed, depth)
            )
        params = {f"conv{depth}.filters": stack.encoders[depth - 1].filters}
        opt = OptimizerState(
            params, state.learning_rate, phase.momentum, phase.weight_decay
        )
        for k, v in state.velocities.items():
            opt.velocities[k][...] = v
        state.velocities = opt.velocities

        for epoch in range(state.epoch, phase.epochs):
            if budget <= 0:
                return state
            t0 = timer()
            losses = []
            for idx in datamod.batch_indices(
                n, phase.batch_size, stream_seed(seed, "pretrain", depth), epoch
            ):
                try:
                    loss, grads = stack.cost_and_grads(images[idx], depth)
                    if not np.isfinite(loss):
                        raise DivergenceError("non-finite reconstruction loss")
                    sgd_step(params, grads, opt)
                except DivergenceError as exc:
                    metrics.append(MetricsRow(
                        f"pretrain{depth}", epoch, float("nan"), float("nan"),
                        timer() - t0, diverged=True,
                    ))
                    raise DivergenceError(
                        f"pretraining depth {depth} diverged at epoch {epoch} "
                        f"(lr={state.learning_rate:g}): {exc}"
                    ) from exc
                losses.append(loss)
            metrics.append(MetricsRow(
                f"pretrain{depth}", epoch, float(np.mean(losses)), float("nan"),
                timer() - t0,
            ))
            state.epoch = epoch + 1
            budget -= 1
        stack.trained_depth = depth
    return state


def _augment_batch(images, aug_cfg, rng_seed):
    out = np.empty_like(images)
    for i in range(images.shape[0]):
        rng = np.random.default_rng([*rng_seed, i])
        out[i] = aug.augment_example(
            images[i], rng,
            flip=aug_cfg.translations,
            translate_frac=aug_cfg.translate_frac if aug_cfg.translations else 0.0,
            color=aug_cfg.color,
            contrast=aug_cfg.color,
            contrast_value_from_saturation=aug_cfg.contrast_value_from_saturation,
        )
    return out


def finetune(classifier, train_ds, phase, aug_cfg, seed, val_ds=None, state=None,
             epoch_budget=None, metrics=None, timer=time.perf_counter):
    """Supervised training of encoders plus head on cross-entropy.

    Augmentations (when toggled) act on raw [0,1] images; standardization
    always follows. Per-epoch rows carry mean train loss and validation
    accuracy (nan without a validation set).
    """
    state = state or TrainState(phase="finetune", depth=0, epoch=0)
    metrics = metrics if metrics is not None else []
    budget = epoch_budget if epoch_budget is not None else float("inf")
    params = classifier.parameters()
    n = len(train_ds)
    if train_ds.labels.max() >= classifier.head.w_out.shape[0]:
        raise ShapeError(
            f"dataset has label {int(train_ds.labels.max())} but the head only "
            f"has {classifier.head.w_out.shape[0]} classes"
        )

    raw = train_ds.images
    plain = aug.standardize(raw)
    use_aug = aug_cfg.translations or aug_cfg.color
    if aug_cfg.color and raw.shape[1] != 3:
        raise ShapeError("color/contrast augmentation needs 3-channel images")
    dropout_on = aug_cfg.dropout
    classifier.head.dropout_p = aug_cfg.dropout_p if dropout_on else 0.0

    if state.learning_rate == 0.0 and phase.epochs > 0:
        if phase.learning_rate is not None:
            state.learning_rate = phase.learning_rate
        else:
            batches = datamod.batch_indices(
                n, phase.batch_size, stream_seed(seed, "probe", 0), 0
            )

            def step(i):
                idx = batches[i % len(batches)]
                rng = (
                    np.random.default_rng(stream_seed(seed, "probe", 1, i))
                    if dropout_on
                    else None
                )
                return classifier.loss_and_grads(
                    plain[idx], train_ds.labels[idx],
                    train_mode=dropout_on, rng=rng,
                )[:2]

            state.learning_rate = probe_learning_rate(
                params, step, steps=max(1, phase.probe_epochs * len(batches)),
                momentum=phase.momentum, weight_decay=phase.weight_decay,
            )

    if state.epoch >= phase.epochs:
        return state  # evaluation-only pass: parameters untouched
    opt = OptimizerState(params, state.learning_rate, phase.momentum, phase.weight_decay)
    for k, v in state.velocities.items():
        opt.velocities[k][...] = v
    state.velocities = opt.velocities

    for epoch in range(state.epoch, phase.epochs):
        if budget <= 0:
            return state
        t0 = timer()
        losses = []
        for bi, idx in enumerate(datamod.batch_indices(
            n, phase.batch_size, stream_seed(seed, "finetune", 0), epoch
        )):
            if use_aug:
                x = _augment_batch(
                    raw[idx], aug_cfg, stream_seed(seed, "augment", epoch, bi)
                )
                x = aug.standardize(x)
            else:
                x = plain[idx]
            rng = (
                np.random.default_rng(stream_seed(seed, "finetune", 1, epoch, bi))
                if dropout_on
                else None
            )
            try:
                loss, grads, _ = classifier.loss_and_grads(
                    x, train_ds.labels[idx], train_mode=dropout_on, rng=rng
                )
                if not np.isfinite(loss):
                    raise DivergenceError("non-finite training loss")
                sgd_step(params, grads, opt)
            except DivergenceError as exc:
                metrics.append(MetricsRow(
                    "finetune", epoch, float("nan"), float("nan"),
                    timer() - t0, diverged=True,
                ))
                raise DivergenceError(
                    f"fine-tuning diverged at epoch {epoch} "
                    f"(lr={state.learning_rate:g}): {exc}"
                ) from exc
            losses.append(loss)
        acc = evaluate(classifier, val_ds)[0] if val_ds is not None else float("nan")
        metrics.append(MetricsRow(
            "finetune", epoch, float(np.mean(losses)), acc, timer() - t0
        ))
        state.epoch = epoch + 1
        budget -= 1
    return state


def evaluate(classifier, ds, batch_size=256):
    """Inference-mode accuracy: (overall, per-class array)."""
    hits = np.zeros(ds.num_classes, np.int64)
    counts = np.zeros(ds.num_classes, np.int64)
    images = aug.standardize(ds.images)
    for start in range(0, len(ds), batch_size):
        x = images[start : start + batch_size]
        y = ds.labels[start : start + batch_size]
        pred = classifier.forward(x, train_mode=False).argmax(axis=1)
        for k in range(ds.num_classes):
            sel = y == k
            counts[k] += sel.sum()
            hits[k] += (pred[sel] == k).sum()
    per_class = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
    overall = float(hits.sum() / max(counts.sum(), 1))
    return overall, per_class


@dataclass
class GradcheckReport:
    tolerance: float
    layer_errors: dict
    skipped: dict

    @property
    def passed(self):
        return all(err <= self.tolerance for err in self.layer_errors.values())

    def lines(self):
        out = []
        for name, err in self.layer_errors.items():
            mark = "ok" if err <= self.tolerance else "FAIL"
            skip = f" skipped_kinks={self.skipped[name]}" if self.skipped[name] else ""
            out.append(f"{name}: max_rel_err={err:.3e} [{mark}]{skip}")
        out.append(f"gradcheck: {'PASS' if self.passed else 'FAIL'} at {self.tolerance:g}")
        return out


def gradcheck(params, loss_and_grads, loss_fn=None, seed=0, max_per_tensor=200,
              step=1e-6, tolerance=1e-5, kink_tolerance=1e-3):
    """Central-difference check of every parameter tensor's gradient.

    `loss_and_grads()` must be deterministic in the current parameters;
    `loss_fn` (defaults to the loss of `loss_and_grads`) is what finite
    differences evaluate, so a cheap forward-only version speeds this up.
    Errors are |analytic - numeric| / max(1, |analytic|, |numeric|), maxed
    over a random subsample of at most `max_per_tensor` entries per tensor.

    ReLU and max-pool are only piecewise smooth: a perturbation that flips a
    switch makes the two one-sided slopes disagree, and no finite-difference
    estimate is meaningful there. Such samples are detected purely from the
    numeric slopes (so a wrong analytic gradient can never hide behind the
    filter), skipped, and counted in the report.
    """
    if loss_fn is None:
        loss_fn = lambda: loss_and_grads()[0]  # noqa: E731
    rng = np.random.default_rng(seed)
    center, grads = loss_and_grads()
    errors, skipped = {}, {}
    for name, w in params.items():
        count = min(max_per_tensor, w.size)
        flat = rng.choice(w.size, size=count, replace=False)
        worst, kinks = 0.0, 0
        for fi in flat:
            ix = np.unravel_index(fi, w.shape)
            orig = w[ix]
            w[ix] = orig + step
            fp = loss_fn()
            w[ix] = orig - step
            fm = loss_fn()
            w[ix] = orig
            d_plus = (fp - center) / step
            d_minus = (center - fm) / step
            if abs(d_plus - d_minus) > kink_tolerance * max(1.0, abs(d_plus), abs(d_minus)):
                kinks += 1
                continue
            numeric = (fp - fm) / (2.0 * step)
            analytic = float(grads[name][ix])
            err = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
            worst = max(worst, err)
        errors[name] = worst
        skipped[name] = kinks
    return GradcheckReport(tolerance, errors, skipped)
