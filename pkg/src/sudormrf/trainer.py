"""Adam optimizer, learning-rate schedule, and the toy overfit loop.

The toy loop exists to validate gradients and cost accounting end to end:
it memorizes a handful of fixed synthetic mixtures, which a correct
implementation does easily and a subtly broken gradient does not.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import costmodel, losses, model
from .autograd import Tape, TapedOps, leaf_grads
from .config import ModelConfig
from .errors import NumericalError, ValidationError
from .params import init_params

Array = np.ndarray


@dataclass
class OptimState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    step: int = 0
    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)


@dataclass(frozen=True)
class TrainRecord:
    epoch: int
    loss: float
    cum_flops: int
    wall_time: float   # excluded from determinism guarantees


def adam_init(params: dict[str, Array], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps_adam: float = 1e-8) -> OptimState:
    state = OptimState(lr=lr, beta1=beta1, beta2=beta2, eps_adam=eps_adam)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def adam_step(params: dict[str, Array], grads: dict[str, Array],
              state: OptimState) -> None:
    """Standard bias-corrected update, in place on params and state."""
    if set(grads) != set(params):
        raise ValidationError("gradient names do not match parameter names")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValidationError(f"gradient shape mismatch for {name!r}")
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps_adam)


def lr_schedule(epoch: int, base_lr: float, decay_every: int,
                factor: float) -> float:
    """Step decay: base_lr / factor^floor(epoch / decay_every)."""
    if base_lr <= 0 or decay_every <= 0 or factor <= 0:
        raise ValidationError("lr_schedule arguments must be positive")
    return base_lr / factor ** (epoch // decay_every)


def batch_loss_and_grads(cfg: ModelConfig, params: dict[str, Array],
                         batch: list[tuple[Array, Array]]) -> tuple[float, dict[str, Array]]:
    """Mean PIT loss over a batch and averaged parameter gradients.

    Examples are processed in index order and gradients summed in that
    order, so the result is deterministic.
    """
    total_loss = 0.0
    acc: dict[str, Array] = {k: np.zeros_like(v) for k, v in params.items()}
    for mixture, sources in batch:
        tape = Tape()
        be = TapedOps(tape)
        nodes = {k: tape.leaf(v) for k, v in params.items()}
        x = np.asarray(mixture, dtype=params["encoder.weight"].dtype)
        outs = model.forward(be, cfg, nodes, tape.leaf(x.reshape(1, -1)))
        est = np.concatenate([o.value for o in outs], axis=0)
        t_rec = est.shape[1]
        targets = np.asarray(sources)[:, :t_rec]
        result, d_est = losses.pit_loss_fixed_grad(targets, est)
        total_loss += result.loss
        seeds = [(o, d_est[j:j + 1].astype(o.value.dtype)) for j, o in enumerate(outs)]
        tape.backward(seeds)
        for name, g in leaf_grads(nodes).items():
            acc[name] += g
    n = len(batch)
    return total_loss / n, {k: v / n for k, v in acc.items()}


def train_toy(cfg: ModelConfig, data: list[tuple[Array, Array]], epochs: int,
              seed: int = 0, base_lr: float = 1e-3, batch_size: int = 4,
              decay_every: int = 0, decay_factor: float = 5.0,
              dtype: type = np.float32) -> tuple[list[TrainRecord], dict[str, Array]]:
    """Overfit a small model on a fixed synthetic set.

    One epoch is one pass over ``data`` in fixed order.  Cumulative FLOPs
    come from the analytic cost model (backward direction), so the count is
    an exact multiple of the per-epoch cost.
    """
    if not data:
        raise ValidationError("training data is empty")
    params = init_params(cfg, seed=seed, dtype=dtype)
    params = {k: v.astype(dtype) for k, v in params.items()}
    state = adam_init(params, lr=base_lr)
    t_in = len(np.asarray(data[0][0]).reshape(-1))
    flops_per_example = costmodel.count_flops(cfg, t_in, "backward").flops_total
    records: list[TrainRecord] = []
    cum_flops = 0
    start = time.perf_counter()
    for epoch in range(epochs):
        if decay_every > 0:
            state.lr = lr_schedule(epoch, base_lr, decay_every, decay_factor)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(data), batch_size):
            batch = data[lo:lo + batch_size]
            loss, grads = batch_loss_and_grads(cfg, params, batch)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"training diverged at epoch {epoch}: loss={loss}")
            adam_step(params, grads, state)
            epoch_loss += loss
            n_batches += 1
            cum_flops += flops_per_example * len(batch)
        records.append(TrainRecord(epoch=epoch, loss=epoch_loss / n_batches,
                                   cum_flops=cum_flops,
                                   wall_time=time.perf_counter() - start))
    return records, params
