"""Finite-difference validation of every hand-written gradient.

All checks run in float64.  Directional derivatives are compared against
the VJP-computed gradient along random directions: for f with gradient g,
(f(x + h*d) - f(x - h*d)) / (2h) must match <g, d> to a relative error
below ``TOL_REL``.  Adjointness of the convolution pair is checked exactly:
<conv(x), v> == <x, conv_transpose(v)> up to accumulation roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses, model, ops
from .autograd import Tape, TapedOps, leaf_grads
from .config import ModelConfig

TOL_REL = 1e-4
TOL_ADJOINT = 1e-10


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.error < self.tol


def _rel_err(a: float, b: float) -> float:
    scale = max(abs(a), abs(b), 1e-12)
    return abs(a - b) / scale


def _away_from_zero(x: np.ndarray, margin: float = 5e-3) -> np.ndarray:
    """Push elements off the ReLU/PReLU kink so finite differencing is clean."""
    return x + np.sign(x) * margin + (x == 0) * margin


def _directional(f, inputs: list[np.ndarray], grads: list[np.ndarray],
                 rng: np.random.Generator, n_dirs: int = 3) -> float:
    """Worst relative error of <grad, d> vs a central difference along d."""
    worst = 0.0
    for _ in range(n_dirs):
        dirs = [rng.standard_normal(x.shape) for x in inputs]
        h = 1e-6
        shifted = lambda sign: [x + sign * h * d for x, d in zip(inputs, dirs)]
        numeric = (f(shifted(+1)) - f(shifted(-1))) / (2 * h)
        analytic = sum(float(np.sum(g * d)) for g, d in zip(grads, dirs))
        worst = max(worst, _rel_err(numeric, analytic))
    return worst


def _check(name: str, forward, vjp, inputs: list[np.ndarray],
           rng: np.random.Generator) -> CheckResult:
    """forward(inputs)->array; vjp(upstream, inputs)->list of grads."""
    y = forward(inputs)
    upstream = rng.standard_normal(y.shape)
    grads = vjp(upstream, inputs)

    def scalar(xs):
        return float(np.sum(forward(xs) * upstream))
    return CheckResult(name, _directional(scalar, inputs, grads, rng), TOL_REL)


# ---------------------------------------------------------------------------
# kernel checks
# ---------------------------------------------------------------------------


def check_kernels(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out: list[CheckResult] = []

    conv_cases = [
        ("conv1d dense s1", 1, 1, False, 6, 4, 5, 37),
        ("conv1d dense s2 causal", 2, 1, True, 6, 4, 5, 37),
        ("conv1d grouped s2", 2, 2, False, 8, 4, 3, 30),
        ("conv1d depthwise s2 causal", 2, 6, True, 6, 6, 5, 41),
    ]
    for name, stride, groups, causal, c_out, c_in, k, t in conv_cases:
        x = rng.standard_normal((c_in, t))
        w = rng.standard_normal((c_out, c_in // groups, k))
        b = rng.standard_normal(c_out)
        out.append(_check(
            name,
            lambda i, st=stride, g=groups, cz=causal: ops.conv1d(i[0], i[1], i[2], st, g, cz),
            lambda u, i, st=stride, g=groups, cz=causal: list(ops.conv1d_vjp(u, i[0], i[1], st, g, cz)),
            [x, w, b], rng))

    convt_cases = [
        ("conv_transpose1d s3", 3, 1, False, None, 6, 4, 7, 20),
        ("conv_transpose1d causal", 2, 1, True, None, 6, 4, 5, 20),
        ("conv_transpose1d emit-forward", 10, 1, True, 0, 8, 1, 21, 16),
        ("conv_transpose1d depthwise", 2, 6, False, None, 6, 1, 5, 20),
    ]
    for name, stride, groups, causal, left, c_lat, c_out_pg, k, l in convt_cases:
        v = rng.standard_normal((c_lat, l))
        w = rng.standard_normal((c_lat, c_out_pg, k))
        b = rng.standard_normal(c_out_pg * groups)
        out.append(_check(
            name,
            lambda i, st=stride, g=groups, cz=causal, lf=left:
                ops.conv_transpose1d(i[0], i[1], i[2], st, g, cz, lf),
            lambda u, i, st=stride, g=groups, cz=causal, lf=left:
                list(ops.conv_transpose1d_vjp(u, i[0], i[1], st, g, cz, lf)),
            [v, w, b], rng))

    x = _away_from_zero(rng.standard_normal((5, 33)))
    out.append(_check("relu", lambda i: ops.relu(i[0]),
                      lambda u, i: [ops.relu_vjp(u, i[0])], [x], rng))

    for label, n_slope in (("per-channel", 5), ("shared", 1)):
        x = _away_from_zero(rng.standard_normal((5, 33)))
        slope = 0.1 + rng.random(n_slope)
        out.append(_check(f"prelu {label}", lambda i: ops.prelu(i[0], i[1]),
                          lambda u, i: list(ops.prelu_vjp(u, i[0], i[1])),
                          [x, slope], rng))

    x = rng.standard_normal((6, 40))
    gain, shift = rng.standard_normal(6), rng.standard_normal(6)
    out.append(_check("layer_norm", lambda i: ops.layer_norm(i[0], i[1], i[2]),
                      lambda u, i: list(ops.layer_norm_vjp(u, i[0], i[1])) ,
                      [x, gain, shift], rng))
    out.append(_check("global_layer_norm",
                      lambda i: ops.global_layer_norm(i[0], i[1], i[2]),
                      lambda u, i: list(ops.global_layer_norm_vjp(u, i[0], i[1])),
                      [x, gain, shift], rng))

    x = rng.standard_normal((4, 13))
    out.append(_check("nearest_interp odd tail",
                      lambda i: ops.nearest_interp(i[0], 2, 27),
                      lambda u, i: [ops.nearest_interp_vjp(u, 13, 2)], [x], rng))

    z = rng.standard_normal((3, 5, 17))
    out.append(_check("softmax_over_sources",
                      lambda i: ops.softmax_over_sources(i[0]),
                      lambda u, i: [ops.softmax_over_sources_vjp(u, ops.softmax_over_sources(i[0]))],
                      [z], rng))

    a, b = rng.standard_normal((5, 21)), rng.standard_normal((5, 21))
    out.append(_check("multiply", lambda i: ops.multiply(i[0], i[1]),
                      lambda u, i: [u * i[1], u * i[0]], [a, b], rng))
    out.append(_check("add", lambda i: ops.add(i[0], i[1]),
                      lambda u, i: [u, u], [a, b], rng))

    x = rng.standard_normal((12, 19))
    w = rng.standard_normal((5, 3))
    bg = rng.standard_normal(5)
    out.append(_check("group_shared_linear",
                      lambda i: ops.group_shared_linear(i[0], i[1], i[2], 4),
                      lambda u, i: list(ops.group_shared_linear_vjp(u, i[0], i[1], 4)),
                      [x, w, bg], rng))

    x = rng.standard_normal((12, 9))
    wq, wk, wv = (rng.standard_normal((3, 3)) for _ in range(3))
    out.append(_check("group_attention",
                      lambda i: ops.group_attention(i[0], i[1], i[2], i[3], 4),
                      lambda u, i: list(ops.group_attention_vjp(u, i[0], i[1], i[2], i[3], 4)),
                      [x, wq, wk, wv], rng))
    return out


def check_adjointness(seed: int = 0) -> list[CheckResult]:
    """<conv(x), v> must equal <x, conv_transpose(v)> for shared weights."""
    rng = np.random.default_rng(seed)
    out = []
    cases = [
        ("adjoint dense s2", 2, 1, False, 6, 4, 5, 40),
        ("adjoint dense causal s3", 3, 1, True, 6, 4, 7, 42),
        ("adjoint grouped", 2, 2, False, 8, 4, 3, 30),
        ("adjoint depthwise causal", 2, 6, True, 6, 6, 5, 44),
        ("adjoint stride=kernel", 4, 1, False, 5, 3, 4, 32),
    ]
    for name, stride, groups, causal, c_out, c_in, k, t in cases:
        x = rng.standard_normal((c_in, t))
        w = rng.standard_normal((c_out, c_in // groups, k))
        y = ops.conv1d(x, w, None, stride, groups, causal)
        v = rng.standard_normal(y.shape)
        xt = ops.conv_transpose1d(v, w, None, stride, groups, causal)
        lhs = float(np.sum(y * v))
        rhs = float(np.sum(x * xt[:, :t]))
        out.append(CheckResult(name, _rel_err(lhs, rhs), TOL_ADJOINT))
    return out


def check_losses(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    t = 64
    s = rng.standard_normal(t)
    s_hat = s + 0.3 * rng.standard_normal(t)
    _, g = losses.si_sdr_grad(s, s_hat)

    def f_sisdr(xs):
        return losses.si_sdr(s, xs[0])
    out.append(CheckResult("si_sdr grad",
                           _directional(f_sisdr, [s_hat], [g], rng), TOL_REL))

    # well-separated instance keeps the best permutation stable under FD steps
    S = rng.standard_normal((3, t))
    S_hat = S[[1, 2, 0]] + 0.05 * rng.standard_normal((3, t))
    _, g = losses.pit_loss_fixed_grad(S, S_hat)

    def f_pit(xs):
        return losses.pit_loss_fixed(S, xs[0]).loss
    out.append(CheckResult("pit_loss_fixed grad",
                           _directional(f_pit, [S_hat], [g], rng), TOL_REL))

    x = S[0] + S[1]
    Sv = np.vstack([S[:2], np.zeros((1, t))])
    Sv_hat = np.vstack([S[[1, 0]] + 0.05 * rng.standard_normal((2, t)),
                        0.1 * rng.standard_normal((1, t))])
    _, g = losses.loss_variable_sources_grad(Sv, Sv_hat, 2, x)

    def f_var(xs):
        return losses.loss_variable_sources(Sv, xs[0], 2, x).loss
    out.append(CheckResult("loss_variable_sources grad",
                           _directional(f_var, [Sv_hat], [g], rng), TOL_REL))
    return out


# ---------------------------------------------------------------------------
# end-to-end model check
# ---------------------------------------------------------------------------


def _e2e_config(variant: str) -> ModelConfig:
    return ModelConfig(variant=variant, n_sources=2, sample_rate=8000,
                       enc_channels=16, enc_kernel=21, block_channels=8,
                       hidden_channels=16, dw_kernel=5, resampling_depth=2,
                       num_blocks=1, gc_groups=4)


def check_end_to_end(seed: int = 0) -> list[CheckResult]:
    """FD check of the full forward/backward at T=160 for three variants."""
    from .params import init_params
    rng = np.random.default_rng(seed)
    out = []
    for variant in ("base", "plusplus_gc", "causal_plusplus"):
        cfg = _e2e_config(variant)
        params = {k: v.astype(np.float64)
                  for k, v in init_params(cfg, seed=seed).items()}
        # break parameter symmetry so gradients are generic
        for k, v in params.items():
            params[k] = v + 0.01 * rng.standard_normal(v.shape)
        x = rng.standard_normal(160)
        readout = None

        def run(p, xv):
            nonlocal readout
            est = model.forward_array(cfg, p, xv)
            if readout is None:
                readout = rng.standard_normal(est.shape)
            return float(np.sum(est * readout))

        tape = Tape()
        be = TapedOps(tape)
        nodes = {k: tape.leaf(v) for k, v in params.items()}
        x_node = tape.leaf(x.reshape(1, -1))
        outs = model.forward(be, cfg, nodes, x_node)
        est = np.concatenate([o.value for o in outs], axis=0)
        if readout is None:
            readout = rng.standard_normal(est.shape)
        tape.backward([(o, np.ascontiguousarray(readout[j:j + 1]))
                       for j, o in enumerate(outs)])
        grads = leaf_grads(nodes)
        x_grad = x_node.grad if x_node.grad is not None else np.zeros_like(x_node.value)

        names = sorted(params)
        vec = [params[k] for k in names] + [x.reshape(1, -1)]
        gvec = [grads[k] for k in names] + [x_grad]

        def scalar(xs):
            p = dict(zip(names, xs[:-1]))
            return run(p, xs[-1][0])
        err = _directional(scalar, vec, gvec, rng, n_dirs=3)
        out.append(CheckResult(f"end-to-end {variant}", err, TOL_REL))
    return out


def run_all(seed: int = 0) -> list[CheckResult]:
    results = []
    results += check_kernels(seed)
    results += check_adjointness(seed)
    results += check_losses(seed)
    results += check_end_to_end(seed)
    return results
