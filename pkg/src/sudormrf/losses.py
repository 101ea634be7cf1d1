"""Scale-invariant SDR losses, permutation-invariant training, and metrics.

All permutation searches are brute force (the source count is capped at 6,
so at most 720 assignments).  Gradients are hand-derived closed forms; the
permutation recovered in the forward pass is treated as a constant, which is
standard practice since ties have measure zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

Array = np.ndarray

EPS_DEFAULT = 1e-9
TAU_DEFAULT = 1e-3
MAX_SOURCES = 6
_LOG10E_10 = 10.0 / math.log(10.0)


@dataclass(frozen=True)
class PITResult:
    loss: float
    perm: tuple[int, ...]          # target slot i is paired with estimate perm[i]
    per_source: tuple[float, ...]


@dataclass(frozen=True)
class EvalReport:
    si_sdri: float | None
    si_sdr_abs: float | None
    n_active: int
    perm: tuple[int, ...]


def _vec(name: str, v: Array) -> Array:
    a = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.shape[0] < 1:
        raise ValidationError(f"{name} must have at least one sample")
    return a


def si_sdr(s: Array, s_hat: Array, eps: float = EPS_DEFAULT) -> float:
    """10*log10((|a s|^2+eps)/(|a s - s_hat|^2+eps)) with the projection
    scale a = s_hat.s / |s|^2, so the value ignores estimate scaling."""
    s = _vec("target", s)
    s_hat = _vec("estimate", s_hat)
    if s.shape != s_hat.shape:
        raise ValidationError("target and estimate lengths differ")
    s_sq = float(s @ s)
    if s_sq == 0.0:
        raise ValidationError("zero-energy target has no defined SI-SDR")
    alpha = float(s_hat @ s) / s_sq
    proj = alpha * s
    err = proj - s_hat
    num = float(proj @ proj) + eps
    den = float(err @ err) + eps
    return 10.0 * math.log10(num / den)


def si_sdr_grad(s: Array, s_hat: Array,
                eps: float = EPS_DEFAULT) -> tuple[float, Array]:
    """Value and d(si_sdr)/d(s_hat).

    With proj = a*s and err = proj - s_hat, the target-aligned residual
    s.err vanishes identically, which collapses the gradient to
    (10/ln 10) * (2 proj/num + 2 err/den).
    """
    s = _vec("target", s)
    s_hat = _vec("estimate", s_hat)
    s_sq = float(s @ s)
    if s_sq == 0.0:
        raise ValidationError("zero-energy target has no defined SI-SDR")
    alpha = float(s_hat @ s) / s_sq
    proj = alpha * s
    err = proj - s_hat
    num = float(proj @ proj) + eps
    den = float(err @ err) + eps
    value = 10.0 * math.log10(num / den)
    grad = _LOG10E_10 * (2.0 * proj / num + 2.0 * err / den)
    return value, grad


def _check_pair(S: Array, S_hat: Array) -> tuple[Array, Array]:
    S = np.asarray(S, dtype=np.float64)
    S_hat = np.asarray(S_hat, dtype=np.float64)
    if S.ndim != 2 or S_hat.ndim != 2 or S.shape != S_hat.shape:
        raise ValidationError("expected matching [N, T] target and estimate arrays")
    if S.shape[0] > MAX_SOURCES:
        raise ValidationError(f"at most {MAX_SOURCES} sources supported")
    return S, S_hat


def pit_loss_fixed(S: Array, S_hat: Array, eps: float = EPS_DEFAULT) -> PITResult:
    """Negative SI-SDR averaged over sources at the best estimate assignment."""
    result, _ = pit_loss_fixed_grad(S, S_hat, eps, want_grad=False)
    return result


def pit_loss_fixed_grad(S: Array, S_hat: Array, eps: float = EPS_DEFAULT,
                        want_grad: bool = True) -> tuple[PITResult, Array | None]:
    S, S_hat = _check_pair(S, S_hat)
    n = S.shape[0]
    table = [[si_sdr(S[i], S_hat[j], eps) for j in range(n)] for i in range(n)]
    best_perm, best_sum = None, -math.inf
    for perm in itertools.permutations(range(n)):
        total = sum(table[i][perm[i]] for i in range(n))
        if total > best_sum:
            best_perm, best_sum = perm, total
    per_source = tuple(table[i][best_perm[i]] for i in range(n))
    result = PITResult(loss=-best_sum / n, perm=best_perm, per_source=per_source)
    if not want_grad:
        return result, None
    grad = np.zeros_like(S_hat)
    for i in range(n):
        _, g = si_sdr_grad(S[i], S_hat[best_perm[i]], eps)
        grad[best_perm[i]] = -g / n
    return result, grad


def loss_variable_sources(S: Array, S_hat: Array, n_active: int, x: Array,
                          eps: float = EPS_DEFAULT,
                          tau: float = TAU_DEFAULT) -> PITResult:
    result, _ = loss_variable_sources_grad(S, S_hat, n_active, x, eps, tau,
                                           want_grad=False)
    return result


def loss_variable_sources_grad(S: Array, S_hat: Array, n_active: int, x: Array,
                               eps: float = EPS_DEFAULT, tau: float = TAU_DEFAULT,
                               want_grad: bool = True) -> tuple[PITResult, Array | None]:
    """SNR objective for the active slots plus an energy penalty that drives
    the remaining estimates to zero, minimized over all N! assignments.

    The first ``n_active`` rows of ``S`` are the active targets.
    """
    S, S_hat = _check_pair(S, S_hat)
    n = S.shape[0]
    if not 1 <= n_active <= n:
        raise ValidationError(f"n_active must be in [1, {n}], got {n_active}")
    x = _vec("mixture", x)
    floor = tau * float(x @ x) + eps

    # per-pair terms: active slots score SNR, inactive slots score energy
    snr = np.empty((n_active, n))
    for i in range(n_active):
        s_sq = float(S[i] @ S[i])
        if s_sq == 0.0:
            raise ValidationError(f"active target {i} has zero energy")
        for j in range(n):
            diff = S[i] - S_hat[j]
            snr[i, j] = 10.0 * math.log10((s_sq + eps) / (float(diff @ diff) + eps))
    energy = np.array([10.0 * math.log10(float(S_hat[j] @ S_hat[j]) + floor)
                       for j in range(n)])

    best_perm, best_loss = None, math.inf
    for perm in itertools.permutations(range(n)):
        total = -sum(snr[i, perm[i]] for i in range(n_active)) / n_active
        if n_active < n:
            total += sum(energy[perm[i]] for i in range(n_active, n)) / (n - n_active)
        if total < best_loss:
            best_perm, best_loss = perm, total
    per_source = tuple(snr[i, best_perm[i]] if i < n_active else energy[best_perm[i]]
                       for i in range(n))
    result = PITResult(loss=best_loss, perm=best_perm, per_source=per_source)
    if not want_grad:
        return result, None

    grad = np.zeros_like(S_hat)
    for i in range(n_active):
        j = best_perm[i]
        diff = S[i] - S_hat[j]
        den = float(diff @ diff) + eps
        grad[j] = (_LOG10E_10 / n_active) * 2.0 * (S_hat[j] - S[i]) / den
    for i in range(n_active, n):
        j = best_perm[i]
        den = float(S_hat[j] @ S_hat[j]) + floor
        grad[j] = (_LOG10E_10 / (n - n_active)) * 2.0 * S_hat[j] / den
    return result, grad


def eval_si_sdri(S_active: Array, S_hat: Array, x: Array,
                 eps: float = EPS_DEFAULT) -> EvalReport:
    """SI-SDR improvement over using the mixture as every estimate.

    The assignment maximizes the estimate term; the mixture baseline reuses
    the projection scales of that winning assignment.  No low-energy pairs
    are excluded, so under-separation is penalized.
    """
    S_active = np.asarray(S_active, dtype=np.float64)
    S_hat = np.asarray(S_hat, dtype=np.float64)
    if S_active.ndim != 2 or S_hat.ndim != 2 or S_active.shape[1] != S_hat.shape[1]:
        raise ValidationError("expected [N', T] targets and [N, T] estimates")
    n_act, n_est = S_active.shape[0], S_hat.shape[0]
    if n_act < 2:
        raise ValidationError("multi-source evaluation needs at least two targets")
    if n_act > n_est:
        raise ValidationError("more active targets than estimates")
    if max(n_act, n_est) > MAX_SOURCES:
        raise ValidationError(f"at most {MAX_SOURCES} sources supported")
    x = _vec("mixture", x)

    table = [[si_sdr(S_active[i], S_hat[j], eps) for j in range(n_est)]
             for i in range(n_act)]
    best_perm, best_mean = None, -math.inf
    for perm in itertools.permutations(range(n_est), n_act):
        mean = sum(table[i][perm[i]] for i in range(n_act)) / n_act
        if mean > best_mean:
            best_perm, best_mean = perm, mean

    baseline = 0.0
    for i in range(n_act):
        s = S_active[i]
        s_sq = float(s @ s)
        alpha = float(S_hat[best_perm[i]] @ s) / s_sq
        proj = alpha * s
        diff = proj - x
        baseline += 10.0 * math.log10((float(proj @ proj) + eps)
                                      / (float(diff @ diff) + eps))
    baseline /= n_act
    return EvalReport(si_sdri=best_mean - baseline, si_sdr_abs=best_mean,
                      n_active=n_act, perm=best_perm)


def eval_single_source(s: Array, S_hat: Array,
                       eps: float = EPS_DEFAULT) -> EvalReport:
    """Single active source: best absolute SI-SDR over all estimates."""
    s = _vec("target", s)
    S_hat = np.asarray(S_hat, dtype=np.float64)
    if S_hat.ndim != 2 or S_hat.shape[1] != s.shape[0]:
        raise ValidationError("expected estimates [N, T] matching the target length")
    values = [si_sdr(s, S_hat[j], eps) for j in range(S_hat.shape[0])]
    j = int(np.argmax(values))
    return EvalReport(si_sdri=None, si_sdr_abs=values[j], n_active=1, perm=(j,))
