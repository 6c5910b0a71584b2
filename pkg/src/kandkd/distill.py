"""Temperature softmax, coupled KD, its target/non-target decomposition and DKD.

Loss functions accept a single logit vector ``(C,)`` with an integer target,
or a batch ``(N, C)`` with ``(N,)`` targets; batches are reduced by the mean.
All distillation terms divide both logit sets by the same temperature and
are scaled by ``temperature ** 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp

PROB_FLOOR = 1e-12
_LOG_FLOOR = np.log(PROB_FLOOR)


@dataclass(frozen=True)
class DkdConfig:
    alpha: float = 5.0
    beta: float = 1.0
    lambda_mix: float = 0.2
    warmup_epochs: int = 5
    temperature: float = 4.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not 0.0 <= self.lambda_mix <= 1.0:
            raise ValueError(f"lambda_mix must lie in [0, 1], got {self.lambda_mix}")
        if int(self.warmup_epochs) != self.warmup_epochs or self.warmup_epochs < 1:
            raise ValueError(f"warmup_epochs must be a positive integer, got {self.warmup_epochs}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass(frozen=True)
class ProbSplit:
    p_target: float
    p_nontarget: float
    tilde_p: np.ndarray


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _batch(teacher, student, target):
    t = np.atleast_2d(np.asarray(teacher, dtype=np.float64))
    s = np.atleast_2d(np.asarray(student, dtype=np.float64))
    y = np.atleast_1d(np.asarray(target)).astype(np.intp)
    if t.shape != s.shape:
        raise ValueError(f"teacher logits {t.shape} and student logits {s.shape} differ")
    if y.shape != (t.shape[0],):
        raise ValueError(f"expected {t.shape[0]} targets, got {y.shape}")
    if t.shape[1] < 2:
        raise ValueError("need at least two classes")
    if np.any((y < 0) | (y >= t.shape[1])):
        raise IndexError(f"target index out of range for {t.shape[1]} classes")
    return t, s, y, np.asarray(teacher).ndim == 1


def _reduce(per_sample, single):
    return float(per_sample[0]) if single else float(per_sample.mean())


def _target_mask(y, c):
    return np.arange(c)[None, :] == y[:, None]


def _log_parts(logits, y, temperature):
    """log p (full), log p_t, log p_{-t}, log p-tilde (target slot = 0)."""
    z = logits / temperature
    mask = _target_mask(y, z.shape[1])
    logp = log_softmax(z, axis=1)
    log_pt = logp[mask]
    z_nt = np.where(mask, -np.inf, z)
    lse_nt = logsumexp(z_nt, axis=1)
    log_pnt = lse_nt - logsumexp(z, axis=1)
    log_tilde = np.where(mask, 0.0, z_nt - lse_nt[:, None])
    return logp, log_pt, log_pnt, log_tilde


def _floor(logv):
    return np.maximum(logv, _LOG_FLOOR)


def split_probs(logits, target: int, temperature: float = 1.0) -> ProbSplit:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("split_probs expects a single logit vector with C >= 2")
    if not 0 <= int(target) < z.size:
        raise IndexError(f"target {target} out of range for {z.size} classes")
    p = softmax(z, temperature)
    rest = np.delete(z, int(target))
    p_t = float(p[int(target)])
    return ProbSplit(p_t, 1.0 - p_t, softmax(rest, temperature))


def _kl_terms(teacher, student, y, temperature):
    lt, lpt_t, lpnt_t, ltil_t = _log_parts(teacher, y, temperature)
    ls, lpt_s, lpnt_s, ltil_s = _log_parts(student, y, temperature)
    return (lt, lpt_t, lpnt_t, ltil_t), (ls, lpt_s, lpnt_s, ltil_s)


def _kd_per_sample(t, s, y, temperature):
    lt = log_softmax(t / temperature, axis=1)
    ls = log_softmax(s / temperature, axis=1)
    return temperature**2 * np.sum(np.exp(lt) * (_floor(lt) - _floor(ls)), axis=1)


def _tckd_per_sample(t, s, y, temperature):
    (_, pt_t, pnt_t, _), (_, pt_s, pnt_s, _) = _kl_terms(t, s, y, temperature)
    kl = np.exp(pt_t) * (_floor(pt_t) - _floor(pt_s)) + np.exp(pnt_t) * (
        _floor(pnt_t) - _floor(pnt_s)
    )
    return temperature**2 * kl


def _nckd_per_sample(t, s, y, temperature):
    if t.shape[1] == 2:
        # a single non-target class: both renormalized distributions are [1]
        return np.zeros(t.shape[0])
    (_, _, _, til_t), (_, _, _, til_s) = _kl_terms(t, s, y, temperature)
    mask = _target_mask(y, t.shape[1])
    terms = np.where(mask, 0.0, np.exp(til_t) * (_floor(til_t) - _floor(til_s)))
    return temperature**2 * terms.sum(axis=1)


def kd_coupled(teacher_logits, student_logits, target, temperature: float = 1.0) -> float:
    """``T^2 * KL(p_teacher || p_student)`` over the full tempered softmax."""
    t, s, y, single = _batch(teacher_logits, student_logits, target)
    return _reduce(_kd_per_sample(t, s, y, temperature), single)


def tckd(teacher_logits, student_logits, target, temperature: float = 1.0) -> float:
    """Binary KL between the (target, rest) probability pairs."""
    t, s, y, single = _batch(teacher_logits, student_logits, target)
    return _reduce(_tckd_per_sample(t, s, y, temperature), single)


def nckd(teacher_logits, student_logits, target, temperature: float = 1.0) -> float:
    """KL between the distributions renormalized over non-target classes."""
    t, s, y, single = _batch(teacher_logits, student_logits, target)
    return _reduce(_nckd_per_sample(t, s, y, temperature), single)


def dkd_loss(teacher_logits, student_logits, target, cfg: DkdConfig) -> float:
    t, s, y, single = _batch(teacher_logits, student_logits, target)
    per = cfg.alpha * _tckd_per_sample(t, s, y, cfg.temperature)
    if cfg.beta:
        per = per + cfg.beta * _nckd_per_sample(t, s, y, cfg.temperature)
    return _reduce(per, single)


def warmup_weight(epoch: int, warmup_epochs: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return min(epoch / warmup_epochs, 1.0)


def total_loss(hard_ce: float, dkd: float, epoch: int, cfg: DkdConfig) -> float:
    lam = cfg.lambda_mix
    return (1.0 - lam) * hard_ce + lam * warmup_weight(epoch, cfg.warmup_epochs) * dkd


def cross_entropy(logits, labels, class_weights=None):
    """Mean (optionally class-weighted) cross-entropy and its logit gradient."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels)).astype(np.intp)
    n = z.shape[0]
    logp = log_softmax(z, axis=1)
    w = np.ones(n) if class_weights is None else np.asarray(class_weights, dtype=np.float64)[y]
    loss = float(np.sum(-w * logp[np.arange(n), y]) / n)
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    grad *= w[:, None] / n
    return loss, grad


def _dkd_grad_per_sample(t, s, y, alpha, beta, temperature):
    """Gradient of ``alpha * tckd + beta * nckd`` per sample w.r.t. student logits."""
    n, c = t.shape
    mask = _target_mask(y, c)
    (_, pt_t, pnt_t, til_t), (ls, _, _, til_s) = _kl_terms(t, s, y, temperature)
    p_s = np.exp(ls)
    # d TCKD / d(s/T) = p_s - b_t^T [i == t] - b_rest^T * ptilde_s [i != t]
    g_tc = p_s - np.where(mask, np.exp(pt_t)[:, None], np.exp(pnt_t)[:, None] * np.exp(til_s))
    grad = alpha * g_tc
    if beta and c > 2:
        g_nc = np.where(mask, 0.0, np.exp(til_s) - np.exp(til_t))
        grad = grad + beta * g_nc
    # chain rule through s / T, then the T^2 scaling
    return temperature * grad


def distill_grad(teacher_logits, student_logits, target, cfg: DkdConfig) -> np.ndarray:
    """Gradient of :func:`dkd_loss` w.r.t. the student logits (same shape as input)."""
    t, s, y, single = _batch(teacher_logits, student_logits, target)
    g = _dkd_grad_per_sample(t, s, y, cfg.alpha, cfg.beta, cfg.temperature)
    return g[0] if single else g / t.shape[0]


def kd_coupled_grad(teacher_logits, student_logits, target, temperature: float = 1.0):
    t, s, y, single = _batch(teacher_logits, student_logits, target)
    g = temperature * (softmax(s, temperature) - softmax(t, temperature))
    return g[0] if single else g / t.shape[0]


def student_objective(teacher_logits, student_logits, labels, epoch, cfg: DkdConfig, class_weights=None):
    """Warm-up scheduled ``(1 - lam) * CE + lam * w(epoch) * DKD`` on a batch.

    Returns ``(total, hard, dkd, weight, grad)`` where ``weight`` is the
    effective DKD coefficient ``lam * min(epoch / warmup, 1)``.
    """
    t, s, y, _ = _batch(teacher_logits, student_logits, labels)
    hard, g_hard = cross_entropy(s, y, class_weights)
    per = cfg.alpha * _tckd_per_sample(t, s, y, cfg.temperature)
    if cfg.beta:
        per = per + cfg.beta * _nckd_per_sample(t, s, y, cfg.temperature)
    dkd = float(per.mean())
    weight = cfg.lambda_mix * warmup_weight(epoch, cfg.warmup_epochs)
    g_dkd = _dkd_grad_per_sample(t, s, y, cfg.alpha, cfg.beta, cfg.temperature) / t.shape[0]
    total = (1.0 - cfg.lambda_mix) * hard + weight * dkd
    grad = (1.0 - cfg.lambda_mix) * g_hard + weight * g_dkd
    return total, hard, dkd, weight, grad
