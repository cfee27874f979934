"""Knowledge-distillation losses (dual and triple layer) and the staged
teacher -> TA -> student training pipeline.

Upstream (teacher / TA) logits are always computed once with frozen
parameters; no gradient flows into them.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .nn import (NonPositiveTemperature, TieredModel, TrainConfig, TrainResult,
                 cross_entropy, forward, softmax_t, train)

PAPER_EQ8 = "paper_eq8"     # student-leading KL, as printed
STANDARD_KD = "standard"    # teacher-leading KL, conventional KD

SEQUENTIAL = "sequential"
COMPOSITE_EQ10 = "composite_eq10"

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class KDConfig:
    lam: float = 0.5
    temperature: float = 20.0
    direction: str = PAPER_EQ8
    triple_mode: str = SEQUENTIAL
    tri_combine: str = ADDITIVE

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("lam must be in [0, 1]")
        if self.temperature <= 0:
            raise NonPositiveTemperature("temperature must be > 0")
        if self.direction not in (PAPER_EQ8, STANDARD_KD):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.triple_mode not in (SEQUENTIAL, COMPOSITE_EQ10):
            raise ValueError(f"unknown triple_mode {self.triple_mode!r}")
        if self.tri_combine not in (ADDITIVE, MULTIPLICATIVE):
            raise ValueError(f"unknown tri_combine {self.tri_combine!r}")


def _log_softmax(logits: np.ndarray, temperature: float) -> np.ndarray:
    if temperature <= 0:
        raise NonPositiveTemperature("temperature must be > 0")
    u = np.asarray(logits, dtype=np.float64) / temperature
    u = u - u.max(axis=-1, keepdims=True)
    return u - np.log(np.exp(u).sum(axis=-1, keepdims=True))


def kl_soft(t_logits, s_logits, temperature: float,
            direction: str = PAPER_EQ8) -> float:
    """Divergence between the temperature-softened output distributions."""
    log_p = _log_softmax(s_logits, temperature)  # student
    log_q = _log_softmax(t_logits, temperature)  # teacher
    if direction == PAPER_EQ8:
        return float(np.sum(np.exp(log_p) * (log_p - log_q)))
    if direction == STANDARD_KD:
        return float(np.sum(np.exp(log_q) * (log_q - log_p)))
    raise ValueError(f"unknown direction {direction!r}")


def loss_dual(t_logits, s_logits, label: int, cfg: KDConfig) -> float:
    """lam * T^2 * KL(softened) + (1 - lam) * CE(hard)."""
    kl = kl_soft(t_logits, s_logits, cfg.temperature, cfg.direction)
    ce = cross_entropy(softmax_t(s_logits, 1.0), label)
    return cfg.lam * cfg.temperature ** 2 * kl + (1.0 - cfg.lam) * ce


def _composite_kl(t_logits, ta_logits, s_logits, temperature: float,
                  combine: str) -> float:
    log_p = _log_softmax(s_logits, temperature)
    log_q = _log_softmax(ta_logits, temperature)
    log_r = _log_softmax(t_logits, temperature)
    a = log_p - log_q
    b = log_q - log_r
    if combine == ADDITIVE:
        return float(np.sum(np.exp(log_p) * (a + b)))
    if combine == MULTIPLICATIVE:
        return float(np.sum(np.exp(log_p) * a * b))
    raise ValueError(f"unknown combine {combine!r}")


def loss_tri(t_logits, ta_logits, s_logits, label: int, cfg: KDConfig) -> float:
    """Triple-layer loss: the nested teacher/TA/student divergence blended
    with hard-label cross-entropy. The operator joining the two bracketed
    log-difference terms is configurable (additive default, multiplicative
    selectable) because the printed form is ambiguous."""
    comp = _composite_kl(t_logits, ta_logits, s_logits,
                         cfg.temperature, cfg.tri_combine)
    ce = cross_entropy(softmax_t(s_logits, 1.0), label)
    return cfg.lam * cfg.temperature ** 2 * comp + (1.0 - cfg.lam) * ce


def _ce_value_and_grad(logits: np.ndarray, labels: np.ndarray):
    p = softmax_t(logits, 1.0)
    n = len(labels)
    picked = np.clip(p[np.arange(n), labels], 1e-12, None)
    ce = -np.log(picked)
    dce = p.copy()
    dce[np.arange(n), labels] -= 1.0
    return ce, dce


class DualLoss:
    """Batch loss spec for teacher -> student distillation."""

    def __init__(self, teacher_logits: np.ndarray, cfg: KDConfig):
        self.teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
        self.cfg = cfg

    def value_and_grad(self, logits, labels, idx):
        cfg = self.cfg
        T = cfg.temperature
        n = len(labels)
        log_p = _log_softmax(logits, T)
        log_q = _log_softmax(self.teacher_logits[idx], T)
        p = np.exp(log_p)
        if cfg.direction == PAPER_EQ8:
            kl = np.sum(p * (log_p - log_q), axis=1)
            dkl = p * ((log_p - log_q) - kl[:, None]) / T
        else:
            q = np.exp(log_q)
            kl = np.sum(q * (log_q - log_p), axis=1)
            dkl = (p - q) / T
        ce, dce = _ce_value_and_grad(logits, labels)
        scale = cfg.lam * T * T
        loss = float(np.mean(scale * kl + (1.0 - cfg.lam) * ce))
        grad = (scale * dkl + (1.0 - cfg.lam) * dce) / n
        return loss, grad


class TriLoss:
    """Batch loss spec for the composite teacher/TA/student divergence."""

    def __init__(self, teacher_logits: np.ndarray, ta_logits: np.ndarray,
                 cfg: KDConfig):
        self.teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
        self.ta_logits = np.asarray(ta_logits, dtype=np.float64)
        self.cfg = cfg

    def value_and_grad(self, logits, labels, idx):
        cfg = self.cfg
        T = cfg.temperature
        n = len(labels)
        log_p = _log_softmax(logits, T)
        log_q = _log_softmax(self.ta_logits[idx], T)
        log_r = _log_softmax(self.teacher_logits[idx], T)
        p = np.exp(log_p)
        a = log_p - log_q
        b = log_q - log_r
        if cfg.tri_combine == ADDITIVE:
            comp = np.sum(p * (a + b), axis=1)
            dcomp = p * ((a + b) - comp[:, None]) / T
        else:
            comp = np.sum(p * a * b, axis=1)
            eb = np.sum(p * b, axis=1)
            dcomp = p * (a * b + b - comp[:, None] - eb[:, None]) / T
        ce, dce = _ce_value_and_grad(logits, labels)
        scale = cfg.lam * T * T
        loss = float(np.mean(scale * comp + (1.0 - cfg.lam) * ce))
        grad = (scale * dcomp + (1.0 - cfg.lam) * dce) / n
        return loss, grad


def distill_train(teacher: TieredModel, student_spec, X, y,
                  cfg: KDConfig, train_cfg: TrainConfig) -> TrainResult:
    """Train a fresh student of the given spec against the frozen teacher."""
    X = np.asarray(X, dtype=np.float64)
    teacher_logits = forward(teacher, X)
    student = TieredModel.init(student_spec, seed=train_cfg.seed)
    return train(student, X, y, train_cfg, DualLoss(teacher_logits, cfg))


def takd_pipeline(teacher_spec, ta_spec, student_spec, X, y,
                  cfg: KDConfig, train_cfg: TrainConfig,
                  allow_equal: bool = False):
    """Staged pipeline: teacher (CE) -> TA (dual KD) -> student.

    Sequential mode distills the student from the TA; composite mode trains
    the student on the nested three-model divergence with both the teacher
    and TA frozen. Returns the three TrainResults in capacity order.
    """
    order = (teacher_spec.n_params, ta_spec.n_params, student_spec.n_params)
    ok = order[0] >= order[1] >= order[2] if allow_equal else order[0] > order[1] > order[2]
    if not ok:
        raise ValueError(f"specs must be capacity-ordered teacher > TA > student, got {order}")
    X = np.asarray(X, dtype=np.float64)
    teacher_cfg = train_cfg
    ta_cfg = dataclasses.replace(train_cfg, seed=train_cfg.seed + 1)
    student_cfg = dataclasses.replace(train_cfg, seed=train_cfg.seed + 2)

    teacher_res = train(TieredModel.init(teacher_spec, seed=teacher_cfg.seed),
                        X, y, teacher_cfg)
    ta_res = distill_train(teacher_res.model, ta_spec, X, y, cfg, ta_cfg)
    if cfg.triple_mode == SEQUENTIAL:
        student_res = distill_train(ta_res.model, student_spec, X, y, cfg, student_cfg)
    else:
        teacher_logits = forward(teacher_res.model, X)
        ta_logits = forward(ta_res.model, X)
        student = TieredModel.init(student_spec, seed=student_cfg.seed)
        student_res = train(student, X, y, student_cfg,
                            TriLoss(teacher_logits, ta_logits, cfg))
    return teacher_res, ta_res, student_res
