"""Confusion-matrix metrics, improvement deltas, and the leave-one-subject-out
experiment driver that ties preprocessing, training, and routing together."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import distill, nn
from .cascade import CascadeReport, build_cascade, run_dataset
from .dataset import Dataset, loso_splits
from .distill import KDConfig
from .edge_threshold import fit_thresholds
from .nn import TieredModel, TrainConfig, default_tier_spec
from .preprocess import WindowSpec, extract_features, extract_window, feature_matrix

F1_STANDARD = "standard"
F1_PAPER = "paper"

KD_NONE = "none"
KD_DUAL = "dual"
KD_TRIPLE = "triple"

LAYERS_DUAL = "dual"
LAYERS_TRIPLE = "triple"


class UndefinedMetric(Exception):
    pass


class ZeroBaseline(Exception):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.tn + other.tn,
                               self.fp + other.fp, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class Metrics:
    """acc/pre/rec/f1 as fractions; undefined ratios are None, never 0."""

    acc: float | None
    pre: float | None
    rec: float | None
    f1: float | None
    f1_mode: str = F1_STANDARD


def metrics(cm: ConfusionMatrix, f1_mode: str = F1_STANDARD) -> Metrics:
    """ACC, PRE, REC and F1. The default F1 is the harmonic mean; the
    'paper' mode omits the factor 2 (and therefore caps at 0.5)."""
    if f1_mode not in (F1_STANDARD, F1_PAPER):
        raise ValueError(f"unknown f1_mode {f1_mode!r}")
    if cm.total == 0:
        raise UndefinedMetric("empty confusion matrix")
    acc = (cm.tp + cm.tn) / cm.total
    pre = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp > 0 else None
    rec = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn > 0 else None
    if pre is None or rec is None or pre + rec == 0:
        f1 = None
    else:
        ratio = pre * rec / (pre + rec)
        f1 = 2.0 * ratio if f1_mode == F1_STANDARD else ratio
    return Metrics(acc=acc, pre=pre, rec=rec, f1=f1, f1_mode=f1_mode)


@dataclass(frozen=True)
class ImprovementReport:
    acc_imp: float
    pre_imp: float
    rec_imp: float
    f1_imp: float


def improvement(distilled: Metrics, original: Metrics) -> ImprovementReport:
    """Signed percentage change of each metric relative to the original."""
    out = {}
    for name in ("acc", "pre", "rec", "f1"):
        d = getattr(distilled, name)
        o = getattr(original, name)
        if o is None or o == 0 or d is None:
            raise ZeroBaseline(f"metric {name!r} has no nonzero baseline")
        out[name + "_imp"] = 100.0 * (d - o) / o
    return ImprovementReport(**out)


def fit_scaler(X_train: np.ndarray, mode: str):
    """Per-feature scaler fit on training data; returns a pure callable."""
    if mode == "minmax":
        lo = X_train.min(axis=0)
        span = X_train.max(axis=0) - lo
        span = np.where(span == 0, 1.0, span)
        return lambda x: (x - lo) / span
    if mode == "zscore":
        mu = X_train.mean(axis=0)
        sd = X_train.std(axis=0)
        sd = np.where(sd == 0, 1.0, sd)
        return lambda x: (x - mu) / sd
    raise ValueError(f"unknown normalization mode {mode!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    window: WindowSpec = WindowSpec()
    normalization: str = "minmax"
    student: object = None
    ta: object = None
    teacher: object = None
    train: TrainConfig = TrainConfig()
    kd: KDConfig = KDConfig()
    kd_variant: str = KD_DUAL
    layers: str = LAYERS_DUAL
    tq_max: float = 0.8
    tq_min: float = 0.2
    inference_temperature: float = 1.0
    vertical_axis: str = "x"
    strict_paper_gate: bool = False

    def __post_init__(self):
        if self.kd_variant not in (KD_NONE, KD_DUAL, KD_TRIPLE):
            raise ValueError(f"unknown kd_variant {self.kd_variant!r}")
        if self.layers not in (LAYERS_DUAL, LAYERS_TRIPLE):
            raise ValueError(f"unknown layers {self.layers!r}")
        for name in ("student", "ta", "teacher"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default_tier_spec(
                    {"student": nn.STUDENT, "ta": nn.TA, "teacher": nn.TEACHER}[name]))


@dataclass
class FoldResult:
    subject: str
    cm: ConfusionMatrix
    metrics: Metrics
    report: CascadeReport


@dataclass
class AggregateReport:
    folds: list
    pooled_cm: ConfusionMatrix
    pooled_metrics: Metrics
    mean_metrics: Metrics
    pooled_report: CascadeReport
    loss_curves: dict = field(default_factory=dict)


def _train_fold_models(cfg: ExperimentConfig, X, y):
    """Returns ({model_name: TrainResult}, deployed model list bottom-up)."""
    base = cfg.train
    teacher_cfg = base
    ta_cfg = dataclasses.replace(base, seed=base.seed + 1)
    student_cfg = dataclasses.replace(base, seed=base.seed + 2)
    results = {}
    if cfg.kd_variant == KD_TRIPLE:
        t_res, ta_res, s_res = distill.takd_pipeline(
            cfg.teacher, cfg.ta, cfg.student, X, y, cfg.kd, base)
        results = {"teacher": t_res, "ta": ta_res, "student": s_res}
    else:
        t_res = nn.train(TieredModel.init(cfg.teacher, teacher_cfg.seed),
                         X, y, teacher_cfg)
        results["teacher"] = t_res
        if cfg.kd_variant == KD_DUAL:
            if cfg.layers == LAYERS_TRIPLE:
                results["ta"] = distill.distill_train(
                    t_res.model, cfg.ta, X, y, cfg.kd, ta_cfg)
            results["student"] = distill.distill_train(
                t_res.model, cfg.student, X, y, cfg.kd, student_cfg)
        else:
            if cfg.layers == LAYERS_TRIPLE:
                results["ta"] = nn.train(TieredModel.init(cfg.ta, ta_cfg.seed),
                                         X, y, ta_cfg)
            results["student"] = nn.train(
                TieredModel.init(cfg.student, student_cfg.seed), X, y, student_cfg)
    if cfg.layers == LAYERS_TRIPLE:
        if "ta" not in results:
            results["ta"] = nn.train(TieredModel.init(cfg.ta, ta_cfg.seed),
                                     X, y, ta_cfg)
        deployed = [results["student"].model, results["ta"].model,
                    results["teacher"].model]
    else:
        deployed = [results["student"].model, results["teacher"].model]
    return results, deployed


def _sum_reports(reports) -> CascadeReport:
    first = reports[0]
    out = CascadeReport(
        station_names=list(first.station_names),
        processed=[0] * len(first.processed),
        decided_fall=[0] * len(first.processed),
        decided_adl=[0] * len(first.processed),
        escalated=[0] * len(first.processed),
        total=0,
        window_len=first.window_len,
    )
    for r in reports:
        out.total += r.total
        out.tp += r.tp
        out.tn += r.tn
        out.fp += r.fp
        out.fn += r.fn
        for i in range(len(out.processed)):
            out.processed[i] += r.processed[i]
            out.decided_fall[i] += r.decided_fall[i]
            out.decided_adl[i] += r.decided_adl[i]
            out.escalated[i] += r.escalated[i]
    return out


def loso_evaluate(dataset: Dataset, cfg: ExperimentConfig,
                  f1_mode: str = F1_STANDARD) -> AggregateReport:
    """Full LOSO experiment: per fold, fit the gate and train the tier stack
    on the training subjects, then route the held-out subject's windows."""
    if len(dataset.subjects) < 2:
        raise ValueError("LOSO needs at least 2 subjects")
    folds = []
    reports = []
    curves = {}
    for subject, train_ds, test_ds in loso_splits(dataset):
        train_windows = [extract_window(t, cfg.window) for t in train_ds.traces]
        test_windows = [extract_window(t, cfg.window) for t in test_ds.traces]
        thresholds = fit_thresholds(train_windows)
        X_train, y_train = feature_matrix(train_windows, cfg.vertical_axis)
        scaler = fit_scaler(X_train, cfg.normalization)
        results, deployed = _train_fold_models(cfg, scaler(X_train), y_train)
        featurize = lambda w, s=scaler: s(extract_features(w, cfg.vertical_axis))
        cascade = build_cascade(
            deployed, thresholds, tq_max=cfg.tq_max, tq_min=cfg.tq_min,
            inference_temperature=cfg.inference_temperature, featurize=featurize)
        cascade.strict_paper_gate = cfg.strict_paper_gate
        report = run_dataset(cascade, test_windows)
        cm = ConfusionMatrix(report.tp, report.tn, report.fp, report.fn)
        folds.append(FoldResult(subject, cm, metrics(cm, f1_mode), report))
        reports.append(report)
        for name, res in results.items():
            curves.setdefault(name, []).append(res.epoch_losses)
    pooled_cm = ConfusionMatrix()
    for fold in folds:
        pooled_cm = pooled_cm + fold.cm
    mean = {}
    for name in ("acc", "pre", "rec", "f1"):
        vals = [getattr(f.metrics, name) for f in folds
                if getattr(f.metrics, name) is not None]
        mean[name] = float(np.mean(vals)) if vals else None
    mean_curves = {name: np.mean(np.array(c), axis=0).tolist()
                   for name, c in curves.items()}
    return AggregateReport(
        folds=folds,
        pooled_cm=pooled_cm,
        pooled_metrics=metrics(pooled_cm, f1_mode),
        mean_metrics=Metrics(f1_mode=f1_mode, **mean),
        pooled_report=_sum_reports(reports),
        loss_curves=mean_curves,
    )
