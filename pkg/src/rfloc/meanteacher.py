"""Source-free mean-teacher adaptation with optional confidence-gated
pseudo-label correction.

Teacher and student both start from the source localizer. Each epoch the
teacher labels the (unlabeled) target set on clean inputs; the student is
trained to reproduce those labels from Gaussian-noised inputs; after every
batch the teacher follows the student by an exponential moving average.

The EMA deliberately places alpha on the STUDENT:

    teacher <- alpha * student + (1 - alpha) * teacher

which is the reverse of the common convention; with alpha near 1 the
teacher tracks the student almost immediately. Set conventional_ema=True
to put alpha on the teacher instead.

With confidence gating enabled, each sample is probed n_probe times under
input noise; samples whose per-coordinate prediction spread exceeds
mean + c * std of the spreads are deemed uncertain and their pseudo labels
are replaced by an inverse-distance weighted average of the k nearest
confident samples' labels (distances in normalized input space).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset, normalize_features
from .errors import ConfigError, NumericalError, UsageError
from .localizer import LocalizerModel
from .nn import Adam, ParamSet, Rng, l1_loss

log = logging.getLogger(__name__)

DISTANCE_EPS = 1e-8


@dataclass
class MeanTeacherConfig:
    alpha: float = 0.8  # EMA coefficient, applied to the student
    noise_variance: float = 0.1  # variance of input noise (normalized units)
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    confidence: bool = False
    n_probe: int = 10  # probes per sample for the uncertainty estimate
    c_x: float = 8.0  # threshold coefficients: T = mean + c * std of spreads
    c_y: float = 4.0
    k: int = 2  # neighbors for pseudo-label correction
    conventional_ema: bool = False
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.noise_variance < 0.0:
            raise ConfigError("noise variance must be non-negative")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if self.lr <= 0.0:
            raise ConfigError("learning rate must be positive")
        if self.confidence:
            if self.n_probe < 2:
                raise ConfigError("uncertainty probing needs at least 2 probes")
            if self.c_x < 0.0 or self.c_y < 0.0:
                raise ConfigError("threshold coefficients must be non-negative")
            if self.k < 1:
                raise ConfigError("k must be at least 1")


@dataclass
class PseudoLabelSet:
    """Per-sample pseudo labels with probe spreads and confidence flags."""

    labels: np.ndarray  # (n, 2) teacher predictions on clean inputs
    sigma: np.ndarray  # (n, 2) per-coordinate std over probes
    confident: np.ndarray | None = None  # (n,) bool, set by compute_thresholds


@dataclass
class Thresholds:
    t_x: float
    t_y: float


@dataclass
class EpochDiagnostics:
    epoch: int
    kd_loss: float
    n_uncertain: int | None  # None when confidence gating is off
    t_x: float | None
    t_y: float | None


def _probe(predict_fn, z: np.ndarray, noise_std: float, n_probe: int, rng: Rng, epoch: int):
    """Clean predictions plus per-coordinate spread under input noise.

    Noise comes from per-sample streams, so results do not depend on how
    probing is batched or scheduled.
    """
    if n_probe < 2:
        raise ConfigError("uncertainty probing needs at least 2 probes")
    n, dim = z.shape
    labels = predict_fn(z)
    noise = np.empty((n_probe, n, dim))
    for i in range(n):
        noise[:, i, :] = rng.stream("probe", epoch, i).normal(0.0, noise_std, size=(n_probe, dim))
    preds = np.empty((n_probe, n, 2))
    for p in range(n_probe):
        preds[p] = predict_fn(z + noise[p])
    return labels, preds.std(axis=0)


def probe_uncertainty(
    model: LocalizerModel,
    target: Dataset,
    cfg: MeanTeacherConfig,
    rng: Rng | None = None,
    epoch: int = 0,
) -> PseudoLabelSet:
    """Label the target set with the model and measure prediction spread."""
    rng = rng if rng is not None else Rng(cfg.seed)
    z = normalize_features(target.features, model.norm)
    labels, sigma = _probe(
        model.net.predict, z, float(np.sqrt(cfg.noise_variance)), cfg.n_probe, rng, epoch
    )
    return PseudoLabelSet(labels, sigma)


def compute_thresholds(pls: PseudoLabelSet, c_x: float, c_y: float) -> Thresholds:
    """Set confidence flags in place; a sample is uncertain when either
    coordinate's spread exceeds mean + c * std of the spreads."""
    if pls.sigma is None or len(pls.sigma) == 0:
        raise UsageError("cannot compute thresholds from an empty pseudo-label set")
    if c_x < 0.0 or c_y < 0.0:
        raise ConfigError("threshold coefficients must be non-negative")
    mu = pls.sigma.mean(axis=0)
    sd = pls.sigma.std(axis=0)
    t = mu + np.array([c_x, c_y]) * sd
    uncertain = (pls.sigma[:, 0] > t[0]) | (pls.sigma[:, 1] > t[1])
    pls.confident = ~uncertain
    return Thresholds(float(t[0]), float(t[1]))


def correct_labels(pls: PseudoLabelSet, features: np.ndarray, k: int) -> PseudoLabelSet:
    """Replace uncertain labels by the inverse-distance weighted average of
    the k nearest confident samples (ties broken by lower sample index).

    features must be the normalized inputs the labels were computed from.
    If there are fewer than k confident samples, all of them are used; if
    there are none, the set is returned unchanged with a warning.
    """
    if k < 1:
        raise ConfigError(f"k must be at least 1, got {k}")
    if pls.confident is None:
        raise UsageError("confidence flags not set; run compute_thresholds first")
    if len(features) != len(pls.labels):
        raise ConfigError("features and pseudo labels disagree in length")
    conf_idx = np.flatnonzero(pls.confident)
    unc_idx = np.flatnonzero(~pls.confident)
    if conf_idx.size == 0:
        log.warning("no confident samples; pseudo-label correction skipped")
        return PseudoLabelSet(pls.labels.copy(), pls.sigma.copy(), pls.confident.copy())
    k_eff = min(k, conf_idx.size)
    conf_feats = features[conf_idx]
    conf_labels = pls.labels[conf_idx]
    labels = pls.labels.copy()
    for i in unc_idx:
        diff = conf_feats - features[i]
        dist = np.sqrt((diff * diff).sum(axis=1))
        nearest = np.argsort(dist, kind="stable")[:k_eff]
        w = 1.0 / np.maximum(dist[nearest], DISTANCE_EPS)
        labels[i] = (w[:, None] * conf_labels[nearest]).sum(axis=0) / w.sum()
    return PseudoLabelSet(labels, pls.sigma.copy(), pls.confident.copy())


def ema_update(teacher: ParamSet, student: ParamSet, alpha: float) -> None:
    """teacher <- alpha * student + (1 - alpha) * teacher, elementwise."""
    if teacher.names() != student.names():
        raise ConfigError("teacher and student parameter sets do not match")
    for name, t in teacher.items():
        s = student[name]
        if s.value.shape != t.value.shape:
            raise ConfigError(f"shape mismatch for parameter {name!r}")
        t.value = alpha * s.value + (1.0 - alpha) * t.value


def adapt(model: LocalizerModel, target: Dataset, cfg: MeanTeacherConfig):
    """Adapt the source localizer to unlabeled target data.

    Returns (student model, per-epoch diagnostics). Source data is never
    touched; only the model artifact and target fingerprints are read.
    """
    cfg.validate()
    if target.labeled:
        raise UsageError("adaptation target must be unlabeled; strip labels first")
    rng = Rng(cfg.seed)
    student = model.net.clone()
    teacher = model.net.clone()
    z = normalize_features(target.features, model.norm)
    n = len(z)
    adam = Adam(student.params, lr=cfg.lr)
    noise_std = float(np.sqrt(cfg.noise_variance))
    ema_alpha = (1.0 - cfg.alpha) if cfg.conventional_ema else cfg.alpha
    diagnostics: list[EpochDiagnostics] = []
    for epoch in range(cfg.epochs):
        if cfg.confidence:
            labels, sigma = _probe(teacher.predict, z, noise_std, cfg.n_probe, rng, epoch)
            pls = PseudoLabelSet(labels, sigma)
            thresholds = compute_thresholds(pls, cfg.c_x, cfg.c_y)
            n_uncertain = int((~pls.confident).sum())
            pls = correct_labels(pls, z, cfg.k)
            pseudo = pls.labels
        else:
            pseudo = teacher.predict(z)
            thresholds = None
            n_uncertain = None
        order = rng.stream("shuffle", epoch).permutation(n)
        batch_losses = []
        for bi in range(0, n, cfg.batch_size):
            idx = order[bi : bi + cfg.batch_size]
            noise = rng.stream("aug", epoch, bi).normal(0.0, noise_std, size=(idx.size, z.shape[1]))
            drop_gen = rng.stream("dropout", epoch, bi)
            preds, cache = student.forward(z[idx] + noise, drop_gen)
            loss, dpred = l1_loss(preds, pseudo[idx])
            if not np.isfinite(loss):
                raise NumericalError(
                    f"adaptation diverged at epoch {epoch}, batch {bi // cfg.batch_size}"
                )
            batch_losses.append(loss)
            student.backward(dpred, cache)
            adam.step()
            ema_update(teacher.params, student.params, ema_alpha)
        diagnostics.append(
            EpochDiagnostics(
                epoch,
                float(np.mean(batch_losses)) if batch_losses else float("nan"),
                n_uncertain,
                thresholds.t_x if thresholds else None,
                thresholds.t_y if thresholds else None,
            )
        )
    meta = {
        **model.meta,
        "kind": "mean-teacher-confidence" if cfg.confidence else "mean-teacher",
        "adapt_config": asdict(cfg),
    }
    return LocalizerModel(student, model.norm, model.source_stats, meta), diagnostics
