"""Domain-adversarial baseline. Requires access to source data.

Per batch, three parameter groups are updated in fixed order with explicit
gradient arithmetic (no gradient-reversal construct):

  1. regressor by the gradient of the regression loss,
  2. feature extractor by the gradient of (regression loss - discriminator
     loss), assembled as the sum of the regression-path gradient and the
     negated discriminator-path gradient,
  3. discriminator by the gradient of its own loss.

The discriminator loss is the usual cross-entropy
  -(1/B) sum [ log D(F_source) + log(1 - D(F_target)) ]
with log arguments clamped at 1e-12. When the two domains have different
sizes, the smaller one is cycled within each epoch.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset, normalize_features
from .errors import ConfigError, NumericalError, UsageError
from .localizer import LocalizerModel
from .networks import Discriminator
from .nn import Adam, Rng, l1_loss

LOG_CLAMP = 1e-12


@dataclass
class DannConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if self.lr <= 0.0:
            raise ConfigError("learning rate must be positive")


@dataclass
class DannEpochDiagnostics:
    epoch: int
    reg_loss: float
    disc_loss: float
    feat_loss: float  # reg_loss - disc_loss


def reg_loss(preds: np.ndarray, labels: np.ndarray | None) -> float:
    """Batch mean of summed absolute coordinate errors."""
    if labels is None:
        raise UsageError("regression loss requires labels")
    return l1_loss(preds, labels)[0]


def disc_loss(feat_source: np.ndarray, feat_target: np.ndarray, disc: Discriminator) -> float:
    """Cross-entropy of the discriminator on equal-size feature batches."""
    if len(feat_source) != len(feat_target):
        raise ConfigError(
            f"feature batches must have equal size, got {len(feat_source)} and {len(feat_target)}"
        )
    p_s = disc.forward(feat_source)[0]
    p_t = disc.forward(feat_target)[0]
    return _disc_loss_grads(p_s, p_t)[0]


def _disc_loss_grads(p_s: np.ndarray, p_t: np.ndarray):
    """Loss plus gradients w.r.t. both probability vectors."""
    b = len(p_s)
    ps_c = np.maximum(p_s, LOG_CLAMP)
    qt_c = np.maximum(1.0 - p_t, LOG_CLAMP)
    loss = float(-(np.log(ps_c) + np.log(qt_c)).mean())
    dp_s = np.where(p_s > LOG_CLAMP, -1.0 / (b * ps_c), 0.0)
    dp_t = np.where(1.0 - p_t > LOG_CLAMP, 1.0 / (b * qt_c), 0.0)
    return loss, dp_s, dp_t


def run_dann(
    source_model: LocalizerModel,
    source: Dataset,
    target: Dataset,
    cfg: DannConfig | None = None,
):
    """Adversarial adaptation starting from the source localizer.

    Returns (adapted model, per-epoch diagnostics).
    """
    cfg = cfg or DannConfig()
    cfg.validate()
    if not source.labeled:
        raise UsageError("adversarial training requires labeled source data")
    rng = Rng(cfg.seed)
    net = source_model.net.clone()
    disc = Discriminator(init_gen=rng.stream("disc_init"))
    adam_r = Adam(net.regressor.params, lr=cfg.lr)
    adam_f = Adam(net.extractor.params, lr=cfg.lr)
    adam_d = Adam(disc.params, lr=cfg.lr)
    z_s = normalize_features(source.features, source_model.norm)
    y_s = source.labels
    z_t = normalize_features(target.features, source_model.norm)
    n_s, n_t = len(z_s), len(z_t)
    b = cfg.batch_size
    n_batches = max(max(n_s, n_t) // b, 1)
    diagnostics: list[DannEpochDiagnostics] = []
    for epoch in range(cfg.epochs):
        order_s = rng.stream("shuffle_s", epoch).permutation(n_s)
        order_t = rng.stream("shuffle_t", epoch).permutation(n_t)
        reg_losses, disc_losses = [], []
        for bi in range(n_batches):
            take = np.arange(bi * b, (bi + 1) * b)
            idx_s = order_s[take % n_s]
            idx_t = order_t[take % n_t]
            xs, ys, xt = z_s[idx_s], y_s[idx_s], z_t[idx_t]

            # 1. regressor step: gradient of the regression loss only.
            preds, (c_ext, c_reg) = net.forward(xs, rng.stream("drop_r", epoch, bi))
            loss_r, dpred = l1_loss(preds, ys)
            if not np.isfinite(loss_r):
                raise NumericalError(f"regression loss diverged at epoch {epoch}, batch {bi}")
            net.regressor.backward(dpred, c_reg)
            adam_r.step()

            # 2. extractor step: gradient of (regression loss - discriminator loss),
            # both paths evaluated on the same source features.
            gen_f = rng.stream("drop_f", epoch, bi)
            f_s, c_ext = net.extractor.forward(xs, gen_f)
            preds, c_reg = net.regressor.forward(f_s, gen_f)
            _, dpred = l1_loss(preds, ys)
            dfeat_reg = net.regressor.backward(dpred, c_reg, accumulate=False)
            net.extractor.backward(dfeat_reg, c_ext)
            f_t, c_t = net.extractor.forward(xt, rng.stream("drop_ft", epoch, bi))
            p_s, cd_s = disc.forward(f_s)
            p_t, cd_t = disc.forward(f_t)
            _, dp_s, dp_t = _disc_loss_grads(p_s, p_t)
            df_s = disc.backward(dp_s, cd_s, accumulate=False)
            df_t = disc.backward(dp_t, cd_t, accumulate=False)
            net.extractor.backward(-df_s, c_ext)
            net.extractor.backward(-df_t, c_t)
            adam_f.step()

            # 3. discriminator step on freshly extracted features.
            f_s2, _ = net.extractor.forward(xs, rng.stream("drop_ds", epoch, bi))
            f_t2, _ = net.extractor.forward(xt, rng.stream("drop_dt", epoch, bi))
            p_s2, cd_s2 = disc.forward(f_s2)
            p_t2, cd_t2 = disc.forward(f_t2)
            loss_d2, dp_s2, dp_t2 = _disc_loss_grads(p_s2, p_t2)
            if not np.isfinite(loss_d2):
                raise NumericalError(f"discriminator loss diverged at epoch {epoch}, batch {bi}")
            disc.backward(dp_s2, cd_s2)
            disc.backward(dp_t2, cd_t2)
            adam_d.step()

            reg_losses.append(loss_r)
            disc_losses.append(loss_d2)
        mean_r = float(np.mean(reg_losses))
        mean_d = float(np.mean(disc_losses))
        diagnostics.append(DannEpochDiagnostics(epoch, mean_r, mean_d, mean_r - mean_d))
    meta = {**source_model.meta, "kind": "dann", "adapt_config": asdict(cfg)}
    return (
        LocalizerModel(net, source_model.norm, source_model.source_stats, meta),
        diagnostics,
    )
