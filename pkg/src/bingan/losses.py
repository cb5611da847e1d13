"""Differentiable loss terms over a minibatch.

The pairwise regularizers (distance matching, batch decorrelation) run over
ordered pairs k != j and are normalized by N(N-1). High-dimensional codes
b_h enter as gradient-stopped constants; only the smoothed low-dimensional
codes s_f carry gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor


@dataclass
class RegularizerConfig:
    lambda_dmr: float = 0.05
    lambda_bre: float = 0.01
    gamma: float = 0.001
    beta: float = 0.5

    def __post_init__(self):
        if self.lambda_dmr < 0 or self.lambda_bre < 0:
            raise ConfigError("regularizer weights must be >= 0")
        if self.gamma <= 0:
            raise ConfigError("gamma must be > 0")
        if self.beta <= 0:
            raise ConfigError("beta must be > 0")


@dataclass
class LossBreakdown:
    l_d: float
    l_dmr: float
    l_me: float
    l_mac: float
    l_total: float
    l_g: float = float("nan")

    CSV_FIELDS = ("step", "l_d", "l_dmr", "l_me", "l_mac", "l_total", "l_g")

    def csv_row(self, step):
        return [step, self.l_d, self.l_dmr, self.l_me, self.l_mac,
                self.l_total, self.l_g]


def _as_constant_codes(b_h):
    b = b_h.data if isinstance(b_h, Tensor) else np.asarray(b_h)
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2:
        raise DimensionError("codes must be an N x M matrix")
    if not np.all(np.abs(b) == 1):
        raise ContractError("high-dimensional codes must be bipolar (+1/-1)")
    return b


def _offdiag_mask(n):
    return 1.0 - np.eye(n)


def loss_dmr(b_h, s_f):
    """Distance matching: align normalized pairwise dots of b_h and s_f."""
    b = _as_constant_codes(b_h)
    s_f = T.as_tensor(s_f)
    n, m = b.shape
    if n < 2:
        raise ContractError("pairwise loss needs a batch of at least 2")
    if s_f.shape[0] != n:
        raise DimensionError("b_h and s_f batch sizes differ")
    k = s_f.shape[1]
    dots_h = (b @ b.T) / m  # constant
    dots_f = T.matmul(s_f, T.transpose2d(s_f)) * (1.0 / k)
    diff = T.abs_(dots_f - Tensor(dots_h)) * _offdiag_mask(n)
    return T.sum_(diff) * (1.0 / (n * (n - 1)))


def loss_me(s_f):
    """Bit balance: squared per-bit batch means, averaged over bits."""
    s_f = T.as_tensor(s_f)
    col_mean = T.mean(s_f, axis=0)
    return T.mean(T.square(col_mean))


def loss_ac(s_f):
    """Pairwise decorrelation: mean |s_k . s_j| / K over ordered pairs."""
    s_f = T.as_tensor(s_f)
    n, k = s_f.shape
    if n < 2:
        raise ContractError("pairwise loss needs a batch of at least 2")
    dots = T.matmul(s_f, T.transpose2d(s_f)) * (1.0 / k)
    # same expression shape as loss_mac so uniform alpha reduces to this
    # loss bit-exactly
    weights = _offdiag_mask(n)
    return T.sum_(T.abs_(dots) * Tensor(weights / weights.sum()))


def alpha_weights(b_h, beta):
    """Pair weights exp(-|b_k . b_j| / (beta*M)) for k != j, plus their sum Z.

    Weight peaks at 1 for pairs near Hamming distance M/2 and decays for
    strongly (anti)correlated pairs.
    """
    if beta <= 0:
        raise ConfigError(f"beta must be > 0, got {beta}")
    b = _as_constant_codes(b_h)
    n, m = b.shape
    alpha = np.exp(-np.abs(b @ b.T) / (beta * m)) * _offdiag_mask(n)
    return alpha, float(alpha.sum())


def loss_mac(s_f, b_h, beta):
    """Decorrelation reweighted by high-dimensional pair distances."""
    s_f = T.as_tensor(s_f)
    n, k = s_f.shape
    if n < 2:
        raise ContractError("pairwise loss needs a batch of at least 2")
    alpha, _ = alpha_weights(b_h, beta)
    dots = T.matmul(s_f, T.transpose2d(s_f)) * (1.0 / k)
    # dividing by the max first makes uniform alpha exactly the off-diagonal
    # mask, so equal pair distances recover loss_ac without rounding noise
    scaled = alpha / alpha.max()
    return T.sum_(T.abs_(dots) * Tensor(scaled / scaled.sum()))


def loss_feature_matching(f_real, f_fake):
    """Squared L2 distance between mean real and mean fake features."""
    f_real, f_fake = T.as_tensor(f_real), T.as_tensor(f_fake)
    if f_real.shape[1] != f_fake.shape[1]:
        raise DimensionError(
            f"feature widths differ: {f_real.shape} vs {f_fake.shape}"
        )
    diff = T.mean(f_real, axis=0) - T.mean(f_fake, axis=0)
    return T.sum_(T.square(diff))


def loss_gan_d(logits_real, logits_fake):
    """Discriminator NLL (real -> 1, fake -> 0) in stable logit form."""
    logits_real = T.as_tensor(logits_real)
    logits_fake = T.as_tensor(logits_fake)
    return T.mean(T.softplus(-logits_real)) + T.mean(T.softplus(logits_fake))


def total_loss(l_d, l_dmr, l_me, l_mac, cfg, l_g=float("nan")):
    """Weighted sum L_D + l_dmr*DMR + l_bre*(ME + MAC).

    Accepts scalar Tensors (returns a differentiable total) or plain floats.
    Returns (total, LossBreakdown).
    """
    total = l_d + cfg.lambda_dmr * l_dmr + cfg.lambda_bre * (l_me + l_mac)
    def val(x):
        return float(x.data) if isinstance(x, Tensor) else float(x)
    bd = LossBreakdown(
        l_d=val(l_d), l_dmr=val(l_dmr), l_me=val(l_me), l_mac=val(l_mac),
        l_total=val(total), l_g=val(l_g) if isinstance(l_g, Tensor) else float(l_g),
    )
    return total, bd
