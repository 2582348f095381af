"""Marginal model components for the two dependent blocks.

* ordered logit: one latent propensity cut by monotone thresholds
* multinomial logit with a pinned reference alternative
* residual utility stack ``h <- h - softplus(W h)``
* CORAL ordinal head (K-1 rank-consistent binary classifiers)

Monotone parameters (thresholds, CORAL biases) are stored as unconstrained
"raw" vectors: the first entry is free and the remaining entries are log-gaps.
"""

import torch
import torch.nn.functional as F

from ._tensor import as_tensor, tensor_io
from .exceptions import DomainError, NumericalError

_SOFTPLUS_THRESHOLD = 30.0


def softplus(x):
    return F.softplus(x, beta=1.0, threshold=_SOFTPLUS_THRESHOLD)


def _increasing_from_raw(raw):
    if raw.shape[-1] == 1:
        return raw
    steps = torch.cat([raw[..., :1], torch.exp(raw[..., 1:])], dim=-1)
    return torch.cumsum(steps, dim=-1)


def thresholds_from_raw(raw):
    """Nondecreasing thresholds psi_1 <= ... <= psi_{K-1} from raw values."""
    return _increasing_from_raw(as_tensor(raw))


def raw_from_thresholds(psi):
    psi = as_tensor(psi)
    gaps = torch.diff(psi)
    if torch.any(gaps <= 0):
        raise DomainError("thresholds must be strictly increasing")
    return torch.cat([psi[:1], torch.log(gaps)])


def coral_biases_from_raw(raw):
    """Strictly decreasing CORAL biases b_1 > ... > b_{K-1}."""
    return -_increasing_from_raw(_flip(as_tensor(raw)))


def _flip(raw):
    # b_1 = raw_1, b_k = b_{k-1} - exp(raw_k)  <=>  -b is increasing from -raw_1
    return torch.cat([-raw[..., :1], raw[..., 1:]], dim=-1)


def raw_from_coral_biases(b):
    b = as_tensor(b)
    gaps = -torch.diff(b)
    if torch.any(gaps <= 0):
        raise DomainError("CORAL biases must be strictly decreasing")
    return torch.cat([b[:1], torch.log(gaps)])


def residual_forward_t(weights, h0):
    """Apply ``h_m = h_{m-1} - softplus(W_m h_{m-1})`` for every layer.

    ``weights`` has shape (M, d, d); ``h0`` has shape (..., d).
    """
    h = h0
    for W in weights:
        h = h - softplus(h @ W.T)
    if weights.shape[0] and not torch.isfinite(h).all():
        h = h0
        for m, W in enumerate(weights, start=1):
            h = h - softplus(h @ W.T)
            if not torch.isfinite(h).all():
                raise NumericalError(f"non-finite output in residual layer {m}")
    return h


@tensor_io
def residual_forward(weights, h0):
    """Residual utility stack; returns h_M (the correction is ``h_M - h0``)."""
    weights, h0 = as_tensor(weights), as_tensor(h0)
    if weights.ndim != 3 or weights.shape[1] != weights.shape[2]:
        raise DomainError(f"residual weights must have shape (M, d, d), got {tuple(weights.shape)}")
    if weights.shape[0] and h0.shape[-1] != weights.shape[-1]:
        raise DomainError("residual stack dimension does not match input")
    return residual_forward_t(weights, h0)


def mnl_utilities_t(asc, coef, x, weights=None):
    """Systematic utilities of all J modes; mode 0 is the pinned reference.

    ``asc``: (J-1,), ``coef``: (J-1, d), ``x``: (n, d).
    """
    v = asc + x @ coef.T
    v = torch.cat([torch.zeros_like(v[..., :1]), v], dim=-1)
    if weights is not None and weights.shape[0]:
        v = residual_forward_t(weights, v)
    return v


@tensor_io
def mnl_utilities(asc, coef, x, weights=None):
    asc, coef, x = as_tensor(asc), as_tensor(coef), as_tensor(x)
    if coef.ndim != 2 or coef.shape[0] != asc.shape[0] or coef.shape[1] != x.shape[-1]:
        raise DomainError("MNL coefficient shapes do not match the feature vector")
    if weights is not None:
        weights = as_tensor(weights)
    return mnl_utilities_t(asc, coef, x, weights)


@tensor_io
def mnl_probs(v):
    """Logit choice probabilities (softmax with max-subtraction)."""
    return torch.softmax(as_tensor(v), dim=-1)


def coral_binary_probs_t(weight, raw_bias, rep):
    b = coral_biases_from_raw(raw_bias)
    return torch.sigmoid((rep @ weight)[..., None] + b)


@tensor_io
def coral_binary_probs(weight, raw_bias, rep):
    """P(level > k) for k = 1..K-1; strictly decreasing in k."""
    weight, rep = as_tensor(weight), as_tensor(rep)
    if weight.shape[-1] != rep.shape[-1]:
        raise DomainError("CORAL weight and representation dimensions differ")
    return coral_binary_probs_t(weight, as_tensor(raw_bias), rep)


@tensor_io
def ordinal_level_probs(binary_probs):
    """Convert rank-consistent binary probabilities into K level probabilities."""
    p = as_tensor(binary_probs)
    if torch.any(torch.diff(p, dim=-1) >= 0) or torch.any(p <= 0) or torch.any(p >= 1):
        raise DomainError("binary probabilities must be strictly decreasing inside (0, 1)")
    one = torch.ones_like(p[..., :1])
    upper = torch.cat([one, p], dim=-1)
    lower = torch.cat([p, torch.zeros_like(one)], dim=-1)
    return upper - lower


def coral_cumulative_t(binary_probs):
    """Cumulative points (0, P(y<=1), ..., P(y<=K-1), 1) from CORAL outputs."""
    one = torch.ones_like(binary_probs[..., :1])
    return torch.cat([torch.zeros_like(one), 1 - binary_probs, one], dim=-1)


def ordered_logit_cumulative_t(index, raw_thresholds):
    psi = thresholds_from_raw(raw_thresholds)
    inner = torch.sigmoid(psi - index[..., None])
    one = torch.ones_like(inner[..., :1])
    return torch.cat([torch.zeros_like(one), inner, one], dim=-1)


@tensor_io
def ordered_logit_cumulative(index, raw_thresholds):
    """Cumulative points (0, F(psi_1 - index), ..., F(psi_{K-1} - index), 1).

    ``index`` is the linear propensity (e.g. gamma . z); F is logistic.
    """
    return ordered_logit_cumulative_t(as_tensor(index), as_tensor(raw_thresholds))


def cell_masses(cumulative):
    """Category probabilities from cumulative points."""
    return torch.diff(as_tensor(cumulative), dim=-1)
