"""Importance weights r(x, s) for the reweighted adversarial term.

Two ways of producing weights share the same exponential normalization:

* a ratio network ``h(x, s)`` whose raw outputs are exponentiated and
  normalized on the batch,
* the closed-form Boltzmann weights ``exp(-L_S / tau)`` (BROAD).

Normalization is either conditional (mean 1 inside each sensitive group)
or global (mean 1 over the whole pool).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, UsageError
from .nn import Activation, DenseNetwork, forward, mlp


class Normalization(str, Enum):
    CONDITIONAL = "conditional"
    GLOBAL = "global"


@dataclass
class RatioAssignment:
    weights: np.ndarray
    log_weights: np.ndarray
    mode: Normalization
    temperature: float | None = None

    def group_means(self, sensitive) -> dict[int, float]:
        s = np.asarray(sensitive).ravel()
        return {int(v): float(self.weights[s == v].mean()) for v in np.unique(s)}


def _pools(sensitive, mode: Normalization, n: int):
    if mode is Normalization.GLOBAL:
        return [np.arange(n)]
    s = np.asarray(sensitive).ravel()
    if s.size != n:
        raise UsageError(f"{n} scores vs {s.size} sensitive values")
    pools = [np.flatnonzero(s == v) for v in (0, 1)]
    if any(p.size == 0 for p in pools):
        raise UsageError("conditional normalization needs both sensitive groups in the batch")
    return pools


def _normalize(raw_scores, sensitive, mode, temperature=None) -> RatioAssignment:
    mode = Normalization(mode)
    h = np.asarray(raw_scores, dtype=np.float64).ravel()
    if h.size == 0:
        raise UsageError("empty batch")
    log_r = np.empty_like(h)
    for idx in _pools(sensitive, mode, h.size):
        hp = h[idx]
        m = hp.max()
        # log r_i = h_i - log(mean_j exp(h_j)), shifted by the pool max
        log_r[idx] = (hp - m) - np.log(np.mean(np.exp(hp - m)))
    return RatioAssignment(np.exp(log_r), log_r, mode, temperature)


def normalize_conditional(raw_scores, sensitive) -> RatioAssignment:
    return _normalize(raw_scores, sensitive, Normalization.CONDITIONAL)


def normalize_global(raw_scores, sensitive=None) -> RatioAssignment:
    return _normalize(raw_scores, sensitive, Normalization.GLOBAL)


def normalize(raw_scores, sensitive, mode) -> RatioAssignment:
    return _normalize(raw_scores, sensitive, mode)


def normalization_backward(ratio: RatioAssignment, grad_weights, sensitive) -> np.ndarray:
    """Chain d(J)/d(r) back to d(J)/d(raw scores) through the pool quotient.

    Inside a pool of size m, r_i = m * e^{h_i} / sum_j e^{h_j}, so
    dJ/dh_k = r_k * (dJ/dr_k - (1/m) * sum_i dJ/dr_i * r_i).
    """
    g = np.asarray(grad_weights, dtype=np.float64).ravel()
    r = ratio.weights
    out = np.empty_like(r)
    for idx in _pools(sensitive, ratio.mode, r.size):
        out[idx] = r[idx] * (g[idx] - np.mean(g[idx] * r[idx]))
    return out


def broad_weights(adversary_losses, sensitive, tau: float, mode=Normalization.CONDITIONAL) -> RatioAssignment:
    """Closed-form maximizer of the KL-penalized inner problem.

    ``r_i = exp(-L_i / tau) / mean_{pool(i)} exp(-L_j / tau)``.
    """
    if not tau > 0:
        raise ConfigurationError(f"temperature must be > 0, got {tau}")
    losses = np.asarray(adversary_losses, dtype=np.float64).ravel()
    return _normalize(-losses / tau, sensitive, mode, temperature=tau)


def kl_term(ratio) -> float:
    """Mean of r log r over the batch, with 0 log 0 = 0."""
    r = ratio.weights if isinstance(ratio, RatioAssignment) else np.asarray(ratio, dtype=np.float64)
    if np.any(r < 0):
        raise UsageError("weights must be non-negative")
    safe = np.where(r > 0, r, 1.0)
    return float(np.mean(np.where(r > 0, r * np.log(safe), 0.0)))


def inner_objective(weights, losses, tau: float) -> float:
    """Value maximized by the Boltzmann weights: -mean(r L) - tau * mean(r log r)."""
    r = np.asarray(weights, dtype=np.float64)
    return float(-np.mean(r * np.asarray(losses)) - tau * kl_term(r))


def fully_fair_weight_analysis(p_s1, tau):
    """Weights assigned when the adversary can only output the prior P(S).

    Each sample then carries loss ``-log P(S = s_i)`` and its unnormalized
    Boltzmann weight is ``P(S = s_i) ** (1 / tau)``. Works on floats or
    ``fractions.Fraction`` (exact when ``1 / tau`` is an integer).

    Returns per-group weights under both normalizations, keyed by s.
    """
    p1 = p_s1
    p0 = 1 - p_s1
    if not (0 < p1 < 1):
        raise ConfigurationError("p_s1 must be in (0, 1)")
    if not tau > 0:
        raise ConfigurationError("tau must be > 0")
    inv_tau = 1 / tau
    u1 = p1 ** inv_tau
    u0 = p0 ** inv_tau
    # conditional pool: every member of a group has the same weight u_s
    conditional = {1: u1 / u1, 0: u0 / u0}
    z = p1 * u1 + p0 * u0
    return {"conditional": conditional, "global": {1: u1 / z, 0: u0 / z}, "normalizer": z}


def ratio_input(features, sensitive) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    s = np.asarray(sensitive, dtype=np.float64).reshape(-1, 1)
    return np.hstack([x, s])


@dataclass
class RatioNetwork:
    """h(x, s): features plus the sensitive bit in, one unbounded score out."""

    head: DenseNetwork

    def __post_init__(self):
        if self.head.output_dim != 1 or self.head.layers[-1].activation is not Activation.IDENTITY:
            raise ConfigurationError("ratio head must end in a single identity unit")

    @classmethod
    def create(cls, n_features: int, hidden, rng) -> "RatioNetwork":
        return cls(mlp(n_features + 1, hidden, Activation.IDENTITY, rng))

    @property
    def n_features(self) -> int:
        return self.head.input_dim - 1

    def scores(self, features, sensitive):
        out, trace = forward(self.head, ratio_input(features, sensitive))
        return out.ravel(), trace

    def weights(self, features, sensitive, mode=Normalization.CONDITIONAL) -> RatioAssignment:
        h, _ = self.scores(features, sensitive)
        return normalize(h, sensitive, mode)
