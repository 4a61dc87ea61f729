"""Cross-modal fusion at two granularities, adaptive mixing, the
discrete hazard head, and the survival likelihood.

Fine fusion consumes the concatenated refined tokens of each modality,
segment-mean-pooled to a common length; coarse fusion consumes the
per-group token sequences, aligned to the shorter one. The fused vectors
H_f and H_c are mixed by a learned gate alpha = sigmoid(raw), and a
linear-sigmoid head turns the mix into per-bin hazards, survival
products and a scalar risk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import IFMBlock
from .errors import ConfigError, ShapeError
from .numerics import (
    LinearLayer,
    Module,
    Tensor,
    log_clamped,
    reshape,
    segment_mean,
    sigmoid,
    stack,
    tmean,
    tsum,
)

PROB_FLOOR = 1e-12  # probabilities are clamped here before any log
DEFAULT_ALIGN_CAP = 256


def _segment_sizes(n: int, target: int) -> list:
    """Contiguous near-equal segments, longer segments first."""
    base, extra = divmod(n, target)
    return [base + 1] * extra + [base] * (target - extra)


def align_fine_tokens(tokens_a: Tensor, tokens_b: Tensor, length: int | None = None):
    """Segment-mean-pool two (L, D) token runs to a shared length.

    length defaults to min(L_a, L_b, 256). When a run is already at the
    target length it passes through unchanged.
    """
    la, lb = tokens_a.shape[0], tokens_b.shape[0]
    if la < 1 or lb < 1:
        raise ShapeError("align: both token runs must be non-empty")
    if length is None:
        length = min(la, lb, DEFAULT_ALIGN_CAP)
    if length < 1:
        raise ConfigError(f"align: target length must be >= 1, got {length}")
    if length > min(la, lb):
        raise ConfigError(f"align: target {length} exceeds shortest run {min(la, lb)}")

    def pool(t: Tensor, n: int) -> Tensor:
        if n == length:
            return t
        return segment_mean(t, _segment_sizes(n, length))

    return pool(tokens_a, la), pool(tokens_b, lb)


def _fuse(aligned_a: Tensor, aligned_b: Tensor, ifm: IFMBlock) -> Tensor:
    l, d = aligned_a.shape
    out = ifm(reshape(aligned_a, (1, l, d)), reshape(aligned_b, (1, l, d)))
    return tmean(reshape(out, (l, d)), axis=0)


def fuse_fine(tokens_a: Tensor, tokens_b: Tensor, ifm: IFMBlock, length: int | None = None) -> Tensor:
    """Fuse aligned fine-grained token runs into a single D-vector."""
    a, b = align_fine_tokens(tokens_a, tokens_b, length)
    return _fuse(a, b, ifm)


def fuse_coarse(groups_a: Tensor, groups_b: Tensor, ifm: IFMBlock) -> Tensor:
    """Fuse the (G, D) coarse sequences; aligned internally to the shorter."""
    a, b = align_fine_tokens(groups_a, groups_b, min(groups_a.shape[0], groups_b.shape[0]))
    return _fuse(a, b, ifm)


@dataclass
class FusedFeatures:
    """The two granularity-level fused vectors and their adaptive mix;
    all three share the token dimension."""

    fine: Tensor
    coarse: Tensor
    mixed: Tensor


class AlphaParam(Module):
    """Scalar gate in (0, 1) via sigmoid of a raw parameter."""

    def __init__(self, raw: float = 0.0):
        super().__init__()
        self.raw = Tensor(np.asarray(raw, dtype=np.float64), requires_grad=True)

    def value(self) -> Tensor:
        return sigmoid(self.raw)


def adaptive_fuse(h_fine: Tensor, h_coarse: Tensor, alpha: AlphaParam) -> Tensor:
    """Convex combination alpha * H_f + (1 - alpha) * H_c."""
    if h_fine.shape != h_coarse.shape:
        raise ShapeError(f"adaptive_fuse: {h_fine.shape} vs {h_coarse.shape}")
    a = alpha.value()
    return a * h_fine + (1.0 - a) * h_coarse


@dataclass
class HazardOutput:
    """Per-bin hazards in (0,1), survival S[t] = prod_{k<=t}(1 - h[k]),
    and risk = -sum_t S[t] (larger risk = earlier expected event)."""

    hazards: Tensor
    survival: Tensor
    risk: Tensor

    @property
    def n_bins(self) -> int:
        return self.hazards.shape[0]


def hazard_output_from(hazards: Tensor) -> HazardOutput:
    surv_terms = []
    running = None
    for t in range(hazards.shape[0]):
        keep = 1.0 - hazards[t]
        running = keep if running is None else running * keep
        surv_terms.append(running)
    survival = stack(surv_terms, axis=0)
    return HazardOutput(hazards=hazards, survival=survival, risk=-tsum(survival))


class HazardHead(Module):
    """Linear map to T_bins logits; sigmoid gives per-bin hazards."""

    def __init__(self, d_model: int, n_bins: int, rng):
        super().__init__()
        if n_bins < 2:
            raise ConfigError(f"hazard head: need at least 2 bins, got {n_bins}")
        self.lin = LinearLayer(d_model, n_bins, rng)

    def __call__(self, h: Tensor) -> HazardOutput:
        return hazard_output_from(sigmoid(self.lin(h)))


def survival_nll(out: HazardOutput, t_bin: int, censored: int) -> Tensor:
    """Discrete-time negative log likelihood for one subject.

    censored (c=1): -log S[t]. Observed event (c=0): -log S[t-1] - log h[t]
    with S[-1] = 1. Probabilities are clamped at 1e-12 before the log, so
    the loss is finite and non-negative for all inputs.
    """
    if not 0 <= t_bin < out.n_bins:
        raise ConfigError(f"survival_nll: t_bin {t_bin} outside [0, {out.n_bins})")
    if censored:
        return -log_clamped(out.survival[t_bin], PROB_FLOOR)
    ll = log_clamped(out.hazards[t_bin], PROB_FLOOR)
    if t_bin > 0:
        ll = ll + log_clamped(out.survival[t_bin - 1], PROB_FLOOR)
    return -ll
