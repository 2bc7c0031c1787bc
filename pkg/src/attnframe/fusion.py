"""Gradient-attention fusion: min-max normalization masks applied to CNN activations.

Four modulation strategies are provided, plus a pass-through baseline:

  BASELINE  F = L
  DAM       F = L * N(G)                  direct attention modulation
  EAM       F = L * exp(N(G))             exponential attention modulation
  GAF       F = L * N(sum_c N_c(G))       global attention fusion (channel-collapsed map)
  EGA       F = L * exp(N(sum_c N_c(G)))  exponential global attention

N(.) scales its input to [0, 1] by min-max; the global strategies first
normalize each gradient channel independently, sum across channels, and
normalize the resulting single-channel saliency map. Attention only rescales
the activations: signs are preserved and zeros stay zero.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .tensors import validate_tensor


class FusionStrategy(Enum):
    BASELINE = "baseline"
    DAM = "dam"
    EAM = "eam"
    GAF = "gaf"
    EGA = "ega"


class NormScope(Enum):
    GLOBAL = "global"
    PER_CHANNEL = "per_channel"


def minmax_normalize(g: np.ndarray, scope: NormScope = NormScope.GLOBAL) -> np.ndarray:
    """Scale `g` into [0, 1] by min-max over the chosen scope.

    GLOBAL uses one min/max over the whole tensor; PER_CHANNEL normalizes each
    channel slice independently. A scope whose values are all equal carries no
    attention signal and normalizes to zeros.
    """
    g = validate_tensor(g)
    if scope is NormScope.GLOBAL:
        lo = g.min()
        span = g.max() - lo
        if span == 0.0:
            return np.zeros_like(g)
        return (g - lo) / span
    lo = g.min(axis=(1, 2), keepdims=True)
    span = g.max(axis=(1, 2), keepdims=True) - lo
    out = np.zeros_like(g)
    np.divide(g - lo, span, out=out, where=span != 0.0)
    return out


def channel_saliency(g: np.ndarray) -> np.ndarray:
    """Collapse a gradient tensor to a single-channel (1, H, W) saliency map.

    Each channel is min-max normalized on its own, the normalized channels are
    summed, and the summed map is min-max normalized again. Values lie in [0, 1].
    """
    per_channel = minmax_normalize(g, NormScope.PER_CHANNEL)
    summed = per_channel.sum(axis=0, keepdims=True, dtype=np.float32)
    return minmax_normalize(summed, NormScope.GLOBAL)


def fuse(l: np.ndarray, g: np.ndarray, strategy: FusionStrategy) -> np.ndarray:
    """Combine layer activations `l` with gradient tensor `g` per `strategy`.

    Output has the same dims as the inputs. The single-channel saliency map of
    the global strategies multiplies every channel of `l`.
    """
    l = validate_tensor(l)
    g = validate_tensor(g)
    if l.shape != g.shape:
        raise ValueError(f"activation dims {l.shape} != gradient dims {g.shape}")

    if strategy is FusionStrategy.BASELINE:
        return l.copy()
    if strategy is FusionStrategy.DAM:
        return l * minmax_normalize(g, NormScope.GLOBAL)
    if strategy is FusionStrategy.EAM:
        return l * np.exp(minmax_normalize(g, NormScope.GLOBAL))
    if strategy is FusionStrategy.GAF:
        return l * channel_saliency(g)
    if strategy is FusionStrategy.EGA:
        return l * np.exp(channel_saliency(g))
    raise ValueError(f"unknown fusion strategy: {strategy!r}")
