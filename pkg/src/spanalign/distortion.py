"""Reparameterized span distortion: where word i's frames should sit.

Word i of a length-l sentence is granted mu_i frames of the m-frame
utterance in proportion to its character count.  Its span start a and
end b then follow two softmax families peaked near the diagonal:

    h_a(i, j) = -| i/l - j / (m - mu_i) |
    h_b(i, j) = -| i/l - (j - mu_i) / (m - mu_i) |
    delta(j)  = p0                                  if j = 0
              = (1 - p0) * exp(lam * h) / Z         if 1 <= j <= m

Both h values are evaluated through the integer-exact numerator
|i*(m - mu) - l*(j - shift)| so that argmax ties resolve identically
to exact arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_NEG_INF = float("-inf")


@dataclass(frozen=True)
class DistortionParams:
    """Null-span mass p0 and diagonal sharpness lam (the lambda knob)."""

    p0: float = 0.0
    lam: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.p0 <= 1.0):
            raise ValueError(f"p0 must lie in [0, 1], got {self.p0}")
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be finite and >= 0, got {self.lam}")


@dataclass(frozen=True)
class MuAllocation:
    """Per-word frame budgets, each >= 1, summing to the frame count."""

    mu: tuple[int, ...]


def allocate_mu(char_lengths, m: int) -> MuAllocation:
    """Largest-remainder split of m frames proportional to character counts.

    Quota ties go to the lower word index.  Words rounded to zero are
    topped up to one frame by taking a frame from the largest share.
    """
    lengths = list(char_lengths)
    l = len(lengths)
    if l < 1:
        raise ValueError("char_lengths must be non-empty")
    if any(c < 1 for c in lengths):
        raise ValueError("character counts must be >= 1")
    if m < l:
        raise ValueError(f"cannot allocate {m} frames to {l} words")

    total = sum(lengths)
    # Integer arithmetic throughout: float quotas can misorder remainders
    # that are exactly tied (m * c / total at 1e-15 apart).
    mu = [m * c // total for c in lengths]
    remainders = [m * c % total for c in lengths]
    seats = m - sum(mu)
    order = sorted(range(l), key=lambda i: (-remainders[i], i))
    for i in order[:seats]:
        mu[i] += 1

    while any(v == 0 for v in mu):
        donor = max(range(l), key=lambda i: (mu[i], -i))
        recipient = mu.index(0)
        mu[donor] -= 1
        mu[recipient] += 1
    return MuAllocation(tuple(mu))


def _check_args(i: int, l: int, m: int, mu_i: int) -> None:
    if l < 1 or not (1 <= i <= l):
        raise ValueError(f"word index i={i} out of range for l={l}")
    if m < 1:
        raise ValueError(f"frame count m={m} must be >= 1")
    if not (0 < mu_i < m):
        raise ValueError(f"mu_i={mu_i} must satisfy 0 < mu_i < m={m}")


@lru_cache(maxsize=65536)
def _log_softmax_body(i: int, l: int, m: int, mu_i: int, lam: float, shift: int) -> np.ndarray:
    """log softmax over j = 1..m of lam * h, with h via the exact numerator."""
    j = np.arange(1, m + 1, dtype=np.int64)
    num = np.abs(i * (m - mu_i) - l * (j - shift))
    h = -num.astype(np.float64) / float(l * (m - mu_i))
    logits = lam * h
    peak = logits.max()
    out = logits - (peak + math.log(np.exp(logits - peak).sum()))
    out.setflags(write=False)
    return out


def _log_delta(i: int, l: int, m: int, mu_i: int, params: DistortionParams, shift: int) -> np.ndarray:
    _check_args(i, l, m, mu_i)
    body = _log_softmax_body(i, l, m, mu_i, params.lam, shift)
    out = np.empty(m + 1)
    out[0] = math.log(params.p0) if params.p0 > 0 else _NEG_INF
    if params.p0 < 1.0:
        out[1:] = body + math.log1p(-params.p0)
    else:
        out[1:] = _NEG_INF
    out.setflags(write=False)
    return out


def log_delta_a(i: int, l: int, m: int, mu_i: int, params: DistortionParams) -> np.ndarray:
    """Log probabilities over span starts j = 0..m (0 is the null span)."""
    return _log_delta(i, l, m, mu_i, params, shift=0)


def log_delta_b(i: int, l: int, m: int, mu_i: int, params: DistortionParams) -> np.ndarray:
    """Log probabilities over span ends j = 0..m, shifted right by mu_i."""
    return _log_delta(i, l, m, mu_i, params, shift=mu_i)


def delta_a(i: int, l: int, m: int, mu_i: int, params: DistortionParams) -> np.ndarray:
    """Probability vector over span starts, entry 0 being the null span."""
    return np.exp(log_delta_a(i, l, m, mu_i, params))


def delta_b(i: int, l: int, m: int, mu_i: int, params: DistortionParams) -> np.ndarray:
    """Probability vector over span ends, entry 0 being the null span."""
    return np.exp(log_delta_b(i, l, m, mu_i, params))


def log_delta_span(
    a: int, b: int, i: int, l: int, m: int, mu_i: int, params: DistortionParams
) -> float:
    """Joint log probability of span endpoints (a, b), factored as delta_a * delta_b.

    Either endpoint may be 0 (the null span), which scores log p0 and is
    -inf under the default p0 = 0.
    """
    if not (0 <= a <= m and 0 <= b <= m):
        raise ValueError(f"endpoints ({a}, {b}) out of range for m={m}")
    if a > 0 and b > 0 and a > b:
        raise ValueError(f"span start {a} exceeds end {b}")
    return float(log_delta_a(i, l, m, mu_i, params)[a] + log_delta_b(i, l, m, mu_i, params)[b])
