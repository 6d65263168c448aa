"""Joint model: cluster inventory, unigram prior, DTW span likelihoods.

A word occurrence e_i is explained by a cluster f from e_i's own slice
of the inventory (the translation table is fixed 0/1), a span (a, b) of
the utterance, the span distortion, and a DTW likelihood tying the
cluster prototype to the span's frames.  Two likelihood variants exist:

  deficient  s(a, b | f) = exp(-DTW^2) normalized over the candidate
             span set, scored together with the cluster prior u(f)
  proper     s(f | a, b) = exp(-DTW^2) normalized over all live
             clusters, scored without u

A cluster is live when its prototype exists and u(f) > 0; dead clusters
keep their last prototype but drop out of normalizers and argmaxes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import FeatureSequence, SentencePair, atomic_write_text
from .distortion import DistortionParams, log_delta_a, log_delta_b
from .dtw import candidate_span_costs
from .segmentation import CandidateSpans

VARIANTS = ("deficient", "proper")
NEG_INF = float("-inf")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ClusterInventory:
    """k cluster ids per word type plus the inverse owner map."""

    clusters: dict[str, tuple[int, ...]]
    owner: dict[int, str]

    def __post_init__(self):
        ids = sorted(self.owner)
        if ids != list(range(len(ids))):
            raise ValueError("cluster ids must be 0..n-1")
        for word, fs in self.clusters.items():
            if not fs:
                raise ValueError(f"word {word!r} has no clusters")
            for f in fs:
                if self.owner.get(f) != word:
                    raise ValueError(f"owner map inconsistent for cluster {f}")
        if sum(len(fs) for fs in self.clusters.values()) != len(self.owner):
            raise ValueError("owner map inconsistent with cluster lists")

    @classmethod
    def build(cls, word_types: Iterable[str], k: int) -> "ClusterInventory":
        if k < 1:
            raise ValueError("k must be >= 1")
        words = sorted(set(word_types))
        clusters = {}
        owner = {}
        next_id = 0
        for word in words:
            ids = tuple(range(next_id, next_id + k))
            clusters[word] = ids
            for f in ids:
                owner[f] = word
            next_id += k
        return cls(clusters, owner)

    @property
    def n_clusters(self) -> int:
        return len(self.owner)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Everything the scorer needs: inventory, prior, prototypes, distortion."""

    inventory: ClusterInventory
    u: np.ndarray
    prototypes: tuple[FeatureSequence | None, ...]
    distortion: DistortionParams
    variant: str = "deficient"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        u = np.asarray(self.u, dtype=np.float64)
        n = self.inventory.n_clusters
        if u.shape != (n,):
            raise ValueError(f"u must have shape ({n},), got {u.shape}")
        if (u < 0).any() or not np.isfinite(u).all():
            raise ValueError("u must be non-negative and finite")
        if abs(u.sum() - 1.0) > 1e-9:
            raise ValueError(f"u must sum to 1, got {u.sum()!r}")
        if len(self.prototypes) != n:
            raise ValueError("prototype list length must match cluster count")
        u = u.copy()
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "prototypes", tuple(self.prototypes))

    def live_clusters(self) -> tuple[int, ...]:
        return tuple(
            f
            for f in range(self.inventory.n_clusters)
            if self.u[f] > 0.0 and self.prototypes[f] is not None
        )


@dataclass(frozen=True)
class WordAlignment:
    """One word's chosen cluster and 1-indexed inclusive span."""

    cluster_id: int | None
    a: int
    b: int
    log_score: float = 0.0


@dataclass(frozen=True)
class Alignment:
    utt_id: str
    words: tuple[WordAlignment, ...]


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

def deficient_log_s_table(
    prototype: FeatureSequence, pair: SentencePair, candidates: CandidateSpans
) -> np.ndarray:
    """log s(a, b | f) for every candidate span, softmax of -DTW^2 over the set."""
    costs = candidate_span_costs(prototype.frames, pair.source.frames, candidates.spans)
    neg = -(costs * costs)
    peak = neg.max()
    return neg - (peak + math.log(np.exp(neg - peak).sum()))


def proper_log_s_rows(
    params: ModelParams, pair: SentencePair, candidates: CandidateSpans
) -> dict[int, np.ndarray]:
    """log s(f | a, b) per live cluster f, softmax of -DTW^2 over live clusters."""
    live = params.live_clusters()
    if not live:
        return {}
    rows = np.stack(
        [
            -(c * c)
            for c in (
                candidate_span_costs(
                    params.prototypes[f].frames, pair.source.frames, candidates.spans
                )
                for f in live
            )
        ]
    )
    peak = rows.max(axis=0)
    lse = peak + np.log(np.exp(rows - peak).sum(axis=0))
    log_s = rows - lse
    return {f: log_s[idx] for idx, f in enumerate(live)}


def log_s_deficient(
    f: int,
    a: int,
    b: int,
    pair: SentencePair,
    candidates: CandidateSpans,
    prototypes: Sequence[FeatureSequence | None],
) -> float:
    proto = prototypes[f]
    if proto is None:
        raise ValueError(f"cluster {f} has no prototype")
    idx = candidates.spans.index((a, b))
    return float(deficient_log_s_table(proto, pair, candidates)[idx])


def log_s_proper(
    f: int, a: int, b: int, pair: SentencePair, params: ModelParams, candidates: CandidateSpans
) -> float:
    rows = proper_log_s_rows(params, pair, candidates)
    if f not in rows:
        raise ValueError(f"cluster {f} is not live")
    idx = candidates.spans.index((a, b))
    return float(rows[f][idx])


def effective_mu(mu_i: int, l: int, m: int) -> int:
    # mu_i = m only happens for single-word sentences, where the h slope
    # is undefined; clamp to m - 1 so the distortion stays well-formed.
    return min(mu_i, m - 1) if l == 1 else mu_i


def span_log_delta(i: int, a: int, b: int, pair: SentencePair, mu_i: int, params: DistortionParams) -> float:
    if pair.m == 1:
        return 0.0  # a single frame admits a single span; distortion is constant
    mu = effective_mu(mu_i, pair.l, pair.m)
    la = log_delta_a(i, pair.l, pair.m, mu, params)
    lb = log_delta_b(i, pair.l, pair.m, mu, params)
    return float(la[a] + lb[b])


def word_log_score(
    i: int,
    word: str,
    f: int,
    a: int,
    b: int,
    pair: SentencePair,
    params: ModelParams,
    candidates: CandidateSpans,
    mu_i: int,
) -> float:
    """Log score of word i (1-indexed) taking cluster f on span (a, b).

    Returns -inf when f does not belong to the word's inventory slice
    (the 0/1 translation table) or is dead.
    """
    if f not in params.inventory.clusters.get(word, ()):
        return NEG_INF
    if params.u[f] <= 0.0 or params.prototypes[f] is None:
        return NEG_INF
    delta_lp = span_log_delta(i, a, b, pair, mu_i, params.distortion)
    if params.variant == "deficient":
        s_lp = log_s_deficient(f, a, b, pair, candidates, params.prototypes)
        return (math.log(params.u[f]) + s_lp) + delta_lp
    s_lp = log_s_proper(f, a, b, pair, params, candidates)
    return s_lp + delta_lp


def sentence_log_score(
    alignment: Alignment,
    pair: SentencePair,
    params: ModelParams,
    candidates: CandidateSpans,
    mu: Sequence[int],
) -> float:
    """Sum of word log scores under the joint model (uniform p(l) omitted)."""
    if len(alignment.words) != pair.l:
        raise ValueError("alignment length does not match sentence length")
    total = 0.0
    for i, entry in enumerate(alignment.words, start=1):
        total += word_log_score(
            i,
            pair.target_words[i - 1],
            entry.cluster_id,
            entry.a,
            entry.b,
            pair,
            params,
            candidates,
            mu[i - 1],
        )
    return total


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def save_params(params: ModelParams, path: Path | str) -> None:
    """Dump parameters as versioned JSON; floats round-trip via repr."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "variant": params.variant,
        "distortion": {"p0": params.distortion.p0, "lambda": params.distortion.lam},
        "clusters": {w: list(fs) for w, fs in params.inventory.clusters.items()},
        "u": [float(v) for v in params.u],
        "prototypes": [
            None
            if proto is None
            else {"frame_shift_ms": proto.frame_shift_ms, "frames": proto.frames.tolist()}
            for proto in params.prototypes
        ],
    }
    atomic_write_text(path, json.dumps(payload))


def load_params(path: Path | str) -> ModelParams:
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    clusters = {w: tuple(fs) for w, fs in payload["clusters"].items()}
    owner = {f: w for w, fs in clusters.items() for f in fs}
    inventory = ClusterInventory(clusters, owner)
    prototypes = tuple(
        None
        if entry is None
        else FeatureSequence(np.array(entry["frames"], dtype=np.float64), entry["frame_shift_ms"])
        for entry in payload["prototypes"]
    )
    return ModelParams(
        inventory=inventory,
        u=np.array(payload["u"], dtype=np.float64),
        prototypes=prototypes,
        distortion=DistortionParams(p0=payload["distortion"]["p0"], lam=payload["distortion"]["lambda"]),
        variant=payload["variant"],
    )
