"""Candidate span generation: silences, boundary pooling, span enumeration.

Boundaries and spans are 1-indexed; a span (a, b) includes both
endpoints.  Silence intervals are stored [s, t) so frames s..t-1 are
silent.  Candidate spans never contain a silent frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CorpusError, SentencePair


class NoCandidateSpansError(Exception):
    """Enumeration produced no span; callers fall back to the unrestricted grid."""


@dataclass(frozen=True)
class SilenceSpans:
    """Disjoint silent intervals [s, t), 1-indexed, in increasing order."""

    spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prev_end = 0
        for s, t in self.spans:
            if not (1 <= s < t):
                raise ValueError(f"bad silence interval [{s}, {t})")
            if s < prev_end:
                raise ValueError("silence intervals must be disjoint and ordered")
            prev_end = t

    def __iter__(self):
        return iter(self.spans)

    def __len__(self):
        return len(self.spans)


@dataclass(frozen=True)
class CandidateSpans:
    """Sorted unique candidate spans (a, b), 1-indexed inclusive."""

    spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.spans:
            raise ValueError("candidate span set must be non-empty")
        prev = None
        for a, b in self.spans:
            if not (1 <= a <= b):
                raise ValueError(f"bad span ({a}, {b})")
            if prev is not None and not (prev < (a, b)):
                raise ValueError("spans must be strictly sorted")
            prev = (a, b)

    def __iter__(self):
        return iter(self.spans)

    def __len__(self):
        return len(self.spans)


@dataclass(frozen=True)
class SegmentationConfig:
    threshold_ratio: float = 0.05
    min_silence_ms: float = 50.0
    smooth_frames: int = 5
    grid_stride: int = 5
    span_min_len: int = 3
    span_max_len: int = 150
    boundary_dir: Path | None = None

    def __post_init__(self):
        if not (0.0 < self.threshold_ratio < 1.0):
            raise ValueError("threshold_ratio must lie in (0, 1)")
        if self.min_silence_ms <= 0:
            raise ValueError("min_silence_ms must be positive")
        if self.smooth_frames < 1:
            raise ValueError("smooth_frames must be >= 1")
        if self.grid_stride < 0:
            raise ValueError("grid_stride must be >= 0 (0 disables the grid)")
        if not (1 <= self.span_min_len <= self.span_max_len):
            raise ValueError("need 1 <= span_min_len <= span_max_len")


def detect_silence(
    energy: np.ndarray,
    frame_shift_ms: float = 10.0,
    threshold_ratio: float = 0.05,
    min_ms: float = 50.0,
    smooth_frames: int = 5,
) -> SilenceSpans:
    """Find low-energy runs: smooth, threshold at a ratio of the peak, keep long runs.

    The track is smoothed with a centered running median (edges are
    padded by replication).  A median keeps the edges of a quiet run
    where a moving average would smear them: a window centered on the
    first quiet frame already holds a majority of quiet values.  Frames
    whose smoothed value falls below threshold_ratio * max(smoothed)
    count as silent, and maximal silent runs of at least
    ceil(min_ms / frame_shift_ms) frames are returned.  An all-zero
    track has peak 0 and thus no silences.
    """
    e = np.asarray(energy, dtype=np.float64)
    if e.ndim != 1 or e.shape[0] < 1:
        raise ValueError("energy track must be a non-empty 1-d array")
    if not np.isfinite(e).all() or (e < 0).any():
        raise ValueError("energy track must be finite and non-negative")
    m = e.shape[0]

    half = smooth_frames // 2
    if half > 0:
        padded = np.pad(e, half, mode="edge")
        windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * half + 1)
        smoothed = np.median(windows, axis=1)
    else:
        smoothed = e

    threshold = threshold_ratio * smoothed.max()
    mask = smoothed < threshold
    min_frames = math.ceil(min_ms / frame_shift_ms)

    spans = []
    run_start = None
    for pos in range(m + 1):
        silent = pos < m and mask[pos]
        if silent and run_start is None:
            run_start = pos
        elif not silent and run_start is not None:
            if pos - run_start >= min_frames:
                spans.append((run_start + 1, pos + 1))
            run_start = None
    return SilenceSpans(tuple(spans))


def read_boundary_file(path: Path, m: int) -> set[int]:
    """Parse a sidecar of 1-indexed boundary frame indices, one per line."""
    points = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                value = int(line)
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: non-integer boundary") from None
            if not (1 <= value <= m):
                raise CorpusError(f"{path}:{lineno}: boundary {value} outside [1, {m}]")
            points.add(value)
    return points


def candidate_boundaries(
    pair: SentencePair,
    config: SegmentationConfig,
    silences: SilenceSpans | None = None,
) -> list[int]:
    """Pool boundary points: sidecar file, silence edges, uniform grid, plus 1 and m."""
    m = pair.m
    points = {1, m}
    if config.boundary_dir is not None:
        sidecar = Path(config.boundary_dir) / f"{pair.utt_id}.bounds"
        if sidecar.exists():
            points |= read_boundary_file(sidecar, m)
    if silences is not None:
        for s, t in silences:
            points.add(min(s, m))
            points.add(min(t, m))
    if config.grid_stride > 0:
        points.update(range(config.grid_stride, m + 1, config.grid_stride))
    return sorted(points)


def _snap(j: int, silences: SilenceSpans, is_start: bool) -> int:
    """Move an endpoint sitting on a silent frame just outside that silence."""
    for s, t in silences:
        if s <= j < t:
            return t if is_start else s - 1
    return j


def enumerate_spans(
    boundaries,
    silences: SilenceSpans,
    min_len: int = 3,
    max_len: int = 150,
) -> CandidateSpans:
    """All boundary-point pairs, snapped off silences, filtered by length.

    Raises NoCandidateSpansError when nothing survives, signalling the
    caller to retry on the unrestricted grid.
    """
    points = sorted(set(boundaries))
    if not points or points[0] < 1:
        raise ValueError("boundaries must be positive frame indices")
    silent_list = list(silences)

    def overlaps_silence(a: int, b: int) -> bool:
        return any(max(a, s) <= min(b, t - 1) for s, t in silent_list)

    spans = set()
    for ai, a in enumerate(points):
        for b in points[ai:]:
            a2 = _snap(a, silences, is_start=True)
            b2 = _snap(b, silences, is_start=False)
            if a2 > b2 or b2 < 1:
                continue
            if overlaps_silence(a2, b2):
                continue
            if min_len <= b2 - a2 + 1 <= max_len:
                spans.add((a2, b2))
    if not spans:
        raise NoCandidateSpansError("no candidate span survived filtering")
    return CandidateSpans(tuple(sorted(spans)))


def candidate_spans(
    pair: SentencePair, config: SegmentationConfig
) -> tuple[CandidateSpans, SilenceSpans]:
    """Full per-utterance pipeline with fallbacks guaranteeing a non-empty set."""
    if pair.energy_track is not None:
        silences = detect_silence(
            pair.energy_track,
            frame_shift_ms=pair.source.frame_shift_ms,
            threshold_ratio=config.threshold_ratio,
            min_ms=config.min_silence_ms,
            smooth_frames=config.smooth_frames,
        )
    else:
        silences = SilenceSpans(())

    boundaries = candidate_boundaries(pair, config, silences)
    try:
        spans = enumerate_spans(boundaries, silences, config.span_min_len, config.span_max_len)
    except NoCandidateSpansError:
        try:
            spans = enumerate_spans(
                range(1, pair.m + 1), SilenceSpans(()), config.span_min_len, config.span_max_len
            )
        except NoCandidateSpansError:
            spans = CandidateSpans(((1, pair.m),))
    return spans, silences
