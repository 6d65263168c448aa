"""Corpus types, file I/O, feature normalization, and synthetic data.

On-disk layout:
  manifest           one utterance id per line
  <utt_id>.feat      header line "m d", then m lines of d floats
  translations       one whitespace-tokenized sentence per manifest line
  gold file          utt_id<TAB>word_index<TAB>start_frame<TAB>end_frame,
                     0-indexed, end exclusive
  <utt_id>.energy    optional sidecar, one non-negative float per frame

Frame spans are stored 1-indexed and inclusive inside the package; the
0-indexed end-exclusive convention applies to files only.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np


class CorpusError(ValueError):
    """Malformed corpus input; the message names the file and line."""


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write a file via a temp file and rename so readers never see partials."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """One utterance's feature frames as an (m, d) float64 array."""

    frames: np.ndarray
    frame_shift_ms: float = 10.0

    def __post_init__(self):
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise CorpusError(f"feature matrix must have shape (m>=1, d>=1), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise CorpusError("feature matrix contains non-finite values")
        if self.frame_shift_ms <= 0:
            raise CorpusError(f"frame_shift_ms must be positive, got {self.frame_shift_ms}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)

    @property
    def m(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def segment(self, a: int, b: int) -> "FeatureSequence":
        """Sub-sequence for the 1-indexed inclusive span (a, b)."""
        if not (1 <= a <= b <= self.m):
            raise ValueError(f"invalid span ({a}, {b}) for m={self.m}")
        return FeatureSequence(self.frames[a - 1 : b], self.frame_shift_ms)


@dataclass(frozen=True, eq=False)
class SentencePair:
    """A feature sequence paired with its translation sentence."""

    utt_id: str
    source: FeatureSequence
    target_words: tuple[str, ...]
    char_lengths: tuple[int, ...]
    energy_track: np.ndarray | None = None

    def __post_init__(self):
        if not self.utt_id:
            raise CorpusError("empty utterance id")
        if len(self.target_words) < 1:
            raise CorpusError(f"{self.utt_id}: empty target sentence")
        if len(self.char_lengths) != len(self.target_words):
            raise CorpusError(f"{self.utt_id}: char_lengths does not match target_words")
        for word, n in zip(self.target_words, self.char_lengths):
            if not word:
                raise CorpusError(f"{self.utt_id}: empty token")
            if n != len(word):
                raise CorpusError(f"{self.utt_id}: char length {n} does not match token {word!r}")
        if self.energy_track is not None:
            e = np.asarray(self.energy_track, dtype=np.float64)
            if e.ndim != 1 or e.shape[0] != self.source.m:
                raise CorpusError(f"{self.utt_id}: energy track length does not match frame count")
            if not np.isfinite(e).all() or (e < 0).any():
                raise CorpusError(f"{self.utt_id}: energy track must be finite and non-negative")
            e.setflags(write=False)
            object.__setattr__(self, "energy_track", e)

    @property
    def l(self) -> int:
        return len(self.target_words)

    @property
    def m(self) -> int:
        return self.source.m


@dataclass(frozen=True)
class GoldAlignment:
    """Reference word-to-frame links, both sides 0-indexed."""

    utt_id: str
    links: frozenset[tuple[int, int]]


@dataclass(frozen=True, eq=False)
class Corpus:
    """An ordered collection of sentence pairs plus optional gold links."""

    pairs: tuple[SentencePair, ...]
    gold: dict[str, GoldAlignment] | None = None

    def __post_init__(self):
        seen = set()
        for pair in self.pairs:
            if pair.utt_id in seen:
                raise CorpusError(f"duplicate utterance id {pair.utt_id!r}")
            seen.add(pair.utt_id)
        if self.gold is not None:
            by_id = {p.utt_id: p for p in self.pairs}
            for utt_id, ga in self.gold.items():
                if utt_id not in by_id:
                    raise CorpusError(f"gold alignment for unknown utterance {utt_id!r}")
                pair = by_id[utt_id]
                for word, frame in ga.links:
                    if not (0 <= word < pair.l) or not (0 <= frame < pair.m):
                        raise CorpusError(
                            f"{utt_id}: gold link ({word}, {frame}) out of range "
                            f"for l={pair.l}, m={pair.m}"
                        )

    def __iter__(self) -> Iterator[SentencePair]:
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def get(self, utt_id: str) -> SentencePair:
        for pair in self.pairs:
            if pair.utt_id == utt_id:
                return pair
        raise KeyError(utt_id)


# ---------------------------------------------------------------------------
# file readers / writers
# ---------------------------------------------------------------------------

def read_feature_file(path: Path | str, frame_shift_ms: float = 10.0) -> FeatureSequence:
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise CorpusError(f"{path}: empty feature file")
    header = lines[0].split()
    if len(header) != 2:
        raise CorpusError(f"{path}:1: header must be 'm d', got {lines[0]!r}")
    try:
        m, d = int(header[0]), int(header[1])
    except ValueError:
        raise CorpusError(f"{path}:1: header must be two integers, got {lines[0]!r}") from None
    if len(lines) - 1 != m:
        raise CorpusError(f"{path}: header declares {m} frames, file has {len(lines) - 1}")
    rows = np.empty((m, d), dtype=np.float64)
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != d:
            raise CorpusError(f"{path}:{i}: expected {d} values, got {len(parts)}")
        try:
            rows[i - 2] = [float(p) for p in parts]
        except ValueError:
            raise CorpusError(f"{path}:{i}: non-numeric value") from None
    if not np.isfinite(rows).all():
        raise CorpusError(f"{path}: non-finite feature value")
    return FeatureSequence(rows, frame_shift_ms)


def write_feature_file(path: Path | str, features: FeatureSequence) -> None:
    lines = [f"{features.m} {features.dim}"]
    for row in features.frames.tolist():
        lines.append(" ".join(repr(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_energy_file(path: Path | str, m: int) -> np.ndarray:
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        lines = [ln for ln in handle.read().splitlines() if ln.strip()]
    if len(lines) != m:
        raise CorpusError(f"{path}: expected {m} energy values, got {len(lines)}")
    try:
        values = np.array([float(ln) for ln in lines], dtype=np.float64)
    except ValueError:
        raise CorpusError(f"{path}: non-numeric energy value") from None
    return values


def write_energy_file(path: Path | str, energy: np.ndarray) -> None:
    atomic_write_text(path, "\n".join(repr(float(v)) for v in energy) + "\n")


def links_to_intervals(links: Iterable[tuple[int, int]]) -> list[tuple[int, int, int]]:
    """Collapse (word, frame) links into (word, start, end) runs, end exclusive."""
    by_word: dict[int, list[int]] = {}
    for word, frame in links:
        by_word.setdefault(word, []).append(frame)
    out = []
    for word in sorted(by_word):
        frames = sorted(by_word[word])
        start = prev = frames[0]
        for f in frames[1:]:
            if f != prev + 1:
                out.append((word, start, prev + 1))
                start = f
            prev = f
        out.append((word, start, prev + 1))
    return out


def read_gold_file(path: Path | str) -> dict[str, GoldAlignment]:
    path = Path(path)
    links: dict[str, set[tuple[int, int]]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise CorpusError(f"{path}:{lineno}: expected 4 tab-separated fields")
            utt_id = parts[0]
            try:
                word, start, end = int(parts[1]), int(parts[2]), int(parts[3])
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: non-integer field") from None
            if word < 0 or start < 0 or end <= start:
                raise CorpusError(f"{path}:{lineno}: invalid interval [{start}, {end})")
            links.setdefault(utt_id, set()).update((word, f) for f in range(start, end))
    return {u: GoldAlignment(u, frozenset(s)) for u, s in links.items()}


def write_gold_file(path: Path | str, gold: dict[str, GoldAlignment]) -> None:
    lines = []
    for utt_id in sorted(gold):
        for word, start, end in links_to_intervals(gold[utt_id].links):
            lines.append(f"{utt_id}\t{word}\t{start}\t{end}")
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def load_corpus(
    manifest_path: Path | str,
    feature_dir: Path | str,
    translations_path: Path | str,
    gold_path: Path | str | None = None,
    frame_shift_ms: float = 10.0,
) -> Corpus:
    """Load a corpus from the external file layout, validating as it goes."""
    manifest_path = Path(manifest_path)
    feature_dir = Path(feature_dir)
    with open(manifest_path, encoding="utf-8") as handle:
        utt_ids = [ln.strip() for ln in handle.read().splitlines()]
    while utt_ids and not utt_ids[-1]:
        utt_ids.pop()
    for lineno, utt_id in enumerate(utt_ids, start=1):
        if not utt_id:
            raise CorpusError(f"{manifest_path}:{lineno}: blank utterance id")
    if not utt_ids:
        raise CorpusError(f"{manifest_path}: empty manifest")

    with open(translations_path, encoding="utf-8") as handle:
        sentences = handle.read().splitlines()
    while len(sentences) > len(utt_ids) and not sentences[-1].strip():
        sentences.pop()
    if len(sentences) != len(utt_ids):
        raise CorpusError(
            f"{translations_path}: {len(sentences)} sentences for {len(utt_ids)} manifest entries"
        )

    pairs = []
    for lineno, (utt_id, sentence) in enumerate(zip(utt_ids, sentences), start=1):
        words = tuple(sentence.split())
        if not words:
            raise CorpusError(f"{translations_path}:{lineno}: empty sentence for {utt_id}")
        features = read_feature_file(feature_dir / f"{utt_id}.feat", frame_shift_ms)
        energy_path = feature_dir / f"{utt_id}.energy"
        energy = read_energy_file(energy_path, features.m) if energy_path.exists() else None
        pairs.append(
            SentencePair(
                utt_id=utt_id,
                source=features,
                target_words=words,
                char_lengths=tuple(len(w) for w in words),
                energy_track=energy,
            )
        )

    gold = read_gold_file(gold_path) if gold_path is not None else None
    return Corpus(tuple(pairs), gold)


def save_corpus(corpus: Corpus, out_dir: Path | str) -> None:
    """Write a corpus back out in the external layout (features beside manifest)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "manifest.txt", "\n".join(p.utt_id for p in corpus.pairs) + "\n")
    atomic_write_text(
        out_dir / "translations.txt",
        "\n".join(" ".join(p.target_words) for p in corpus.pairs) + "\n",
    )
    for pair in corpus.pairs:
        write_feature_file(out_dir / f"{pair.utt_id}.feat", pair.source)
        if pair.energy_track is not None:
            write_energy_file(out_dir / f"{pair.utt_id}.energy", pair.energy_track)
    if corpus.gold:
        write_gold_file(out_dir / "gold.tsv", corpus.gold)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def normalize_utterance(features: FeatureSequence) -> FeatureSequence:
    """Scale each dimension to zero mean and unit population variance.

    Dimensions with zero variance are shifted to zero and left unscaled.
    """
    frames = features.frames
    mean = frames.mean(axis=0)
    var = frames.var(axis=0)
    centered = frames - mean
    scale = np.where(var > 0.0, np.sqrt(var), 1.0)
    return FeatureSequence(centered / scale, features.frame_shift_ms)


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Generator settings for corpora sampled from the model family itself.

    Each word type gets a fixed prototype whose length grows with its
    character count; sentences are emitted as (optionally reordered)
    prototype concatenations with silences at word junctions.
    """

    vocab_size: int = 20
    n_sentences: int = 50
    sentence_len_range: tuple[int, int] = (3, 8)
    # Default tokens are uniform (5 chars, 8 frames) so that the
    # char-proportional mu split matches the true slot geometry exactly;
    # mismatched length-to-char ratios bias the span prior off the truth.
    proto_len_range: tuple[int, int] = (8, 8)
    dim: int = 12
    noise_std: float = 0.0
    reorder_prob: float = 0.0
    silence_prob: float = 1.0
    silence_len_range: tuple[int, int] = (9, 14)
    frame_shift_ms: float = 10.0

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if self.n_sentences < 1:
            raise ValueError("n_sentences must be >= 1")
        lo, hi = self.sentence_len_range
        if not (1 <= lo <= hi):
            raise ValueError(f"bad sentence_len_range {self.sentence_len_range}")
        lo, hi = self.proto_len_range
        if not (1 <= lo <= hi):
            raise ValueError(f"bad proto_len_range {self.proto_len_range}")
        lo, hi = self.silence_len_range
        if not (1 <= lo <= hi):
            raise ValueError(f"bad silence_len_range {self.silence_len_range}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if not (0.0 <= self.reorder_prob <= 1.0):
            raise ValueError("reorder_prob must lie in [0, 1]")
        if not (0.0 <= self.silence_prob <= 1.0):
            raise ValueError("silence_prob must lie in [0, 1]")


_MIN_CHARS = 5
_MAX_CHARS = 5


def _sample_vocab(config: SynthConfig, rng: np.random.Generator) -> list[str]:
    letters = "abcdefghijklmnopqrstuvwxyz"
    tokens: list[str] = []
    seen = set()
    while len(tokens) < config.vocab_size:
        n = int(rng.integers(_MIN_CHARS, _MAX_CHARS + 1))
        token = "".join(letters[int(c)] for c in rng.integers(0, 26, size=n))
        if token not in seen:
            seen.add(token)
            tokens.append(token)
    return tokens


def _proto_length(chars: int, config: SynthConfig) -> int:
    # Longer words get proportionally longer prototypes, mirroring the
    # character-count rationale behind the distortion mu allocation.
    lo, hi = config.proto_len_range
    span = _MAX_CHARS - _MIN_CHARS
    frac = 0.0 if span == 0 else (chars - _MIN_CHARS) / span
    return lo + round(frac * (hi - lo))


def synth_generate(config: SynthConfig, seed: int = 0):
    """Sample a corpus with gold links plus the true generating parameters.

    Returns (Corpus, ModelParams).  Gold links mark exactly the frames
    emitted for each word; silence frames are linked to no word.
    """
    from . import model as model_mod  # deferred: model imports corpus types

    rng = np.random.default_rng(seed)
    tokens = _sample_vocab(config, rng)
    prototypes = {
        tok: rng.normal(0.0, 1.0, size=(_proto_length(len(tok), config), config.dim))
        for tok in tokens
    }

    pairs = []
    gold: dict[str, GoldAlignment] = {}
    lo_sent, hi_sent = config.sentence_len_range
    lo_sil, hi_sil = config.silence_len_range
    for n in range(config.n_sentences):
        utt_id = f"synth{n:04d}"
        l = int(rng.integers(lo_sent, hi_sent + 1))
        l = min(l, config.vocab_size)
        # Without replacement: a sentence that repeats a type is ambiguous
        # on purpose (the per-word argmax may assign both words the same
        # span), which would make exact-recovery checks ill-posed.
        word_ids = [int(v) for v in rng.choice(config.vocab_size, size=l, replace=False)]
        words = tuple(tokens[v] for v in word_ids)

        order = list(range(l))
        for i in range(l - 1):
            if rng.random() < config.reorder_prob:
                order[i], order[i + 1] = order[i + 1], order[i]

        chunks: list[np.ndarray] = []
        energies: list[np.ndarray] = []
        spans: dict[int, tuple[int, int]] = {}
        cursor = 0

        def maybe_silence():
            nonlocal cursor
            if rng.random() < config.silence_prob:
                n_sil = int(rng.integers(lo_sil, hi_sil + 1))
                # Silence is low ENERGY, not low feature magnitude: pauses
                # carry loud non-repeating junk (breaths, clicks) so that a
                # span absorbing pause frames pays a real warping cost
                # instead of matching a repeatable near-constant chunk.
                chunks.append(3.0 * rng.standard_normal((n_sil, config.dim)))
                energies.append(rng.uniform(0.0, 0.02, size=n_sil))
                cursor += n_sil

        maybe_silence()
        for text_idx in order:
            proto = prototypes[words[text_idx]]
            chunks.append(proto.copy())
            energies.append(rng.uniform(0.8, 1.2, size=proto.shape[0]))
            spans[text_idx] = (cursor, cursor + proto.shape[0])
            cursor += proto.shape[0]
            maybe_silence()

        frames = np.concatenate(chunks, axis=0)
        if config.noise_std > 0:
            frames = frames + rng.normal(0.0, config.noise_std, size=frames.shape)
        energy = np.concatenate(energies)

        pairs.append(
            SentencePair(
                utt_id=utt_id,
                source=FeatureSequence(frames, config.frame_shift_ms),
                target_words=words,
                char_lengths=tuple(len(w) for w in words),
                energy_track=energy,
            )
        )
        links = frozenset(
            (word, frame) for word, (s, e) in spans.items() for frame in range(s, e)
        )
        gold[utt_id] = GoldAlignment(utt_id, links)

    corpus = Corpus(tuple(pairs), gold)

    inventory = model_mod.ClusterInventory.build(tokens, k=1)
    u = np.full(config.vocab_size, 1.0 / config.vocab_size)
    protos = tuple(
        FeatureSequence(prototypes[inventory.owner[f]], config.frame_shift_ms)
        for f in range(config.vocab_size)
    )
    true_params = model_mod.ModelParams(
        inventory=inventory,
        u=u,
        prototypes=protos,
        distortion=model_mod.DistortionParams(),
        variant="deficient",
    )
    return corpus, true_params
