"""Frame-level alignment evaluation against gold links.

Links are (word_index, frame_index) pairs, both 0-indexed; spans inside
the package are 1-indexed inclusive, so conversion happens here.  All
corpus-level figures are micro-averages over links pooled across
utterances.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Corpus, GoldAlignment, SentencePair
from .distortion import allocate_mu
from .model import Alignment, WordAlignment

Link = tuple[int, int]


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f_score: float
    per_utterance: dict[str, tuple[float, float, float]]
    per_word_type: dict[str, tuple[float, float, float]]


def alignment_to_links(alignment: Alignment, pair: SentencePair) -> set[Link]:
    """Expand inclusive 1-indexed spans into 0-indexed (word, frame) links."""
    links = set()
    for w_idx, entry in enumerate(alignment.words):
        if not (1 <= entry.a <= entry.b <= pair.m):
            raise ValueError(
                f"{alignment.utt_id}: span ({entry.a}, {entry.b}) outside [1, {pair.m}]"
            )
        links.update((w_idx, j - 1) for j in range(entry.a, entry.b + 1))
    return links


def score_links(predicted: set, gold: set) -> tuple[float, float, float]:
    """Precision, recall, F over link sets.

    An empty side scores 1.0 against an empty counterpart and 0.0
    otherwise; F is the harmonic mean, 0 when both P and R vanish.
    """
    hits = len(predicted & gold)
    if predicted:
        precision = hits / len(predicted)
    else:
        precision = 1.0 if not gold else 0.0
    if gold:
        recall = hits / len(gold)
    else:
        recall = 1.0 if not predicted else 0.0
    f_score = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f_score


def evaluate(
    alignments: dict[str, Alignment],
    gold: dict[str, GoldAlignment],
    corpus: Corpus,
) -> EvalReport:
    """Micro-averaged report with per-utterance and per-word-type breakdowns."""
    pooled_pred = set()
    pooled_gold = set()
    per_utterance = {}
    type_pred: dict[str, set] = {}
    type_gold: dict[str, set] = {}

    for pair in corpus:
        pred_links = (
            alignment_to_links(alignments[pair.utt_id], pair)
            if pair.utt_id in alignments
            else set()
        )
        gold_links = set(gold[pair.utt_id].links) if pair.utt_id in gold else set()
        per_utterance[pair.utt_id] = score_links(pred_links, gold_links)
        pooled_pred.update((pair.utt_id, w, j) for w, j in pred_links)
        pooled_gold.update((pair.utt_id, w, j) for w, j in gold_links)
        for w, j in pred_links:
            type_pred.setdefault(pair.target_words[w], set()).add((pair.utt_id, w, j))
        for w, j in gold_links:
            if w < pair.l:
                type_gold.setdefault(pair.target_words[w], set()).add((pair.utt_id, w, j))

    precision, recall, f_score = score_links(pooled_pred, pooled_gold)
    per_word_type = {
        word: score_links(type_pred.get(word, set()), type_gold.get(word, set()))
        for word in sorted(set(type_pred) | set(type_gold))
    }
    return EvalReport(precision, recall, f_score, per_utterance, per_word_type)


def naive_baseline(pair: SentencePair) -> Alignment:
    """Monotone partition of the utterance into mu-proportional spans."""
    mu = allocate_mu(pair.char_lengths, pair.m).mu
    words = []
    start = 1
    for width in mu:
        words.append(WordAlignment(cluster_id=None, a=start, b=start + width - 1, log_score=0.0))
        start += width
    return Alignment(pair.utt_id, tuple(words))


def format_report(report: EvalReport) -> str:
    """Structured text dump: corpus figures then a per-utterance table."""
    lines = [
        f"precision\t{report.precision:.6f}",
        f"recall\t{report.recall:.6f}",
        f"f_score\t{report.f_score:.6f}",
        "",
        "utt_id\tprecision\trecall\tf_score",
    ]
    for utt_id, (p, r, f) in report.per_utterance.items():
        lines.append(f"{utt_id}\t{p:.6f}\t{r:.6f}\t{f:.6f}")
    return "\n".join(lines) + "\n"


def report_rows(report: EvalReport) -> str:
    """Machine-readable TSV: corpus row, then utterance and word-type rows."""
    lines = ["scope\tname\tprecision\trecall\tf_score"]
    lines.append(
        f"corpus\t-\t{report.precision!r}\t{report.recall!r}\t{report.f_score!r}"
    )
    for utt_id, (p, r, f) in report.per_utterance.items():
        lines.append(f"utterance\t{utt_id}\t{p!r}\t{r!r}\t{f!r}")
    for word, (p, r, f) in report.per_word_type.items():
        lines.append(f"word_type\t{word}\t{p!r}\t{r!r}\t{f!r}")
    return "\n".join(lines) + "\n"
