import numpy as np
import pytest

from spanalign.corpus import Corpus, FeatureSequence, GoldAlignment, SentencePair
from spanalign.evalkit import (
    alignment_to_links,
    evaluate,
    format_report,
    naive_baseline,
    report_rows,
    score_links,
)
from spanalign.model import Alignment, WordAlignment


def _pair(utt_id, words, m):
    rng = np.random.default_rng(abs(hash(utt_id)) % 2**32)
    return SentencePair(
        utt_id,
        FeatureSequence(rng.standard_normal((m, 2))),
        tuple(words),
        tuple(len(w) for w in words),
    )


def _alignment(utt_id, spans):
    return Alignment(
        utt_id,
        tuple(WordAlignment(cluster_id=0, a=a, b=b, log_score=0.0) for a, b in spans),
    )


def test_alignment_to_links_expands_inclusive_spans():
    pair = _pair("u", ["ab", "cd"], m=6)
    links = alignment_to_links(_alignment("u", [(1, 3), (5, 5)]), pair)
    assert links == {(0, 0), (0, 1), (0, 2), (1, 4)}


def test_alignment_to_links_rejects_out_of_range():
    pair = _pair("u", ["ab"], m=4)
    with pytest.raises(ValueError, match="outside"):
        alignment_to_links(_alignment("u", [(2, 5)]), pair)


def test_score_links_hand_example():
    p, r, f = score_links({1, 2, 3}, {2, 3, 4})
    assert p == pytest.approx(2 / 3)
    assert r == pytest.approx(2 / 3)
    assert f == pytest.approx(2 / 3)


def test_score_links_empty_conventions():
    assert score_links(set(), set()) == (1.0, 1.0, 1.0)
    assert score_links(set(), {1}) == (0.0, 0.0, 0.0)
    assert score_links({1}, set()) == (0.0, 0.0, 0.0)
    assert score_links({1}, {1}) == (1.0, 1.0, 1.0)


def test_evaluate_pools_links_across_utterances():
    pairs = (_pair("u1", ["aa"], m=4), _pair("u2", ["aa"], m=4))
    gold = {
        "u1": GoldAlignment("u1", frozenset({(0, 0)})),
        "u2": GoldAlignment("u2", frozenset({(0, 0), (0, 1)})),
    }
    corpus = Corpus(pairs, gold)
    alignments = {
        "u1": _alignment("u1", [(1, 2)]),
        "u2": _alignment("u2", [(1, 1)]),
    }
    report = evaluate(alignments, gold, corpus)

    # Pooled: 3 predicted links, 3 gold links, 2 hits.
    assert report.precision == pytest.approx(2 / 3)
    assert report.recall == pytest.approx(2 / 3)
    assert report.f_score == pytest.approx(2 / 3)
    assert report.per_utterance["u1"] == pytest.approx((0.5, 1.0, 2 / 3))
    assert report.per_utterance["u2"] == pytest.approx((1.0, 0.5, 2 / 3))
    # Both utterances use the same word type, so its row equals the pool.
    assert report.per_word_type["aa"] == pytest.approx((2 / 3, 2 / 3, 2 / 3))


def test_evaluate_missing_prediction_counts_as_empty():
    pair = _pair("u1", ["aa"], m=3)
    gold = {"u1": GoldAlignment("u1", frozenset({(0, 0)}))}
    report = evaluate({}, gold, Corpus((pair,), gold))
    assert report.precision == 0.0
    assert report.recall == 0.0


def test_evaluate_word_type_rows_split_by_token():
    pair = _pair("u1", ["aa", "bb"], m=4)
    gold = {"u1": GoldAlignment("u1", frozenset({(0, 0), (1, 2), (1, 3)}))}
    alignments = {"u1": _alignment("u1", [(1, 1), (3, 3)])}
    report = evaluate(alignments, gold, Corpus((pair,), gold))
    assert report.per_word_type["aa"] == pytest.approx((1.0, 1.0, 1.0))
    assert report.per_word_type["bb"] == pytest.approx((1.0, 0.5, 2 / 3))


def test_naive_baseline_tiles_the_utterance():
    pair = _pair("u", ["ab", "cdef", "gh"], m=8)
    alignment = naive_baseline(pair)
    spans = [(w.a, w.b) for w in alignment.words]
    assert spans == [(1, 2), (3, 6), (7, 8)]
    assert all(w.cluster_id is None for w in alignment.words)


def test_naive_baseline_covers_every_frame_once():
    pair = _pair("u", ["a", "bb", "ccc"], m=11)
    spans = [(w.a, w.b) for w in naive_baseline(pair).words]
    frames = [j for a, b in spans for j in range(a, b + 1)]
    assert frames == list(range(1, 12))


def test_format_report_layout():
    pair = _pair("u1", ["aa"], m=2)
    gold = {"u1": GoldAlignment("u1", frozenset({(0, 0), (0, 1)}))}
    report = evaluate({"u1": _alignment("u1", [(1, 2)])}, gold, Corpus((pair,), gold))
    text = format_report(report)
    lines = text.splitlines()
    assert lines[0] == "precision\t1.000000"
    assert lines[4] == "utt_id\tprecision\trecall\tf_score"
    assert lines[5] == "u1\t1.000000\t1.000000\t1.000000"


def test_report_rows_round_trips_floats():
    pair = _pair("u1", ["aa"], m=3)
    gold = {"u1": GoldAlignment("u1", frozenset({(0, 0), (0, 2)}))}
    report = evaluate({"u1": _alignment("u1", [(1, 2)])}, gold, Corpus((pair,), gold))
    rows = report_rows(report).splitlines()
    assert rows[0] == "scope\tname\tprecision\trecall\tf_score"
    corpus_row = rows[1].split("\t")
    assert corpus_row[:2] == ["corpus", "-"]
    # repr-formatted floats must parse back to the exact value
    assert float(corpus_row[2]) == report.precision
    assert float(corpus_row[4]) == report.f_score
    scopes = {row.split("\t")[0] for row in rows[1:]}
    assert scopes == {"corpus", "utterance", "word_type"}
