import numpy as np
import pytest

from spanalign.corpus import (
    Corpus,
    CorpusError,
    FeatureSequence,
    GoldAlignment,
    SentencePair,
    SynthConfig,
    atomic_write_text,
    links_to_intervals,
    load_corpus,
    normalize_utterance,
    read_energy_file,
    read_feature_file,
    read_gold_file,
    save_corpus,
    synth_generate,
    write_energy_file,
    write_feature_file,
    write_gold_file,
)


def make_pair(utt_id="u1", m=6, words=("ab", "cde")):
    frames = np.arange(m * 2, dtype=np.float64).reshape(m, 2)
    return SentencePair(
        utt_id=utt_id,
        source=FeatureSequence(frames),
        target_words=tuple(words),
        char_lengths=tuple(len(w) for w in words),
    )


def test_feature_sequence_segment_is_1_indexed_inclusive():
    seq = FeatureSequence(np.arange(10, dtype=np.float64).reshape(5, 2))
    seg = seq.segment(2, 4)
    np.testing.assert_array_equal(seg.frames, seq.frames[1:4])


def test_feature_sequence_readonly():
    seq = FeatureSequence(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        seq.frames[0, 0] = 1.0


def test_feature_file_round_trip(tmp_path):
    path = tmp_path / "a.feat"
    seq = FeatureSequence(np.random.default_rng(0).normal(size=(4, 3)))
    write_feature_file(path, seq)
    back = read_feature_file(path)
    np.testing.assert_array_equal(back.frames, seq.frames)


def test_feature_file_bad_row_reports_line(tmp_path):
    path = tmp_path / "bad.feat"
    path.write_text("2 2\n0 0\n0 x\n", encoding="utf-8")
    with pytest.raises(CorpusError, match=r"bad\.feat:3"):
        read_feature_file(path)


def test_feature_file_row_count_mismatch(tmp_path):
    path = tmp_path / "short.feat"
    path.write_text("3 1\n0\n1\n", encoding="utf-8")
    with pytest.raises(CorpusError):
        read_feature_file(path)


def test_energy_file_round_trip(tmp_path):
    path = tmp_path / "a.energy"
    e = np.asarray([0.5, 1.25, 0.0])
    write_energy_file(path, e)
    np.testing.assert_array_equal(read_energy_file(path, 3), e)
    with pytest.raises(CorpusError):
        read_energy_file(path, 4)


def test_atomic_write_replaces_content(tmp_path):
    path = tmp_path / "f.txt"
    atomic_write_text(path, "one\n")
    atomic_write_text(path, "two\n")
    assert path.read_text(encoding="utf-8") == "two\n"
    assert list(tmp_path.iterdir()) == [path]


def test_links_to_intervals_groups_runs():
    links = [(0, 0), (0, 1), (0, 2), (1, 5), (1, 7)]
    assert links_to_intervals(links) == [(0, 0, 3), (1, 5, 6), (1, 7, 8)]


def test_gold_file_round_trip(tmp_path):
    path = tmp_path / "gold.tsv"
    gold = {
        "u1": GoldAlignment("u1", frozenset({(0, 0), (0, 1), (1, 4)})),
        "u2": GoldAlignment("u2", frozenset({(0, 2)})),
    }
    write_gold_file(path, gold)
    back = read_gold_file(path)
    assert back.keys() == gold.keys()
    for k in gold:
        assert back[k].links == gold[k].links


def test_duplicate_utterance_rejected():
    with pytest.raises(CorpusError, match="duplicate"):
        Corpus(pairs=(make_pair("x"), make_pair("x")))


def test_gold_out_of_range_rejected():
    pair = make_pair("u1", m=4)
    gold = {"u1": GoldAlignment("u1", frozenset({(0, 9)}))}
    with pytest.raises(CorpusError, match="out of range"):
        Corpus(pairs=(pair,), gold=gold)


def test_char_lengths_must_match_tokens():
    with pytest.raises(CorpusError):
        SentencePair(
            utt_id="u",
            source=FeatureSequence(np.zeros((2, 1))),
            target_words=("ab",),
            char_lengths=(3,),
        )


def test_energy_track_length_checked():
    with pytest.raises(CorpusError):
        SentencePair(
            utt_id="u",
            source=FeatureSequence(np.zeros((2, 1))),
            target_words=("ab",),
            char_lengths=(2,),
            energy_track=np.ones(5),
        )


def test_normalize_utterance_zero_mean_unit_variance():
    seq = FeatureSequence(np.random.default_rng(1).normal(3.0, 2.5, size=(40, 4)))
    norm = normalize_utterance(seq)
    assert np.abs(norm.frames.mean(axis=0)).max() < 1e-9
    assert np.abs(norm.frames.var(axis=0) - 1.0).max() < 1e-6


def test_normalize_constant_dimension_centered_only():
    frames = np.zeros((5, 2))
    frames[:, 0] = 7.0
    frames[:, 1] = np.arange(5)
    norm = normalize_utterance(FeatureSequence(frames))
    np.testing.assert_allclose(norm.frames[:, 0], 0.0)
    assert norm.frames[:, 1].var() == pytest.approx(1.0)


def test_corpus_save_load_round_trip(tmp_path):
    corpus, _ = synth_generate(SynthConfig(vocab_size=4, n_sentences=3), seed=1)
    save_corpus(corpus, tmp_path)
    back = load_corpus(
        tmp_path / "manifest.txt",
        tmp_path,
        tmp_path / "translations.txt",
        gold_path=tmp_path / "gold.tsv",
    )
    assert len(back) == len(corpus)
    for a, b in zip(corpus.pairs, back.pairs):
        assert a.utt_id == b.utt_id
        assert a.target_words == b.target_words
        np.testing.assert_array_equal(a.source.frames, b.source.frames)
        np.testing.assert_array_equal(a.energy_track, b.energy_track)
    for utt_id, ga in corpus.gold.items():
        assert back.gold[utt_id].links == ga.links


def test_synth_same_seed_bit_identical():
    cfg = SynthConfig(vocab_size=5, n_sentences=4)
    c1, p1 = synth_generate(cfg, seed=9)
    c2, p2 = synth_generate(cfg, seed=9)
    for a, b in zip(c1.pairs, c2.pairs):
        np.testing.assert_array_equal(a.source.frames, b.source.frames)
        assert a.target_words == b.target_words
    for f in range(len(p1.prototypes)):
        np.testing.assert_array_equal(p1.prototypes[f].frames, p2.prototypes[f].frames)


def test_synth_gold_tiles_frames_without_silence():
    cfg = SynthConfig(vocab_size=3, n_sentences=5, silence_prob=0.0)
    corpus, _ = synth_generate(cfg, seed=2)
    for pair in corpus.pairs:
        covered = sorted(j for (_, j) in corpus.gold[pair.utt_id].links)
        assert covered == list(range(pair.m))


def test_synth_gold_spans_in_bounds_and_disjoint():
    corpus, _ = synth_generate(SynthConfig(vocab_size=6, n_sentences=6), seed=3)
    for pair in corpus.pairs:
        per_word = {}
        seen_frames = set()
        for (w, j) in corpus.gold[pair.utt_id].links:
            assert 0 <= j < pair.m
            per_word.setdefault(w, []).append(j)
            assert j not in seen_frames
            seen_frames.add(j)
        for js in per_word.values():
            js.sort()
            assert js == list(range(js[0], js[-1] + 1))


def test_synth_true_params_reference_all_words():
    corpus, params = synth_generate(SynthConfig(vocab_size=4, n_sentences=4), seed=5)
    for pair in corpus.pairs:
        for word in pair.target_words:
            assert word in params.inventory.clusters


def test_synth_rejects_degenerate_config():
    with pytest.raises(ValueError):
        SynthConfig(vocab_size=0, n_sentences=3)
    with pytest.raises(ValueError):
        SynthConfig(vocab_size=3, n_sentences=3, proto_len_range=(0, 4))


def test_load_corpus_missing_feature_file(tmp_path):
    (tmp_path / "manifest.txt").write_text("u1\n", encoding="utf-8")
    (tmp_path / "translations.txt").write_text("hello world\n", encoding="utf-8")
    with pytest.raises((CorpusError, OSError)):
        load_corpus(tmp_path / "manifest.txt", tmp_path, tmp_path / "translations.txt")


def test_load_corpus_translation_count_mismatch(tmp_path):
    (tmp_path / "manifest.txt").write_text("u1\nu2\n", encoding="utf-8")
    (tmp_path / "translations.txt").write_text("only one line\n", encoding="utf-8")
    with pytest.raises(CorpusError):
        load_corpus(tmp_path / "manifest.txt", tmp_path, tmp_path / "translations.txt")
