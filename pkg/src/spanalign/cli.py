"""Command-line front end.

Subcommands: align (train and write alignments), eval (score an
alignment file against gold), grid (lambda sweep on a dev split),
synth (write a synthetic corpus), dtw (cost between two feature files).

Settings come from a flat key-value config file (`key = value`, `#`
comments) and same-named command-line flags; flags win.  Output files
are written atomically.  Alignment rows are 0-indexed with exclusive
ends: utt_id, word_index, word, cluster_id, start_frame, end_frame,
log_score.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (
    Corpus,
    CorpusError,
    FeatureSequence,
    SentencePair,
    SynthConfig,
    atomic_write_text,
    links_to_intervals,
    load_corpus,
    normalize_utterance,
    read_feature_file,
    read_gold_file,
    save_corpus,
    synth_generate,
)
from .dtw import dtw_distance
from .evalkit import score_links
from .model import save_params
from .segmentation import SegmentationConfig
from .trainer import TrainConfig, TrainError, build_tables, final_alignments, train

THREADS_ENV = "SPANALIGN_THREADS"


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Option:
    name: str
    kind: type
    default: object
    help: str


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return int(env)
    return os.cpu_count() or 1


_RUN_OPTIONS = [
    Option("manifest", str, None, "utterance manifest, one utt_id per line"),
    Option("features", str, None, "directory holding <utt_id>.feat files and sidecars"),
    Option("translations", str, None, "translation sentences, one per manifest line"),
    Option("gold", str, None, "gold alignment file (optional)"),
    Option("output", str, None, "output directory"),
    Option("frame_shift_ms", float, 10.0, "frame shift of the features in milliseconds"),
    Option("normalize", bool, True, "normalize each utterance to zero mean, unit variance"),
    Option("p0", float, 0.0, "distortion probability mass on the null span"),
    Option("lambda", float, 0.5, "distortion sharpness"),
    Option("threshold_ratio", float, 0.05, "silence threshold as a ratio of the smoothed peak"),
    Option("min_silence_ms", float, 50.0, "minimum silence duration in milliseconds"),
    Option("smooth_frames", int, 5, "width of the centered median filter over energy"),
    Option("grid_stride", int, 5, "uniform boundary grid stride in frames (0 disables)"),
    Option("span_min_len", int, 3, "minimum candidate span length in frames"),
    Option("span_max_len", int, 150, "maximum candidate span length in frames"),
    Option("iterations", int, 3, "EM iterations"),
    Option("seed", int, 0, "random seed for initialization"),
    Option("k", int, 2, "clusters per word type"),
    Option("dba_iterations", int, 3, "barycenter averaging iterations per M-step"),
    Option("variant", str, "deficient", "span likelihood variant: deficient or proper"),
    Option("lambda_grid", str, "0.1,0.3,0.5,1.0,2.0", "comma-separated lambda grid"),
    Option("dev_manifest", str, None, "manifest naming the dev split (grid only)"),
    Option("test_manifest", str, None, "manifest naming the test split (grid only)"),
    Option("threads", int, None, f"worker threads (default: ${THREADS_ENV} or cpu count)"),
]

_SYNTH_OPTIONS = [
    Option("output", str, None, "output directory"),
    Option("seed", int, 0, "generator seed"),
    Option("vocab_size", int, 20, "word types in the vocabulary"),
    Option("sentences", int, 50, "number of sentences"),
    Option("sentence_len_min", int, 3, "minimum sentence length in words"),
    Option("sentence_len_max", int, 8, "maximum sentence length in words"),
    Option("proto_len_min", int, 8, "minimum prototype length in frames"),
    Option("proto_len_max", int, 8, "maximum prototype length in frames"),
    Option("dim", int, 12, "feature dimensions"),
    Option("noise_std", float, 0.0, "white noise standard deviation"),
    Option("reorder_prob", float, 0.0, "probability of swapping adjacent words"),
    Option("silence_prob", float, 1.0, "probability of a silence at each word junction"),
    Option("silence_len_min", int, 9, "minimum silence length in frames"),
    Option("silence_len_max", int, 14, "maximum silence length in frames"),
    Option("frame_shift_ms", float, 10.0, "frame shift in milliseconds"),
    Option("bounds", bool, True, "write <utt_id>.bounds sidecars with the true word edges"),
]


def _add_options(parser: argparse.ArgumentParser, options: list[Option]) -> None:
    for opt in options:
        flag = "--" + opt.name.replace("_", "-")
        help_text = f"{opt.help} (default: {opt.default})"
        if opt.kind is bool:
            parser.add_argument(
                flag, dest=opt.name, action=argparse.BooleanOptionalAction, default=None, help=help_text
            )
        else:
            parser.add_argument(flag, dest=opt.name, type=opt.kind, default=None, help=help_text)


def _read_config_file(path: str, options: list[Option]) -> dict:
    by_name = {opt.name: opt for opt in options}
    values = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in by_name:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            opt = by_name[key]
            values[key] = _parse_bool(value) if opt.kind is bool else opt.kind(value)
    return values


def _resolve(args: argparse.Namespace, options: list[Option]) -> dict:
    """Defaults, then config file values, then explicit flags."""
    values = {opt.name: opt.default for opt in options}
    if getattr(args, "config", None):
        values.update(_read_config_file(args.config, options))
    for opt in options:
        flag_value = getattr(args, opt.name)
        if flag_value is not None:
            values[opt.name] = flag_value
    if "threads" in values and values["threads"] is None:
        values["threads"] = _default_threads()
    return values


def _require(values: dict, names: list[str], command: str) -> None:
    missing = [n for n in names if not values.get(n)]
    if missing:
        raise ValueError(f"{command}: missing required settings: {', '.join(missing)}")


def _normalized(corpus: Corpus) -> Corpus:
    pairs = tuple(
        SentencePair(
            utt_id=p.utt_id,
            source=normalize_utterance(p.source),
            target_words=p.target_words,
            char_lengths=p.char_lengths,
            energy_track=p.energy_track,
        )
        for p in corpus.pairs
    )
    return Corpus(pairs, corpus.gold)


def _train_config(values: dict, lam: float | None = None) -> TrainConfig:
    grid = tuple(float(v) for v in str(values["lambda_grid"]).split(",") if v.strip())
    return TrainConfig(
        iterations=values["iterations"],
        seed=values["seed"],
        k=values["k"],
        dba_iterations=values["dba_iterations"],
        variant=values["variant"],
        lambda_grid=grid,
        p0=values["p0"],
        lam=values["lambda"] if lam is None else lam,
    )


def _seg_config(values: dict) -> SegmentationConfig:
    return SegmentationConfig(
        threshold_ratio=values["threshold_ratio"],
        min_silence_ms=values["min_silence_ms"],
        smooth_frames=values["smooth_frames"],
        grid_stride=values["grid_stride"],
        span_min_len=values["span_min_len"],
        span_max_len=values["span_max_len"],
        boundary_dir=Path(values["features"]),
    )


def _alignment_rows(corpus: Corpus, alignments: dict) -> str:
    lines = []
    for pair in corpus:
        alignment = alignments[pair.utt_id]
        for w_idx, entry in enumerate(alignment.words):
            cluster = "-" if entry.cluster_id is None else str(entry.cluster_id)
            lines.append(
                f"{pair.utt_id}\t{w_idx}\t{pair.target_words[w_idx]}\t{cluster}"
                f"\t{entry.a - 1}\t{entry.b}\t{entry.log_score!r}"
            )
    return "\n".join(lines) + "\n"


def _run_training(corpus: Corpus, values: dict, lam: float | None = None):
    seg = _seg_config(values)
    tables = build_tables(corpus, seg)
    state = train(
        corpus,
        _train_config(values, lam=lam),
        seg_config=seg,
        threads=values["threads"],
        checkpoint_dir=values.get("_checkpoint_dir"),
        tables=tables,
    )
    alignments = final_alignments(corpus, state, tables[0], tables[1])
    return state, alignments


def cmd_align(args: argparse.Namespace) -> int:
    values = _resolve(args, _RUN_OPTIONS)
    _require(values, ["manifest", "features", "translations", "output"], "align")
    corpus = load_corpus(
        values["manifest"],
        values["features"],
        values["translations"],
        values["gold"],
        frame_shift_ms=values["frame_shift_ms"],
    )
    if values["normalize"]:
        corpus = _normalized(corpus)
    out_dir = Path(values["output"])
    out_dir.mkdir(parents=True, exist_ok=True)
    values["_checkpoint_dir"] = out_dir

    state, alignments = _run_training(corpus, values)
    atomic_write_text(out_dir / "alignments.tsv", _alignment_rows(corpus, alignments))
    save_params(state.params, out_dir / "checkpoint.json")

    log_lines = [
        f"# variant = {state.params.variant}",
        f"# seed = {values['seed']}",
        f"# lambda = {values['lambda']}",
        "iteration\ttotal_log_score\tseconds",
    ]
    for stat in state.iteration_log:
        log_lines.append(f"{stat.iteration}\t{stat.total_log_score!r}\t{stat.seconds:.3f}")
    atomic_write_text(out_dir / "iteration_log.tsv", "\n".join(log_lines) + "\n")
    print(f"wrote {out_dir / 'alignments.tsv'}")
    return 0


def _read_alignment_file(path: str):
    links = set()
    names = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 7:
                raise CorpusError(f"{path}:{lineno}: expected 7 tab-separated fields")
            utt_id, w_idx, word = parts[0], int(parts[1]), parts[2]
            start, end = int(parts[4]), int(parts[5])
            if start < 0 or end <= start:
                raise CorpusError(f"{path}:{lineno}: invalid frame interval [{start}, {end})")
            names[(utt_id, w_idx)] = word
            links.update((utt_id, w_idx, j) for j in range(start, end))
    return links, names


def _file_report(pred_path: str, gold_path: str):
    pred_links, names = _read_alignment_file(pred_path)
    gold = read_gold_file(gold_path)
    gold_links = {(u, w, j) for u, ga in gold.items() for w, j in ga.links}

    precision, recall, f_score = score_links(pred_links, gold_links)
    utt_ids = sorted({u for u, _, _ in pred_links} | set(gold))
    per_utt = {}
    for utt_id in utt_ids:
        p_links = {t for t in pred_links if t[0] == utt_id}
        g_links = {t for t in gold_links if t[0] == utt_id}
        per_utt[utt_id] = score_links(p_links, g_links)

    by_type_pred: dict[str, set] = {}
    by_type_gold: dict[str, set] = {}
    for u, w, j in pred_links:
        by_type_pred.setdefault(names[(u, w)], set()).add((u, w, j))
    for u, w, j in gold_links:
        word = names.get((u, w), "<unnamed>")
        by_type_gold.setdefault(word, set()).add((u, w, j))
    per_type = {
        word: score_links(by_type_pred.get(word, set()), by_type_gold.get(word, set()))
        for word in sorted(set(by_type_pred) | set(by_type_gold))
    }
    return (precision, recall, f_score), per_utt, per_type


def cmd_eval(args: argparse.Namespace) -> int:
    (precision, recall, f_score), per_utt, per_type = _file_report(args.predicted, args.gold)
    print(f"precision\t{precision:.6f}")
    print(f"recall\t{recall:.6f}")
    print(f"f_score\t{f_score:.6f}")
    if args.output:
        out_dir = Path(args.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        text = [
            f"precision\t{precision:.6f}",
            f"recall\t{recall:.6f}",
            f"f_score\t{f_score:.6f}",
            "",
            "utt_id\tprecision\trecall\tf_score",
        ]
        text += [f"{u}\t{p:.6f}\t{r:.6f}\t{f:.6f}" for u, (p, r, f) in per_utt.items()]
        atomic_write_text(out_dir / "report.txt", "\n".join(text) + "\n")
        rows = ["scope\tname\tprecision\trecall\tf_score"]
        rows.append(f"corpus\t-\t{precision!r}\t{recall!r}\t{f_score!r}")
        rows += [f"utterance\t{u}\t{p!r}\t{r!r}\t{f!r}" for u, (p, r, f) in per_utt.items()]
        rows += [f"word_type\t{w}\t{p!r}\t{r!r}\t{f!r}" for w, (p, r, f) in per_type.items()]
        atomic_write_text(out_dir / "report.tsv", "\n".join(rows) + "\n")
    return 0


def _read_manifest_ids(path: str) -> list[str]:
    with open(path, encoding="utf-8") as handle:
        ids = [ln.strip() for ln in handle.read().splitlines() if ln.strip()]
    if not ids:
        raise CorpusError(f"{path}: empty manifest")
    return ids


def _subset_f(corpus: Corpus, alignments: dict, utt_ids: list[str]) -> float:
    from .evalkit import alignment_to_links

    pred = set()
    gold = set()
    by_id = {p.utt_id: p for p in corpus.pairs}
    for utt_id in utt_ids:
        pair = by_id[utt_id]
        pred.update((utt_id, w, j) for w, j in alignment_to_links(alignments[utt_id], pair))
        if corpus.gold and utt_id in corpus.gold:
            gold.update((utt_id, w, j) for w, j in corpus.gold[utt_id].links)
    return score_links(pred, gold)[2]


def cmd_grid(args: argparse.Namespace) -> int:
    values = _resolve(args, _RUN_OPTIONS)
    _require(
        values,
        ["manifest", "features", "translations", "gold", "output", "dev_manifest", "test_manifest"],
        "grid",
    )
    corpus = load_corpus(
        values["manifest"],
        values["features"],
        values["translations"],
        values["gold"],
        frame_shift_ms=values["frame_shift_ms"],
    )
    if values["normalize"]:
        corpus = _normalized(corpus)
    dev_ids = _read_manifest_ids(values["dev_manifest"])
    test_ids = _read_manifest_ids(values["test_manifest"])
    known = {p.utt_id for p in corpus.pairs}
    for utt_id in dev_ids + test_ids:
        if utt_id not in known:
            raise CorpusError(f"split utterance {utt_id!r} not in the corpus")

    grid = tuple(float(v) for v in str(values["lambda_grid"]).split(",") if v.strip())
    out_dir = Path(values["output"])
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = ["lambda\tdev_f"]
    best = None
    for lam in grid:
        _, alignments = _run_training(corpus, values, lam=lam)
        dev_f = _subset_f(corpus, alignments, dev_ids)
        rows.append(f"{lam!r}\t{dev_f!r}")
        print(f"lambda {lam}: dev f_score {dev_f:.6f}")
        if best is None or dev_f > best[1]:
            best = (lam, dev_f, alignments)

    lam, dev_f, alignments = best
    test_f = _subset_f(corpus, alignments, test_ids)
    rows.append(f"selected\t{lam!r}")
    rows.append(f"test_f\t{test_f!r}")
    atomic_write_text(out_dir / "grid_report.tsv", "\n".join(rows) + "\n")
    print(f"selected lambda {lam}: test f_score {test_f:.6f}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    values = _resolve(args, _SYNTH_OPTIONS)
    _require(values, ["output"], "synth")
    config = SynthConfig(
        vocab_size=values["vocab_size"],
        n_sentences=values["sentences"],
        sentence_len_range=(values["sentence_len_min"], values["sentence_len_max"]),
        proto_len_range=(values["proto_len_min"], values["proto_len_max"]),
        dim=values["dim"],
        noise_std=values["noise_std"],
        reorder_prob=values["reorder_prob"],
        silence_prob=values["silence_prob"],
        silence_len_range=(values["silence_len_min"], values["silence_len_max"]),
        frame_shift_ms=values["frame_shift_ms"],
    )
    corpus, true_params = synth_generate(config, seed=values["seed"])
    out_dir = Path(values["output"])
    save_corpus(corpus, out_dir)
    save_params(true_params, out_dir / "true_params.json")
    if values["bounds"]:
        for pair in corpus:
            intervals = links_to_intervals(corpus.gold[pair.utt_id].links)
            points = sorted({p for _, s, e in intervals for p in (s + 1, e)})
            atomic_write_text(
                out_dir / f"{pair.utt_id}.bounds", "\n".join(str(p) for p in points) + "\n"
            )
    print(f"wrote {len(corpus)} utterances to {out_dir}")
    return 0


def cmd_dtw(args: argparse.Namespace) -> int:
    x = read_feature_file(args.file_a)
    y = read_feature_file(args.file_b)
    result = dtw_distance(x, y)
    print(repr(result.normalized_cost))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spanalign",
        description="Unsupervised alignment of speech feature spans to translation words.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_align = sub.add_parser("align", help="train on a corpus and write alignments")
    p_align.add_argument("--config", help="flat key-value config file; flags override it")
    _add_options(p_align, _RUN_OPTIONS)
    p_align.set_defaults(func=cmd_align)

    p_eval = sub.add_parser("eval", help="score an alignment file against gold links")
    p_eval.add_argument("predicted", help="alignment TSV written by the align command")
    p_eval.add_argument("gold", help="gold alignment file")
    p_eval.add_argument("--output", default=None, help="directory for report files")
    p_eval.set_defaults(func=cmd_eval)

    p_grid = sub.add_parser("grid", help="sweep lambda, select on dev, report test")
    p_grid.add_argument("--config", help="flat key-value config file; flags override it")
    _add_options(p_grid, _RUN_OPTIONS)
    p_grid.set_defaults(func=cmd_grid)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus with gold links")
    p_synth.add_argument("--config", help="flat key-value config file; flags override it")
    _add_options(p_synth, _SYNTH_OPTIONS)
    p_synth.set_defaults(func=cmd_synth)

    p_dtw = sub.add_parser("dtw", help="print the normalized DTW cost of two feature files")
    p_dtw.add_argument("file_a")
    p_dtw.add_argument("file_b")
    p_dtw.set_defaults(func=cmd_dtw)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, TrainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
