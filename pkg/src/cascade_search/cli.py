"""Command-line entry point: decode, evaluate, sweep, emit-plot-data, make-toy.

Exit codes: 0 on success, 1 on usage errors, 2 on bad input data.
``CASCADE_SEED`` is reserved for future sampling decoders and is ignored:
every algorithm here is deterministic.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .decoders import DECODERS, DecodeConfig, DecodeError
from .distributor import ConstraintState, LevelAction
from .harness import (
    SWEEP_COLUMNS,
    DataError,
    SweepSpec,
    Task,
    decode_tasks,
    emit_plot_data,
    load_tasks,
    plot_data_csv,
    read_csv_rows,
    result_record,
    rows_to_csv,
    run_sweep,
    save_tasks,
    score_corpus,
)
from .logit_mod import DEFAULT_ALPHA, GuidanceConfig
from .metrics import IDENTITY, Lemmatizer, MetricError
from .scorer import ScorerError, load_scorer, save_scorer
from .synthetic import toy_corpus, toy_scorer
from .term_trie import PushStrategy, TrieError
from .vocab import TokenInfo, Vocabulary, VocabError

log = logging.getLogger("cascade_search")

EVAL_COLUMNS = ("decoder", "alpha", "k", "EMA", "LMA", "BLEU", "avg_steps")
DATA_ERRORS = (DataError, VocabError, ScorerError, MetricError, TrieError, DecodeError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _int_list(s: str) -> list[int]:
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _str_list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _decoding_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-len", type=int, default=64, help="length limit, counting BOS and EOS")
    p.add_argument("--length-norm", action="store_true", help="rank finals by score per token")
    p.add_argument("--ignore-case", action="store_true")


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tasks", required=True, help="task JSONL")
    p.add_argument("--vocab", required=True, help="vocabulary JSON")
    p.add_argument("--model", required=True, help="table model JSON (single or per task)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cascade-search", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("decode", help="decode tasks to JSONL records")
    _model_args(d)
    d.add_argument("--decoder", choices=DECODERS, default="cascaded")
    d.add_argument("--beams", "-k", type=int, default=5, help="beams per bank")
    d.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    d.add_argument("--strategy", choices=[s.value for s in PushStrategy], default="none")
    d.add_argument("--trace-distributor", action="store_true",
                   help="log every distributor decision to stderr")
    d.add_argument("--out", "-o", help="output JSONL (default stdout)")
    _decoding_args(d)

    e = sub.add_parser("evaluate", help="score decoded JSONL against tasks")
    e.add_argument("--hyps", required=True, help="JSONL from `decode`")
    e.add_argument("--tasks", required=True)
    e.add_argument("--lemmas", help="JSON object mapping word forms to lemmas")
    e.add_argument("--ignore-case", action="store_true")
    e.add_argument("--smooth-bleu", action="store_true")
    e.add_argument("--no-header", action="store_true")

    s = sub.add_parser("sweep", help="grid of decoder x strategy x alpha x k")
    _model_args(s)
    s.add_argument("--alphas", type=_float_list, default=[0.0, 0.1, 0.2, 0.5, 1.0])
    s.add_argument("--ks", type=_int_list, default=[1, 5])
    s.add_argument("--strategies", type=_str_list, default=["longest"])
    s.add_argument("--decoders", type=_str_list, default=["cascaded"])
    s.add_argument("--max-len", type=int, default=32)
    s.add_argument("--max-cells", type=int, default=500)
    s.add_argument("--lemmas")
    s.add_argument("--smooth-bleu", action="store_true")
    s.add_argument("--out", "-o")

    pd = sub.add_parser("emit-plot-data", help="long-format (series, x, y) from a sweep CSV")
    pd.add_argument("sweep_csv")
    pd.add_argument("--x", default="alpha")
    pd.add_argument("--y", default="EMA")
    pd.add_argument("--group-by", type=_str_list, default=[])
    pd.add_argument("--out", "-o")

    t = sub.add_parser("make-toy", help="write a synthetic corpus, vocabulary and model")
    t.add_argument("out_dir")
    t.add_argument("--n", type=int, default=100)
    t.add_argument("--seed", type=int, default=0)
    return parser


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_lemmas(path: str | None) -> Lemmatizer:
    if not path:
        return IDENTITY
    try:
        table = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON ({exc.msg})") from None
    if not isinstance(table, dict):
        raise DataError(f"{path}: lemma table must be a JSON object")
    return Lemmatizer(table)


def _trace(state: ConstraintState, token: TokenInfo, action: LevelAction) -> None:
    log.info(
        "distributor: level %d %r -> case %d %s -> level %d",
        state.level, token.text, action.case, action.move.name, action.new_state.level,
    )


def cmd_decode(args) -> None:
    if args.beams < 1:
        raise UsageError("--beams must be >= 1")
    if args.alpha < 0:
        raise UsageError("--alpha must be >= 0")
    if args.max_len < 2:
        raise UsageError("--max-len must be >= 2")
    tasks = load_tasks(args.tasks)
    vocab, scorer = Vocabulary.load(args.vocab), load_scorer(args.model)
    config = DecodeConfig(
        k=args.beams,
        max_len=args.max_len,
        guidance=GuidanceConfig(args.alpha, args.strategy),
        length_normalization=args.length_norm,
        ignore_case=args.ignore_case,
    )
    trace = _trace if args.trace_distributor else None
    if trace:
        log.setLevel(logging.INFO)
    results = decode_tasks(tasks, scorer, vocab, args.decoder, config, trace=trace)
    meta = {"decoder": args.decoder, "strategy": args.strategy, "alpha": args.alpha, "k": args.beams}
    lines = [json.dumps(result_record(t, r, vocab, **meta)) for t, r in zip(tasks, results)]
    _write("".join(line + "\n" for line in lines), args.out)


def _read_hyps(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "id" not in rec or "hypothesis_text" not in rec:
                raise DataError(f"{path}:{lineno}: record needs 'id' and 'hypothesis_text'")
            records.append(rec)
    return records


def _align(records: list[dict], tasks: Sequence[Task]) -> list[str]:
    by_id = {str(r["id"]): r for r in records}
    missing = [t.id for t in tasks if t.id not in by_id]
    if missing:
        raise DataError(f"no hypothesis for task(s): {', '.join(missing[:5])}")
    return [str(by_id[t.id]["hypothesis_text"]) for t in tasks]


def cmd_evaluate(args) -> None:
    tasks = load_tasks(args.tasks)
    records = _read_hyps(args.hyps)
    scores = score_corpus(
        _align(records, tasks), tasks, _load_lemmas(args.lemmas), args.ignore_case, args.smooth_bleu
    )
    first = records[0] if records else {}
    steps = [r.get("stats", {}).get("steps", 0) for r in records]
    row = {
        "decoder": first.get("decoder", ""),
        "alpha": first.get("alpha", ""),
        "k": first.get("k", ""),
        "EMA": scores.ema,
        "LMA": scores.lma,
        "BLEU": scores.bleu,
        "avg_steps": sum(steps) / len(steps) if steps else 0.0,
    }
    text = rows_to_csv([row], EVAL_COLUMNS)
    if args.no_header:
        text = text.split("\n", 1)[1]
    _write(text, None)


def cmd_sweep(args) -> None:
    try:
        spec = SweepSpec(
            tuple(args.alphas), tuple(args.ks), tuple(args.strategies), tuple(args.decoders),
            max_len=args.max_len, max_cells=args.max_cells, smooth_bleu=args.smooth_bleu,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tasks = load_tasks(args.tasks)
    vocab, scorer = Vocabulary.load(args.vocab), load_scorer(args.model)
    rows = run_sweep(tasks, scorer, vocab, spec, _load_lemmas(args.lemmas))
    _write(rows_to_csv(rows, SWEEP_COLUMNS), args.out)


def cmd_emit_plot_data(args) -> None:
    rows = read_csv_rows(args.sweep_csv)
    _write(plot_data_csv(emit_plot_data(rows, args.x, args.y, args.group_by)), args.out)


def cmd_make_toy(args) -> None:
    vocab, sents = toy_corpus(args.n, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocab.json")
    save_scorer(toy_scorer(sents), out / "model.json")
    save_tasks([Task(s.id, s.source, s.reference, s.terms) for s in sents], out / "tasks.jsonl")
    print(f"wrote {len(sents)} tasks to {out}")


COMMANDS = {
    "decode": cmd_decode,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "emit-plot-data": cmd_emit_plot_data,
    "make-toy": cmd_make_toy,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log.setLevel(logging.INFO)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
