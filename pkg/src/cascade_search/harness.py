"""Task ingestion, decoding runs, alpha x k sweeps and plot-data emission."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .decoders import DECODERS, DecodeConfig, DecodeResult, decode
from .logit_mod import GuidanceConfig
from .metrics import IDENTITY, Lemmatizer, bleu, ema, lma
from .scorer import PerTaskScorer, Scorer
from .term_trie import PushStrategy, TermList, TrieError
from .vocab import Vocabulary

log = logging.getLogger(__name__)


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    id: str
    source: str
    reference: str
    terms: TermList = field(default_factory=TermList)


def parse_task(obj: dict, default_id: str) -> Task:
    if not isinstance(obj, dict):
        raise DataError("task must be a JSON object")
    try:
        source, reference = str(obj["source"]), str(obj.get("reference", ""))
        pairs = []
        for t in obj.get("terms", []):
            tgts = t["tgts"]
            if isinstance(tgts, str) or not isinstance(tgts, list):
                raise DataError(f"term {t.get('src')!r}: tgts must be a list of strings")
            if not tgts:
                raise DataError(f"term {t.get('src')!r} has an empty target list")
            pairs.append((str(t["src"]), [str(x) for x in tgts]))
        terms = TermList.from_pairs(pairs)
    except KeyError as exc:
        raise DataError(f"missing field {exc}") from None
    except TrieError as exc:
        raise DataError(str(exc)) from None
    return Task(str(obj.get("id", default_id)), source, reference, terms)


def load_tasks(path: str | Path) -> list[Task]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    tasks = []
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                tasks.append(parse_task(obj, default_id=str(lineno)))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return tasks


def task_to_json(task: Task) -> dict:
    return {
        "id": task.id,
        "source": task.source,
        "reference": task.reference,
        "terms": [{"src": e.source, "tgts": list(e.targets)} for e in task.terms],
    }


def save_tasks(tasks: Iterable[Task], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in tasks:
            fh.write(json.dumps(task_to_json(t), ensure_ascii=False) + "\n")


def scorer_for(scorer: Scorer, task: Task) -> Scorer:
    if isinstance(scorer, PerTaskScorer):
        return scorer.for_task(task.id)
    return scorer


SourceEncoder = Callable[[str], Sequence[int]]


def decode_tasks(
    tasks: Sequence[Task],
    scorer: Scorer,
    vocab: Vocabulary,
    decoder: str,
    config: DecodeConfig,
    encode_source: SourceEncoder | None = None,
    trace=None,
) -> list[DecodeResult]:
    """Decode every task. Toy scorers ignore the source, so it defaults to ()."""
    out = []
    for task in tasks:
        src = tuple(encode_source(task.source)) if encode_source else ()
        out.append(decode(decoder, src, scorer_for(scorer, task), vocab, task.terms, config, trace))
    return out


def result_record(task: Task, result: DecodeResult, vocab: Vocabulary, **meta) -> dict:
    h = result.output
    return {
        "id": task.id,
        **meta,
        "hypothesis_text": vocab.detokenize(h.tokens),
        "token_ids": list(h.tokens),
        "level": h.level,
        "fulfilled": h.fulfilled,
        "score": h.score,
        "raw_score": h.raw_score,
        "stats": {
            "steps": result.stats.steps,
            "max_live": result.stats.max_live,
            "capacity": result.stats.capacity,
            "truncated": result.truncated,
        },
    }


# -- evaluation -----------------------------------------------------------------


@dataclass(frozen=True)
class CorpusScores:
    ema: float
    lma: float
    bleu: float


def score_corpus(
    hypotheses: Sequence[str],
    tasks: Sequence[Task],
    lemmatizer: Lemmatizer = IDENTITY,
    ignore_case: bool = False,
    smooth_bleu: bool = False,
) -> CorpusScores:
    if len(hypotheses) != len(tasks):
        raise DataError(f"{len(hypotheses)} hypotheses for {len(tasks)} tasks")
    corpus = [(h, t.terms) for h, t in zip(hypotheses, tasks)]
    return CorpusScores(
        ema(corpus, ignore_case),
        lma(corpus, lemmatizer, ignore_case),
        bleu(list(hypotheses), [t.reference for t in tasks], smooth=smooth_bleu),
    )


# -- sweeps -----------------------------------------------------------------------

SWEEP_COLUMNS = (
    "decoder", "strategy", "alpha", "k", "EMA", "LMA", "BLEU",
    "avg_steps", "peak_hyps", "mean_raw_logprob", "status",
)


@dataclass(frozen=True)
class SweepSpec:
    alphas: tuple[float, ...]
    ks: tuple[int, ...]
    strategies: tuple[PushStrategy, ...] = (PushStrategy.LONGEST,)
    decoders: tuple[str, ...] = ("cascaded",)
    max_len: int = 32
    max_cells: int = 500
    smooth_bleu: bool = False

    def __post_init__(self) -> None:
        for name in ("alphas", "ks", "strategies", "decoders"):
            if not getattr(self, name):
                raise ValueError(f"sweep {name} must be non-empty")
        object.__setattr__(self, "strategies", tuple(PushStrategy(s) for s in self.strategies))
        for d in self.decoders:
            if d not in DECODERS:
                raise ValueError(f"unknown decoder {d!r}")
        n = len(self.alphas) * len(self.ks) * len(self.strategies) * len(self.decoders)
        if n > self.max_cells:
            raise ValueError(f"sweep has {n} cells, above the cap of {self.max_cells}")

    def cells(self):
        return itertools.product(self.decoders, self.strategies, self.alphas, self.ks)


def run_sweep(
    tasks: Sequence[Task],
    scorer: Scorer,
    vocab: Vocabulary,
    spec: SweepSpec,
    lemmatizer: Lemmatizer = IDENTITY,
    max_len: Callable[[Task], int] | None = None,
) -> list[dict]:
    """Decode and score every grid cell; failed cells are recorded, not raised.

    ``max_len`` optionally gives a per-task length limit (defaults to the
    spec's ``max_len``).
    """
    rows = []
    for decoder, strategy, alpha, k in spec.cells():
        row = {"decoder": decoder, "strategy": strategy.value, "alpha": alpha, "k": k}
        try:
            results = []
            for task in tasks:
                cfg = DecodeConfig(
                    k=k,
                    max_len=max_len(task) if max_len else spec.max_len,
                    guidance=GuidanceConfig(alpha, strategy),
                )
                results.extend(decode_tasks([task], scorer, vocab, decoder, cfg))
            texts = [vocab.detokenize(r.output.tokens) for r in results]
            scores = score_corpus(texts, tasks, lemmatizer, smooth_bleu=spec.smooth_bleu)
            n = max(len(results), 1)
            row.update(
                EMA=scores.ema,
                LMA=scores.lma,
                BLEU=scores.bleu,
                avg_steps=sum(r.stats.steps for r in results) / n,
                peak_hyps=max((r.stats.max_live for r in results), default=0),
                mean_raw_logprob=sum(r.output.raw_score for r in results) / n,
                status="ok",
            )
        except Exception as exc:  # a failed cell is data, not a crash
            log.warning("sweep cell %s failed: %s", row, exc)
            row.update({c: "" for c in SWEEP_COLUMNS if c not in row})
            row["status"] = f"failed: {type(exc).__name__}: {exc}"
        rows.append(row)
    rows.sort(key=lambda r: (r["decoder"], r["strategy"], r["alpha"], r["k"]))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def read_csv_rows(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def emit_plot_data(
    rows: Sequence[dict],
    x: str,
    y: str,
    group_by: Sequence[str] = (),
) -> list[tuple[str, str, str]]:
    """Project sweep rows to long-format (series, x, y) triples.

    Series names join the ``group_by`` values, e.g. ``decoder=cascaded,k=3``.
    """
    if rows:
        missing = [c for c in (x, y, *group_by) if c not in rows[0]]
        if missing:
            raise DataError(f"unknown column(s): {', '.join(missing)}")
    out = []
    for r in rows:
        if str(r.get("status", "ok")) != "ok":
            continue
        series = ",".join(f"{g}={_fmt(r[g])}" for g in group_by) or y
        out.append((series, _fmt(r[x]), _fmt(r[y])))
    out.sort(key=lambda t: (t[0], float(t[1]) if _is_num(t[1]) else t[1]))
    return out


def _is_num(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def plot_data_csv(triples: Sequence[tuple[str, str, str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "x", "y"])
    w.writerows(triples)
    return buf.getvalue()
