"""Dataset loading, pipeline evaluation, and the input-length study.

Three modes:

* ``langrepo``: build the repository once per video, read it, classify.
* ``llovi-whole``: one question-conditioned summary over all captions.
* ``llovi-chunked``: question-conditioned summary per chunk, no pruning.

Accuracy is computed against answer_index; items without ground truth get
predictions but are excluded from accuracy and counted separately.
"""

from __future__ import annotations

import json
import logging
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .embed import Embedder
from .errors import MalformedFile, MissingCaptions, OptionCountError
from .ingest import RATE_FACTORS, CaptionSet, chunk_captions, transform_rate
from .llm import GenerationRequest, LlmClient
from .prompts import render_summarize
from .repository import SUMMARIZE_MAX_TOKENS, BuildConfig, Repository, build, read_from_repo
from .vqa import CLASSIFIERS, Prediction, QaItem, answer_generative, answer_loglik

logger = logging.getLogger(__name__)

MODES = ("langrepo", "llovi-whole", "llovi-chunked")


@dataclass
class Providers:
    """The external services one evaluation run talks to."""

    client: LlmClient
    embedder: Embedder


@dataclass
class EvalReport:
    mode: str
    overall_accuracy: float
    per_split: dict[str, float]
    n_items: int
    n_unscored: int
    ledger_snapshot: dict[str, int]
    predictions: list[Prediction] = field(default_factory=list)


def load_qa_dataset(path: str | Path) -> list[QaItem]:
    """Load the neutral QA schema: {"items": [{question_id, video_id,
    question, options, answer_index?, split_tag?}, ...]}."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise MalformedFile(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("items"), list):
        raise MalformedFile(f"{path}: expected an object with an 'items' array")
    items = []
    for i, entry in enumerate(raw["items"]):
        try:
            answer_index = entry.get("answer_index")
            items.append(
                QaItem(
                    question_id=str(entry["question_id"]),
                    video_id=str(entry["video_id"]),
                    question=str(entry["question"]),
                    options=[str(o) for o in entry["options"]],
                    answer_index=None if answer_index is None else int(answer_index),
                    split_tag=entry.get("split_tag"),
                )
            )
        except (KeyError, TypeError, ValueError, OptionCountError) as exc:
            raise MalformedFile(f"{path}: item #{i}: {exc}") from exc
    for item in items:
        if not item.generative_compatible:
            logger.info("item %s has %d options; loglik only", item.question_id, len(item.options))
    return items


def _summarize_texts(texts: list[str], question: str, client: LlmClient) -> str:
    prompt = render_summarize(texts, question)
    return client.generate(
        GenerationRequest(
            prompt=prompt,
            max_new_tokens=SUMMARIZE_MAX_TOKENS,
            temperature=0.0,
            purpose_tag="summarize",
        )
    )


class _RepoPool:
    """Per-video repositories, each built exactly once even across threads."""

    def __init__(self, cfg: BuildConfig, providers: Providers):
        self.cfg = cfg
        self.providers = providers
        self._repos: dict[str, Repository] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._master = threading.Lock()

    def get(self, captions: CaptionSet) -> Repository:
        with self._master:
            lock = self._locks.setdefault(captions.video_id, threading.Lock())
        with lock:
            if captions.video_id not in self._repos:
                self._repos[captions.video_id] = build(
                    captions, self.cfg, self.providers.embedder, self.providers.client
                )
            return self._repos[captions.video_id]


def descriptions_for(
    item: QaItem,
    captions: CaptionSet,
    cfg: BuildConfig,
    mode: str,
    providers: Providers,
    repo_pool: _RepoPool | None = None,
) -> list[str]:
    """The description texts a classifier sees for one item under a mode."""
    client = providers.client
    if mode == "langrepo":
        pool = repo_pool or _RepoPool(cfg, providers)
        repo = pool.get(captions)
        return read_from_repo(repo, cfg, item.question, client)
    texts = [c.text for c in captions.captions]
    if mode == "llovi-whole":
        return [_summarize_texts(texts, item.question, client)]
    if mode == "llovi-chunked":
        chunks = chunk_captions(captions, cfg.chunk_schedule[0])
        return [
            _summarize_texts([c.text for c in chunk.items], item.question, client)
            for chunk in chunks
        ]
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _ledger_delta(before: dict[str, int], after: dict[str, int]) -> dict[str, int]:
    return {k: after[k] - before.get(k, 0) for k in after}


def evaluate(
    items: list[QaItem],
    captions_by_video: dict[str, CaptionSet],
    cfg: BuildConfig,
    mode: str,
    providers: Providers,
    classifier: str = "loglik",
    loglik_format: str = "plain",
    shuffle_seed: int | None = None,
) -> EvalReport:
    """Run the chosen mode over all items and score against ground truth.

    shuffle_seed randomizes the processing order only; predictions come back
    aligned with the input items and accuracy is unaffected.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if classifier not in CLASSIFIERS:
        raise ValueError(f"classifier must be one of {CLASSIFIERS}, got {classifier!r}")
    missing = sorted({it.video_id for it in items if it.video_id not in captions_by_video})
    if missing:
        raise MissingCaptions(f"no captions for video(s): {', '.join(missing)}")

    client = providers.client
    before = client.ledger.snapshot()
    repo_pool = _RepoPool(cfg, providers)

    def predict(item: QaItem) -> Prediction:
        captions = captions_by_video[item.video_id]
        descriptions = descriptions_for(item, captions, cfg, mode, providers, repo_pool)
        if classifier == "generative":
            return answer_generative(descriptions, item, captions.duration_s, client)
        return answer_loglik(descriptions, item, loglik_format, client)

    order = list(range(len(items)))
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(order)
    work = [items[i] for i in order]
    if client.max_parallel > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=client.max_parallel) as pool:
            done = list(pool.map(predict, work))
    else:
        done = [predict(item) for item in work]
    predictions: list[Prediction] = [None] * len(items)  # type: ignore[list-item]
    for position, prediction in zip(order, done):
        predictions[position] = prediction

    correct = 0
    n_scored = 0
    n_unscored = 0
    split_totals: dict[str, list[int]] = {}
    for item, prediction in zip(items, predictions):
        if item.answer_index is None:
            n_unscored += 1
            continue
        n_scored += 1
        hit = int(prediction.choice_index == item.answer_index)
        correct += hit
        if item.split_tag:
            tally = split_totals.setdefault(item.split_tag, [0, 0])
            tally[0] += hit
            tally[1] += 1

    return EvalReport(
        mode=mode,
        overall_accuracy=correct / n_scored if n_scored else 0.0,
        per_split={tag: hits / total for tag, (hits, total) in sorted(split_totals.items())},
        n_items=n_scored,
        n_unscored=n_unscored,
        ledger_snapshot=_ledger_delta(before, client.ledger.snapshot()),
        predictions=predictions,
    )


def run_length_ablation(
    items: list[QaItem],
    captions_by_video: dict[str, CaptionSet],
    cfg: BuildConfig,
    mode: str,
    providers: Providers,
    factors: tuple[float, ...] = RATE_FACTORS,
    classifier: str = "loglik",
    loglik_format: str = "plain",
) -> dict[float, EvalReport]:
    """Evaluate once per rate factor, transforming every caption set first."""
    reports = {}
    for factor in factors:
        transformed = {
            vid: transform_rate(captions, factor) for vid, captions in captions_by_video.items()
        }
        reports[factor] = evaluate(
            items, transformed, cfg, mode, providers, classifier, loglik_format
        )
    return reports


def predictions_payload(predictions: list[Prediction]) -> dict:
    out = []
    for p in predictions:
        row: dict = {
            "question_id": p.question_id,
            "choice_index": p.choice_index,
            "classifier": p.classifier,
        }
        if p.per_option_scores is not None:
            row["scores"] = p.per_option_scores
        if p.fallback:
            row["fallback"] = True
        out.append(row)
    return {"predictions": out}


def write_predictions(predictions: list[Prediction], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(predictions_payload(predictions), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def report_payload(report: EvalReport) -> dict:
    return {
        "mode": report.mode,
        "overall_accuracy": report.overall_accuracy,
        "per_split": report.per_split,
        "n_items": report.n_items,
        "n_unscored": report.n_unscored,
        "ledger": report.ledger_snapshot,
    }


def write_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_payload(report), indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def format_report(report: EvalReport) -> str:
    """Human-readable accuracy table."""
    lines = [
        f"mode: {report.mode}",
        f"items scored: {report.n_items} (unscored: {report.n_unscored})",
        f"overall accuracy: {report.overall_accuracy:.4f}",
    ]
    if report.per_split:
        lines.append("per split:")
        width = max(len(tag) for tag in report.per_split)
        for tag, acc in report.per_split.items():
            lines.append(f"  {tag.ljust(width)}  {acc:.4f}")
    ledger = report.ledger_snapshot
    lines.append(
        "llm calls: "
        + ", ".join(f"{k}={ledger[k]}" for k in ("rephrase", "summarize", "qa") if k in ledger)
        + f", cache_hits={ledger.get('cache_hits', 0)}"
    )
    return "\n".join(lines)
