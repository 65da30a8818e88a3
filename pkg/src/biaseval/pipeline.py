"""End-to-end pipeline: generate, merge, anonymize, metrics, schedule,
model annotation, rank, analyze. Each stage writes one artifact and is
skipped on rerun when its output already exists (unless forced)."""

from __future__ import annotations

import csv
import itertools
import json
import math
from pathlib import Path
from typing import Callable, Sequence

from biaseval import analysis, bws, lexmetrics, ranking
from biaseval.config import RunConfig
from biaseval.corpus import (
    Discourse,
    anonymize,
    load_countries,
    load_prompt_templates,
    read_discourses,
    write_discourses,
)
from biaseval.llm.annotate import pairwise_annotate
from biaseval.llm.client import ChatClient
from biaseval.llm.generate import generate_corpus
from biaseval.scorer_gateway import ScoreRequest, score_batch
from biaseval.service.state import discourse_text_id


class StageError(RuntimeError):
    def __init__(self, stage: str, detail: str):
        super().__init__(f"stage {stage!r} failed: {detail}")
        self.stage = stage
        self.detail = detail


STAGES = ("generate", "anonymize", "metrics", "schedule", "annotate", "rank", "analyze")


def _registry(config: RunConfig):
    path = config.registry_path or None
    registry = load_countries(path, languages=config.languages)
    if config.countries_limit:
        registry = type(registry)(registry.countries[:config.countries_limit])
    return registry


def run_pipeline(config: RunConfig, out_dir: str | Path, force: bool = False,
                 log: Callable[[str], None] = print) -> Path:
    """Run every stage, returning the artifact directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    registry = _registry(config)
    templates = [t for t in load_prompt_templates(config.languages)
                 if t.id in config.prompts]

    def stage(name: str, outputs: Sequence[Path], run: Callable[[], None]):
        if not force and outputs and all(p.exists() for p in outputs):
            log(f"[{name}] up to date, skipping")
            return
        log(f"[{name}] running")
        try:
            run()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, str(exc)) from exc

    corpus_path = out / "corpus.jsonl"
    raw_path = out / "raw_rounds.jsonl"

    def do_generate():
        if not config.llm_base_url:
            raise StageError("generate", "no llm base_url configured")
        with ChatClient(config.llm_base_url, config.llm_model,
                        requests_per_minute=config.requests_per_minute) as client:
            discourses, report = generate_corpus(
                client, registry, templates, config.temperatures, config.languages,
                rounds=config.generation_rounds, thresholds=config.thresholds,
                raw_path=raw_path)
        if report.missing_slots:
            log(f"[generate] {len(report.missing_slots)} slots missing after retries")
        write_discourses(corpus_path, sorted(discourses, key=lambda d: d.key))
        (out / "generation_report.json").write_text(json.dumps({
            "requests": report.requests,
            "refusals": report.refusals,
            "missing_slots": [list(k) for k in report.missing_slots],
            "refused_slots": [list(k) for k in report.refused_slots],
        }, indent=1), encoding="utf-8")

    stage("generate", [corpus_path, raw_path], do_generate)

    anon_path = out / "corpus_anon.jsonl"

    def do_anonymize():
        discourses = read_discourses(corpus_path)
        masked = []
        for d in discourses:
            aliases = registry.aliases_for_masking(d.language)
            d.body = anonymize(d.body, aliases, d.language)
            d.anonymized = True
            masked.append(d)
        write_discourses(anon_path, masked)

    stage("anonymize", [anon_path], do_anonymize)

    mattr_path = out / "mattr.csv"

    def do_metrics():
        discourses = read_discourses(anon_path)
        with open(mattr_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["country_id", "prompt_id", "temperature", "language",
                             "value", "n_tokens", "fallback_used"])
            for d in discourses:
                if d.refused or not d.body.strip():
                    continue
                seq = lexmetrics.tokenize(d.body, d.language)
                if not seq.tokens:
                    continue
                result = lexmetrics.mattr(seq, window=config.mattr_window,
                                          window_mode=config.mattr_window_mode)
                writer.writerow([d.country_id, d.prompt_id, d.temperature, d.language,
                                 f"{result.value:.6f}", result.n_tokens,
                                 int(result.fallback_used)])
        if config.scorer_endpoint:
            _score_corpus(config, discourses, out)

    stage("metrics", [mattr_path], do_metrics)

    tuples_path = out / "tuples.json"

    def do_schedule():
        discourses = [d for d in read_discourses(anon_path) if not d.refused]
        ids = [discourse_text_id(*d.key) for d in discourses]
        tuples = bws.schedule(ids, repetitions=config.repetitions,
                              tuple_size=config.tuple_size, seed=config.seed)
        payload = [{"tuple_id": t.tuple_id, "text_ids": list(t.text_ids),
                    "round": t.round} for t in tuples]
        tuples_path.write_text(json.dumps(payload, indent=1), encoding="utf-8")

    stage("schedule", [tuples_path], do_schedule)

    pairs_path = out / "pairs.csv"

    def do_annotate():
        if not config.llm_base_url:
            raise StageError("annotate", "no llm base_url configured")
        discourses = read_discourses(anon_path)
        bodies = {discourse_text_id(*d.key): d.body for d in discourses}
        tuples = json.loads(tuples_path.read_text(encoding="utf-8"))
        seen: set[frozenset] = set()
        pair_inputs = []
        for t in tuples:
            for id_a, id_b in itertools.combinations(t["text_ids"], 2):
                key = frozenset((id_a, id_b))
                if key in seen:
                    continue
                seen.add(key)
                pair_inputs.append((f"pair{len(pair_inputs):06d}", id_a, id_b,
                                    bodies[id_a], bodies[id_b]))
        with ChatClient(config.llm_base_url, config.llm_model,
                        requests_per_minute=config.requests_per_minute) as client:
            result = pairwise_annotate(client, pair_inputs,
                                       temperature=config.annotation_temperature)
        write_pairs_csv(pairs_path, result.pairs)
        (out / "annotation_report.json").write_text(json.dumps({
            "pairs_judged": len(pair_inputs),
            "resolved": len(result.pairs),
            "unresolved": len(result.unresolved),
            "same_order_kappa": result.same_order_kappa,
            "reverse_order_kappa": result.reverse_order_kappa,
        }, indent=1), encoding="utf-8")

    stage("annotate", [pairs_path], do_annotate)

    scores_path = out / "scores.csv"

    def do_rank():
        pairs = read_pairs_csv(pairs_path)
        table = ranking.rank_with_smoothing(pairs, epsilon=config.epsilon,
                                            tol=config.ranking_tol,
                                            max_iter=config.ranking_max_iter)
        with open(scores_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["item_id", "score", "log_score"])
            for item, score, log_score in table.as_rows():
                writer.writerow([item, f"{score:.10g}", f"{log_score:.10g}"])

    stage("rank", [scores_path], do_rank)

    map_path = out / "map.csv"
    corr_path = out / "correlations.csv"

    def do_analyze():
        country_scores = country_log_scores(scores_path)
        analysis.export_map({c: math.exp(v) for c, v in country_scores.items()},
                            map_path)
        if config.indicators_path:
            indicators = analysis.load_indicators(config.indicators_path)
            rows = analysis.correlate_with_indicators(country_scores, indicators,
                                                      seed=config.seed)
            with open(corr_path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=["indicator", "rho", "p_value",
                                                        "n", "missing", "stars"])
                writer.writeheader()
                writer.writerows(rows)
        else:
            log("[analyze] no indicators configured, skipping correlations")

    outputs = [map_path] + ([corr_path] if config.indicators_path else [])
    stage("analyze", outputs, do_analyze)
    return out


def write_pairs_csv(path: str | Path, pairs: Sequence[bws.ComparisonPair]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["winner_id", "loser_id", "source", "order_tag", "round"])
        for p in pairs:
            writer.writerow([p.winner_id, p.loser_id, p.source, p.order_tag, p.round])


def read_pairs_csv(path: str | Path) -> list[bws.ComparisonPair]:
    pairs = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            pairs.append(bws.ComparisonPair(
                winner_id=row["winner_id"], loser_id=row["loser_id"],
                source=row.get("source", "human"), order_tag=row.get("order_tag", "same"),
                round=int(row.get("round", 1) or 0)))
    return pairs


def country_log_scores(scores_path: str | Path) -> dict[str, float]:
    """Pool per-text log scores to per-country means (text ids carry the
    country as their first ':' field)."""
    sums: dict[str, list[float]] = {}
    with open(scores_path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            country = row["item_id"].split(":", 1)[0]
            sums.setdefault(country, []).append(float(row["log_score"]))
    return {country: sum(vals) / len(vals) for country, vals in sums.items()}


def _score_corpus(config: RunConfig, discourses: list[Discourse], out: Path):
    from biaseval.scorer_gateway import METRIC_LANGUAGES
    for metric, languages in METRIC_LANGUAGES.items():
        for language in languages:
            if language not in config.languages:
                continue
            subset = [d for d in discourses
                      if d.language == language and not d.refused and d.body.strip()]
            if not subset:
                continue
            req = ScoreRequest(metric=metric, language=language,
                               texts=tuple(d.body for d in subset))
            resp = score_batch(req, config.scorer_endpoint)
            path = out / f"scores_{metric.lower()}_{language}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["country_id", "prompt_id", "temperature", "language",
                                 "value"])
                for d, entry in zip(subset, resp.entries):
                    value = "" if entry is None else entry
                    writer.writerow([d.country_id, d.prompt_id, d.temperature,
                                     d.language, value])
