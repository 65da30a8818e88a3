"""Corpus generation: fan requests out per (country alias, prompt, temperature,
round), fold rounds and aliases together, and track refusals and misses."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from biaseval.corpus import (
    Country,
    CountryRegistry,
    Discourse,
    MERGE_THRESHOLDS,
    PromptTemplate,
    merge_aliases,
    merge_rounds,
)
from biaseval.llm.client import ChatClient, TransportExhaustedError

# Substrings marking a declined generation; checked case-insensitively.
DEFAULT_REFUSAL_MARKERS = (
    "i'm sorry, but i can't",
    "i cannot assist",
    "i can't help with",
    "as an ai language model, i cannot",
    "无法回答",
    "不能提供",
    "抱歉，我不能",
)


@dataclass
class GenerationReport:
    requests: int = 0
    refusals: int = 0
    missing_slots: list[tuple] = field(default_factory=list)
    refused_slots: list[tuple] = field(default_factory=list)


def looks_like_refusal(text: str, markers: Sequence[str] = DEFAULT_REFUSAL_MARKERS) -> bool:
    lowered = text.lower()
    return any(marker in lowered for marker in markers)


def slot_count(n_countries: int, n_prompts: int, n_temperatures: int,
               n_languages: int) -> int:
    """Merged-discourse slots for a run configuration."""
    return n_countries * n_prompts * n_temperatures * n_languages


def request_fanout(registry: CountryRegistry, languages: Sequence[str],
                   prompts_per_language: int, n_temperatures: int,
                   rounds: int = 2) -> int:
    """Closed-form request count: one per (alias, prompt, temperature, round)."""
    total = 0
    for language in languages:
        aliases = sum(len(c.nationality_aliases[language]) for c in registry)
        total += aliases * prompts_per_language * n_temperatures * rounds
    return total


def _generate_slot(client: ChatClient, country: Country, template: PromptTemplate,
                   temperature: float, rounds: int, threshold: float,
                   markers: Sequence[str]) -> tuple[Discourse | None, list[dict], int]:
    """One merged discourse for a slot, plus raw round records and refusal count."""
    language = template.language
    raw_records: list[dict] = []
    refusal_count = 0
    alias_discourses: list[Discourse] = []
    for alias in country.nationality_aliases[language]:
        prompt_text = template.fill(alias)
        round_texts: list[tuple[str, bool]] = []
        for round_no in range(1, rounds + 1):
            reply = client.chat(prompt_text, temperature=temperature)
            refused = looks_like_refusal(reply, markers)
            refusal_count += int(refused)
            raw_records.append({
                "country_id": country.id,
                "prompt_id": template.id,
                "temperature": temperature,
                "language": language,
                "alias": alias,
                "round": round_no,
                "body": reply,
                "refused": refused,
            })
            round_texts.append((reply, refused))

        kept = [text for text, refused in round_texts if not refused]
        slot_refused = not kept
        if slot_refused:
            kept = [round_texts[0][0]]
        body = kept[0]
        for nxt in kept[1:]:
            body = merge_rounds(body, nxt, threshold)
        alias_discourses.append(Discourse(
            country_id=country.id, prompt_id=template.id, temperature=temperature,
            language=language, body=body, rounds_merged=len(kept), refused=slot_refused,
        ))

    usable = [d for d in alias_discourses if not d.refused]
    merged = merge_aliases(usable or alias_discourses[:1], threshold)
    if not usable:
        merged.refused = True
    return merged, raw_records, refusal_count


def generate_corpus(client: ChatClient, registry: CountryRegistry,
                    templates: Sequence[PromptTemplate],
                    temperatures: Sequence[float],
                    languages: Sequence[str],
                    rounds: int = 2,
                    thresholds: dict[str, float] | None = None,
                    refusal_markers: Sequence[str] = DEFAULT_REFUSAL_MARKERS,
                    max_workers: int = 8,
                    raw_path: str | Path | None = None,
                    ) -> tuple[list[Discourse], GenerationReport]:
    """Generate the full corpus for the given configuration.

    Rounds for one alias run sequentially inside a worker (merge order is
    stable); slots fan out across workers. A slot whose retries are exhausted
    is recorded as missing and the run continues; an authentication failure
    propagates and aborts.
    """
    thresholds = dict(MERGE_THRESHOLDS if thresholds is None else thresholds)
    by_language: dict[str, list[PromptTemplate]] = {}
    for template in templates:
        by_language.setdefault(template.language, []).append(template)

    jobs = []
    for language in languages:
        for country in registry:
            for template in by_language.get(language, []):
                for temperature in temperatures:
                    jobs.append((country, template, temperature))

    report = GenerationReport()
    discourses: list[Discourse] = []
    all_raw: list[dict] = []

    def run(job):
        country, template, temperature = job
        return _generate_slot(client, country, template, temperature, rounds,
                              thresholds[template.language], refusal_markers)

    before = client.requests_sent
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for job, outcome in zip(jobs, pool.map(_unfailing(run, TransportExhaustedError), jobs)):
            country, template, temperature = job
            key = (country.id, template.id, temperature, template.language)
            if outcome is None:
                report.missing_slots.append(key)
                continue
            merged, raw_records, refusal_count = outcome
            report.refusals += refusal_count
            if merged.refused:
                report.refused_slots.append(key)
            discourses.append(merged)
            all_raw.extend(raw_records)
    report.requests = client.requests_sent - before

    if raw_path is not None:
        with open(raw_path, "w", encoding="utf-8") as fh:
            for record in all_raw:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return discourses, report


def _unfailing(fn, swallow):
    def wrapped(job):
        try:
            return fn(job)
        except swallow:
            return None
    return wrapped


def merge_raw_records(records: Sequence[dict],
                      thresholds: dict[str, float] | None = None) -> list[Discourse]:
    """Rebuild merged discourses from persisted raw round records.

    Groups by slot key, folds each alias's non-refused rounds, then folds
    aliases in first-seen order; mirrors the merge inside generate_corpus so
    a stored raw file can be re-merged offline.
    """
    thresholds = dict(MERGE_THRESHOLDS if thresholds is None else thresholds)
    slots: dict[tuple, dict[str, list[dict]]] = {}
    for record in records:
        key = (record["country_id"], record["prompt_id"],
               float(record["temperature"]), record["language"])
        slots.setdefault(key, {}).setdefault(record["alias"], []).append(record)

    merged_out: list[Discourse] = []
    for key, alias_map in slots.items():
        country_id, prompt_id, temperature, language = key
        threshold = thresholds[language]
        alias_discourses = []
        for alias, rows in alias_map.items():
            rows = sorted(rows, key=lambda r: int(r["round"]))
            kept = [r["body"] for r in rows if not r.get("refused")]
            slot_refused = not kept
            if slot_refused:
                kept = [rows[0]["body"]]
            body = kept[0]
            for nxt in kept[1:]:
                body = merge_rounds(body, nxt, threshold)
            alias_discourses.append(Discourse(
                country_id=country_id, prompt_id=prompt_id, temperature=temperature,
                language=language, body=body, rounds_merged=len(kept),
                refused=slot_refused))
        usable = [d for d in alias_discourses if not d.refused]
        merged = merge_aliases(usable or alias_discourses[:1], threshold)
        if not usable:
            merged.refused = True
        merged_out.append(merged)
    return merged_out
