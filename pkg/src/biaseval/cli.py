"""Command-line entry point: every pipeline stage as a subcommand.

Exit codes: 0 ok, 2 config error, 3 stage failure.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from biaseval import analysis, lexmetrics, ranking
from biaseval import bws as bws_mod
from biaseval import corpus as corpus_mod
from biaseval.config import ConfigError, load_config
from biaseval.pipeline import (
    StageError,
    country_log_scores,
    read_pairs_csv,
    run_pipeline,
    write_pairs_csv,
)
from biaseval.service.state import AnnotatorAccount, ServiceState, discourse_text_id

EXIT_CONFIG = 2
EXIT_STAGE = 3


@click.group()
def main():
    """Nationality-description bias evaluation toolkit."""


# -- corpus ------------------------------------------------------------------

@main.group()
def corpus():
    """Merge generation rounds and anonymize discourse stores."""


@corpus.command("merge")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--lang", "language", type=click.Choice(["zh", "en"]), default=None,
              help="Only merge records of this language.")
@click.option("--threshold", type=float, default=None,
              help="Similarity threshold; defaults to 0.7 zh / 0.8 en.")
def corpus_merge(in_path, out_path, language, threshold):
    """Fold raw per-round records (JSONL) into one discourse per slot."""
    from biaseval.llm.generate import merge_raw_records
    records = []
    with open(in_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    if language:
        records = [r for r in records if r["language"] == language]
    thresholds = dict(corpus_mod.MERGE_THRESHOLDS)
    if threshold is not None:
        for lang in thresholds:
            if language is None or lang == language:
                thresholds[lang] = threshold
    merged = merge_raw_records(records, thresholds)
    merged.sort(key=lambda d: d.key)
    corpus_mod.write_discourses(out_path, merged)
    click.echo(f"merged {len(records)} rounds into {len(merged)} discourses")


@corpus.command("anonymize")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--registry", "registry_path", type=click.Path(exists=True), default=None)
def corpus_anonymize(in_path, out_path, registry_path):
    """Mask every country name and demonym with [MASK]."""
    registry = corpus_mod.load_countries(registry_path)
    discourses = corpus_mod.read_discourses(in_path)
    for d in discourses:
        d.body = corpus_mod.anonymize(d.body, registry.aliases_for_masking(d.language),
                                      d.language)
        d.anonymized = True
    corpus_mod.write_discourses(out_path, discourses)
    click.echo(f"anonymized {len(discourses)} discourses")


# -- metrics -----------------------------------------------------------------

@main.group()
def metrics():
    """Lexical and model-based metrics."""


@metrics.command("mattr")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--window", type=int, default=32, show_default=True)
@click.option("--windows", "window_mode", type=click.Choice(["n-l", "n-l+1"]),
              default="n-l", show_default=True,
              help="Window count convention (last window dropped vs kept).")
def metrics_mattr(in_path, out_path, window, window_mode):
    """Moving-average type-token ratio per discourse."""
    discourses = corpus_mod.read_discourses(in_path)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["country_id", "prompt_id", "temperature", "language",
                         "value", "n_tokens", "fallback_used"])
        for d in discourses:
            seq = lexmetrics.tokenize(d.body, d.language)
            if not seq.tokens:
                continue
            result = lexmetrics.mattr(seq, window=window, window_mode=window_mode)
            writer.writerow([d.country_id, d.prompt_id, d.temperature, d.language,
                             f"{result.value:.6f}", result.n_tokens,
                             int(result.fallback_used)])
    click.echo(f"wrote {out_path}")


@metrics.command("score")
@click.option("--metric", required=True, type=click.Choice(["SM", "HS", "OF", "RG"]))
@click.option("--endpoint", required=True)
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def metrics_score(metric, endpoint, in_path, out_path):
    """Score a discourse store through an external scorer endpoint."""
    from biaseval.scorer_gateway import METRIC_LANGUAGES, ScoreRequest, score_batch
    discourses = corpus_mod.read_discourses(in_path)
    rows = []
    for language in METRIC_LANGUAGES[metric]:
        subset = [d for d in discourses if d.language == language and d.body.strip()]
        if not subset:
            continue
        resp = score_batch(ScoreRequest(metric=metric, language=language,
                                        texts=tuple(d.body for d in subset)), endpoint)
        rows.extend((d, entry) for d, entry in zip(subset, resp.entries))
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["country_id", "prompt_id", "temperature", "language", "value"])
        for d, entry in rows:
            writer.writerow([d.country_id, d.prompt_id, d.temperature, d.language,
                             "" if entry is None else entry])
    click.echo(f"scored {len(rows)} texts with {metric}")


# -- bws ---------------------------------------------------------------------

@main.group()
def bws():
    """Best-worst scaling schedules, expansion, agreement."""


@bws.command("schedule")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Discourse store whose slots become schedule items.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--n-reps", type=int, default=12, show_default=True)
@click.option("--tuple-size", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
def bws_schedule(in_path, out_path, n_reps, tuple_size, seed):
    """Pack discourses into annotation tuples."""
    discourses = [d for d in corpus_mod.read_discourses(in_path) if not d.refused]
    ids = [discourse_text_id(*d.key) for d in discourses]
    tuples = bws_mod.schedule(ids, repetitions=n_reps, tuple_size=tuple_size, seed=seed)
    payload = [{"tuple_id": t.tuple_id, "text_ids": list(t.text_ids), "round": t.round}
               for t in tuples]
    Path(out_path).write_text(json.dumps(payload, indent=1), encoding="utf-8")
    click.echo(f"scheduled {len(tuples)} tuples over {len(ids)} texts")


@bws.command("expand")
@click.option("--judgments", "judgments_path", required=True, type=click.Path(exists=True))
@click.option("--tuples", "tuples_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def bws_expand(judgments_path, tuples_path, out_path):
    """Expand a judgment log (JSONL) into pairwise comparisons (CSV)."""
    tuples = {
        t["tuple_id"]: bws_mod.Tuple4(tuple_id=t["tuple_id"],
                                      text_ids=tuple(t["text_ids"]),
                                      round=t.get("round", 1))
        for t in json.loads(Path(tuples_path).read_text(encoding="utf-8"))
    }
    pairs = []
    with open(judgments_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            judgment = bws_mod.Judgment(
                tuple_id=record["tuple_id"], annotator_id=record["annotator_id"],
                best_id=record["best_id"], worst_id=record["worst_id"],
                timestamp=record.get("timestamp", ""))
            pairs.extend(bws_mod.expand(judgment, tuples[judgment.tuple_id]))
    write_pairs_csv(out_path, pairs)
    click.echo(f"expanded into {len(pairs)} pairs")


@bws.command("kappa")
@click.option("--a", "a_path", required=True, type=click.Path(exists=True))
@click.option("--b", "b_path", required=True, type=click.Path(exists=True))
def bws_kappa(a_path, b_path):
    """Cohen's kappa between two label CSVs (columns item_id,label)."""
    def read_labels(path):
        with open(path, encoding="utf-8", newline="") as fh:
            return {row["item_id"]: row["label"] for row in csv.DictReader(fh)}
    labels_a = read_labels(a_path)
    labels_b = read_labels(b_path)
    shared = sorted(set(labels_a) & set(labels_b))
    if not shared:
        raise click.ClickException("no shared item ids")
    value = bws_mod.kappa([labels_a[i] for i in shared], [labels_b[i] for i in shared])
    click.echo(f"kappa over {len(shared)} items: {value:.4f}")


# -- ranking -----------------------------------------------------------------

@main.command("rank")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epsilon", type=float, default=ranking.DEFAULT_EPSILON, show_default=True)
@click.option("--tol", type=float, default=ranking.DEFAULT_TOL, show_default=True)
@click.option("--max-iter", type=int, default=ranking.DEFAULT_MAX_ITER, show_default=True)
def rank(pairs_path, out_path, epsilon, tol, max_iter):
    """Convert pairwise comparisons into friendliness scores."""
    pairs = read_pairs_csv(pairs_path)
    table = ranking.rank_with_smoothing(pairs, epsilon=epsilon, tol=tol,
                                        max_iter=max_iter)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "score", "log_score"])
        for item, score, log_score in table.as_rows():
            writer.writerow([item, f"{score:.10g}", f"{log_score:.10g}"])
    state = "converged" if table.converged else "NOT converged"
    click.echo(f"ranked {len(table.items)} items in {table.iterations} iterations "
               f"({state})")


# -- analysis ----------------------------------------------------------------

@main.group()
def analyze():
    """Correlations, group comparisons, map export."""


@analyze.command("correlate")
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--indicators", "indicators_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
def analyze_correlate(scores_path, indicators_path, out_path, seed):
    """Spearman correlation of per-country scores against social indicators."""
    scores = country_log_scores(scores_path)
    indicators = analysis.load_indicators(indicators_path)
    rows = analysis.correlate_with_indicators(scores, indicators, seed=seed)
    for row in rows:
        rho = "n/a" if row["rho"] is None else f"{row['rho']:+.3f}"
        click.echo(f"{row['indicator']:>18}: rho {rho} (n={row['n']}, "
                   f"missing={row['missing']}) {row['stars']}")
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["indicator", "rho", "p_value", "n",
                                                    "missing", "stars"])
            writer.writeheader()
            writer.writerows(rows)


@analyze.command("compare")
@click.option("--a", "a_path", required=True, type=click.Path(exists=True))
@click.option("--b", "b_path", required=True, type=click.Path(exists=True))
@click.option("--column", default="value", show_default=True)
def analyze_compare(a_path, b_path, column):
    """Mann-Whitney comparison of one metric column across two CSVs."""
    def read_column(path):
        with open(path, encoding="utf-8", newline="") as fh:
            return [float(row[column]) for row in csv.DictReader(fh)
                    if row.get(column, "").strip() != ""]
    sample_a = read_column(a_path)
    sample_b = read_column(b_path)
    statistic, p_value = analysis.compare_groups(sample_a, sample_b)
    stars = analysis.significance_stars(p_value)
    click.echo(f"U={statistic:.1f} p={p_value:.6g} {stars}")


@analyze.command("map")
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def analyze_map(scores_path, out_path):
    """Choropleth export: per-country log score and 1..9 quantile bucket."""
    import math as _math
    scores = {c: _math.exp(v) for c, v in country_log_scores(scores_path).items()}
    rows = analysis.export_map(scores, out_path)
    click.echo(f"wrote {len(rows)} countries to {out_path}")


# -- llm ---------------------------------------------------------------------

@main.command("generate")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out-dir", required=True, type=click.Path())
def generate(config_path, out_dir):
    """Generate the corpus through the configured chat endpoint."""
    run("generate", config_path, out_dir, force=False)


@main.command("llm-annotate")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out-dir", required=True, type=click.Path())
def llm_annotate(config_path, out_dir):
    """Pairwise self-annotation of the scheduled tuples."""
    run("annotate", config_path, out_dir, force=False)


def run(last_stage, config_path, out_dir, force):
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        run_pipeline(config, out_dir, force=force)
    except StageError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_STAGE)


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--force", is_flag=True, help="Re-run stages whose outputs exist.")
def run_cmd(config_path, out_dir, force):
    """Run the whole pipeline (generate through analyze)."""
    run("analyze", config_path, out_dir, force)


# -- servers -------------------------------------------------------------------

@main.command("serve")
@click.option("--schedule", "schedule_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="Judgment event log (JSONL), replayed on restart.")
@click.option("--annotator", "annotators", multiple=True,
              help="id:token, repeatable; overrides config.")
@click.option("--arbiter", "arbiters", multiple=True, help="id:token for the arbiter.")
def serve(schedule_path, corpus_path, port, config_path, log_path, annotators, arbiters):
    """Serve the annotation API for the browser UI."""
    import uvicorn
    from biaseval.service.app import create_app

    try:
        config = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    accounts = []
    annotator_map = dict(config.annotators)
    arbiter_map = dict(config.arbiter)
    for spec in annotators:
        annotator_id, token = spec.split(":", 1)
        annotator_map[annotator_id] = token
    for spec in arbiters:
        annotator_id, token = spec.split(":", 1)
        arbiter_map[annotator_id] = token
    for annotator_id, token in annotator_map.items():
        accounts.append(AnnotatorAccount(annotator_id, token, "primary"))
    for annotator_id, token in arbiter_map.items():
        accounts.append(AnnotatorAccount(annotator_id, token, "arbiter"))
    if not accounts:
        click.echo("config error: no annotator tokens configured", err=True)
        sys.exit(EXIT_CONFIG)

    tuples = [
        bws_mod.Tuple4(tuple_id=t["tuple_id"], text_ids=tuple(t["text_ids"]),
                       round=t.get("round", 1))
        for t in json.loads(Path(schedule_path).read_text(encoding="utf-8"))
    ]
    discourses = corpus_mod.read_discourses(corpus_path)
    bodies = {discourse_text_id(*d.key): d.body for d in discourses}
    state = ServiceState(tuples, bodies, accounts, log_path=log_path)
    uvicorn.run(create_app(state), host="127.0.0.1", port=port, log_level="warning")


@main.command("mock-llm")
@click.option("--port", type=int, default=8100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def mock_llm(port, seed):
    """Run the bundled deterministic mock chat endpoint."""
    from biaseval.llm.mock_server import MockChatServer
    server = MockChatServer(port=port, seed=seed)
    click.echo(f"mock chat endpoint at {server.url} (seed {seed})")
    server.serve_forever()


@main.command("stub-scorer")
@click.option("--port", type=int, default=8200, show_default=True)
def stub_scorer(port):
    """Run the bundled deterministic stub scorer."""
    from biaseval.stub_scorer import StubScorerServer
    server = StubScorerServer(port=port)
    click.echo(f"stub scorer at {server.url}")
    server.serve_forever()


if __name__ == "__main__":
    main()
