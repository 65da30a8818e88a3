"""Country registry, prompt templates, discourse storage, merging, anonymization.

Generated texts are keyed by (country_id, prompt_id, temperature, language).
Near-duplicate generation rounds and per-nationality-alias variants are merged
by character-level edit-distance similarity; bodies are anonymized by masking
every country name and demonym surface form.
"""

from __future__ import annotations

import csv
import json
import re
import threading
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

LANGUAGES = ("zh", "en")
PROMPT_IDS = ("p1", "p2", "p3")
PROMPT_ORIENTATION = {"p1": "negative", "p2": "neutral", "p3": "mixed"}

# Similarity thresholds used when folding generation rounds together.
MERGE_THRESHOLDS = {"zh": 0.7, "en": 0.8}
DEFAULT_TEMPERATURES = (0.0, 0.3, 0.6, 0.9)

MASK_TOKEN = "[MASK]"

# Chinese demonyms are the country name plus this suffix.
ZH_PERSON_SUFFIX = "人"

# Standalone capital X not embedded in a latin word; the unique fill slot.
_PLACEHOLDER = re.compile(r"(?<![A-Za-z])X(?![A-Za-z])")


class RegistryError(ValueError):
    """Raised when the country registry violates an invariant."""


class MergeError(ValueError):
    """Raised on invalid merge input."""


@dataclass(frozen=True)
class Country:
    """One country with its per-language surface forms.

    names maps language to the list of country-name forms (canonical first,
    abbreviations and historical names after). nationality_aliases maps
    language to demonym forms; Chinese demonyms are derived as name + 人.
    """

    id: str
    names: dict[str, tuple[str, ...]]
    nationality_aliases: dict[str, tuple[str, ...]]
    disambiguation_suffix: str | None = None

    def display_name(self, language: str) -> str:
        return self.names[language][0]


class CountryRegistry:
    """Ordered collection of countries, loaded from the registry CSV."""

    def __init__(self, countries: Sequence[Country]):
        self.countries = list(countries)
        self.by_id = {c.id: c for c in self.countries}
        if len(self.by_id) != len(self.countries):
            raise RegistryError("duplicate country ids in registry")

    def __len__(self) -> int:
        return len(self.countries)

    def __iter__(self) -> Iterator[Country]:
        return iter(self.countries)

    def __getitem__(self, country_id: str) -> Country:
        return self.by_id[country_id]

    def aliases_for_masking(self, language: str) -> list[str]:
        """All surface forms to mask in generated text for one language.

        English: names plus demonyms. Chinese: names only; demonyms are
        name + 人, so masking the name leaves the 人 reading intact
        ("阿富汗人" becomes "[MASK]人").
        """
        forms: list[str] = []
        for country in self.countries:
            forms.extend(country.names.get(language, ()))
            if language != "zh":
                forms.extend(country.nationality_aliases.get(language, ()))
        return forms

    def generation_aliases(self, country_id: str, language: str) -> list[str]:
        """Demonym surface forms used to fill prompt templates, in declaration order."""
        return list(self.by_id[country_id].nationality_aliases[language])


def _registry_csv_path() -> Path:
    return Path(str(resources.files("biaseval").joinpath("data/countries.csv")))


def load_countries(path: str | Path | None = None,
                   languages: Sequence[str] = LANGUAGES) -> CountryRegistry:
    """Load the registry CSV (columns id, language, kind, surface_form).

    Chinese demonyms are derived (name + 人) when the file carries none.
    Raises RegistryError when a country lacks a name in a configured language
    or has no English demonym.
    """
    path = Path(path) if path is not None else _registry_csv_path()
    names: dict[str, dict[str, list[str]]] = {}
    demonyms: dict[str, dict[str, list[str]]] = {}
    order: list[str] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            cid = row["id"].strip()
            lang = row["language"].strip()
            kind = row["kind"].strip()
            form = row["surface_form"].strip()
            if not cid or not form:
                raise RegistryError(f"blank id or surface form in row {row}")
            if cid not in names:
                names[cid] = {}
                demonyms[cid] = {}
                order.append(cid)
            if kind == "name":
                names[cid].setdefault(lang, []).append(form)
            elif kind == "demonym":
                demonyms[cid].setdefault(lang, []).append(form)
            else:
                raise RegistryError(f"unknown kind {kind!r} for {cid}")

    countries = []
    for cid in order:
        for lang in languages:
            if not names[cid].get(lang):
                raise RegistryError(f"{cid}: no {lang} name")
        if "zh" in languages and not demonyms[cid].get("zh"):
            demonyms[cid]["zh"] = [n + ZH_PERSON_SUFFIX for n in names[cid]["zh"]]
        if "en" in languages and not demonyms[cid].get("en"):
            raise RegistryError(f"{cid}: no English demonym")
        suffix = None
        for forms in demonyms[cid].values():
            for form in forms:
                if " - " in form:
                    suffix = form.split(" - ", 1)[1]
        countries.append(Country(
            id=cid,
            names={lang: tuple(v) for lang, v in names[cid].items()},
            nationality_aliases={lang: tuple(v) for lang, v in demonyms[cid].items()},
            disambiguation_suffix=suffix,
        ))
    return CountryRegistry(countries)


@dataclass(frozen=True)
class PromptTemplate:
    """Generation prompt with a single standalone-X placeholder."""

    id: str
    language: str
    text: str
    orientation: str

    def __post_init__(self):
        if len(_PLACEHOLDER.findall(self.text)) != 1:
            raise ValueError(f"template {self.id}/{self.language} needs exactly one X placeholder")
        if PROMPT_ORIENTATION.get(self.id) != self.orientation:
            raise ValueError(f"orientation {self.orientation!r} is fixed per prompt id")

    def fill(self, alias: str) -> str:
        return _PLACEHOLDER.sub(lambda _: alias, self.text)


def load_prompt_templates(languages: Sequence[str] = LANGUAGES) -> list[PromptTemplate]:
    """The six bundled generation templates (three per language)."""
    root = resources.files("biaseval").joinpath("data/prompts")
    templates = []
    for lang in languages:
        for pid in PROMPT_IDS:
            text = root.joinpath(f"generate_{lang}_{pid}.txt").read_text(encoding="utf-8")
            templates.append(PromptTemplate(id=pid, language=lang, text=text,
                                            orientation=PROMPT_ORIENTATION[pid]))
    return templates


@dataclass
class Discourse:
    """One generated text for a (country, prompt, temperature, language) slot."""

    country_id: str
    prompt_id: str
    temperature: float
    language: str
    body: str
    rounds_merged: int = 1
    anonymized: bool = False
    refused: bool = False

    @property
    def key(self) -> tuple[str, str, float, str]:
        return (self.country_id, self.prompt_id, self.temperature, self.language)

    @property
    def char_count(self) -> int:
        return len(self.body)

    @property
    def token_count(self) -> int:
        from biaseval.lexmetrics import tokenize
        return len(tokenize(self.body, self.language).tokens)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost character edit distance, two-row dynamic programming."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    current = [0] * (len(b) + 1)
    for i, ca in enumerate(a, start=1):
        current[0] = i
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current[j] = min(previous[j] + 1,       # deletion
                             current[j - 1] + 1,    # insertion
                             previous[j - 1] + cost)
        previous, current = current, previous
    return previous[len(b)]


def similarity(text1: str, text2: str) -> float:
    """1 - edit_distance / max(len(text1), len(text2)); two empty strings give 1.0."""
    longest = max(len(text1), len(text2))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(text1, text2) / longest


def merge_rounds(round1: str, round2: str, threshold: float) -> str:
    """Keep round1 when the rounds are similar, otherwise append round2.

    threshold must lie in (0, 1]; similar means similarity >= threshold.
    """
    if not 0.0 < threshold <= 1.0:
        raise MergeError(f"threshold must be in (0,1], got {threshold}")
    if similarity(round1, round2) >= threshold:
        return round1
    return round1 + "\n" + round2


def merge_discourse_pair(d1: Discourse, d2: Discourse, threshold: float) -> Discourse:
    """merge_rounds on the bodies, summing rounds_merged."""
    if d1.key != d2.key:
        raise MergeError(f"key mismatch: {d1.key} vs {d2.key}")
    body = merge_rounds(d1.body, d2.body, threshold)
    return replace(d1, body=body, rounds_merged=d1.rounds_merged + d2.rounds_merged)


def merge_aliases(discourses: Sequence[Discourse],
                  threshold: float | None = None) -> Discourse:
    """Left-fold merge of per-alias discourses sharing one slot key.

    Order follows the input (alias declaration order in the registry), so the
    result is deterministic. The language's default threshold applies when
    none is given.
    """
    if not discourses:
        raise MergeError("merge_aliases needs at least one discourse")
    merged = discourses[0]
    if threshold is None:
        threshold = MERGE_THRESHOLDS[merged.language]
    for other in discourses[1:]:
        merged = merge_discourse_pair(merged, other, threshold)
    return merged


def _alias_pattern(aliases: Iterable[str], language: str) -> re.Pattern | None:
    forms = sorted({a for a in aliases if a}, key=lambda s: (-len(s), s))
    if not forms:
        return None
    flags = re.IGNORECASE if language == "en" else 0
    return re.compile("|".join(re.escape(f) for f in forms), flags)


def anonymize(body: str, aliases: Iterable[str], language: str) -> str:
    """Replace every alias occurrence with the [MASK] token.

    Plain substring matching, longest alias first at each position;
    case-insensitive for English, exact for Chinese.
    """
    pattern = _alias_pattern(aliases, language)
    if pattern is None:
        return body
    return pattern.sub(MASK_TOKEN, body)


def find_alias_occurrences(body: str, aliases: Iterable[str], language: str) -> list[str]:
    """Alias spans still present in body under the language's matching rule."""
    pattern = _alias_pattern(aliases, language)
    if pattern is None:
        return []
    return pattern.findall(body)


_STORE_FIELDS = ("country_id", "prompt_id", "temperature", "language",
                 "body", "rounds_merged", "anonymized")


def discourse_to_record(d: Discourse) -> dict:
    record = {name: getattr(d, name) for name in _STORE_FIELDS}
    if d.refused:
        record["refused"] = True
    return record


def discourse_from_record(record: dict) -> Discourse:
    return Discourse(
        country_id=record["country_id"],
        prompt_id=record["prompt_id"],
        temperature=float(record["temperature"]),
        language=record["language"],
        body=record["body"],
        rounds_merged=int(record.get("rounds_merged", 1)),
        anonymized=bool(record.get("anonymized", False)),
        refused=bool(record.get("refused", False)),
    )


def read_discourses(path: str | Path) -> list[Discourse]:
    """Read a JSON Lines discourse store."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(discourse_from_record(json.loads(line)))
    return out


def write_discourses(path: str | Path, discourses: Iterable[Discourse]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in discourses:
            fh.write(json.dumps(discourse_to_record(d), ensure_ascii=False) + "\n")


class DiscourseStore:
    """Append-oriented discourse store: one writer, many readers."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, discourse: Discourse) -> None:
        line = json.dumps(discourse_to_record(discourse), ensure_ascii=False) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)

    def load(self) -> list[Discourse]:
        if not self.path.exists():
            return []
        return read_discourses(self.path)
