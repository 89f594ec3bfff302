"""Pairwise attribute scoring and aggregation.

Each (reference, candidate) attribute pair gets an integer similarity score
on the 1-4 rubric via one model call. Pairs where both sides are absent are
skipped without a call (the attribute is inapplicable for this document);
pairs where exactly one side is absent score 1 without a call (omitted or
hallucinated content is the failure this evaluation exists to catch).

The per-document score is the plain mean of the non-skipped pair scores,
normalized to 0-100 via (mean - 1) / 3 * 100.

`holistic_score` is the whole-document baseline: a single call rating the
two summaries 1-10.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import ResponseParseError
from .gateway import CompletionRequest, Gateway, ModelRef
from .ontology import AttributeDef, Ontology
from .structuring import AttributeValue, StructuredSummary

SKIP_BOTH_ABSENT = "both_absent"

_INT_RE = re.compile(r"-?\d+")

_PAIR_RUBRIC = """You will be given a python dictionary containing a clinical variable as a key and a list containing two values for the variable as values.

Your task is to rate how similar the values are given the variable. Compare value1 and value2 for semantic similarity(similarity in meaning) given the variable and the criteria below. Two values can be very similar in meaning even if they are phrased differently. Also remember that this is a clinical document, take that into account.
When scoring the similarity between two clinical terminologies, assign a value from 1 to 4, where 1 signifies a lack of similarity and 4 indicates identical meanings. Consider the context, clinical relevance, and semantic alignment between the terminologies. If the terminologies convey vastly different meanings, assign a score of 1. A score of 2 is appropriate for terminologies that, while related, represent different concepts or emphasize distinct elements. A score of 3 should be used for terminologies with substantial semantic overlaps but minor differences. Finally, if the terminologies are semantically equivalent and interchangeable, warranting no clinical distinction, assign a score of 4. Ensure that the assessment reflects the degrees of similarity in meaning, irrespective of syntactical differences, context, or minor variances in expression.

Please make sure you read and understand these instructions carefully.
Return the similarity score. Return only the score, don't include any other extra text."""

_HOLISTIC_TEMPLATE = """You will be given two clinical discharge summaries, summary1 and summary2.

Your task is to rate how similar the two summaries are from 1-10. 1 is not similar while 10 is essentially identical. Focus on the following important clinical variables when performing the comparison:
  How similar is the diagnosis, how similar are the goals, how similar is hospital course and history, how similar are the medications administered, how similar are the physical condition diagnoses, how similar are the followup consults and procedures, how similar are the lab tests performed, how similar are the patients discharge status, is the follow-up instructions similar, are there any similar appointments, and instructions
only return the score, dont add any extra text
Here are the inputs discharge summaries:
"""


@dataclass(frozen=True)
class AttributeScore:
    """Score for one attribute pair: an integer 1-4, or a skip."""

    attribute_key: str
    score: int | None = None
    skip_reason: str | None = None
    raw_response: str = ""

    def __post_init__(self) -> None:
        if (self.score is None) == (self.skip_reason is None):
            raise ValueError("exactly one of score and skip_reason must be set")
        if self.score is not None and self.score not in (1, 2, 3, 4):
            raise ValueError(f"score must be in 1..4, got {self.score}")

    @property
    def skipped(self) -> bool:
        return self.skip_reason is not None


@dataclass(frozen=True)
class SummaryScore:
    """Aggregated document score over all attribute pairs."""

    per_attribute: tuple[AttributeScore, ...]
    mean_raw: float | None
    normalized: float | None
    n_scored: int
    n_skipped: int

    @property
    def all_skipped(self) -> bool:
        return self.mean_raw is None


def build_pair_prompt(attribute: AttributeDef, value_ref: str, value_cand: str) -> str:
    """Similarity-rubric prompt for one attribute pair."""
    if not value_ref or not value_cand:
        raise ValueError("both values must be non-empty")
    payload = json.dumps({attribute.key: [value_ref, value_cand]}, ensure_ascii=False)
    return (
        f"{_PAIR_RUBRIC}\n\n"
        f"The variable is described as: {attribute.description}\n"
        f"Here is the dictionary: {payload}"
    )


def parse_score(response: str, low: int = 1, high: int = 4) -> int:
    """First standalone integer in the response, required to be in range."""
    m = _INT_RE.search(response)
    if m is None:
        raise ResponseParseError(f"no integer score in response: {response[:200]!r}")
    value = int(m.group())
    if not low <= value <= high:
        raise ResponseParseError(f"score {value} outside {low}..{high}")
    return value


def _complete_scored(
    gateway: Gateway, request: CompletionRequest, low: int, high: int
) -> tuple[int, str]:
    """Complete and parse a score, reissuing the prompt once on bad output."""
    result = gateway.complete(request)
    try:
        return parse_score(result.text, low, high), result.text
    except ResponseParseError:
        retry = gateway.complete(request, refresh_cache=True)
        return parse_score(retry.text, low, high), retry.text


def pair_request(
    attribute: AttributeDef,
    value_ref: str,
    value_cand: str,
    provider: ModelRef,
    temperature: float = 0.0,
) -> CompletionRequest:
    return CompletionRequest(
        provider_id=provider.provider_id,
        model=provider.model,
        user_text=build_pair_prompt(attribute, value_ref, value_cand),
        temperature=temperature,
        max_output_tokens=16,
    )


def score_pair(
    attribute: AttributeDef,
    value_ref: AttributeValue,
    value_cand: AttributeValue,
    gateway: Gateway,
    provider: ModelRef,
    temperature: float = 0.0,
) -> AttributeScore:
    """Score one attribute pair; absent-value pairs are decided locally
    without any model call."""
    if value_ref is None and value_cand is None:
        return AttributeScore(attribute_key=attribute.key, skip_reason=SKIP_BOTH_ABSENT)
    if value_ref is None or value_cand is None:
        return AttributeScore(attribute_key=attribute.key, score=1)
    request = pair_request(attribute, value_ref, value_cand, provider, temperature)
    score, raw = _complete_scored(gateway, request, 1, 4)
    return AttributeScore(attribute_key=attribute.key, score=score, raw_response=raw)


def score_summary(
    ontology: Ontology,
    ref: StructuredSummary,
    cand: StructuredSummary,
    gateway: Gateway,
    provider: ModelRef,
    workers: int = 1,
) -> SummaryScore:
    """Score every attribute pair for a document and aggregate.

    Pair calls may fan out over ``workers`` threads (the gateway enforces
    provider limits); results join in ontology order, so output is
    deterministic regardless of worker count.
    """

    def one(attr: AttributeDef) -> AttributeScore:
        return score_pair(attr, ref.values[attr.key], cand.values[attr.key], gateway, provider)

    if workers <= 1:
        scores = [one(attr) for attr in ontology]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(one, ontology))
    return aggregate(scores)


def aggregate(scores: list[AttributeScore]) -> SummaryScore:
    """Mean the non-skipped pair scores and normalize to 0-100."""
    if not scores:
        raise ValueError("aggregate requires at least one AttributeScore")
    scored = [s.score for s in scores if s.score is not None]
    if scored:
        mean_raw = sum(scored) / len(scored)
        normalized = (mean_raw - 1.0) / 3.0 * 100.0
    else:
        mean_raw = None
        normalized = None
    return SummaryScore(
        per_attribute=tuple(scores),
        mean_raw=mean_raw,
        normalized=normalized,
        n_scored=len(scored),
        n_skipped=len(scores) - len(scored),
    )


def build_holistic_prompt(reference: str, candidate: str) -> str:
    if not reference.strip() or not candidate.strip():
        raise ValueError("both summaries must be non-empty")
    return f"{_HOLISTIC_TEMPLATE} summary1: {reference}\n summary2: {candidate}."


def holistic_request(
    reference: str,
    candidate: str,
    provider: ModelRef,
    temperature: float = 0.0,
) -> CompletionRequest:
    return CompletionRequest(
        provider_id=provider.provider_id,
        model=provider.model,
        user_text=build_holistic_prompt(reference, candidate),
        temperature=temperature,
        max_output_tokens=16,
    )


def holistic_score(
    reference: str,
    candidate: str,
    gateway: Gateway,
    provider: ModelRef,
    temperature: float = 0.0,
) -> int:
    """Whole-document baseline: one call rating overall similarity 1-10."""
    request = holistic_request(reference, candidate, provider, temperature)
    score, _ = _complete_scored(gateway, request, 1, 10)
    return score
