import json
import random

import pytest

from attrscore.errors import ResponseParseError
from attrscore.gateway import Gateway, ModelRef, ProviderConfig
from attrscore.ontology import AttributeDef
from attrscore.scoring import (
    SKIP_BOTH_ABSENT,
    AttributeScore,
    SummaryScore,
    aggregate,
    build_holistic_prompt,
    build_pair_prompt,
    holistic_score,
    parse_score,
    score_pair,
    score_summary,
)
from attrscore.structuring import StructuredSummary
from tests.conftest import MOCK

ATTR = AttributeDef(key="main_diag", name="Main diagnosis", description="primary diagnosis this admission")


# --- prompts -----------------------------------------------------------------


def test_pair_prompt_rubric_and_payload():
    prompt = build_pair_prompt(ATTR, "acute appendicitis", "appendicitis")
    assert "Your task is to rate how similar the values are given the variable" in prompt
    assert "assign a value from 1 to 4" in prompt
    assert "semantically equivalent and interchangeable" in prompt
    assert "Return only the score, don't include any other extra text." in prompt
    assert "The variable is described as: primary diagnosis this admission\n" in prompt
    payload = prompt[prompt.rindex("Here is the dictionary: ") + len("Here is the dictionary: ") :]
    assert json.loads(payload) == {"main_diag": ["acute appendicitis", "appendicitis"]}


def test_pair_prompt_survives_braces_and_quotes_in_values():
    prompt = build_pair_prompt(ATTR, 'has "quotes" and {braces}', "plain")
    payload = prompt[prompt.rindex("Here is the dictionary: ") + len("Here is the dictionary: ") :]
    assert json.loads(payload)["main_diag"][0] == 'has "quotes" and {braces}'


def test_holistic_prompt_shape():
    prompt = build_holistic_prompt("ref text", "cand text")
    assert "rate how similar the two summaries are from 1-10" in prompt
    assert "Here are the inputs discharge summaries:" in prompt
    assert prompt.endswith(" summary1: ref text\n summary2: cand text.")


# --- parse_score ----------------------------------------------------------------


@pytest.mark.parametrize(
    "text,expected",
    [
        ("3", 3),
        (" 4 \n", 4),
        ("Score: 2", 2),
        ("I would rate this 1 out of 4.", 1),
        ("**3**", 3),
    ],
)
def test_parse_score_accepts_reasonable_wrappers(text, expected):
    assert parse_score(text, low=1, high=4) == expected


@pytest.mark.parametrize("text", ["", "no digits here", "0", "5", "11"])
def test_parse_score_rejects_out_of_range_or_missing(text):
    with pytest.raises(ResponseParseError):
        parse_score(text, low=1, high=4)


def test_parse_score_holistic_range():
    assert parse_score("10", low=1, high=10) == 10
    with pytest.raises(ResponseParseError):
        parse_score("11", low=1, high=10)


def test_parse_score_takes_first_integer():
    assert parse_score("3 or maybe 4", low=1, high=4) == 3


# --- AttributeScore invariants ----------------------------------------------------


def test_attribute_score_requires_score_xor_skip():
    with pytest.raises(ValueError):
        AttributeScore(attribute_key="k", score=None, skip_reason=None)
    with pytest.raises(ValueError):
        AttributeScore(attribute_key="k", score=3, skip_reason=SKIP_BOTH_ABSENT)
    with pytest.raises(ValueError):
        AttributeScore(attribute_key="k", score=7, skip_reason=None)


def test_attribute_score_skipped_flag():
    assert AttributeScore(attribute_key="k", score=None, skip_reason=SKIP_BOTH_ABSENT).skipped
    assert not AttributeScore(attribute_key="k", score=2, skip_reason=None).skipped


# --- score_pair skip/penalty rules -------------------------------------------------


def test_both_absent_skips_with_zero_calls(gateway):
    score = score_pair(ATTR, None, None, gateway, MOCK)
    assert score.skipped and score.skip_reason == SKIP_BOTH_ABSENT
    assert gateway.call_count() == 0


@pytest.mark.parametrize("ref,cand", [("present", None), (None, "present")])
def test_one_absent_scores_one_with_zero_calls(gateway, ref, cand):
    score = score_pair(ATTR, ref, cand, gateway, MOCK)
    assert score.score == 1 and not score.skipped
    assert gateway.call_count() == 0


def test_both_present_calls_model_once(gateway):
    score = score_pair(ATTR, "acute appendicitis", "appendicitis", gateway, MOCK)
    assert score.score == 3  # jaccard 1/2 -> 1 + round_half_up(1.5)
    assert gateway.call_count() == 1


def test_identical_values_score_four(gateway):
    assert score_pair(ATTR, "same text", "same text", gateway, MOCK).score == 4


def test_disjoint_values_score_one(gateway):
    assert score_pair(ATTR, "alpha beta", "gamma delta", gateway, MOCK).score == 1


def test_score_pair_retries_parse_failure_once(tmp_path):
    calls = []

    def flaky(request):
        calls.append(1)
        return "unhelpful" if len(calls) == 1 else "2"

    gw = Gateway(cache_dir=tmp_path / "cache")
    gw.register(ProviderConfig(provider_id="p", kind="mock"), impl=flaky)
    score = score_pair(ATTR, "a", "b", gw, ModelRef.parse("p"))
    assert score.score == 2
    assert len(calls) == 2


# --- aggregation -------------------------------------------------------------------


def scored(values):
    return [AttributeScore(attribute_key=f"k{i}", score=v) for i, v in enumerate(values)]


def test_aggregate_endpoints():
    assert aggregate(scored([4] * 17)).normalized == 100.0
    assert aggregate(scored([1] * 17)).normalized == 0.0
    assert aggregate(scored([2, 4])).normalized == pytest.approx(200 / 3, abs=1e-9)


def test_aggregate_empty_is_an_error():
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_excludes_skips_from_mean():
    scores = scored([4, 4]) + [AttributeScore(attribute_key="s", skip_reason=SKIP_BOTH_ABSENT)]
    result = aggregate(scores)
    assert result.normalized == 100.0
    assert result.n_scored == 2 and result.n_skipped == 1


def test_aggregate_monotone_in_each_score():
    rng = random.Random(5)
    for _ in range(50):
        values = [rng.randint(1, 4) for _ in range(10)]
        i = rng.randrange(10)
        if values[i] < 4:
            bumped = list(values)
            bumped[i] += 1
            assert aggregate(scored(bumped)).normalized > aggregate(scored(values)).normalized


# --- score_summary ------------------------------------------------------------------


def summaries(ref_values, cand_values, ontology):
    full_ref = {k: ref_values.get(k) for k in ontology.keys}
    full_cand = {k: cand_values.get(k) for k in ontology.keys}
    return (
        StructuredSummary(source_id="ref", values=full_ref),
        StructuredSummary(source_id="cand", values=full_cand),
    )


def test_score_summary_orders_and_aggregates(gateway, ontology):
    ref, cand = summaries(
        {"main_diag": "acute appendicitis", "course": "stable", "ds_med": "abx"},
        {"main_diag": "appendicitis", "course": "stable"},
        ontology,
    )
    result = score_summary(ontology, ref, cand, gateway, MOCK)
    assert isinstance(result, SummaryScore)
    assert [s.attribute_key for s in result.per_attribute] == list(ontology.keys)
    by_key = {s.attribute_key: s for s in result.per_attribute}
    assert by_key["main_diag"].score == 3
    assert by_key["course"].score == 4
    assert by_key["ds_med"].score == 1  # one absent
    assert by_key["ad_diag"].skipped
    assert result.n_scored == 3 and result.n_skipped == 14
    assert result.mean_raw == pytest.approx((3 + 4 + 1) / 3)
    assert result.normalized == pytest.approx((result.mean_raw - 1) / 3 * 100)


def test_score_summary_all_skipped_yields_none_means(gateway, ontology):
    ref, cand = summaries({}, {}, ontology)
    result = score_summary(ontology, ref, cand, gateway, MOCK)
    assert result.mean_raw is None and result.normalized is None
    assert result.n_scored == 0 and result.n_skipped == len(ontology)
    assert gateway.call_count() == 0


def test_score_summary_parallel_workers_match_serial(tmp_path, ontology):
    from attrscore.gateway import mock_gateway

    ref, cand = summaries(
        {k: f"value {i} alpha" for i, k in enumerate(ontology.keys)},
        {k: f"value {i} beta" for i, k in enumerate(ontology.keys)},
        ontology,
    )
    serial = score_summary(ontology, ref, cand, mock_gateway(None), MOCK, workers=1)
    parallel = score_summary(ontology, ref, cand, mock_gateway(None), MOCK, workers=8)
    assert serial == parallel


# --- holistic -------------------------------------------------------------------------


def test_holistic_identical_is_ten(gateway):
    assert holistic_score("the same text", "the same text", gateway, MOCK) == 10


def test_holistic_disjoint_is_one(gateway):
    assert holistic_score("alpha beta gamma", "delta epsilon zeta", gateway, MOCK) == 1


def test_holistic_requires_nonempty(gateway):
    with pytest.raises(ValueError):
        holistic_score("", "x", gateway, MOCK)
