import pytest

from attrscore.gateway import Gateway, ModelRef, ProviderConfig
from attrscore.grounding import (
    NOT_FOUND_SENTINEL,
    STATUS_LLM_REFUSED,
    STATUS_NOT_FOUND,
    STATUS_VERIFIED,
    GroundedAttribute,
    build_grounding_prompt,
    ground,
    verify_span,
)
from attrscore.ontology import AttributeDef
from tests.conftest import MOCK

ATTR = AttributeDef(key="main_diag", name="Main diagnosis", description="primary diagnosis this admission")

DOC = (
    "Patient admitted with acute cholecystitis.\n"
    "Underwent laparoscopic cholecystectomy on hospital day two.\n"
    "Discharged home in stable condition."
)


# --- prompt -----------------------------------------------------------------


def test_grounding_prompt_mentions_attribute_value_and_document():
    prompt = build_grounding_prompt(DOC, ATTR, "acute cholecystitis")
    assert "Attribute: main_diag" in prompt
    assert "The attribute is described as: primary diagnosis this admission" in prompt
    assert "Extracted value: acute cholecystitis\n\nFind the text span" in prompt
    assert "NOT FOUND" in prompt
    assert prompt.endswith(f"Document:\n{DOC}")


def test_grounding_prompt_rejects_empty_inputs():
    with pytest.raises(ValueError):
        build_grounding_prompt("", ATTR, "value")
    with pytest.raises(ValueError):
        build_grounding_prompt(DOC, ATTR, "  ")


# --- verify_span -------------------------------------------------------------


def test_verify_span_exact_match():
    start, end = verify_span(DOC, "acute cholecystitis")
    assert DOC[start:end] == "acute cholecystitis"


def test_verify_span_whitespace_normalized():
    doc = "value:   alpha\n beta end"
    found = verify_span(doc, "alpha beta")
    assert found is not None
    start, end = found
    assert doc[start:end] == "alpha\n beta"


def test_verify_span_absent_is_none():
    assert verify_span(DOC, "appendectomy") is None


def test_verify_span_empty_raises():
    with pytest.raises(ValueError):
        verify_span(DOC, "   ")


# --- GroundedAttribute invariants -----------------------------------------------


def test_grounded_attribute_offsets_required_iff_verified():
    with pytest.raises(ValueError):
        GroundedAttribute(
            attribute_key="k", extracted="v", span="s", char_start=None, char_end=None, status=STATUS_VERIFIED
        )
    with pytest.raises(ValueError):
        GroundedAttribute(
            attribute_key="k", extracted="v", span="s", char_start=0, char_end=1, status=STATUS_NOT_FOUND
        )
    with pytest.raises(ValueError):
        GroundedAttribute(
            attribute_key="k", extracted="v", span="s", char_start=None, char_end=None, status="mystery"
        )


def test_grounded_attribute_offset_ordering():
    with pytest.raises(ValueError):
        GroundedAttribute(
            attribute_key="k", extracted="v", span="s", char_start=5, char_end=2, status=STATUS_VERIFIED
        )


# --- ground() statuses -------------------------------------------------------------


def test_ground_verified_with_mock(gateway):
    result = ground(DOC, ATTR, "cholecystectomy", gateway, MOCK)
    assert result.status == STATUS_VERIFIED
    assert DOC[result.char_start : result.char_end] == result.span
    assert "cholecystectomy" in result.span


def test_ground_llm_refused_when_value_not_in_document(gateway):
    result = ground(DOC, ATTR, "pneumothorax", gateway, MOCK)
    assert result.status == STATUS_LLM_REFUSED
    assert result.span == ""
    assert result.char_start is None and result.char_end is None


def test_ground_planted_hallucination_is_not_found():
    def hallucinating(request):
        return "The patient underwent emergency thoracotomy."

    gw = Gateway(cache_dir=None)
    gw.register(ProviderConfig(provider_id="h", kind="mock"), impl=hallucinating)
    result = ground(DOC, ATTR, "acute cholecystitis", gw, ModelRef.parse("h"))
    assert result.status == STATUS_NOT_FOUND
    # the fabricated span is preserved for the audit trail
    assert result.span == "The patient underwent emergency thoracotomy."
    assert result.char_start is None and result.char_end is None


def test_ground_strips_quotes_from_model_span():
    def quoting(request):
        return '"acute cholecystitis"'

    gw = Gateway(cache_dir=None)
    gw.register(ProviderConfig(provider_id="q", kind="mock"), impl=quoting)
    result = ground(DOC, ATTR, "acute cholecystitis", gw, ModelRef.parse("q"))
    assert result.status == STATUS_VERIFIED
    assert result.span == "acute cholecystitis"


def test_ground_handles_explicit_not_found_sentinel():
    def refusing(request):
        return NOT_FOUND_SENTINEL

    gw = Gateway(cache_dir=None)
    gw.register(ProviderConfig(provider_id="r", kind="mock"), impl=refusing)
    result = ground(DOC, ATTR, "anything", gw, ModelRef.parse("r"))
    assert result.status == STATUS_LLM_REFUSED


def test_ground_unicode_document(gateway):
    doc = "Médicament: 100 µg lévothyroxine au coucher. Suivi en clinique."
    attr = AttributeDef(key="ds_med", name="Medications", description="discharge medications")
    result = ground(doc, attr, "lévothyroxine", gateway, MOCK)
    assert result.status == STATUS_VERIFIED
    assert doc[result.char_start : result.char_end] == result.span


def test_ground_rejects_empty_value(gateway):
    with pytest.raises(ValueError):
        ground(DOC, ATTR, "", gateway, MOCK)


def test_verified_spans_satisfy_normalization_invariant(gateway):
    # the invariant the acceptance gate checks corpus-wide, in miniature
    for value in ("acute cholecystitis", "stable condition", "hospital day two"):
        result = ground(DOC, ATTR, value, gateway, MOCK)
        if result.status == STATUS_VERIFIED:
            doc_slice = " ".join(DOC[result.char_start : result.char_end].split())
            assert " ".join(result.span.split()) == doc_slice
