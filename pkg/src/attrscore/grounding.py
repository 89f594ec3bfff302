"""Span grounding: evidence quotes for extracted attribute values.

An extracted value is only trustworthy if the source document actually
contains text that supports it, so we ask the model for a verbatim quote and
then verify that quote ourselves. Verification is a whitespace-normalized
substring search; a span the model invented gets status ``not_found`` no
matter how plausible it sounds, and a model that answers NOT FOUND gets
``llm_refused``. Offsets always index the original document.
"""

from __future__ import annotations

from dataclasses import dataclass

from .gateway import CompletionRequest, Gateway, ModelRef
from .ontology import AttributeDef
from .text import normalized_find

NOT_FOUND_SENTINEL = "NOT FOUND"

STATUS_VERIFIED = "verified"
STATUS_NOT_FOUND = "not_found"
STATUS_LLM_REFUSED = "llm_refused"


@dataclass(frozen=True)
class GroundedAttribute:
    """Outcome of grounding one extracted value against its document.

    ``span`` holds the model's quote even when verification failed, so a
    hallucinated quote stays visible in audit output. Offsets are present
    only for verified spans.
    """

    attribute_key: str
    extracted: str
    span: str
    char_start: int | None
    char_end: int | None
    status: str

    def __post_init__(self) -> None:
        if self.status not in (STATUS_VERIFIED, STATUS_NOT_FOUND, STATUS_LLM_REFUSED):
            raise ValueError(f"unknown grounding status {self.status!r}")
        has_offsets = self.char_start is not None and self.char_end is not None
        if (self.status == STATUS_VERIFIED) != has_offsets:
            raise ValueError("offsets must be present exactly when status is verified")
        if has_offsets and not 0 <= self.char_start <= self.char_end:
            raise ValueError(f"bad span offsets {self.char_start}..{self.char_end}")


def build_grounding_prompt(document: str, attribute: AttributeDef, extracted: str) -> str:
    if not document.strip():
        raise ValueError("document must be non-empty")
    if not extracted.strip():
        raise ValueError("extracted value must be non-empty")
    return (
        "You are auditing an attribute value extracted from a clinical document.\n\n"
        f"Attribute: {attribute.key}\n"
        f"The attribute is described as: {attribute.description}\n"
        f"Extracted value: {extracted}\n\n"
        "Find the text span in the document that led to this extracted value. "
        "Return the span as an exact verbatim quote from the document, without any "
        "rewording, ellipsis, or commentary. If the document contains no span that "
        f"supports the extracted value, return exactly {NOT_FOUND_SENTINEL}.\n\n"
        f"Document:\n{document}"
    )


def verify_span(document: str, span: str) -> tuple[int, int] | None:
    """First whitespace-normalized occurrence of span in document, as
    original-document character offsets (end exclusive); None if absent."""
    if not span.strip():
        raise ValueError("span must be non-empty")
    return normalized_find(document, span)


def _strip_quotes(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1].strip()
    return text


def grounding_request(
    document: str,
    attribute: AttributeDef,
    extracted: str,
    provider: ModelRef,
) -> CompletionRequest:
    return CompletionRequest(
        provider_id=provider.provider_id,
        model=provider.model,
        user_text=build_grounding_prompt(document, attribute, extracted),
        temperature=0.0,
    )


def ground(
    document: str,
    attribute: AttributeDef,
    extracted: str,
    gateway: Gateway,
    provider: ModelRef,
) -> GroundedAttribute:
    """Ask for a supporting quote and verify it against the document."""
    request = grounding_request(document, attribute, extracted, provider)
    span = _strip_quotes(gateway.complete(request).text)
    if not span or span == NOT_FOUND_SENTINEL:
        return GroundedAttribute(
            attribute_key=attribute.key,
            extracted=extracted,
            span="",
            char_start=None,
            char_end=None,
            status=STATUS_LLM_REFUSED,
        )
    located = verify_span(document, span)
    if located is None:
        return GroundedAttribute(
            attribute_key=attribute.key,
            extracted=extracted,
            span=span,
            char_start=None,
            char_end=None,
            status=STATUS_NOT_FOUND,
        )
    start, end = located
    return GroundedAttribute(
        attribute_key=attribute.key,
        extracted=extracted,
        span=span,
        char_start=start,
        char_end=end,
        status=STATUS_VERIFIED,
    )
