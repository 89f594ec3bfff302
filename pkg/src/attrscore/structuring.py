"""Attribute extraction: turn a free-text summary into one value per
ontology attribute.

The extraction prompt asks the model for a fenced JSON object with one entry
per attribute key, using the literal NONE for values it cannot find. Real
model output is messy, so `parse_structured` is deliberately lenient: it
strips code fences and surrounding prose, tolerates trailing commas, inline
``//`` comments, and Python-style dict literals, and normalizes the NONE
sentinels to an absent value. It never raises on malformed content except
when no object can be recovered at all.

Absent values are represented as ``None`` (never the string "NONE") so
downstream scoring is type-driven.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field

from .errors import ResponseParseError
from .gateway import CompletionRequest, Gateway, ModelRef
from .ontology import Ontology

# Value of an attribute in a structured summary: extracted text, or None
# when the attribute could not be found (absent).
AttributeValue = str | None

_NONE_SENTINELS = {"NONE", "None", "none"}

_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_-]+)?\s*\n(.*?)```", re.DOTALL)


@dataclass
class StructuredSummary:
    """One summary reduced to its ontology attributes.

    ``values`` holds every ontology key, in ontology order; ``warnings``
    records parse oddities (missing keys defaulted to absent, unknown keys
    ignored). ``raw_response`` keeps the verbatim model output for audit.
    """

    source_id: str
    values: dict[str, AttributeValue]
    raw_response: str = ""
    warnings: list[str] = field(default_factory=list)

    @property
    def present_keys(self) -> list[str]:
        return [k for k, v in self.values.items() if v is not None]


def build_structuring_prompt(note: str, ontology: Ontology) -> str:
    """Extraction prompt: expert framing, the note, and a fenced-JSON schema
    with one line per attribute."""
    if not note.strip():
        raise ValueError("note must be non-empty")
    schema_lines = "\n".join(f'\t"{a.key}": string  // {a.description}' for a in ontology)
    format_instructions = (
        "The output should be a markdown code snippet formatted in the following schema, "
        'including the leading and trailing "```json" and "```":\n\n'
        "```json\n{\n" + schema_lines + "\n}\n```"
    )
    return (
        "You are an expert in information extraction and structuring from clinical notes. "
        "Given a clinical note, create a structured output. For a given variable, if you can "
        "not determine/find a value, return NONE. Dont add any extra text, just the structured "
        f"value. Here is the note: {note}.\n{format_instructions}"
    )


def _scan_objects(text: str) -> list[str]:
    """All top-level balanced ``{...}`` snippets, string-aware."""
    snippets: list[str] = []
    depth = 0
    start = -1
    quote: str | None = None
    escaped = False
    for i, ch in enumerate(text):
        if quote is not None:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
            continue
        if ch in "\"'":
            if depth > 0:
                quote = ch
            continue
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                snippets.append(text[start : i + 1])
    return snippets


def _clean_jsonish(snippet: str) -> str:
    """Drop ``//`` line comments and trailing commas outside of strings."""
    out: list[str] = []
    quote: str | None = None
    escaped = False
    i = 0
    while i < len(snippet):
        ch = snippet[i]
        if quote is not None:
            out.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
            i += 1
            continue
        if ch in "\"'":
            quote = ch
            out.append(ch)
            i += 1
            continue
        if ch == "/" and snippet[i : i + 2] == "//":
            while i < len(snippet) and snippet[i] != "\n":
                i += 1
            continue
        if ch == ",":
            j = i + 1
            while j < len(snippet) and snippet[j].isspace():
                j += 1
            if j < len(snippet) and snippet[j] in "}]":
                i += 1  # trailing comma
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def _try_parse_object(snippet: str) -> dict | None:
    for text in (snippet, _clean_jsonish(snippet)):
        try:
            obj = json.loads(text)
            if isinstance(obj, dict):
                return obj
        except (json.JSONDecodeError, RecursionError):
            pass
    try:
        obj = ast.literal_eval(_clean_jsonish(snippet))
        if isinstance(obj, dict):
            return obj
    except (ValueError, SyntaxError, MemoryError, RecursionError):
        pass
    return None


def _extract_object(response: str) -> dict:
    candidates: list[str] = []
    for m in _FENCE_RE.finditer(response):
        candidates.extend(_scan_objects(m.group(1)))
    candidates.extend(_scan_objects(response))
    for snippet in candidates:
        obj = _try_parse_object(snippet)
        if obj is not None:
            return obj
    raise ResponseParseError("no parseable key/value object in response")


def _coerce_value(value: object) -> AttributeValue:
    if value is None:
        return None
    if isinstance(value, str):
        text = value.strip()
    elif isinstance(value, bool):
        text = str(value)
    elif isinstance(value, (int, float)):
        text = str(value)
    elif isinstance(value, list):
        parts = [p for p in (_coerce_value(v) for v in value) if p is not None]
        text = ", ".join(parts)
    elif isinstance(value, dict):
        text = json.dumps(value, ensure_ascii=False)
    else:
        text = str(value).strip()
    if not text or text in _NONE_SENTINELS:
        return None
    return text


def parse_structured(response: str, ontology: Ontology, source_id: str = "") -> StructuredSummary:
    """Parse a structuring response into a StructuredSummary.

    Total over arbitrary text: returns a summary or raises
    ResponseParseError when no key/value object can be recovered. The result
    always has exactly the ontology's keys, in ontology order.
    """
    obj = _extract_object(response)
    warnings: list[str] = []
    values: dict[str, AttributeValue] = {}
    obj_by_key = {str(k): v for k, v in obj.items()}
    for attr in ontology:
        if attr.key in obj_by_key:
            values[attr.key] = _coerce_value(obj_by_key[attr.key])
        else:
            values[attr.key] = None
            warnings.append(f"missing key: {attr.key}")
    known = set(ontology.keys)
    for key in obj_by_key:
        if key not in known:
            warnings.append(f"unknown key ignored: {key}")
    return StructuredSummary(source_id=source_id, values=values, raw_response=response, warnings=warnings)


def structuring_request(
    note: str,
    ontology: Ontology,
    provider: ModelRef,
    temperature: float = 0.0,
    max_output_tokens: int = 2048,
) -> CompletionRequest:
    """The exact request `structure` issues; exposed so callers can compute
    cache keys for provenance records."""
    return CompletionRequest(
        provider_id=provider.provider_id,
        model=provider.model,
        user_text=build_structuring_prompt(note, ontology),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )


def structure(
    note: str,
    ontology: Ontology,
    gateway: Gateway,
    provider: ModelRef,
    source_id: str = "",
    temperature: float = 0.0,
    max_output_tokens: int = 2048,
) -> StructuredSummary:
    """Extract attributes from one document: prompt, complete, parse.

    On a parse failure the same prompt is reissued exactly once (bypassing
    the cache read so a remote model gets a real second attempt) before the
    failure propagates.
    """
    if not note.strip():
        raise ValueError("note must be non-empty")
    request = structuring_request(note, ontology, provider, temperature, max_output_tokens)
    result = gateway.complete(request)
    try:
        return parse_structured(result.text, ontology, source_id=source_id)
    except ResponseParseError:
        retry = gateway.complete(request, refresh_cache=True)
        try:
            return parse_structured(retry.text, ontology, source_id=source_id)
        except ResponseParseError as exc:
            raise ResponseParseError(
                f"structuring failed for {source_id or 'document'} after retry: {exc}"
            ) from exc
