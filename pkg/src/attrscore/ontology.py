"""Attribute ontology: the named aspects extracted from each summary.

An ontology is an ordered list of attribute definitions. Each definition
carries a short key (used in structured output and run records), a display
name (used in reports and the annotation UI), and the full extraction
instruction text handed to the structuring model.

The built-in ontology covers the 17 standard elements of a clinical
discharge summary (admission diagnosis, hospital course, discharge
medications, ...). Custom ontologies load from a JSON document; see
``load_ontology``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DatasetError


@dataclass(frozen=True)
class AttributeDef:
    """One extractable attribute: key, display name, extraction instruction."""

    key: str
    name: str
    description: str

    def __post_init__(self) -> None:
        if not self.key or any(c.isspace() for c in self.key):
            raise ValueError(f"attribute key must be non-empty and contain no whitespace: {self.key!r}")
        if not self.description or not self.description.strip():
            raise ValueError(f"attribute {self.key!r} has an empty description")


@dataclass(frozen=True)
class Ontology:
    """Ordered, immutable collection of attribute definitions."""

    id: str
    version: str
    attributes: tuple[AttributeDef, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.attributes:
            raise ValueError("ontology must declare at least one attribute")
        seen: set[str] = set()
        for attr in self.attributes:
            if attr.key in seen:
                raise ValueError(f"duplicate attribute key: {attr.key!r}")
            seen.add(attr.key)

    def __iter__(self):
        return iter(self.attributes)

    def __len__(self) -> int:
        return len(self.attributes)

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(a.key for a in self.attributes)

    def get(self, key: str) -> AttributeDef:
        for attr in self.attributes:
            if attr.key == key:
                return attr
        raise KeyError(f"unknown attribute key {key!r}; valid keys: {', '.join(self.keys)}")


# (key, display name, extraction instruction) for the standard discharge
# summary attribute set. Instruction text is kept character-for-character as
# the structuring prompt expects it, quirks included.
_DEFAULT_ATTRIBUTES: tuple[tuple[str, str, str], ...] = (
    ("ad_diag", "Admission diagnosis",
     "preliminary or working diagnosis given at the time of admission"),
    ("dc_diag", "Discharge diagnosis",
     "the list of principal discharge diagnosis or main reason for admission and all additional "
     "pertinent diagnoses where applicable"),
    ("main_diag", "Main diagnosis",
     'diagnosis mostly accountable for the largest portion of the patient"s stay, responsible for '
     "the greatest part of the length of stay"),
    ("history", "History",
     "a brief summary of initial presentation and diagnostic evaluation"),
    ("physical", "Physical findings",
     "pertinent physical findings relevant to diagnoses"),
    ("goals", "Goals of care",
     "goals of care; level of treatment,code status(e.g. curative,life-prolonging palliative, and "
     "symptomatic palliative)"),
    ("course", "Hospital course",
     "course in hospital; synotpic,problem-based description of sequential events and respective "
     "evaluations, treatments, and prognoses"),
    ("consults", "Hospital consults",
     "hospital consults; description of specialty and/or allied health consults"),
    ("procedures", "Procedures",
     "procedures in hospital; a list of procedures with key findings and date"),
    ("ds_med", "Discharge medications",
     "a list of all discharge medications with specific description of new, altered, and "
     "discontinued medications and rationale for changes"),
    ("lab", "Lab tests",
     "pertinent lab tests and investigative results"),
    ("ds_test", "Discharge test",
     "tests ordered during the hospitalization that are pending at the time of discharge"),
    ("ds_status", "Discharge status",
     "outcome of care/condition at discharge; sense of the patient health status at discharge "
     "includes functional status, and cognitive status"),
    ("followup", "Follow-up",
     "outstanding issues for follow-up and recommendations to a recipient health-care provider "
     "during discharge"),
    ("appt", "Appointments",
     "appointments after discharge including person responsible for scheduling, care provider"),
    ("instruct", "Discharge instructions",
     "discharge instructions; list of information/education provided to the patient during discharge"),
    ("author", "Author",
     "main author of the discharge summary or attending clinician"),
)


def default_ontology() -> Ontology:
    """The built-in 17-attribute discharge summary ontology."""
    return Ontology(
        id="clinical-discharge",
        version="1.0",
        attributes=tuple(AttributeDef(k, n, d) for k, n, d in _DEFAULT_ATTRIBUTES),
    )


def serialize_ontology(ontology: Ontology) -> str:
    """Render an ontology as its JSON document form (round-trips with load_ontology)."""
    doc = {
        "id": ontology.id,
        "version": ontology.version,
        "attributes": [
            {"key": a.key, "name": a.name, "description": a.description}
            for a in ontology.attributes
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def load_ontology(document: str) -> Ontology:
    """Parse an ontology JSON document.

    Raises DatasetError for malformed JSON (with position), duplicate keys,
    empty descriptions, or an empty attribute list.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"ontology document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DatasetError("ontology document must be a JSON object")
    attrs_raw = doc.get("attributes")
    if not isinstance(attrs_raw, list) or not attrs_raw:
        raise DatasetError("ontology must declare a non-empty 'attributes' list")
    attrs: list[AttributeDef] = []
    for i, entry in enumerate(attrs_raw):
        if not isinstance(entry, dict) or "key" not in entry:
            raise DatasetError(f"ontology attribute #{i} is not an object with a 'key'")
        key = str(entry["key"])
        name = str(entry.get("name") or key.replace("_", " ").capitalize())
        try:
            attrs.append(AttributeDef(key=key, name=name, description=str(entry.get("description", ""))))
        except ValueError as exc:
            raise DatasetError(f"ontology attribute #{i}: {exc}") from exc
    try:
        return Ontology(
            id=str(doc.get("id", "custom")),
            version=str(doc.get("version", "0")),
            attributes=tuple(attrs),
        )
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc


def load_ontology_file(path: str | Path) -> Ontology:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read ontology file {path}: {exc}") from exc
    return load_ontology(text)
