"""Attribute structuring evaluation for clinical summaries.

The core loop: extract a fixed ontology of attributes from a reference and
a candidate summary (structuring), score each attribute pair for semantic
similarity on a 1-4 scale, and aggregate to a 0-100 document score. Around
that sit span grounding, corpus-level runs with durable storage, agreement
statistics against human labels, and a blinded annotation service.
"""

from ._version import __version__
from .config import ToolkitConfig, build_gateway, load_config
from .errors import (
    AttrScoreError,
    ConfigError,
    DatasetError,
    EmbeddingError,
    ResponseParseError,
    TransportError,
    UndefinedStatError,
)
from .gateway import CompletionRequest, Gateway, ModelRef, ProviderConfig
from .grounding import GroundedAttribute, ground, verify_span
from .metrics import PrfScore, as_mode, embed_match, rouge_l, rouge_n
from .ontology import AttributeDef, Ontology, default_ontology, load_ontology
from .scoring import (
    AttributeScore,
    SummaryScore,
    aggregate,
    holistic_score,
    parse_score,
    score_pair,
    score_summary,
)
from .stats import PairedSeries, RatingMatrix, align, fleiss_kappa, pearson, rmse, spearman, to_unit
from .structuring import StructuredSummary, parse_structured, structure

__all__ = [
    "__version__",
    "AttrScoreError",
    "AttributeDef",
    "AttributeScore",
    "CompletionRequest",
    "ConfigError",
    "DatasetError",
    "EmbeddingError",
    "Gateway",
    "GroundedAttribute",
    "ModelRef",
    "Ontology",
    "PairedSeries",
    "PrfScore",
    "ProviderConfig",
    "RatingMatrix",
    "ResponseParseError",
    "StructuredSummary",
    "SummaryScore",
    "ToolkitConfig",
    "TransportError",
    "UndefinedStatError",
    "aggregate",
    "align",
    "as_mode",
    "build_gateway",
    "default_ontology",
    "embed_match",
    "fleiss_kappa",
    "ground",
    "holistic_score",
    "load_config",
    "load_ontology",
    "parse_score",
    "parse_structured",
    "pearson",
    "rmse",
    "rouge_l",
    "rouge_n",
    "score_pair",
    "score_summary",
    "spearman",
    "structure",
    "to_unit",
    "verify_span",
]
