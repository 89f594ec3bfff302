"""Surface similarity metrics: ROUGE-N, ROUGE-L, and greedy embedding matching.

Each metric returns precision/recall/F1 in [0,1] and can be applied either
holistically (whole summaries) or per attribute over a pair of structured
summaries (``as_mode``), mirroring how the LLM scorer is applied.

Tokenization is deliberately simple and documented: lowercase, split on
non-alphanumeric runs, drop empties. No stemming, no stopword removal.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import EmbeddingError
from .structuring import StructuredSummary
from .text import words


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return words(text)


@dataclass(frozen=True)
class PrfScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "PrfScore":
        denom = precision + recall
        f1 = 2 * precision * recall / denom if denom > 0 else 0.0
        return cls(precision=precision, recall=recall, f1=f1)


_ZEROS = PrfScore(0.0, 0.0, 0.0)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(reference: str, candidate: str, n: int = 1) -> PrfScore:
    """N-gram overlap with clipped counts over the simple tokenization."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ref_counts = _ngrams(tokenize(reference), n)
    cand_counts = _ngrams(tokenize(candidate), n)
    ref_total = sum(ref_counts.values())
    cand_total = sum(cand_counts.values())
    overlap = sum(min(c, ref_counts.get(g, 0)) for g, c in cand_counts.items())
    precision = overlap / cand_total if cand_total > 0 else 0.0
    recall = overlap / ref_total if ref_total > 0 else 0.0
    return PrfScore.from_pr(precision, recall)


def _lcs_length(xs: Sequence[str], ys: Sequence[str]) -> int:
    # single-row DP
    if not xs or not ys:
        return 0
    row = [0] * (len(ys) + 1)
    for x in xs:
        prev = 0
        for j, y in enumerate(ys, start=1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = cur
    return row[-1]


def rouge_l(reference: str, candidate: str) -> PrfScore:
    """Longest-common-subsequence variant: R = LCS/|ref|, P = LCS/|cand|."""
    ref_tokens = tokenize(reference)
    cand_tokens = tokenize(candidate)
    if not ref_tokens or not cand_tokens:
        return _ZEROS
    lcs = _lcs_length(ref_tokens, cand_tokens)
    return PrfScore.from_pr(lcs / len(cand_tokens), lcs / len(ref_tokens))


class TokenEmbedder(Protocol):
    """Maps a token list to one vector per token (all of one dimension)."""

    def embed(self, tokens: Sequence[str]) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic mock embedder: token -> seeded pseudo-random unit vector.

    The vector for a token depends only on (seed, token), so results are
    stable across processes and platforms. Identical tokens have cosine 1.
    """

    def __init__(self, dim: int = 32, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(f"{self.seed}\x00{token}".encode("utf-8"), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "big"))
            raw = rng.standard_normal(self.dim)
            vec = raw / np.linalg.norm(raw)
            self._cache[token] = vec
        return vec

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self._vector(t) for t in tokens])


def _validated_embeddings(embedder: TokenEmbedder, tokens: Sequence[str]) -> np.ndarray:
    vectors = np.asarray(embedder.embed(tokens), dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
        raise EmbeddingError(
            f"embedder returned shape {vectors.shape} for {len(tokens)} tokens; expected one vector per token"
        )
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0):
        bad = tokens[int(np.argmin(norms))]
        raise EmbeddingError(f"embedder returned a zero-norm vector for token {bad!r}")
    return vectors / norms[:, None]


def embed_match(reference: str, candidate: str, embedder: TokenEmbedder) -> PrfScore:
    """Greedy maximum-cosine token matching.

    recall  = mean over reference tokens of the best cosine to any candidate
              token; precision is symmetric. Cosines are floored at 0 so the
    score stays in [0,1].
    """
    ref_tokens = tokenize(reference)
    cand_tokens = tokenize(candidate)
    if not ref_tokens or not cand_tokens:
        return _ZEROS
    ref_vecs = _validated_embeddings(embedder, ref_tokens)
    cand_vecs = _validated_embeddings(embedder, cand_tokens)
    if ref_vecs.shape[1] != cand_vecs.shape[1]:
        raise EmbeddingError(
            f"embedding dimension mismatch: {ref_vecs.shape[1]} vs {cand_vecs.shape[1]}"
        )
    sims = np.clip(ref_vecs @ cand_vecs.T, 0.0, 1.0)
    recall = float(sims.max(axis=1).mean())
    precision = float(sims.max(axis=0).mean())
    return PrfScore.from_pr(precision, recall)


MetricFn = Callable[[str, str], PrfScore]


@dataclass(frozen=True)
class AsModeResult:
    """Per-attribute metric application: F1 per attribute, plus the mean.

    ``per_attribute`` maps attribute key -> F1, or None where both sides were
    absent (skipped). ``mean`` is None when every attribute was skipped.
    """

    per_attribute: dict[str, float | None]
    mean: float | None

    @property
    def all_skipped(self) -> bool:
        return self.mean is None


def as_mode(metric: MetricFn, ref: StructuredSummary, cand: StructuredSummary) -> AsModeResult:
    """Apply a metric attribute-by-attribute over two structured summaries.

    Both-absent attributes are skipped; one-absent attributes score 0 (the
    content is missing on one side); both-present attributes get the metric's
    F1. The mean runs over non-skipped attributes only.
    """
    if tuple(ref.values.keys()) != tuple(cand.values.keys()):
        raise ValueError("structured summaries are governed by different ontologies")
    per_attribute: dict[str, float | None] = {}
    scored: list[float] = []
    for key in ref.values:
        rv, cv = ref.values[key], cand.values[key]
        if rv is None and cv is None:
            per_attribute[key] = None
            continue
        value = 0.0 if (rv is None or cv is None) else metric(rv, cv).f1
        per_attribute[key] = value
        scored.append(value)
    mean = sum(scored) / len(scored) if scored else None
    return AsModeResult(per_attribute=per_attribute, mean=mean)
