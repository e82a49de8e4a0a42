"""Sentence- and content-level response metrics.

BLEU here is per-order (B1 uses unigram precision only, B2 bigram precision
only) with clipped counts, a brevity penalty and no smoothing. Embedding
metrics skip tokens that have no vector.
"""
from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from dataclasses import dataclass, fields

import numpy as np

from .lexicon import ExtractionMode, FunctionLexicon, extract_content_sequence

log = logging.getLogger(__name__)


def ngrams(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def brevity_penalty(ref_len, hyp_len):
    if hyp_len == 0:
        return 0.0
    return min(1.0, math.exp(1.0 - ref_len / hyp_len))


def sentence_bleu(ref, hyp, n=1):
    """Order-``n`` modified precision times the brevity penalty, as a percentage."""
    if len(ref) == 0:
        raise ValueError("sentence_bleu: empty reference")
    hyp_grams = Counter(ngrams(hyp, n))
    total = sum(hyp_grams.values())
    if total == 0:
        return 0.0
    ref_grams = Counter(ngrams(ref, n))
    matched = sum(min(c, ref_grams[g]) for g, c in hyp_grams.items())
    return 100.0 * matched / total * brevity_penalty(len(ref), len(hyp))


class EmbeddingMode(enum.Enum):
    AVERAGE = "average"
    EXTREMA = "extrema"
    GREEDY = "greedy"


class EmbeddingTable:
    def __init__(self, vectors: dict, dim: int):
        self.vectors = vectors
        self.dim = dim

    def __contains__(self, token):
        return token in self.vectors

    def __getitem__(self, token):
        return self.vectors[token]

    def __len__(self):
        return len(self.vectors)

    def lookup(self, tokens):
        rows = [self.vectors[t] for t in tokens if t in self.vectors]
        if not rows:
            return np.zeros((0, self.dim))
        return np.stack(rows).astype(np.float64)


def load_embeddings(path, vocab=None) -> EmbeddingTable:
    """Read ``token v1 ... vD`` lines, keeping only tokens in ``vocab`` if given."""
    vectors, dim = {}, None
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise ValueError(f"{path}:{n}: expected {dim} values, found {len(values)}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                log.warning("%s:%d: malformed float; line skipped", path, n)
                continue
            if vocab is None or token in vocab:
                vectors[token] = vec
    return EmbeddingTable(vectors, dim or 0)


def _cosine(u, v):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(u @ v / (nu * nv))


def _extrema(m):
    idx = np.abs(m).argmax(axis=0)
    return m[idx, np.arange(m.shape[1])]


def _greedy_direction(a, b):
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    sims = (a @ b.T) / np.where(na * nb.T == 0, np.inf, na * nb.T)
    return float(sims.max(axis=1).mean())


def embedding_similarity(ref, hyp, table: EmbeddingTable, mode=EmbeddingMode.AVERAGE):
    mode = EmbeddingMode(mode)
    r, h = table.lookup(ref), table.lookup(hyp)
    if len(r) == 0 or len(h) == 0:
        log.warning("no embeddable token on one side; similarity set to 0")
        return 0.0
    if mode is EmbeddingMode.AVERAGE:
        score = _cosine(r.mean(axis=0), h.mean(axis=0))
    elif mode is EmbeddingMode.EXTREMA:
        score = _cosine(_extrema(r), _extrema(h))
    else:
        score = 0.5 * (_greedy_direction(r, h) + _greedy_direction(h, r))
    return 100.0 * score


def distinct_ngrams(corpus_hyps, n):
    return len({g for hyp in corpus_hyps for g in ngrams(hyp, n)})


def content_coverage(c_ref, c_hyp):
    ref_types = set(c_ref)
    if not ref_types:
        raise ValueError("content_coverage: empty reference content")
    return 100.0 * len(ref_types & set(c_hyp)) / len(ref_types)


@dataclass
class MetricReport:
    B1: float
    B2: float
    A_emb: float | None
    E_emb: float | None
    G_emb: float | None
    Dist_1: int
    Dist_2: int
    cB1: float
    cB2: float
    cA_emb: float | None
    cE_emb: float | None
    cG_emb: float | None
    cDist_1: int
    cDist_2: int
    cCoverage: float
    pairs: int = 0
    content_skipped: int = 0

    def lines(self):
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            key = f.name.replace("_emb", "-emb.").replace("_", "-")
            out.append(f"{key}: {value}" if isinstance(value, int) else f"{key}: {value:.2f}")
        return out

    def dumps(self):
        return "\n".join(self.lines()) + "\n"


def _mean(values):
    return float(np.mean(values)) if values else 0.0


def _embedding_scores(pairs, table):
    if table is None:
        return None, None, None
    scores = []
    for mode in (EmbeddingMode.AVERAGE, EmbeddingMode.EXTREMA, EmbeddingMode.GREEDY):
        scores.append(_mean([embedding_similarity(r, h, table, mode) for r, h in pairs]))
    return tuple(scores)


def evaluate_corpus(refs, hyps, lex: FunctionLexicon, table: EmbeddingTable | None = None) -> MetricReport:
    """Macro-averaged sentence and content-sequence metrics over aligned pairs.

    Content metrics (other than cDist) use only pairs whose reference has a
    non-empty content sequence; the number skipped is reported.
    """
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    if not refs:
        raise ValueError("evaluate_corpus: no pairs")
    mode = ExtractionMode.EVALUATION
    c_refs = [extract_content_sequence(r, lex, mode).lemmas for r in refs]
    c_hyps = [extract_content_sequence(h, lex, mode).lemmas for h in hyps]
    c_pairs = [(r, h) for r, h in zip(c_refs, c_hyps) if r]

    sent_pairs = [(r, h) for r, h in zip(refs, hyps) if r]
    a, e, g = _embedding_scores(sent_pairs, table)
    ca, ce, cg = _embedding_scores(c_pairs, table)
    return MetricReport(
        B1=_mean([sentence_bleu(r, h, 1) for r, h in sent_pairs]),
        B2=_mean([sentence_bleu(r, h, 2) for r, h in sent_pairs]),
        A_emb=a,
        E_emb=e,
        G_emb=g,
        Dist_1=distinct_ngrams(hyps, 1),
        Dist_2=distinct_ngrams(hyps, 2),
        cB1=_mean([sentence_bleu(r, h, 1) for r, h in c_pairs]),
        cB2=_mean([sentence_bleu(r, h, 2) for r, h in c_pairs]),
        cA_emb=ca,
        cE_emb=ce,
        cG_emb=cg,
        cDist_1=distinct_ngrams(c_hyps, 1),
        cDist_2=distinct_ngrams(c_hyps, 2),
        cCoverage=_mean([content_coverage(r, h) for r, h in c_pairs]),
        pairs=len(refs),
        content_skipped=len(refs) - len(c_pairs),
    )


def read_token_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f.read().splitlines()]
