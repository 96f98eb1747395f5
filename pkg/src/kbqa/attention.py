"""Aspect-conditioned attention over question tokens and candidate scoring.

Each candidate answer exposes four aspects (entity, relation path, types,
context). Per aspect, every token state is scored against the aspect
embedding through ``tanh([state ; aspect]) . w + b``, softmax-normalized into
attention weights, and the weighted token sum becomes the aspect-specific
question vector; the candidate's score sums the question-vector/aspect dot
products. The fixed-vector variant replaces the four question vectors with
one whole-question vector, for the no-attention baselines.

Because the tanh is elementwise, each logit splits into a token term
``w[:d] . tanh(state)`` plus an aspect term that is constant across tokens,
and the softmax removes the constant: the resulting weights are identical for
all four aspects (and the offset b is inert). The production scorer exploits
that identity and computes one shared attention distribution per question;
``attention_weights``/``score`` keep the literal per-aspect form as the
reference path, and the two agree to float tolerance by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .encoder import EncodedQuestion
from .kb import CandidateAnswer

ASPECT_LABELS = ("entity", "relation", "type", "context")

# instrumentation: bumped on every attention computation so tests can assert
# the no-attention modes never reach these code paths
counters = {"attention_weights": 0, "shared_attention": 0}


def reset_counters() -> None:
    for key in counters:
        counters[key] = 0


@dataclass
class AttentionParams:
    w: Tensor  # (2d,)
    bias: Tensor  # scalar

    def tensors(self):
        yield "attention.w", self.w
        yield "attention.bias", self.bias


def init_attention(rng: np.random.Generator, dim: int, scale: float = 0.08,
                   dtype=np.float32) -> AttentionParams:
    return AttentionParams(
        w=ag.parameter(rng.uniform(-scale, scale, (2 * dim,)).astype(dtype), "attention.w"),
        bias=ag.parameter(np.asarray(rng.uniform(-scale, scale), dtype=dtype), "attention.bias"),
    )


@dataclass
class AspectEmbeddings:
    """Four d-vectors for one candidate; list aspects average their members."""

    entity: Tensor
    relation: Tensor
    types: Tensor
    context: Tensor

    def as_pairs(self):
        return zip(ASPECT_LABELS, (self.entity, self.relation, self.types, self.context))


def aspect_embeddings(candidate: CandidateAnswer, table: Tensor) -> AspectEmbeddings:
    """Look up and average the candidate's aspect members in the KB table."""
    return AspectEmbeddings(
        entity=ag.pool_rows(table, [candidate.answer_entity.id]),
        relation=ag.pool_rows(table, [r.id for r in candidate.relation_path]),
        types=ag.pool_rows(table, [t.id for t in candidate.types]),
        context=ag.pool_rows(table, [c.id for c in candidate.context]),
    )


def attention_weights(states: Tensor, aspect: Tensor, params: AttentionParams) -> Tensor:
    """Softmax over per-token relevance logits for one aspect (reference path)."""
    counters["attention_weights"] += 1
    return ag.softmax(ag.att_logits(states, aspect, params.w, params.bias))


def shared_attention(encoded: EncodedQuestion, params: AttentionParams) -> tuple[Tensor, Tensor]:
    """The aspect-independent attention weights and question vector.

    Computes softmax over ``w[:d] . tanh(state_j)``, i.e. the literal logits
    minus their aspect-constant shift, which the softmax would cancel anyway.
    Returns (weights, weighted state sum); one call serves every candidate and
    aspect of the question.
    """
    if encoded._shared is None:
        counters["shared_attention"] += 1
        states = encoded.hidden
        w_states = ag.segment(params.w, 0, states.shape[1])
        weights = ag.softmax(ag.matvec(ag.tanh(states), w_states))
        encoded._shared = (weights, ag.vecmat(weights, states))
    return encoded._shared


def aspect_question_vector(states: Tensor, weights: Tensor) -> Tensor:
    """Attention-weighted sum of token states."""
    total = float(weights.data.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"aspect_question_vector: weights sum to {total}, expected 1")
    return ag.vecmat(weights, states)


def score_attentive(encoded: EncodedQuestion, aspects: AspectEmbeddings,
                    params: AttentionParams) -> Tensor:
    """Attention-mode similarity score, literal per-aspect form."""
    parts = []
    for _, aspect_vec in aspects.as_pairs():
        weights = attention_weights(encoded.hidden, aspect_vec, params)
        q_vec = aspect_question_vector(encoded.hidden, weights)
        parts.append(ag.dot(q_vec, aspect_vec))
    return ag.add_n(*parts)


def score_attentive_shared(encoded: EncodedQuestion, aspects: AspectEmbeddings,
                           params: AttentionParams) -> Tensor:
    """Attention-mode score through the shared-weights identity (hot path)."""
    _, q_vec = shared_attention(encoded, params)
    summed = ag.add_n(aspects.entity, aspects.relation, aspects.types, aspects.context)
    return ag.dot(q_vec, summed)


def score_fixed(encoded: EncodedQuestion, aspects: AspectEmbeddings) -> Tensor:
    """Fixed-vector similarity score: one question vector for all aspects."""
    q_vec = encoded.fixed_vector()
    summed = ag.add_n(aspects.entity, aspects.relation, aspects.types, aspects.context)
    return ag.dot(q_vec, summed)


def score(encoded: EncodedQuestion, aspects: AspectEmbeddings,
          params: AttentionParams, use_attention: bool) -> Tensor:
    """Question/candidate similarity in either scoring mode (reference path)."""
    if use_attention:
        return score_attentive(encoded, aspects, params)
    q_vec = encoded.fixed_vector()
    parts = [ag.dot(q_vec, aspect_vec) for _, aspect_vec in aspects.as_pairs()]
    return ag.add_n(*parts)


def attention_matrix(encoded: EncodedQuestion, aspects: AspectEmbeddings,
                     params: AttentionParams) -> np.ndarray:
    """4 x n attention weights (one row per aspect), as plain floats."""
    rows = [
        attention_weights(encoded.hidden, aspect_vec, params).data
        for _, aspect_vec in aspects.as_pairs()
    ]
    return np.stack(rows)
