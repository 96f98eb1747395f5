"""The trainable model: embedding tables, LSTM weights, attention weights.

A model owns every parameter tensor plus the vocabularies its ids refer to,
and knows how to encode a question and score a candidate under its configured
mode. Scoring modes mirror the ablation ladder: unidirectional or
bidirectional encoder, fixed-vector or attention scoring, with or without the
interleaved graph-embedding phase.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import attention as att
from . import autograd as ag
from . import encoder as enc
from .autograd import Tensor
from .kb import CandidateAnswer, KbStore
from .qa import Vocabulary

INIT_SCALE = 0.08


class ModeError(RuntimeError):
    """Operation not available under the model's scoring mode."""


class Mode(enum.Enum):
    LSTM = "lstm"
    BILSTM = "bilstm"
    BILSTM_ATT = "bilstm-att"
    BILSTM_GKI = "bilstm-gki"
    BILSTM_ATT_GKI = "bilstm-att-gki"

    @property
    def bidirectional(self) -> bool:
        return self is not Mode.LSTM

    @property
    def uses_attention(self) -> bool:
        return self in (Mode.BILSTM_ATT, Mode.BILSTM_ATT_GKI)

    @property
    def uses_gki(self) -> bool:
        return self in (Mode.BILSTM_GKI, Mode.BILSTM_ATT_GKI)

    @classmethod
    def from_string(cls, value: str) -> "Mode":
        for mode in cls:
            if mode.value == value:
                return mode
        raise ValueError(f"unknown mode {value!r}; choose from {[m.value for m in cls]}")


@dataclass
class Model:
    mode: Mode
    dim: int
    word_vocab: Vocabulary
    resource_meta: list[tuple[str, str]]  # (surface, kind) per KB vocabulary id
    word_table: Tensor  # (len(word_vocab), dim)
    kb_table: Tensor  # (len(resource_meta), dim)
    lstm_forward: enc.LstmDirection
    lstm_backward: enc.LstmDirection | None
    attention: att.AttentionParams

    @classmethod
    def build(cls, mode: Mode, dim: int, word_vocab: Vocabulary, store: KbStore,
              seed, dtype=np.float32) -> "Model":
        """Fresh model with every weight uniform in [-INIT_SCALE, INIT_SCALE].

        The unidirectional mode uses a full-width hidden state so that its
        question vector stays d-dimensional; the bidirectional modes use d/2
        per direction and concatenate.
        """
        if dim <= 0 or dim % 2 != 0:
            raise ValueError(f"embedding dimension must be positive and even, got {dim}")
        rng = np.random.default_rng(seed)
        word_table = ag.parameter(
            rng.uniform(-INIT_SCALE, INIT_SCALE, (len(word_vocab), dim)).astype(dtype),
            "word_table",
        )
        kb_table = ag.parameter(
            rng.uniform(-INIT_SCALE, INIT_SCALE, (store.vocab_size, dim)).astype(dtype),
            "kb_table",
        )
        hidden = dim if mode is Mode.LSTM else dim // 2
        forward = enc.init_direction(rng, dim, hidden, "lstm.forward", INIT_SCALE, dtype)
        backward = None
        if mode.bidirectional:
            backward = enc.init_direction(rng, dim, hidden, "lstm.backward", INIT_SCALE, dtype)
        attention = att.init_attention(rng, dim, INIT_SCALE, dtype)
        return cls(
            mode=mode,
            dim=dim,
            word_vocab=word_vocab,
            resource_meta=[(r.surface, r.kind) for r in store.resources],
            word_table=word_table,
            kb_table=kb_table,
            lstm_forward=forward,
            lstm_backward=backward,
            attention=attention,
        )

    # -- parameters ---------------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [("word_table", self.word_table), ("kb_table", self.kb_table)]
        out.extend(self.lstm_forward.tensors("lstm.forward"))
        if self.lstm_backward is not None:
            out.extend(self.lstm_backward.tensors("lstm.backward"))
        out.extend(self.attention.tensors())
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    # -- forward ------------------------------------------------------------

    def encode(self, token_ids) -> enc.EncodedQuestion:
        x = enc.embed_words(self.word_table, token_ids)
        if self.lstm_backward is None:
            return enc.lstm_encode(x, self.lstm_forward)
        return enc.bilstm_encode(x, self.lstm_forward, self.lstm_backward)

    def candidate_aspects(self, candidate: CandidateAnswer) -> att.AspectEmbeddings:
        return att.aspect_embeddings(candidate, self.kb_table)

    def score_candidate(self, encoded: enc.EncodedQuestion,
                        candidate: CandidateAnswer) -> Tensor:
        """Production scoring path; equals the reference ``attention.score``.

        The four aspect lookups collapse into one fused pool-and-sum, and in
        the attention modes the question vector is the shared-attention one
        (see the identity documented in the attention module).
        """
        groups = (
            [candidate.answer_entity.id],
            [r.id for r in candidate.relation_path],
            [t.id for t in candidate.types],
            [c.id for c in candidate.context],
        )
        summed = ag.pool_group_sum(self.kb_table, groups)
        if self.mode.uses_attention:
            _, q_vec = att.shared_attention(encoded, self.attention)
        else:
            q_vec = encoded.fixed_vector()
        return ag.dot(q_vec, summed)

    def attention_matrix(self, encoded: enc.EncodedQuestion,
                         candidate: CandidateAnswer) -> np.ndarray:
        if not self.mode.uses_attention:
            raise ModeError(
                f"attention weights are not defined in mode {self.mode.value!r}; "
                "train with an attention mode to inspect them"
            )
        return att.attention_matrix(encoded, self.candidate_aspects(candidate), self.attention)

    # -- maintenance --------------------------------------------------------

    def normalize_tables(self) -> None:
        """Unit-normalize every nonzero row of both embedding tables."""
        self.word_table.data = ag.l2_normalize_rows(self.word_table).data
        self.kb_table.data = ag.l2_normalize_rows(self.kb_table).data

    def check_store(self, store: KbStore) -> None:
        """Fail fast when a store's vocabulary does not match this model's ids."""
        current = [(r.surface, r.kind) for r in store.resources]
        if current != self.resource_meta:
            raise ValueError(
                "knowledge base vocabulary does not match the checkpoint "
                f"({len(current)} vs {len(self.resource_meta)} resources); "
                "evaluate against the triple file the model was trained on"
            )
