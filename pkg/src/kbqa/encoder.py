"""Question encoding: embedding lookup plus a (bi)directional LSTM.

Standard LSTM recurrence: sigmoid input/forget/output gates, tanh cell
candidate, hidden output ``o * tanh(c)``, no peepholes, zero initial states.
The bidirectional encoder runs one LSTM left-to-right and another
right-to-left and concatenates the two hidden states at each position.

Internally each step carries a packed [hidden ; cell] vector; the per-token
state matrix and the whole-question fixed vector are assembled lazily so the
cheap scoring modes never pay for tensors they do not read. Access them
inside the tape that produced the states to keep gradients flowing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor

GATE_ORDER = ("input", "forget", "output", "candidate")


@dataclass
class GateParams:
    wx: Tensor  # (hidden, input_dim)
    wh: Tensor  # (hidden, hidden)
    bias: Tensor  # (hidden,)


@dataclass
class LstmDirection:
    """Per-gate weights for one direction, in GATE_ORDER."""

    gates: tuple[GateParams, GateParams, GateParams, GateParams]

    @property
    def hidden_size(self) -> int:
        return self.gates[0].wx.shape[0]

    def tensors(self, prefix: str):
        for gate_name, gate in zip(GATE_ORDER, self.gates):
            yield f"{prefix}.{gate_name}.wx", gate.wx
            yield f"{prefix}.{gate_name}.wh", gate.wh
            yield f"{prefix}.{gate_name}.bias", gate.bias

    def stacked(self) -> tuple[Tensor, Tensor, Tensor]:
        """Gate weights stacked into (4h, d), (4h, h) and (4h,) tape tensors.

        The stack is memoized per tape: every encoding in one training batch
        reuses it, and the split gradients still reach the per-gate parameters.
        """
        tape = ag.active_tape()
        if tape is not None:
            cached = tape.memo.get(id(self))
            if cached is not None:
                return cached
        stacked = (
            ag.vstack(*(g.wx for g in self.gates)),
            ag.vstack(*(g.wh for g in self.gates)),
            ag.concat(*(g.bias for g in self.gates)),
        )
        if tape is not None:
            tape.memo[id(self)] = stacked
        return stacked


@dataclass
class EncodedQuestion:
    """Per-token encoder states; row j of ``hidden`` is [fwd_j ; bwd_j]."""

    fwd_packed: list[Tensor]
    bwd_packed: list[Tensor] | None
    hidden_size: int
    _hidden: Tensor | None = field(default=None, repr=False)
    _fixed: Tensor | None = field(default=None, repr=False)
    _shared: tuple | None = field(default=None, repr=False)

    @property
    def length(self) -> int:
        return len(self.fwd_packed)

    def forward_state(self, j: int) -> Tensor:
        return ag.segment(self.fwd_packed[j], 0, self.hidden_size)

    def backward_state(self, j: int) -> Tensor:
        return ag.segment(self.bwd_packed[j], 0, self.hidden_size)

    @property
    def hidden(self) -> Tensor:
        if self._hidden is None:
            if self.bwd_packed is None:
                rows = [self.forward_state(j) for j in range(self.length)]
                self._hidden = ag.stack_rows(*rows)
            else:
                self._hidden = ag.paired_states(self.fwd_packed, self.bwd_packed,
                                                self.hidden_size)
        return self._hidden

    def fixed_vector(self) -> Tensor:
        """Whole-question vector for the non-attention scoring modes."""
        if self._fixed is None:
            if self.bwd_packed is None:
                self._fixed = self.forward_state(self.length - 1)
            else:
                self._fixed = ag.concat(self.forward_state(self.length - 1),
                                        self.backward_state(0))
        return self._fixed


def init_direction(rng: np.random.Generator, input_dim: int, hidden: int,
                   prefix: str, scale: float = 0.08, dtype=np.float32) -> LstmDirection:
    """Gate weights drawn uniformly from [-scale, scale]."""
    gates = []
    for gate_name in GATE_ORDER:
        gates.append(GateParams(
            wx=ag.parameter(rng.uniform(-scale, scale, (hidden, input_dim)).astype(dtype),
                            f"{prefix}.{gate_name}.wx"),
            wh=ag.parameter(rng.uniform(-scale, scale, (hidden, hidden)).astype(dtype),
                            f"{prefix}.{gate_name}.wh"),
            bias=ag.parameter(rng.uniform(-scale, scale, (hidden,)).astype(dtype),
                              f"{prefix}.{gate_name}.bias"),
        ))
    return LstmDirection(gates=tuple(gates))


def embed_words(table: Tensor, token_ids: Sequence[int]) -> Tensor:
    """Rows of the word table for each token id, as an n x d matrix."""
    return ag.take_rows(table, token_ids)


def _run_packed(inputs: Tensor, params: LstmDirection, reverse: bool) -> list[Tensor]:
    n = inputs.shape[0]
    wx, wh, bias = params.stacked()
    hc = Tensor(np.zeros(2 * params.hidden_size, dtype=inputs.dtype))
    order = range(n - 1, -1, -1) if reverse else range(n)
    states: list[Tensor] = []
    for j in order:
        hc = ag.lstm_step(wx, inputs, wh, hc, bias, j)
        states.append(hc)
    if reverse:
        states.reverse()
    return states


def lstm_direction(inputs: Tensor, params: LstmDirection, reverse: bool = False) -> list[Tensor]:
    """Hidden states of one recurrence run over an n x d input matrix.

    With ``reverse`` the sequence is processed right-to-left and the returned
    list is re-aligned to the original positions, so entry j always belongs to
    token j (and depends on tokens j..n instead of 1..j).
    """
    hidden = params.hidden_size
    return [ag.segment(hc, 0, hidden) for hc in _run_packed(inputs, params, reverse)]


def bilstm_encode(inputs: Tensor, forward: LstmDirection, backward: LstmDirection) -> EncodedQuestion:
    """Concatenated forward/backward states per token."""
    return EncodedQuestion(
        fwd_packed=_run_packed(inputs, forward, reverse=False),
        bwd_packed=_run_packed(inputs, backward, reverse=True),
        hidden_size=forward.hidden_size,
    )


def lstm_encode(inputs: Tensor, forward: LstmDirection) -> EncodedQuestion:
    """Unidirectional encoding; the hidden size doubles to keep d columns."""
    return EncodedQuestion(
        fwd_packed=_run_packed(inputs, forward, reverse=False),
        bwd_packed=None,
        hidden_size=forward.hidden_size,
    )
