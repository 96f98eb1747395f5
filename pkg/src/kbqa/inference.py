"""Margin-based answer selection, averaged F1, and attention heat maps.

A question's answer set is every candidate entity whose score lies strictly
within the margin below the best score; an entity reachable along several
paths keeps its best-scoring path. Evaluation averages per-question F1 over
all questions, counting unanswerable ones (no candidates, skipped at load) as
zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kb import CandidateSet, KbStore, ResourceId
from .model import Model, ModeError
from .qa import QaSplit, Question, tokenize

HEAT_LABELS = ("entity", "relation", "type", "context")


@dataclass
class AnswerSet:
    question_id: str
    members: list[tuple[ResourceId, float]]  # best score first
    s_max: float
    no_candidates: bool = False

    def entity_ids(self) -> set[int]:
        return {res.id for res, _ in self.members}


def select_answers(scores: dict[int, float], margin: float) -> tuple[set[int], float]:
    """Entities whose score is strictly within ``margin`` of the maximum."""
    if not scores:
        raise ValueError("select_answers: empty score map")
    if margin <= 0:
        raise ValueError(f"select_answers: margin must be positive, got {margin}")
    s_max = max(scores.values())
    return {eid for eid, s in scores.items() if s_max - s < margin}, s_max


def answer(question: Question, cands: CandidateSet, model: Model, margin: float) -> AnswerSet:
    """Score every candidate and keep the within-margin entities."""
    if not cands.candidates:
        return AnswerSet(question.id, [], s_max=0.0, no_candidates=True)
    encoded = model.encode(question.token_ids)
    best: dict[int, float] = {}
    resources: dict[int, ResourceId] = {}
    for cand in cands.candidates:
        eid = cand.answer_entity.id
        s = float(model.score_candidate(encoded, cand).data)
        if eid not in best or s > best[eid]:
            best[eid] = s
            resources[eid] = cand.answer_entity
    chosen, s_max = select_answers(best, margin)
    members = sorted(((resources[eid], best[eid]) for eid in chosen),
                     key=lambda pair: (-pair[1], pair[0].id))
    return AnswerSet(question.id, members, s_max=s_max)


def f1(predicted: set, gold: set) -> float:
    """Per-question F1; zero when the prediction is empty or disjoint from gold."""
    if not gold:
        raise ValueError("f1: gold set must be non-empty")
    hits = len(set(predicted) & set(gold))
    if not predicted or hits == 0:
        return 0.0
    precision = hits / len(predicted)
    recall = hits / len(gold)
    return 2 * precision * recall / (precision + recall)


@dataclass
class ReportRow:
    question_id: str
    predicted: list[str]
    gold: list[str]
    precision: float
    recall: float
    f1: float


@dataclass
class EvalResult:
    mean_f1: float
    rows: list[ReportRow]


def evaluate(split: QaSplit, candidates: dict[str, CandidateSet], model: Model,
             store: KbStore, margin: float) -> EvalResult:
    """Averaged F1 over every question in the split, skipped ones included."""
    if not split.questions and not split.skipped:
        raise ValueError("evaluate: split is empty")
    rows = []
    for q in split.questions:
        ans = answer(q, candidates[q.id], model, margin)
        pred_ids = ans.entity_ids()
        hits = len(pred_ids & q.gold_ids)
        precision = hits / len(pred_ids) if pred_ids else 0.0
        recall = hits / len(q.gold_ids)
        rows.append(ReportRow(
            question_id=q.id,
            predicted=[res.surface for res, _ in ans.members],
            gold=sorted(store.resources[i].surface for i in q.gold_ids),
            precision=precision,
            recall=recall,
            f1=f1(pred_ids, q.gold_ids),
        ))
    for qid, _reason in split.skipped:
        rows.append(ReportRow(qid, [], [], 0.0, 0.0, 0.0))
    rows.sort(key=lambda r: r.question_id)
    mean = sum(r.f1 for r in rows) / len(rows)
    return EvalResult(mean_f1=mean, rows=rows)


def write_report(result: EvalResult, path: str | Path) -> None:
    lines = ["question_id\tpredicted\tgold\tprecision\trecall\tf1"]
    for r in result.rows:
        lines.append(
            f"{r.question_id}\t{'|'.join(r.predicted)}\t{'|'.join(r.gold)}"
            f"\t{r.precision:.6f}\t{r.recall:.6f}\t{r.f1:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# attention heat maps
# ---------------------------------------------------------------------------

@dataclass
class HeatMap:
    tokens: list[str]
    labels: tuple[str, ...]
    weights: np.ndarray  # (4, n), rows sum to 1


def heatmap(question: Question, candidate, model: Model) -> HeatMap:
    """Attention weights of one candidate over the question tokens."""
    if not model.mode.uses_attention:
        raise ModeError(
            f"heat maps need attention weights, but the model mode is "
            f"{model.mode.value!r}; retrain with an attention mode"
        )
    encoded = model.encode(question.token_ids)
    weights = model.attention_matrix(encoded, candidate)
    tokens = tokenize(question.text) or ["<unk>"]
    return HeatMap(tokens=tokens, labels=HEAT_LABELS, weights=weights)


def write_heatmap_grid(hm: HeatMap, path: str | Path) -> None:
    """Tab-separated numeric grid: one labeled row per aspect."""
    lines = ["aspect\t" + "\t".join(hm.tokens)]
    for label, row in zip(hm.labels, hm.weights):
        lines.append(label + "\t" + "\t".join(f"{v:.6f}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cell_fill(value: float) -> str:
    v = min(max(float(value), 0.0), 1.0)
    # white at 0 to a saturated blue at 1
    r = round(255 + (31 - 255) * v)
    g = round(255 + (119 - 255) * v)
    b = round(255 + (180 - 255) * v)
    return f"rgb({r},{g},{b})"


def write_heatmap_svg(hm: HeatMap, path: str | Path, cell_w: int = 72, cell_h: int = 32) -> None:
    """Deterministic SVG with tokens across the top and aspects down the side."""
    label_w, header_h = 96, 28
    n = len(hm.tokens)
    width = label_w + cell_w * n
    height = header_h + cell_h * len(hm.labels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="12">'
    ]
    for j, tok in enumerate(hm.tokens):
        x = label_w + j * cell_w + cell_w / 2
        parts.append(f'<text x="{x:g}" y="{header_h - 9}" text-anchor="middle">{tok}</text>')
    for i, label in enumerate(hm.labels):
        y = header_h + i * cell_h
        parts.append(f'<text x="{label_w - 6}" y="{y + cell_h / 2 + 4:g}" text-anchor="end">{label}</text>')
        for j in range(n):
            x = label_w + j * cell_w
            v = hm.weights[i, j]
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" '
                f'fill="{_cell_fill(v)}" stroke="#888" stroke-width="0.5"/>'
            )
            parts.append(
                f'<text x="{x + cell_w / 2:g}" y="{y + cell_h / 2 + 4:g}" '
                f'text-anchor="middle">{v:.3f}</text>'
            )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
