"""Relation pooling and the per-subtype classification heads.

Each subtype pools the final-layer features of its own relation set (a mean
over the selected input rows) and feeds one linear head. The joint loss is
the unweighted mean of the active heads' cross-entropies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import numgrad as ng
from .taxonomy import SubtypeDescriptor


class HeadParams:
    """One linear classifier per subtype, keyed by subtype."""

    def __init__(self, subtypes: Sequence[SubtypeDescriptor], d: int, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        self.heads: dict[str, tuple[ng.Node, ng.Node]] = {}
        for st in subtypes:
            limit = np.sqrt(6.0 / (d + st.num_classes))
            self.heads[st.key] = (
                ng.parameter(rng.uniform(-limit, limit, size=(d, st.num_classes)),
                             name=f"head.{st.key}.weight"),
                ng.parameter(np.zeros((1, st.num_classes)), name=f"head.{st.key}.bias"),
            )

    def named_parameters(self) -> Iterator[tuple[str, ng.Node]]:
        for key, (w, b) in self.heads.items():
            yield w.name, w
            yield b.name, b


@dataclass
class Prediction:
    subtype: str
    logits: np.ndarray          # (num_classes,)
    predicted_class: int        # argmax, lowest index wins ties
    pooled: np.ndarray          # (d,)


def relation_pool(
    g_final: ng.Node, pool_indices: Mapping[str, tuple[int, ...]]
) -> dict[str, ng.Node]:
    """Mean of the final input-node rows selected by each relation set."""
    return {key: ng.mean_rows(g_final, idx) for key, idx in pool_indices.items()}


def classify(pooled: ng.Node, head: tuple[ng.Node, ng.Node]) -> tuple[ng.Node, int]:
    w, b = head
    logits = ng.add(ng.matmul(pooled, w), b)
    return logits, int(np.argmax(logits.value[0]))


def joint_loss(
    logits_map: Mapping[str, ng.Node],
    labels: Mapping[str, int],
    active_keys: Sequence[str],
) -> tuple[ng.Node, dict[str, float]]:
    """Unweighted mean of the active subtypes' cross-entropies."""
    if not active_keys:
        raise ValueError("joint_loss: no active subtypes")
    per_subtype: dict[str, float] = {}
    total: ng.Node | None = None
    for key in active_keys:
        if key not in labels:
            raise ValueError(f"joint_loss: missing label for subtype {key!r}")
        loss = ng.cross_entropy_logits(logits_map[key], labels[key])
        per_subtype[key] = float(loss.value[0, 0])
        total = loss if total is None else ng.add(total, loss)
    return ng.scale(total, 1.0 / len(active_keys)), per_subtype


def predict_sample(
    g_final: ng.Node,
    pool_indices: Mapping[str, tuple[int, ...]],
    heads: HeadParams,
) -> dict[str, Prediction]:
    out = {}
    for key, idx in pool_indices.items():
        pooled = ng.mean_rows(g_final, idx)
        logits, pred = classify(pooled, heads.heads[key])
        out[key] = Prediction(
            subtype=key,
            logits=logits.value[0].copy(),
            predicted_class=pred,
            pooled=pooled.value[0].copy(),
        )
    return out


def prediction_dump(
    village_id: str,
    predictions: Mapping[str, Prediction],
    class_names: Mapping[str, Sequence[str]],
) -> dict:
    """JSON-ready record: per-subtype logits, class name, pooled norm."""
    return {
        "village_id": village_id,
        "subtypes": {
            key: {
                "logits": [float(v) for v in p.logits],
                "predicted_class": p.predicted_class,
                "predicted_name": list(class_names[key])[p.predicted_class],
                "pooled_norm": float(np.linalg.norm(p.pooled)),
            }
            for key, p in predictions.items()
        },
    }
