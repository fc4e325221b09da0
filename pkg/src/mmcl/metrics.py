"""Ranking metrics, subgroup breakdowns, and embedding-alignment accuracy."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError, DegenerateInputError, EPS


@dataclass
class MetricsRecord:
    task: str
    auroc: float
    auprc: float
    seed: int
    group_key: str = None
    label_group: str = None


def _as_arrays(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ContractError(f"scores {scores.shape} vs labels {labels.shape}")
    return scores, labels


def auroc(scores, labels):
    """Mann-Whitney AUROC: probability a random positive outranks a random
    negative, ties counted 1/2."""
    scores, labels = _as_arrays(scores, labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInputError("AUROC needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = ranks[pos].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auprc(scores, labels):
    """Average precision: sum over descending distinct-score groups of
    precision times the recall increment (no interpolation)."""
    scores, labels = _as_arrays(scores, labels)
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise DegenerateInputError("AUPRC needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    ap = 0.0
    tp = fp = 0
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[j + 1] == s[i]:
            j += 1
        group_tp = int((y[i:j + 1] == 1).sum())
        tp += group_tp
        fp += (j - i + 1) - group_tp
        if group_tp:
            ap += (group_tp / n_pos) * (tp / (tp + fp))
        i = j + 1
    return ap


def groupwise(metric_fn, scores, labels, groups):
    """Apply a metric per group; groups whose data violates the metric's
    preconditions are skipped, not errored. Returns (per_group, skipped)."""
    scores, labels = _as_arrays(scores, labels)
    groups = np.asarray(groups)
    per_group = {}
    skipped = []
    for g in sorted(set(groups.tolist()), key=str):
        mask = groups == g
        try:
            per_group[g] = metric_fn(scores[mask], labels[mask])
        except DegenerateInputError:
            skipped.append(g)
    return per_group, skipped


def label_group_aggregate(per_label_metrics, grouping):
    """Unweighted mean of per-label metrics within each label group."""
    missing = [lbl for lbl in per_label_metrics if lbl not in grouping]
    if missing:
        raise ContractError(f"labels not mapped to a group: {missing}")
    sums, counts = {}, {}
    for lbl, value in per_label_metrics.items():
        g = grouping[lbl]
        sums[g] = sums.get(g, 0.0) + value
        counts[g] = counts.get(g, 0) + 1
    return {g: sums[g] / counts[g] for g in sums}


@dataclass
class AlignmentCorpus:
    """Pooled embedding entries: one per (patient, modality) pair."""

    entries: list = field(default_factory=list)  # (patient_id, modality_id, vector)

    def add(self, patient_id, modality_id, vector):
        self.entries.append((patient_id, modality_id, np.asarray(vector, dtype=np.float64)))

    def validate(self):
        seen = set()
        for pid, mid, vec in self.entries:
            if (pid, mid) in seen:
                raise ContractError(f"duplicate entry for ({pid}, {mid})")
            seen.add((pid, mid))
            if np.linalg.norm(vec) <= EPS:
                raise DegenerateInputError(f"zero-norm embedding for ({pid}, {mid})")


def top5_alignment_accuracy(corpus):
    """Fraction of entries whose 5 nearest cosine neighbors (self excluded,
    ties broken by entry order) include another entry of the same patient."""
    corpus.validate()
    entries = corpus.entries
    if len(entries) < 7:
        raise ContractError("need at least 7 entries for 5 neighbors plus self")
    mat = np.stack([vec for _, _, vec in entries])
    mat = mat / np.linalg.norm(mat, axis=1, keepdims=True)
    sim = mat @ mat.T
    pid_index = {}
    pids = np.array([pid_index.setdefault(pid, len(pid_index)) for pid, _, _ in entries],
                    dtype=np.int64)
    hits = kernels.top5_same_patient(sim, pids)
    return hits / len(entries)
