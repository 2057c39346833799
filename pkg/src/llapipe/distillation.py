"""Offline knowledge mining over the experience pool.

Two products feed the advisor: frequent operator subsequences found by
PrefixSpan over high-reward pipelines, and contextual IF/THEN rules that tie
a dataset-property predicate to an operator sequence with an empirical
confidence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_model import (
    F_FRAC_CATEGORICAL,
    F_FRAC_MISSING,
    F_FRAC_OUTLIER_CELLS,
    F_MEAN_ABS_CORRELATION,
    F_MEAN_ABS_SKEW,
    META_FEATURE_NAMES,
)
from .experience_pool import ExperiencePool


@dataclass(frozen=True)
class FrequentSequence:
    sequence: tuple[int, ...]
    support: int
    mean_reward: float


@dataclass(frozen=True)
class Predicate:
    feature_index: int
    comparator: str  # ">" or "<="
    threshold: float

    def __post_init__(self):
        if self.comparator not in (">", "<="):
            raise ValueError("comparator must be '>' or '<='")

    def holds(self, state_vec: np.ndarray) -> bool:
        v = float(state_vec[self.feature_index])
        return v > self.threshold if self.comparator == ">" else v <= self.threshold

    def describe(self) -> str:
        return f"{META_FEATURE_NAMES[self.feature_index]} {self.comparator} {self.threshold:g}"


@dataclass(frozen=True)
class Rule:
    predicate: Predicate
    sequence: tuple[int, ...]
    confidence: float
    support: int


DEFAULT_PREDICATE_GRID: tuple[Predicate, ...] = (
    Predicate(F_MEAN_ABS_SKEW, ">", 1.0),
    Predicate(F_FRAC_MISSING, ">", 0.0),
    Predicate(F_FRAC_CATEGORICAL, ">", 0.0),
    Predicate(F_FRAC_OUTLIER_CELLS, ">", 0.05),
    Predicate(F_MEAN_ABS_CORRELATION, ">", 0.8),
)


def is_subsequence(sub: Sequence[int], seq: Sequence[int]) -> bool:
    """Order-preserving, gap-allowed containment."""
    it = iter(seq)
    return all(any(x == y for y in it) for x in sub)


def _prefixspan(db: list[tuple[int, ...]], min_support: int) -> list[tuple[tuple[int, ...], int]]:
    """All subsequences with support >= min_support via projected databases."""
    results: list[tuple[tuple[int, ...], int]] = []

    def recurse(projected: list[tuple[tuple[int, ...], int]], prefix: tuple[int, ...]):
        counts: dict[int, int] = {}
        for seq, start in projected:
            for item in set(seq[start:]):
                counts[item] = counts.get(item, 0) + 1
        for item in sorted(counts):
            support = counts[item]
            if support < min_support:
                continue
            new_prefix = prefix + (item,)
            results.append((new_prefix, support))
            new_projected = []
            for seq, start in projected:
                for pos in range(start, len(seq)):
                    if seq[pos] == item:
                        new_projected.append((seq, pos + 1))
                        break
            recurse(new_projected, new_prefix)

    recurse([(seq, 0) for seq in db], ())
    return results


def mine_sequences(
    pool: ExperiencePool, min_support: int = 2, reward_quantile: float = 0.0
) -> list[FrequentSequence]:
    """Frequent subsequences of the pipelines whose final reward reaches the
    given quantile of pool rewards. Sorted by support desc, length desc,
    then lexicographic operator ids."""
    if min_support < 1:
        raise ValueError("min_support must be >= 1")
    if not 0.0 <= reward_quantile < 1.0:
        raise ValueError("reward_quantile must be in [0, 1)")
    if not pool.entries:
        return []
    rewards = np.array([e.r_final for e in pool.entries])
    cutoff = float(np.quantile(rewards, reward_quantile))
    selected = [e for e in pool.entries if e.r_final >= cutoff]
    db = [e.pipeline.ops for e in selected if len(e.pipeline.ops) > 0]
    mined = _prefixspan(db, min_support)
    out = []
    for seq, support in mined:
        supporting = [
            e.r_final for e in selected if is_subsequence(seq, e.pipeline.ops)
        ]
        out.append(FrequentSequence(seq, support, float(np.mean(supporting))))
    out.sort(key=lambda fs: (-fs.support, -len(fs.sequence), fs.sequence))
    return out


def mine_rules(
    pool: ExperiencePool,
    predicate_grid: Sequence[Predicate] = DEFAULT_PREDICATE_GRID,
    min_support: int = 2,
    high_reward_threshold: float = 0.8,
    min_confidence: float = 0.6,
) -> list[Rule]:
    """Contextual rules: for each (predicate, frequent sequence) pair, the
    confidence is the fraction of matching+containing entries whose final
    reward reaches the high-reward threshold."""
    if not pool.entries:
        return []
    frequent = mine_sequences(pool, min_support=min_support, reward_quantile=0.0)
    rules = []
    for predicate in predicate_grid:
        matching = [
            e for e in pool.entries if predicate.holds(e.d_meta_vec)
        ]
        if not matching:
            continue
        for fs in frequent:
            covered = [e for e in matching if is_subsequence(fs.sequence, e.pipeline.ops)]
            support = len(covered)
            if support < min_support:
                continue
            high = sum(1 for e in covered if e.r_final >= high_reward_threshold)
            confidence = high / support
            if confidence >= min_confidence:
                rules.append(Rule(predicate, fs.sequence, confidence, support))
    rules.sort(
        key=lambda r: (
            -r.confidence,
            -r.support,
            r.predicate.feature_index,
            r.sequence,
        )
    )
    return rules


def knowledge_lookup(rules: Sequence[Rule], state_vec: np.ndarray) -> list[Rule]:
    """Rules whose predicate holds on the state vector, confidence descending."""
    hits = [r for r in rules if r.predicate.holds(state_vec)]
    hits.sort(key=lambda r: -r.confidence)
    return hits


def save_rules(rules: Sequence[Rule], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rules:
            fh.write(
                json.dumps(
                    {
                        "feature_index": r.predicate.feature_index,
                        "comparator": r.predicate.comparator,
                        "threshold": r.predicate.threshold,
                        "sequence": list(r.sequence),
                        "confidence": r.confidence,
                        "support": r.support,
                    }
                )
                + "\n"
            )


def load_rules(path: str) -> list[Rule]:
    rules = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip() == "":
                continue
            record = json.loads(line)
            rules.append(
                Rule(
                    Predicate(
                        int(record["feature_index"]),
                        str(record["comparator"]),
                        float(record["threshold"]),
                    ),
                    tuple(int(o) for o in record["sequence"]),
                    float(record["confidence"]),
                    int(record["support"]),
                )
            )
    return rules
