"""Experience storage with exact nearest-neighbor retrieval.

Each entry pairs a global summary (initial dataset meta-vector, complete
pipeline, final accuracy) with the step-wise trajectory, enabling retrieval
at both granularities. Search is an exact linear scan under squared L2;
ties resolve by insertion order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data_model import STATE_DIM
from .errors import CorruptRecord
from .operators import Pipeline


@dataclass(frozen=True)
class TrajectoryStep:
    state_vector: np.ndarray
    action: int
    reward: float

    def __post_init__(self):
        vec = np.asarray(self.state_vector, dtype=np.float64)
        if vec.shape != (STATE_DIM,):
            raise ValueError(f"state vector must have dimension {STATE_DIM}")
        object.__setattr__(self, "state_vector", vec)


@dataclass(frozen=True)
class ExperienceEntry:
    d_meta_vec: np.ndarray
    pipeline: Pipeline
    r_final: float
    trajectory: tuple[TrajectoryStep, ...]
    source_tag: str = ""
    created_episode: int = 0

    def __post_init__(self):
        vec = np.asarray(self.d_meta_vec, dtype=np.float64)
        if vec.shape != (STATE_DIM,):
            raise ValueError(f"meta vector must have dimension {STATE_DIM}")
        object.__setattr__(self, "d_meta_vec", vec)
        object.__setattr__(self, "trajectory", tuple(self.trajectory))
        if len(self.trajectory) != len(self.pipeline):
            raise ValueError("trajectory length must equal pipeline length")
        if not 0.0 <= self.r_final <= 1.0:
            raise ValueError("r_final must be in [0, 1]")


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 3  # metric is fixed: squared L2

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class GlobalHit:
    index: int
    distance: float
    entry: ExperienceEntry


@dataclass(frozen=True)
class StepHit:
    entry_index: int
    step_index: int
    distance: float
    step: TrajectoryStep


@dataclass
class ExperiencePool:
    entries: list[ExperienceEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def add_entry(self, entry: ExperienceEntry) -> None:
        self.entries.append(entry)

    def retrieve_global(self, query: np.ndarray, k: int = 3) -> list[GlobalHit]:
        """The k entries nearest to `query` by squared L2 over the global
        meta-vector, ascending distance, insertion order on ties."""
        if not self.entries:
            return []
        q = np.asarray(query, dtype=np.float64)
        mat = np.stack([e.d_meta_vec for e in self.entries])
        dist = ((mat - q) ** 2).sum(axis=1)
        order = np.argsort(dist, kind="stable")[:k]
        return [GlobalHit(int(i), float(dist[i]), self.entries[i]) for i in order]

    def retrieve_stepwise(self, query: np.ndarray, k: int = 3) -> list[StepHit]:
        """Same contract as retrieve_global over the union of all steps."""
        refs: list[tuple[int, int]] = []
        vecs: list[np.ndarray] = []
        for ei, entry in enumerate(self.entries):
            for si, step in enumerate(entry.trajectory):
                refs.append((ei, si))
                vecs.append(step.state_vector)
        if not refs:
            return []
        q = np.asarray(query, dtype=np.float64)
        mat = np.stack(vecs)
        dist = ((mat - q) ** 2).sum(axis=1)
        order = np.argsort(dist, kind="stable")[:k]
        out = []
        for i in order:
            ei, si = refs[i]
            out.append(
                StepHit(ei, si, float(dist[i]), self.entries[ei].trajectory[si])
            )
        return out

    def persist(self, path: str) -> None:
        """One JSON record per line; float fields survive a round-trip
        exactly (shortest-repr decimal encoding)."""
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(_entry_to_record(entry)) + "\n")

    @classmethod
    def load(cls, path: str) -> "ExperiencePool":
        """Parse a persisted pool. A broken line raises CorruptRecord that
        carries every entry parsed before it."""
        entries: list[ExperienceEntry] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.strip() == "":
                    continue
                try:
                    record = json.loads(line)
                    entries.append(_entry_from_record(record))
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorruptRecord(lineno, str(exc), entries) from exc
        return cls(entries)


def _entry_to_record(entry: ExperienceEntry) -> dict:
    return {
        "d_meta_vec": entry.d_meta_vec.tolist(),
        "pipeline": list(entry.pipeline.ops),
        "r_final": entry.r_final,
        "trajectory": [
            {"s_vec": s.state_vector.tolist(), "a": s.action, "r": s.reward}
            for s in entry.trajectory
        ],
        "source_tag": entry.source_tag,
        "created_episode": entry.created_episode,
    }


def _entry_from_record(record: dict) -> ExperienceEntry:
    steps = tuple(
        TrajectoryStep(np.array(s["s_vec"]), int(s["a"]), float(s["r"]))
        for s in record["trajectory"]
    )
    return ExperienceEntry(
        d_meta_vec=np.array(record["d_meta_vec"]),
        pipeline=Pipeline(tuple(record["pipeline"])),
        r_final=float(record["r_final"]),
        trajectory=steps,
        source_tag=str(record.get("source_tag", "")),
        created_episode=int(record.get("created_episode", 0)),
    )
