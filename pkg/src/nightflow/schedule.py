"""Training-schedule configuration and deterministic mixture sampling.

A schedule is an ordered list of stages; each stage names the dataset
mixture it draws from, its optimizer hyper-parameters, and optionally
the earlier stage whose weights initialize it. Crop sizes are always
(height, width) — note the order.

Mixture sampling is specified to the bit: draws come from the Philox
counter-based generator keyed by the seed, mapped through
cumulative-weight inversion in the mixture's declared order, so the
same (mixture order, seed) reproduces the same id sequence on any
platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

#: Dataset ids accepted in mixtures.
DATASET_REGISTRY = {
    "C": "FlyingChairs",
    "W": "SynWoodScape",
    "S": "Sintel",
    "T": "FlyingThings3D",
    "K": "KITTI-2015",
    "H": "HD1K",
}

#: Optimizer settings of the reference glare-classifier training runs,
#: recorded for provenance; nothing in this package consumes them.
GLARE_CNN_OPTIMIZER = {
    "name": "adam",
    "lr": 1e-4,
    "beta1": 0.9,
    "beta2": 0.999,
    "epsilon": 1e-8,
    "epochs": 200,
    "loss": "cross_entropy",
}


@dataclass(frozen=True)
class StageConfig:
    """One training stage; ``mixture`` is an ordered (dataset_id, weight) list."""

    name: str
    mixture: tuple[tuple[str, float], ...]
    lr: float
    batch_size: int
    weight_decay: float
    crop_size: tuple[int, int]
    init_weights: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mixture", tuple((i, float(w)) for i, w in self.mixture))
        object.__setattr__(self, "crop_size", tuple(int(c) for c in self.crop_size))
        if not self.mixture:
            raise ValueError(f"stage {self.name!r}: empty mixture")
        for dataset_id, weight in self.mixture:
            if dataset_id not in DATASET_REGISTRY:
                raise ValueError(
                    f"stage {self.name!r}: unknown dataset id {dataset_id!r}"
                )
            if weight <= 0:
                raise ValueError(
                    f"stage {self.name!r}: weight for {dataset_id!r} must be positive"
                )
        total = sum(w for _, w in self.mixture)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"stage {self.name!r}: mixture weights sum to {total!r}")
        if self.lr <= 0 or self.weight_decay <= 0:
            raise ValueError(f"stage {self.name!r}: lr and weight_decay must be positive")
        if self.batch_size < 1:
            raise ValueError(f"stage {self.name!r}: batch_size must be >= 1")
        if len(self.crop_size) != 2 or min(self.crop_size) < 1:
            raise ValueError(f"stage {self.name!r}: bad crop_size {self.crop_size}")


@dataclass(frozen=True)
class Schedule:
    stages: tuple[StageConfig, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        seen: set[str] = set()
        for stage in self.stages:
            if stage.init_weights is not None and stage.init_weights not in seen:
                raise ValueError(
                    f"stage {stage.name!r}: init_weights {stage.init_weights!r} "
                    "does not reference an earlier stage"
                )
            seen.add(stage.name)

    def stage(self, name: str) -> StageConfig:
        for stage in self.stages:
            if stage.name == name:
                return stage
        raise KeyError(name)


def parse_schedule(text: str | dict) -> Schedule:
    """Parse and validate a schedule from JSON text (or a decoded document)."""
    doc = json.loads(text) if isinstance(text, str) else text
    stages = []
    for entry in doc["stages"]:
        stages.append(
            StageConfig(
                name=entry["name"],
                mixture=tuple((i, w) for i, w in entry["mixture"]),
                lr=entry["lr"],
                batch_size=entry["batch_size"],
                weight_decay=entry["weight_decay"],
                crop_size=tuple(entry["crop_size"]),
                init_weights=entry.get("init_weights"),
            )
        )
    return Schedule(tuple(stages))


def schedule_to_json(schedule: Schedule) -> dict:
    return {
        "stages": [
            {
                "name": s.name,
                "init_weights": s.init_weights,
                "mixture": [[i, w] for i, w in s.mixture],
                "lr": s.lr,
                "batch_size": s.batch_size,
                "weight_decay": s.weight_decay,
                "crop_size": list(s.crop_size),
            }
            for s in schedule.stages
        ]
    }


def load_schedule(path: str | Path) -> Schedule:
    return parse_schedule(Path(path).read_text())


def save_schedule(path: str | Path, schedule: Schedule) -> None:
    Path(path).write_text(json.dumps(schedule_to_json(schedule), indent=2) + "\n")


def standard_schedule() -> Schedule:
    """Four-stage curriculum: chairs, things, a Sintel mix, fisheye finetune."""
    return Schedule(
        (
            StageConfig("chairs", (("C", 1.0),), lr=4e-4, batch_size=6,
                        weight_decay=1e-4, crop_size=(368, 496)),
            StageConfig("things", (("T", 1.0),), lr=1.2e-4, batch_size=3,
                        weight_decay=1e-4, crop_size=(400, 720),
                        init_weights="chairs"),
            StageConfig("sintel", (("S", 0.67), ("T", 0.12), ("K", 0.13), ("H", 0.08)),
                        lr=1.2e-4, batch_size=3, weight_decay=1e-5,
                        crop_size=(368, 768), init_weights="things"),
            StageConfig("finetune", (("W", 1.0),), lr=1e-4, batch_size=3,
                        weight_decay=1e-5, crop_size=(600, 800),
                        init_weights="sintel"),
        )
    )


def joint_schedule() -> Schedule:
    """Single-stage alternative trained on all five datasets at once."""
    return Schedule(
        (
            StageConfig(
                "joint",
                (("W", 0.65), ("S", 0.17), ("T", 0.13), ("K", 0.03), ("H", 0.02)),
                lr=1e-4,
                batch_size=3,
                weight_decay=1e-5,
                crop_size=(368, 768),
            ),
        )
    )


def sample_mixture(
    mixture: tuple[tuple[str, float], ...], n: int, seed: int
) -> list[str]:
    """Draw ``n`` iid dataset ids from a mixture, bit-reproducibly.

    Uses Philox keyed by ``seed`` and inverts the cumulative weights in
    mixture order with a binary search.
    """
    mixture = tuple(mixture)
    if not mixture:
        raise ValueError("empty mixture")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    ids = [i for i, _ in mixture]
    weights = np.array([w for _, w in mixture], dtype=np.float64)
    if (weights <= 0).any():
        raise ValueError("mixture weights must be positive")
    cum = np.cumsum(weights)
    rng = np.random.Generator(np.random.Philox(key=seed))
    draws = rng.random(n)
    idx = np.minimum(np.searchsorted(cum, draws, side="right"), len(ids) - 1)
    return [ids[i] for i in idx]
