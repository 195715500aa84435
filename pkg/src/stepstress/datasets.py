"""Bundled case-study datasets and dataset file I/O.

Dataset files are JSON objects {"plan": {...}, "counts": [...]} with the plan
keyed as in TestPlan.to_dict() and counts holding the per-interval failures
followed by the survivor count.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import TestPlan

__all__ = ["Dataset", "BUILTIN_DATASETS", "builtin_dataset", "load_dataset", "save_dataset"]


@dataclass(frozen=True)
class Dataset:
    name: str
    plan: TestPlan
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.counts) != self.plan.n_cells:
            raise ValueError(
                f"need {self.plan.n_cells} counts (intervals plus survivors), got {len(self.counts)}"
            )
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be nonnegative")
        if sum(self.counts) != self.plan.n_units:
            raise ValueError(
                f"counts sum to {sum(self.counts)} but the plan has {self.plan.n_units} units"
            )

    def counts_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=float)

    def to_dict(self) -> dict:
        return {"plan": self.plan.to_dict(), "counts": list(self.counts)}

    @classmethod
    def from_dict(cls, d: dict, name: str = "dataset") -> "Dataset":
        if "plan" not in d or "counts" not in d:
            raise ValueError("dataset JSON needs 'plan' and 'counts' keys")
        return cls(name=d.get("name", name), plan=TestPlan.from_dict(d["plan"]), counts=tuple(d["counts"]))


# Electronic components (Wang and Fei, 2003): 100 units at 100 C, raised to
# 150 C at 910 s, terminated at 1096 s; use temperature 25 C.  The original
# record lists raw failure times; the counts below bin them at the inspection
# grid.  Times recorded at the second stress level are measured from the
# stress change, so they are offset by 910 s before binning.
_ELECTRONIC = Dataset(
    name="electronic",
    plan=TestPlan(
        stress_levels=(100.0, 150.0),
        change_times=(910.0, 1096.0),
        inspection_times=(270.0, 430.0, 600.0, 910.0, 975.0, 1015.0, 1040.0, 1096.0),
        use_stress=25.0,
        n_units=100,
    ),
    counts=(9, 9, 5, 7, 6, 5, 4, 5, 50),
)

# Miniature light bulbs (Zhu, 2010, Rutgers reliability lab): 64 bulbs at
# 2.25 V, raised to 2.44 V at 96 h, stopped at 140 h; working voltage 2 V.
# Two entries in the published failure-time list run two values together
# ("14 17.95" and "41.11 42.63"); both are read as two separate failure
# times, which is what makes the failure total 53 = 64 - 11 survivors.
_LIGHTBULBS = Dataset(
    name="lightbulbs",
    plan=TestPlan(
        stress_levels=(2.25, 2.44),
        change_times=(96.0, 140.0),
        inspection_times=(25.0, 50.0, 96.0, 110.0, 120.0, 140.0),
        use_stress=2.0,
        n_units=64,
    ),
    counts=(8, 13, 13, 6, 4, 9, 11),
)

BUILTIN_DATASETS = {"electronic": _ELECTRONIC, "lightbulbs": _LIGHTBULBS}


def builtin_dataset(name: str) -> Dataset:
    try:
        return BUILTIN_DATASETS[name]
    except KeyError:
        raise ValueError(
            f"unknown dataset {name!r}; built-ins: {', '.join(sorted(BUILTIN_DATASETS))}"
        ) from None


def load_dataset(source: str | Path) -> Dataset:
    """Load a builtin dataset by name or a JSON dataset file by path."""
    if isinstance(source, str) and source in BUILTIN_DATASETS:
        return BUILTIN_DATASETS[source]
    path = Path(source)
    if not path.exists():
        raise ValueError(f"{source!r} is neither a builtin dataset nor an existing file")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: line {e.lineno}: {e.msg}") from None
    return Dataset.from_dict(payload, name=path.stem)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dataset.to_dict(), indent=2) + "\n")
