"""Per-step norm records produced by the integrators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .grid import Grid, c2_norm_proxy, l2_norm, min_value, sup_norm

COLUMNS = (
    "t",
    "sup_u",
    "min_u",
    "sup_v",
    "min_v",
    "l2_u",
    "l2_v",
    "c2proxy_u",
    "c2proxy_v",
    "picard_iters",
)

COMPLETED = "completed"
BLOWUP = "blowup"
SOLVER_FAILURE = "solver_failure"


class NormRecord(NamedTuple):
    t: float
    sup_u: float
    min_u: float
    sup_v: float
    min_v: float
    l2_u: float
    l2_v: float
    c2proxy_u: float
    c2proxy_v: float
    picard_iters: Optional[int] = None

    @classmethod
    def measure(cls, u, v, t: float, grid: Grid, picard_iters: Optional[int] = None) -> "NormRecord":
        with np.errstate(all="ignore"):
            return cls(
                float(t),
                sup_norm(u),
                min_value(u),
                sup_norm(v),
                min_value(v),
                l2_norm(u, grid),
                l2_norm(v, grid),
                c2_norm_proxy(u, grid),
                c2_norm_proxy(v, grid),
                picard_iters,
            )


@dataclass
class Termination:
    reason: str = COMPLETED
    time: float = 0.0
    message: str = ""


@dataclass
class NormTrace:
    records: list[NormRecord] = field(default_factory=list)
    termination: Termination = field(default_factory=Termination)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: NormRecord) -> None:
        if self.records and not record.t > self.records[-1].t:
            raise ValueError("trace times must be strictly increasing")
        self.records.append(record)

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(name)
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=float,
        )

    @property
    def completed(self) -> bool:
        return self.termination.reason == COMPLETED
