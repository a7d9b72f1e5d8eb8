"""JSON-serialisable tester reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .core import format_number

__all__ = ["SPARSE", "FAR", "INCONCLUSIVE", "TesterReport", "jsonable"]

SPARSE = "s-sparse"
FAR = "far-from-T-sparse"
INCONCLUSIVE = "inconclusive"


def jsonable(obj):
    """Recursively convert Fractions to ``"a/b"`` strings and tuples to lists."""
    if isinstance(obj, Fraction):
        return format_number(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalar
        return obj.item()
    return obj


@dataclass
class TesterReport:
    """Verdict plus every intermediate quantity behind it.

    All fields hold JSON-native values so that ``from_json(to_json())``
    reproduces the report exactly.
    """

    tester: str
    verdict: str
    parameters: dict = field(default_factory=dict)
    phases: list = field(default_factory=list)
    samples_used: int = 0
    seed: int | None = None
    wall_time: float = 0.0
    diagnostics: str = ""

    def __post_init__(self):
        self.parameters = jsonable(self.parameters)
        self.phases = jsonable(self.phases)

    @property
    def accepted(self) -> bool:
        return self.verdict == SPARSE

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_json(cls, text: str) -> "TesterReport":
        return cls(**json.loads(text))

    def comparable(self) -> dict:
        """The report without wall-clock times, nested ones included (for determinism checks)."""

        def strip(obj):
            if isinstance(obj, dict):
                return {k: strip(v) for k, v in obj.items() if k != "wall_time"}
            if isinstance(obj, list):
                return [strip(v) for v in obj]
            return obj

        return strip(self.to_dict())


TesterReport.__test__ = False  # name starts with "Test"
