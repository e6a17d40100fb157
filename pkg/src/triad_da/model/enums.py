#!/usr/bin/env python3
"""
Model selection enums shared by the integrator, the filter and the CLI.
"""

from enum import Enum


class ModelKind(Enum):
    """Triad model variants. DETERMINISTIC equals either stochastic model with b = 0."""
    DETERMINISTIC = "det"
    HST = "hst"
    EST = "est"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        """Accept a ModelKind, its short value ("det", "hst", "est") or its name."""
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        for kind in cls:
            if text.lower() in (kind.value, kind.name.lower()):
                return kind
        raise ValueError(f"Unknown model '{value}'. Expected one of: det, hst, est")

    @property
    def stochastic(self) -> bool:
        return self is not ModelKind.DETERMINISTIC

    @property
    def label(self) -> str:
        return "Deterministic" if self is ModelKind.DETERMINISTIC else self.name


# Column order used for every per-mode quantity
MODE_NAMES = ("k", "p", "q")
