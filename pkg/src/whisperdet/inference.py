"""Utterance-level scores from per-frame posteriors."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyTrajectory


class ModuleKind(enum.Enum):
    LAST_FRAME = "last-frame"
    WINDOW_N = "window"
    MEAN = "mean"


@dataclass(frozen=True)
class InferenceModuleSpec:
    kind: ModuleKind = ModuleKind.MEAN
    window_n: int = 100
    ignore_last_k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModuleKind(self.kind))
        if self.window_n < 1 or self.ignore_last_k < 0:
            raise ValueError("need window_n >= 1 and ignore_last_k >= 0")

    @property
    def name(self):
        if self.kind is ModuleKind.WINDOW_N:
            base = f"window-{self.window_n}"
        else:
            base = self.kind.value
        return f"{base}-ignore-last-{self.ignore_last_k}" if self.ignore_last_k else base

    def __str__(self):
        return self.name


_NAME = re.compile(r"^(last-frame|mean|window-(\d+))(?:-ignore-last-(\d+))?$")


def parse_module(name):
    """Parse names like ``mean``, ``last-frame`` or ``window-100-ignore-last-50``."""
    m = _NAME.match(str(name).strip().lower())
    if not m:
        raise ConfigError(f"unknown inference module {name!r}")
    ignore = int(m.group(3) or 0)
    if m.group(2):
        return InferenceModuleSpec(ModuleKind.WINDOW_N, int(m.group(2)), ignore)
    kind = ModuleKind.LAST_FRAME if m.group(1) == "last-frame" else ModuleKind.MEAN
    return InferenceModuleSpec(kind, ignore_last_k=ignore)


# the four result builders compared in the study
STUDY_MODULES = tuple(parse_module(n) for n in (
    "last-frame", "window-100-ignore-last-50", "mean-ignore-last-50", "mean"))


@dataclass(frozen=True)
class UtteranceScore:
    score: float
    module_used: InferenceModuleSpec
    frames_considered: int


def build_result(traj, spec=InferenceModuleSpec()):
    """Aggregate a posterior trajectory into one score.

    The last ``ignore_last_k`` frames are dropped first, clamped so that at
    least one frame remains.
    """
    p = np.asarray(getattr(traj, "p_whisper", traj), dtype=np.float64)
    if p.size == 0:
        raise EmptyTrajectory("cannot score an empty trajectory")
    k = min(spec.ignore_last_k, p.size - 1)
    eff = p[:p.size - k]
    if spec.kind is ModuleKind.LAST_FRAME:
        used = eff[-1:]
    elif spec.kind is ModuleKind.WINDOW_N:
        used = eff[-spec.window_n:]
    else:
        used = eff
    score = float(used[-1]) if used.size == 1 else float(used.mean())
    # floating-point means can stray an ulp outside the data range
    score = min(max(score, float(used.min())), float(used.max()))
    return UtteranceScore(score, spec, int(used.size))
