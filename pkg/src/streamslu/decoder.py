"""Streaming greedy decoding of the lattice, plus spotting-time extraction.

A label fires the moment the per-row argmax establishes a new non-blank
symbol; repeats of the current symbol and blanks keep the evidence
accumulating silently. Folding `greedy_step` over rows equals collapsing the
per-row argmax sequence, so streamed and offline decodes agree exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def collapse(frame_labels, blank: int) -> list[int]:
    """Merge consecutive duplicates, then drop blanks."""
    out: list[int] = []
    prev = None
    for s in frame_labels:
        if s != prev and s != blank:
            out.append(int(s))
        prev = s
    return out


@dataclass
class DecoderState:
    """Per-stream decode state; emitted labels only ever grow."""

    prev: int | None = None
    emitted: list[int] = field(default_factory=list)
    emitted_frames: list[int] = field(default_factory=list)
    frame_index: int = 0


def greedy_step(row: np.ndarray, state: DecoderState, blank: int
                ) -> tuple[int | None, DecoderState]:
    """Consume one lattice row; returns (emitted label or None, state).

    Argmax ties break toward the lowest index.
    """
    a = int(np.argmax(row))
    emission = None
    if a != blank and a != state.prev:
        emission = a
        state.emitted.append(a)
        state.emitted_frames.append(state.frame_index)
    state.prev = a
    state.frame_index += 1
    return emission, state


def decode_offline(lattice: np.ndarray, blank: int) -> tuple[list[int], list[int]]:
    """Fold greedy_step over all rows from a fresh state; returns the label
    sequence and the lattice row index of each emission."""
    state = DecoderState()
    for row in np.asarray(lattice):
        greedy_step(row, state, blank)
    return state.emitted, state.emitted_frames


# ---------------------------------------------------------------------------
# Spotting positions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrameGeometry:
    """Maps output lattice steps back to input time. One output step spans
    `frame_skip * prod(reduction_factors)` input frames; an emission is
    timestamped at the end of its step's receptive field."""

    hop_ms: float = 10.0
    frame_skip: int = 3
    reduction_factors: tuple[int, ...] = (4, 4)

    @classmethod
    def from_config(cls, cfg) -> "FrameGeometry":
        return cls(hop_ms=cfg.hop_ms, frame_skip=cfg.frame_skip,
                   reduction_factors=tuple(cfg.reduction_factors))

    @property
    def frames_per_step(self) -> int:
        return self.frame_skip * math.prod(self.reduction_factors)

    def emit_ms(self, step: int) -> float:
        return (step + 1) * self.frames_per_step * self.hop_ms


@dataclass(frozen=True)
class SpottingEvent:
    label: int
    emit_frame: int  # output-lattice row index
    emit_ms: float
    boundary_ms: float  # ground truth: end of the intent's last voiced frame

    @property
    def relative_ms(self) -> float:
        """Negative when the label fired before its ground-truth boundary."""
        return self.emit_ms - self.boundary_ms


@dataclass
class SpottingResult:
    events: list[SpottingEvent]
    unmatched_emissions: int
    unmatched_boundaries: int


def spotting_positions(emissions, boundaries_ms, geometry: FrameGeometry
                       ) -> SpottingResult:
    """Pair emissions (label, lattice step) with ground-truth boundaries in
    order; leftovers on either side are counted as unmatched."""
    events = []
    for (label, step), boundary in zip(emissions, boundaries_ms):
        events.append(SpottingEvent(
            label=int(label), emit_frame=int(step),
            emit_ms=geometry.emit_ms(int(step)), boundary_ms=float(boundary),
        ))
    n = len(events)
    return SpottingResult(
        events=events,
        unmatched_emissions=len(emissions) - n,
        unmatched_boundaries=len(boundaries_ms) - n,
    )
