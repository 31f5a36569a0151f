"""Receptive-field arithmetic for sequential conv stacks.

Tracks, per layer, the receptive-field size, the stride (jump) between
neighbouring units in input pixels, and the input-space centre of unit 0.
Used to verify that a filter-bank tap layer sees patches of the configured
geometry, and to map a spatial response location back to its input patch.
"""

from __future__ import annotations

from dataclasses import dataclass

ConvSpec = tuple[int, int, int]  # (kernel, stride, padding)


@dataclass(frozen=True)
class FieldInfo:
    rf: int  # receptive-field side length in input pixels
    jump: int  # input pixels between adjacent units
    start: float  # input x/y coordinate of the centre of unit 0


def trace_fields(specs: list[ConvSpec]) -> list[FieldInfo]:
    """FieldInfo after each layer of a sequential conv stack."""
    rf, jump, start = 1, 1, 0.5
    out = []
    for k, s, p in specs:
        start = start + ((k - 1) / 2 - p) * jump
        rf = rf + (k - 1) * jump
        jump = jump * s
        out.append(FieldInfo(rf=rf, jump=jump, start=start))
    return out


def unit_patch(info: FieldInfo, row: int, col: int) -> tuple[float, float, float, float]:
    """Input-space box (x0, y0, x1, y1) seen by the unit at (row, col)."""
    cx = info.start + col * info.jump
    cy = info.start + row * info.jump
    half = info.rf / 2
    return (cx - half, cy - half, cx + half, cy + half)
