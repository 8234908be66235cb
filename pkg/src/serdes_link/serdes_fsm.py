"""Serializer / deserializer FSMs.

Wire order: stream 0 first, streams ascending, each 32-bit word MSB first.
Deserializer framing starts at bit 0 of its input; there is no framing
protocol, so link-level alignment is left to the PRBS checker.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import STREAM_COUNT, WORD_BITS, ParallelFrame, as_bits

FRAME_BITS = STREAM_COUNT * WORD_BITS


@dataclass
class SerializerState:
    frame: ParallelFrame | None = None
    current_stream_index: int = 0
    bit_index: int = 0

    @property
    def frame_complete(self) -> bool:
        return self.frame is None

    def load(self, frame: ParallelFrame) -> None:
        if self.frame is not None:
            raise RuntimeError("previous frame not drained")
        self.frame = frame
        self.current_stream_index = 0
        self.bit_index = 0

    def next_bit(self) -> int:
        if self.frame is None:
            raise RuntimeError("no frame loaded")
        word = self.frame.streams[self.current_stream_index]
        bit = (word >> (WORD_BITS - 1 - self.bit_index)) & 1
        self.bit_index += 1
        if self.bit_index == WORD_BITS:
            self.bit_index = 0
            self.current_stream_index += 1
            if self.current_stream_index == STREAM_COUNT:
                self.current_stream_index = 0
                self.frame = None
        return bit


@dataclass
class DeserializerState:
    current_stream_index: int = 0
    bit_index: int = 0
    words: list[int] = field(default_factory=lambda: [0] * STREAM_COUNT)

    def push(self, bit: int) -> ParallelFrame | None:
        """Accept one bit; return a frame once 256 bits have arrived."""
        i = self.current_stream_index
        self.words[i] = (self.words[i] << 1) | (int(bit) & 1)
        self.bit_index += 1
        if self.bit_index < WORD_BITS:
            return None
        self.bit_index = 0
        self.current_stream_index += 1
        if self.current_stream_index < STREAM_COUNT:
            return None
        frame = ParallelFrame(tuple(self.words))
        self.current_stream_index = 0
        self.words = [0] * STREAM_COUNT
        return frame

    @property
    def pending_bits(self) -> int:
        return self.current_stream_index * WORD_BITS + self.bit_index


def serialize_fsm(frames: Iterable[ParallelFrame]) -> np.ndarray:
    """Bit-at-a-time reference path through SerializerState."""
    out = []
    ser = SerializerState()
    for frame in frames:
        ser.load(frame)
        while not ser.frame_complete:
            out.append(ser.next_bit())
    return np.array(out, dtype=np.uint8)


def deserialize_fsm(bits) -> tuple[list[ParallelFrame], int]:
    des = DeserializerState()
    frames = []
    for b in as_bits(bits):
        frame = des.push(b)
        if frame is not None:
            frames.append(frame)
    return frames, des.pending_bits


def serialize(frames: Sequence[ParallelFrame]) -> np.ndarray:
    """Frames to a serial bit array, 256 bits per frame."""
    if not len(frames):
        return np.zeros(0, dtype=np.uint8)
    words = np.array([f.streams for f in frames], dtype=">u4")
    return np.unpackbits(words.view(np.uint8)).astype(np.uint8)


def deserialize(bits) -> tuple[list[ParallelFrame], int]:
    """Every complete 256-bit group becomes a frame; returns ``(frames, leftover)``."""
    bits = as_bits(bits)
    n_frames = bits.size // FRAME_BITS
    leftover = bits.size - n_frames * FRAME_BITS
    packed = np.packbits(bits[:n_frames * FRAME_BITS]).view(">u4").reshape(n_frames, STREAM_COUNT)
    frames = [ParallelFrame(tuple(int(w) for w in row)) for row in packed]
    return frames, leftover
