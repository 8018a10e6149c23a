"""Exact work counters for attention and encoder invocations."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator


@dataclass
class OpCounter:
    """Query-key pair evaluations, split by where attention ran.

    One qk-pair is one (query position, key position) score inside one
    attention sublayer; heads share the pair count.
    """

    encoder_qk_pairs: int = 0
    decoder_qk_pairs: int = 0
    encoder_calls: int = 0
    decode_steps: int = 0
    scope: str = "decoder"

    @property
    def qk_pairs(self) -> int:
        return self.encoder_qk_pairs + self.decoder_qk_pairs

    def add_qk_pairs(self, count: int) -> None:
        if count < 0:
            raise ValueError("qk-pair counts only grow")
        if self.scope == "encoder":
            self.encoder_qk_pairs += count
        else:
            self.decoder_qk_pairs += count

    @contextmanager
    def scoped(self, scope: str) -> Iterator["OpCounter"]:
        previous = self.scope
        self.scope = scope
        try:
            yield self
        finally:
            self.scope = previous

    def snapshot(self) -> dict:
        return {
            "encoder_qk_pairs": self.encoder_qk_pairs,
            "decoder_qk_pairs": self.decoder_qk_pairs,
            "encoder_calls": self.encoder_calls,
            "decode_steps": self.decode_steps,
        }
