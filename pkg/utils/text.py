"""String distance utilities."""

from __future__ import annotations

from typing import List


def levenshtein(a: str, b: str) -> int:
    """Minimal single-character insertions, deletions and substitutions turning a into b.

    Two-row dynamic program over characters (not tokens).
    """
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a

    previous: List[int] = list(range(len(b) + 1))
    for i, char_a in enumerate(a, 1):
        current = [i]
        for j, char_b in enumerate(b, 1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (char_a != char_b),
                )
            )
        previous = current
    return previous[-1]
