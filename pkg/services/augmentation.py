"""Label-preserving image corruptions."""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np
from PIL import Image, ImageDraw

from models.schemas import AugmentParams
from services.rasterizer import BACKGROUND, INK, RenderedMolecule, render
from utils.rng import SplitMix64

MIN_STROKE = 4


def salt_and_pepper(image: np.ndarray, density: float, gen: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Set each pixel to 0 or 255 with probability ``density``; also return the hit mask."""
    hit = gen.random(image.shape) < density
    values = np.where(gen.random(image.shape) < 0.5, INK, BACKGROUND).astype(np.uint8)
    out = image.copy()
    out[hit] = values[hit]
    return out, hit


def _erase(image: np.ndarray, box: Tuple[int, int, int, int]) -> np.ndarray:
    height, width = image.shape
    left, top, right, bottom = box
    out = image.copy()
    out[max(top, 0) : min(bottom + 1, height), max(left, 0) : min(right + 1, width)] = BACKGROUND
    return out


def _strokes(image: np.ndarray, count: int, rng: SplitMix64) -> np.ndarray:
    img = Image.fromarray(image)
    draw = ImageDraw.Draw(img)
    size = image.shape[0]
    longest = max(MIN_STROKE, size // 8)
    for _ in range(count):
        x = rng.next_below(size)
        y = rng.next_below(size)
        length = rng.next_range(MIN_STROKE, longest)
        angle = rng.next_float() * 2.0 * math.pi
        end = (int(round(x + length * math.cos(angle))), int(round(y + length * math.sin(angle))))
        draw.line([(x, y), end], fill=INK, width=1)
    return np.array(img, dtype=np.uint8)


def augment(rendered: RenderedMolecule, rng: SplitMix64, params: AugmentParams) -> np.ndarray:
    """Apply each corruption independently under ``rng``; all-zero params are identity.

    Order: double-to-single bond, atom drop, artifact strokes, salt-and-pepper.
    """
    image = rendered.image.copy()

    doubles = sorted(rendered.double_bond_lines)
    if doubles and rng.next_float() < params.double_to_single:
        bond = doubles[rng.next_below(len(doubles))]
        image = render(rendered.graph.with_bond_order(bond, 1), rendered.size).image

    atoms = len(rendered.graph.atoms)
    if atoms and rng.next_float() < params.atom_drop:
        image = _erase(image, rendered.atom_box(rng.next_below(atoms)))

    if params.artifact_strokes > 0:
        count = rng.next_range(0, params.artifact_strokes)
        if count:
            image = _strokes(image, count, rng)

    if params.sp_density > 0.0:
        gen = np.random.default_rng(rng.next_u64())
        image, _ = salt_and_pepper(image, params.sp_density, gen)

    return image
