"""Deterministic line drawings of molecule graphs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from PIL import Image, ImageDraw

from services.molecule_generator import MoleculeGraph

BACKGROUND = 255
INK = 0
DOUBLE_BOND_OFFSET = 3
DOUBLE_BOND_SHRINK = 0.15
GLYPH_WIDTH = 5
GLYPH_HEIGHT = 7
CARBON_BOX = 3

# 5x7 bitmap font, one string per row.
GLYPHS: Dict[str, Tuple[str, ...]] = {
    "C": (".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."),
    "N": ("#...#", "##..#", "#.#.#", "#.#.#", "#..##", "#...#", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "l": (".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),
}

Box = Tuple[int, int, int, int]
Segment = Tuple[Tuple[int, int], Tuple[int, int]]


@dataclass(frozen=True)
class RenderedMolecule:
    """The drawing plus where each atom and second bond line landed."""

    graph: MoleculeGraph
    size: int
    image: np.ndarray
    atom_pixels: Tuple[Tuple[int, int], ...]
    glyph_boxes: Dict[int, Box] = field(default_factory=dict)
    double_bond_lines: Dict[int, Segment] = field(default_factory=dict)

    def atom_box(self, atom: int) -> Box:
        """Glyph box for labelled atoms, a small square around carbon vertices."""
        if atom in self.glyph_boxes:
            return self.glyph_boxes[atom]
        x, y = self.atom_pixels[atom]
        return (x - CARBON_BOX, y - CARBON_BOX, x + CARBON_BOX, y + CARBON_BOX)


def _to_pixel(point: Tuple[float, float], size: int) -> Tuple[int, int]:
    x, y = point
    return int(round(x * (size - 1))), int(round(y * (size - 1)))


def _second_line(a: Tuple[int, int], b: Tuple[int, int]) -> Segment:
    dx, dy = b[0] - a[0], b[1] - a[1]
    length = math.hypot(dx, dy) or 1.0
    nx, ny = -dy / length * DOUBLE_BOND_OFFSET, dx / length * DOUBLE_BOND_OFFSET
    start = (a[0] + dx * DOUBLE_BOND_SHRINK + nx, a[1] + dy * DOUBLE_BOND_SHRINK + ny)
    end = (b[0] - dx * DOUBLE_BOND_SHRINK + nx, b[1] - dy * DOUBLE_BOND_SHRINK + ny)
    return (int(round(start[0])), int(round(start[1]))), (int(round(end[0])), int(round(end[1])))


def _glyph_box(symbol: str, center: Tuple[int, int]) -> Box:
    width = len(symbol) * GLYPH_WIDTH + (len(symbol) - 1)
    left = center[0] - width // 2
    top = center[1] - GLYPH_HEIGHT // 2
    return left - 1, top - 1, left + width, top + GLYPH_HEIGHT


def _stamp(canvas: np.ndarray, symbol: str, box: Box) -> None:
    left, top = box[0] + 1, box[1] + 1
    height, width = canvas.shape
    for k, char in enumerate(symbol):
        rows = GLYPHS[char]
        x0 = left + k * (GLYPH_WIDTH + 1)
        for dy, row in enumerate(rows):
            for dx, cell in enumerate(row):
                x, y = x0 + dx, top + dy
                if cell == "#" and 0 <= x < width and 0 <= y < height:
                    canvas[y, x] = INK


def render(mol: MoleculeGraph, size: int) -> RenderedMolecule:
    """White canvas, 1-px black bonds, 5x7 labels for non-carbon atoms.

    Byte output is a pure function of (mol, size).
    """
    img = Image.new("L", (size, size), color=BACKGROUND)
    draw = ImageDraw.Draw(img)
    pixels = tuple(_to_pixel(point, size) for point in mol.coords)

    doubles: Dict[int, Segment] = {}
    for index, (i, j, order) in enumerate(mol.bonds):
        draw.line([pixels[i], pixels[j]], fill=INK, width=1)
        if order == 2:
            segment = _second_line(pixels[i], pixels[j])
            draw.line(list(segment), fill=INK, width=1)
            doubles[index] = segment

    boxes: Dict[int, Box] = {}
    for atom, symbol in enumerate(mol.atoms):
        if symbol == "C":
            continue
        box = _glyph_box(symbol, pixels[atom])
        draw.rectangle(box, fill=BACKGROUND)
        boxes[atom] = box

    canvas = np.array(img, dtype=np.uint8)
    for atom, box in boxes.items():
        _stamp(canvas, mol.atoms[atom], box)

    return RenderedMolecule(
        graph=mol,
        size=size,
        image=canvas,
        atom_pixels=pixels,
        glyph_boxes=boxes,
        double_bond_lines=doubles,
    )
