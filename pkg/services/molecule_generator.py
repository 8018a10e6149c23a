"""Random small molecule graphs and their mini-InChI labels.

Graphs are connected trees over C, N, O, S and Cl with at most two extra
ring-closing bonds, laid out on a jittered hexagonal lattice. Labels carry an
InChI-shaped header, a Hill-ordered formula and a connectivity layer; they are
not canonical chemical InChI.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from collections import Counter, deque
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Set, Tuple

from utils.rng import SplitMix64

VALENCE: Dict[str, int] = {"C": 4, "N": 3, "O": 2, "S": 2, "Cl": 1}

# Weights out of 100, drawn with next_below(100).
ELEMENT_WEIGHTS: Tuple[Tuple[str, int], ...] = (("C", 60), ("N", 14), ("O", 14), ("S", 6), ("Cl", 6))

MAX_ATOMS = 13
MAX_CHORDS = 2
DOUBLE_BOND_PROBABILITY = 0.2
JITTER = 0.15
MAX_BOND_LENGTH = 0.22

_HEX_STEPS = ((1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1))

Bond = Tuple[int, int, int]


@dataclass(frozen=True)
class MoleculeGraph:
    """Atoms, bonds (i < j, order 1 or 2) and unit-box layout coordinates."""

    atoms: Tuple[str, ...]
    bonds: Tuple[Bond, ...]
    coords: Tuple[Tuple[float, float], ...]

    def neighbors(self, atom: int) -> List[int]:
        return sorted(j if i == atom else i for i, j, _ in self.bonds if atom in (i, j))

    def degree(self, atom: int) -> int:
        return sum(1 for i, j, _ in self.bonds if atom in (i, j))

    def bond_order_sum(self, atom: int) -> int:
        return sum(order for i, j, order in self.bonds if atom in (i, j))

    def hydrogens(self, atom: int) -> int:
        return max(0, VALENCE[self.atoms[atom]] - self.bond_order_sum(atom))

    def with_bond_order(self, bond_index: int, order: int) -> "MoleculeGraph":
        bonds = list(self.bonds)
        i, j, _ = bonds[bond_index]
        bonds[bond_index] = (i, j, order)
        return MoleculeGraph(atoms=self.atoms, bonds=tuple(bonds), coords=self.coords)

    def is_connected(self) -> bool:
        if not self.atoms:
            return False
        seen = {0}
        queue = deque([0])
        while queue:
            for nxt in self.neighbors(queue.popleft()):
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return len(seen) == len(self.atoms)


def _pick_element(rng: SplitMix64) -> str:
    roll = rng.next_below(100)
    for symbol, weight in ELEMENT_WEIGHTS:
        if roll < weight:
            return symbol
        roll -= weight
    return "C"


def _layout(cells: List[Tuple[int, int]], rng: SplitMix64) -> Tuple[Tuple[float, float], ...]:
    raw = []
    for q, r in cells:
        x = q + r / 2.0 + (rng.next_float() * 2.0 - 1.0) * JITTER
        y = r * math.sqrt(3.0) / 2.0 + (rng.next_float() * 2.0 - 1.0) * JITTER
        raw.append((x, y))
    xs = [x for x, _ in raw]
    ys = [y for _, y in raw]
    span = max(max(xs) - min(xs), max(ys) - min(ys))
    scale = MAX_BOND_LENGTH if span == 0 else min(0.8 / span, MAX_BOND_LENGTH)
    cx = (max(xs) + min(xs)) / 2.0
    cy = (max(ys) + min(ys)) / 2.0
    return tuple((0.5 + (x - cx) * scale, 0.5 + (y - cy) * scale) for x, y in raw)


def _free(atoms: List[str], orders: List[int], index: int) -> int:
    return VALENCE[atoms[index]] - orders[index]


def gen_molecule(rng: SplitMix64, max_atoms: int = MAX_ATOMS) -> Tuple[MoleculeGraph, str]:
    """Draw one molecule and its label from ``rng``."""
    target = rng.next_range(1, max_atoms)
    atoms: List[str] = [_pick_element(rng)]
    orders: List[int] = [0]
    cells: List[Tuple[int, int]] = [(0, 0)]
    occupied: Dict[Tuple[int, int], int] = {(0, 0): 0}
    bonds: List[Bond] = []

    while len(atoms) < target:
        element = _pick_element(rng)
        parents = [i for i in range(len(atoms)) if _free(atoms, orders, i) > 0]
        if not parents:
            break
        offset = rng.next_below(len(parents))
        placed = False
        for k in range(len(parents)):
            parent = parents[(offset + k) % len(parents)]
            start = rng.next_below(len(_HEX_STEPS))
            for s in range(len(_HEX_STEPS)):
                dq, dr = _HEX_STEPS[(start + s) % len(_HEX_STEPS)]
                cell = (cells[parent][0] + dq, cells[parent][1] + dr)
                if cell in occupied:
                    continue
                child = len(atoms)
                atoms.append(element)
                orders.append(1)
                orders[parent] += 1
                cells.append(cell)
                occupied[cell] = child
                bonds.append((parent, child, 1))
                placed = True
                break
            if placed:
                break
        if not placed:
            break

    # Ring closures between lattice neighbours with spare valence.
    chords = rng.next_below(MAX_CHORDS + 1)
    bonded: Set[Tuple[int, int]] = {(i, j) for i, j, _ in bonds}
    for _ in range(chords):
        candidates = []
        for i, cell in enumerate(cells):
            for dq, dr in _HEX_STEPS:
                j = occupied.get((cell[0] + dq, cell[1] + dr))
                if j is None or j <= i or (i, j) in bonded:
                    continue
                if _free(atoms, orders, i) > 0 and _free(atoms, orders, j) > 0:
                    candidates.append((i, j))
        if not candidates:
            break
        i, j = sorted(candidates)[rng.next_below(len(candidates))]
        bonds.append((i, j, 1))
        bonded.add((i, j))
        orders[i] += 1
        orders[j] += 1

    for index, (i, j, _) in enumerate(bonds):
        upgrade = rng.next_float() < DOUBLE_BOND_PROBABILITY
        if upgrade and _free(atoms, orders, i) > 0 and _free(atoms, orders, j) > 0:
            bonds[index] = (i, j, 2)
            orders[i] += 1
            orders[j] += 1

    graph = MoleculeGraph(atoms=tuple(atoms), bonds=tuple(bonds), coords=_layout(cells, rng))
    return graph, label_for(graph)


def hill_formula(graph: MoleculeGraph) -> str:
    """C, then H, then the rest alphabetically; with no carbon, all alphabetical."""
    counts: Counter = Counter(graph.atoms)
    hydrogens = sum(graph.hydrogens(i) for i in range(len(graph.atoms)))
    if hydrogens:
        counts["H"] += hydrogens

    def term(symbol: str) -> str:
        n = counts[symbol]
        return symbol if n == 1 else f"{symbol}{n}"

    if "C" in counts:
        order = ["C"] + (["H"] if "H" in counts else []) + sorted(s for s in counts if s not in ("C", "H"))
    else:
        order = sorted(counts)
    return "".join(term(symbol) for symbol in order)


def _rank(keys: List[tuple]) -> List[int]:
    """Each entry's rank is the number of entries with a strictly smaller key."""
    ordered = sorted(keys)
    return [bisect_left(ordered, key) for key in keys]


def _refine(graph: MoleculeGraph, ranks: List[int]) -> List[int]:
    """Split rank classes by sorted neighbour (rank, bond order) until stable."""
    adjacency: List[List[Tuple[int, int]]] = [[] for _ in graph.atoms]
    for i, j, order in graph.bonds:
        adjacency[i].append((j, order))
        adjacency[j].append((i, order))
    while True:
        refined = _rank(
            [(ranks[a], tuple(sorted((ranks[n], order) for n, order in adjacency[a]))) for a in range(len(ranks))]
        )
        if len(set(refined)) == len(set(ranks)):
            return refined
        ranks = refined


def _discrete_rankings(graph: MoleculeGraph, ranks: List[int]) -> Iterator[List[int]]:
    """Every all-distinct ranking reachable by singling out members of the lowest tied class."""
    ranks = _refine(graph, ranks)
    sizes = Counter(ranks)
    tied = [rank for rank in sorted(sizes) if sizes[rank] > 1]
    if not tied:
        yield ranks
        return
    target = tied[0]
    for chosen in (atom for atom, rank in enumerate(ranks) if rank == target):
        # rank + 1 is free: a class of size k at rank r spans r..r+k-1.
        split = [rank + 1 if rank == target and atom != chosen else rank for atom, rank in enumerate(ranks)]
        yield from _discrete_rankings(graph, split)


def _bfs_numbering(graph: MoleculeGraph, ranks: List[int]) -> Dict[int, int]:
    root = ranks.index(0)
    numbers = {root: 1}
    queue = deque([root])
    while queue:
        atom = queue.popleft()
        for nxt in sorted(graph.neighbors(atom), key=ranks.__getitem__):
            if nxt not in numbers:
                numbers[nxt] = len(numbers) + 1
                queue.append(nxt)
    return numbers


def canonical_numbering(graph: MoleculeGraph) -> Dict[int, int]:
    """Atom index -> 1-based number, independent of the order atoms are stored in.

    Atoms start ranked by (degree, symbol, hydrogens) and classes are split
    by neighbour ranks. Ties left after that are tried one atom at a time;
    the numbering with the smallest connection string wins. Numbers follow
    BFS from the lowest-ranked atom.
    """
    initial = _rank([(graph.degree(a), symbol, graph.hydrogens(a)) for a, symbol in enumerate(graph.atoms)])
    candidates = (_bfs_numbering(graph, ranks) for ranks in _discrete_rankings(graph, initial))
    return min(candidates, key=lambda numbers: _connection_string(graph, numbers))


def connectivity(graph: MoleculeGraph) -> str:
    """Depth-first connection string over canonical numbers.

    ``a-b`` continues a chain, ``a(x,y)`` lists side branches and ring
    closures before the chain continues.
    """
    return _connection_string(graph, canonical_numbering(graph))


def _connection_string(graph: MoleculeGraph, numbers: Dict[int, int]) -> str:
    by_number = {number: atom for atom, number in numbers.items()}
    visited: Set[int] = set()
    emitted: Set[Tuple[int, int]] = set()

    def edge(a: int, b: int) -> Tuple[int, int]:
        return (a, b) if a < b else (b, a)

    def walk(atom: int, parent: Optional[int]) -> str:
        visited.add(atom)
        if parent is not None:
            emitted.add(edge(atom, parent))
        items: List[str] = []
        ordered = sorted(graph.neighbors(atom), key=lambda n: numbers[n])
        for nxt in ordered:
            if nxt != parent and nxt in visited and edge(atom, nxt) not in emitted:
                emitted.add(edge(atom, nxt))
                items.append(str(numbers[nxt]))
        for nxt in ordered:
            if nxt not in visited:
                items.append(walk(nxt, atom))
        text = str(numbers[atom])
        if not items:
            return text
        *branches, last = items
        if branches:
            text += "(" + ",".join(branches) + ")"
        return f"{text}-{last}"

    return walk(by_number[1], None)


def label_for(graph: MoleculeGraph) -> str:
    """Mini-InChI label; a pure function of the graph."""
    label = "InChI=1S/" + hill_formula(graph)
    if len(graph.atoms) > 1:
        label += "/c" + connectivity(graph)
    return label
