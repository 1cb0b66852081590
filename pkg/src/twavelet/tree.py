"""Gated binary decomposition tree over dyadic frequency intervals."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator

from .errors import InvalidInput
from .signal import FrequencyBand
from .spectral import SubbandSet, dyadic_index, partition_errors


@dataclass(frozen=True)
class GateTreeNode:
    band: FrequencyBand
    gate: int
    depth: int
    index: int
    children: tuple[GateTreeNode, GateTreeNode] | None = None
    unit_id: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.gate == 0

    @property
    def low(self) -> GateTreeNode:
        assert self.children is not None
        return self.children[0]

    @property
    def high(self) -> GateTreeNode:
        assert self.children is not None
        return self.children[1]

    def to_dict(self) -> dict:
        d: dict = {"band": [self.band.f_start_hz, self.band.f_end_hz], "gate": self.gate}
        if self.gate:
            d["unit_id"] = self.unit_id
            d["children"] = [c.to_dict() for c in self.children]
        else:
            d["children"] = []
        return d


@dataclass(frozen=True)
class GateTree:
    root: GateTreeNode
    f_max_hz: float
    height: int = field(init=False)
    leaf_order: tuple[FrequencyBand, ...] = field(init=False)

    def __post_init__(self) -> None:
        leaves = [n for n in self.nodes() if n.gate == 0]
        object.__setattr__(self, "height", max(n.depth for n in leaves))
        object.__setattr__(self, "leaf_order", tuple(n.band for n in sorted(leaves, key=lambda n: n.band.f_start_hz)))

    def nodes(self) -> Iterator[GateTreeNode]:
        """Breadth-first traversal, low child before high child."""
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            yield node
            if node.children:
                queue.extend(node.children)

    def split_nodes(self) -> list[GateTreeNode]:
        return [n for n in self.nodes() if n.gate == 1]

    @property
    def unit_count(self) -> int:
        return len(self.split_nodes())

    @property
    def unit_ids(self) -> list[int]:
        return [n.unit_id for n in self.split_nodes()]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GateTree):
            return NotImplemented
        return self.f_max_hz == other.f_max_hz and self.root == other.root

    def __hash__(self) -> int:
        return hash((self.f_max_hz, self.root))

    def to_json(self) -> str:
        doc = {
            "f_max_hz": self.f_max_hz,
            "height": self.height,
            "unit_count": self.unit_count,
            "root": self.root.to_dict(),
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> GateTree:
        try:
            doc = json.loads(text)
            f_max = float(doc["f_max_hz"]) if "f_max_hz" in doc else float(doc["root"]["band"][1])
            configured: dict[tuple[int, int], int] = {}

            def walk(d: dict) -> None:
                band = FrequencyBand(float(d["band"][0]), float(d["band"][1]))
                key = dyadic_index(band, f_max)
                if key is None:
                    raise InvalidInput(f"tree node {band} is not dyadic")
                configured[key] = int(d["gate"])
                kids = d.get("children") or []
                if (configured[key] == 1) != (len(kids) == 2):
                    raise InvalidInput(f"node {band}: gate {configured[key]} with {len(kids)} children")
                for k in kids:
                    walk(k)

            walk(doc["root"])
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            if isinstance(exc, InvalidInput):
                raise
            raise InvalidInput(f"malformed tree file: {exc}") from None
        if (0, 0) not in configured:
            raise InvalidInput("tree root must span [0, F)")
        return _assemble(configured, f_max)


def _band_of(key: tuple[int, int], f_max: float) -> FrequencyBand:
    depth, k = key
    w = f_max / 2**depth
    return FrequencyBand(k * w, (k + 1) * w)


def _assemble(configured: dict[tuple[int, int], int], f_max: float) -> GateTree:
    """Materialize configured nodes from the root down, assigning BFS unit ids."""
    split_keys = []
    queue = deque([(0, 0)])
    while queue:
        key = queue.popleft()
        if configured.get(key) == 1:
            split_keys.append(key)
            d, k = key
            queue.extend([(d + 1, 2 * k), (d + 1, 2 * k + 1)])
    unit_of = {key: i for i, key in enumerate(split_keys)}

    def make(key: tuple[int, int]) -> GateTreeNode:
        gate = configured[key]
        d, k = key
        children = None
        if gate == 1:
            children = (make((d + 1, 2 * k)), make((d + 1, 2 * k + 1)))
        return GateTreeNode(_band_of(key, f_max), gate, d, k, children, unit_of.get(key))

    return GateTree(make((0, 0)), f_max)


def build_tree(q: SubbandSet) -> GateTree:
    """Bottom-up marking, top-down completion and pruning over a full dyadic tree."""
    problems = partition_errors(q.bands, q.f_max_hz)
    if problems:
        raise InvalidInput("; ".join(problems))
    f_max = q.f_max_hz
    leaves = [dyadic_index(b, f_max) for b in q.bands]
    configured: dict[tuple[int, int], int] = {}
    # bottom-up: leaves gate 0, every ancestor on the root path gate 1
    for key in leaves:
        configured[key] = 0
    for d, k in leaves:
        while d > 0:
            d, k = d - 1, k // 2
            if configured.get((d, k)) == 0:
                raise InvalidInput(f"not a partition: {_band_of((d, k), f_max)} nests another band")
            configured[(d, k)] = 1
    # top-down: unconfigured children of split nodes become leaves
    height = max(d for d, _ in leaves)
    for depth in range(height + 1):
        for (d, k), gate in list(configured.items()):
            if d == depth and gate == 1:
                for child in ((d + 1, 2 * k), (d + 1, 2 * k + 1)):
                    configured.setdefault(child, 0)
    # pruning is implicit: only configured nodes are materialized
    return _assemble(configured, f_max)


def degenerate_tree(f_max_hz: float) -> GateTree:
    """Single bypass root: no decomposition at all."""
    return GateTree(GateTreeNode(FrequencyBand(0.0, f_max_hz), 0, 0, 0), f_max_hz)


def leaf_bands(tree: GateTree) -> list[FrequencyBand]:
    out: list[FrequencyBand] = []

    def inorder(node: GateTreeNode) -> None:
        if node.gate == 0:
            out.append(node.band)
            return
        inorder(node.low)
        inorder(node.high)

    inorder(tree.root)
    return out


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    missing: tuple[FrequencyBand, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_against(tree: GateTree, q: SubbandSet) -> ValidationReport:
    """Check that every band of ``q`` is a leaf of ``tree``."""
    have = {dyadic_index(b, tree.f_max_hz) for b in leaf_bands(tree)}
    missing = tuple(b for b in q.bands if dyadic_index(b, tree.f_max_hz) not in have or dyadic_index(b, tree.f_max_hz) is None)
    return ValidationReport(not missing, missing)


def subbands_of(tree: GateTree) -> SubbandSet:
    bands = leaf_bands(tree)
    return SubbandSet(tuple(bands), tuple(0.0 for _ in bands), tree.f_max_hz)
