"""Class-embedding construction.

A class is described by up to three vector blocks, concatenated in a fixed
order:

  attribute  multi-hot over the (attribute, value) pairs of a schema
  taxonomy   binary root-to-leaf path indicator over a classification tree
  word       mean of word vectors for the tokens of the class's common name

All encoders are pure functions over immutable inputs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    IncompleteAssignmentError,
    IncompleteCoverageError,
    MissingNodeError,
    NonLeafError,
    OutOfVocabularyError,
    SchemaMismatchError,
)

SOURCE_ORDER = ("attribute", "taxonomy", "word")
WORD_POLICIES = ("strict", "skip-missing")

_TOKEN_SPLIT = re.compile(r"[\s/]+")


def tokenize_name(name: str) -> list[str]:
    """Lowercase and split on whitespace and '/' (names like 'Apple/Crabapple')."""
    return [t for t in _TOKEN_SPLIT.split(name.lower()) if t]


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered catalogue of attributes, each with an ordered list of legal values."""

    attributes: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        norm = tuple((str(name), tuple(str(v) for v in values))
                     for name, values in self.attributes)
        object.__setattr__(self, "attributes", norm)
        if not norm:
            raise SchemaMismatchError("schema must declare at least one attribute")
        names = [name for name, _ in norm]
        if len(set(names)) != len(names):
            raise SchemaMismatchError("attribute names must be unique")
        for name, values in norm:
            if len(values) < 2:
                raise SchemaMismatchError(
                    f"attribute {name!r} must offer at least two values")
            if len(set(values)) != len(values):
                raise SchemaMismatchError(
                    f"attribute {name!r} has duplicate values")

    @property
    def n_pairs(self) -> int:
        return sum(len(values) for _, values in self.attributes)

    def pairs(self) -> Iterable[tuple[str, str]]:
        for name, values in self.attributes:
            for v in values:
                yield name, v

    def values_of(self, attribute: str) -> tuple[str, ...]:
        for name, values in self.attributes:
            if name == attribute:
                return values
        raise SchemaMismatchError(f"unknown attribute {attribute!r}")


@dataclass(frozen=True)
class AttributeAssignment:
    """Chosen value set per attribute for one class. Multi-valued choices are
    legal (a tree may have two fall colors)."""

    class_name: str
    chosen: Mapping[str, frozenset[str]]

    def __post_init__(self):
        norm = {str(a): frozenset(str(v) for v in vs) for a, vs in self.chosen.items()}
        object.__setattr__(self, "chosen", norm)


def encode_attributes(schema: AttributeSchema, assignment: AttributeAssignment) -> np.ndarray:
    """Multi-hot vector over the schema's (attribute, value) pairs in schema order."""
    schema_names = {name for name, _ in schema.attributes}
    for attr, values in assignment.chosen.items():
        if attr not in schema_names:
            raise SchemaMismatchError(
                f"class {assignment.class_name!r}: unknown attribute {attr!r}")
        legal = set(schema.values_of(attr))
        illegal = values - legal
        if illegal:
            raise SchemaMismatchError(
                f"class {assignment.class_name!r}: illegal value(s) "
                f"{sorted(illegal)} for attribute {attr!r}")
    out = np.zeros(schema.n_pairs, dtype=np.float64)
    pos = 0
    for name, values in schema.attributes:
        chosen = assignment.chosen.get(name)
        if not chosen:
            raise IncompleteAssignmentError(
                f"class {assignment.class_name!r}: no value chosen for "
                f"attribute {name!r}")
        for v in values:
            if v in chosen:
                out[pos] = 1.0
            pos += 1
    return out


@dataclass(frozen=True)
class TaxonomyNode:
    id: str
    label: str
    parent: str | None


class TaxonomyTree:
    """Rooted tree over taxonomy nodes with a canonical node ordering.

    The ordering is a pre-order traversal with children visited in
    lexicographic label order, so encodings do not depend on input file order.
    Root-to-node paths are precomputed during the traversal.
    """

    def __init__(self, nodes: Iterable[TaxonomyNode]):
        nodes = list(nodes)
        self._nodes: dict[str, TaxonomyNode] = {}
        for n in nodes:
            if n.id in self._nodes:
                raise MissingNodeError(f"duplicate node id {n.id!r}")
            self._nodes[n.id] = n
        roots = [n.id for n in nodes if n.parent is None]
        if len(roots) != 1:
            raise MissingNodeError(
                f"tree must have exactly one root, found {len(roots)}")
        self.root = roots[0]
        children: dict[str, list[str]] = {n.id: [] for n in nodes}
        for n in nodes:
            if n.parent is not None:
                if n.parent not in self._nodes:
                    raise MissingNodeError(
                        f"node {n.id!r} references unknown parent {n.parent!r}")
                children[n.parent].append(n.id)
        for ids in children.values():
            ids.sort(key=lambda i: (self._nodes[i].label, i))
        self._children = children

        # Pre-order walk carrying the ancestor stack; doubles as the
        # connectivity check (single-parent nodes unreachable from the root
        # would indicate a cycle or a detached component).
        order: list[str] = []
        paths: dict[str, tuple[int, ...]] = {}
        stack: list[tuple[str, tuple[int, ...]]] = [(self.root, ())]
        while stack:
            node_id, ancestors = stack.pop()
            idx = len(order)
            order.append(node_id)
            path = ancestors + (idx,)
            paths[node_id] = path
            for child in reversed(self._children[node_id]):
                stack.append((child, path))
        if len(order) != len(nodes):
            unreachable = sorted(set(self._nodes) - set(order))
            raise MissingNodeError(
                f"nodes unreachable from root (cycle or detached): {unreachable}")
        self.node_order: tuple[str, ...] = tuple(order)
        self._paths = paths

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]]) -> "TaxonomyTree":
        """Build from (child_label, parent_label) pairs; labels double as ids."""
        edges = list(edges)
        parent_of: dict[str, str] = {}
        labels: set[str] = set()
        for child, parent in edges:
            if child in parent_of and parent_of[child] != parent:
                raise MissingNodeError(
                    f"node {child!r} has two parents: {parent_of[child]!r} and {parent!r}")
            parent_of[child] = parent
            labels.update((child, parent))
        roots = sorted(labels - set(parent_of))
        if len(roots) != 1:
            raise MissingNodeError(
                f"edge list must yield exactly one root, found {roots}")
        nodes = [TaxonomyNode(roots[0], roots[0], None)]
        nodes += [TaxonomyNode(c, c, p) for c, p in sorted(parent_of.items())]
        return cls(nodes)

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def label(self, node_id: str) -> str:
        return self._nodes[node_id].label

    def parent(self, node_id: str) -> str | None:
        return self._nodes[node_id].parent

    def is_leaf(self, node_id: str) -> bool:
        return not self._children[node_id]

    def leaves(self) -> list[str]:
        return [i for i in self.node_order if self.is_leaf(i)]

    def path_indices(self, node_id: str) -> tuple[int, ...]:
        """Canonical-order indices of the root-to-node path, both ends included."""
        return self._paths[node_id]


def encode_taxonomy(tree: TaxonomyTree, leaf_id: str) -> np.ndarray:
    """Binary indicator over the canonical node ordering, 1 on the
    root-to-leaf path. The root column is constant across classes but is
    retained for fidelity to the path-encoding scheme."""
    if leaf_id not in tree:
        raise MissingNodeError(f"unknown node {leaf_id!r}")
    if not tree.is_leaf(leaf_id):
        raise NonLeafError(f"node {leaf_id!r} is not a leaf")
    out = np.zeros(len(tree), dtype=np.float64)
    out[list(tree.path_indices(leaf_id))] = 1.0
    return out


@dataclass(frozen=True)
class WordVectorTable:
    """Token -> vector map with a single declared dimension."""

    dimension: int
    vectors: Mapping[str, np.ndarray]

    def __post_init__(self):
        norm = {}
        for token, vec in self.vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dimension,):
                raise SchemaMismatchError(
                    f"vector for {token!r} has length {arr.shape}, "
                    f"expected ({self.dimension},)")
            norm[str(token)] = arr
        object.__setattr__(self, "vectors", norm)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors


def encode_words(table: WordVectorTable, common_name: str,
                 policy: str = "strict") -> np.ndarray:
    """Arithmetic mean of per-token vectors for the tokens of a common name.

    policy='strict' requires every token in the table; 'skip-missing' averages
    over the tokens that are present and fails only when none are.
    """
    if policy not in WORD_POLICIES:
        raise ValueError(f"policy must be one of {WORD_POLICIES}, got {policy!r}")
    tokens = tokenize_name(common_name)
    if not tokens:
        raise OutOfVocabularyError(
            f"name {common_name!r} has no tokens after tokenization")
    missing = [t for t in tokens if t not in table]
    found = [t for t in tokens if t in table]
    if policy == "strict" and missing:
        raise OutOfVocabularyError(
            f"name {common_name!r}: tokens not in table: {missing}", missing)
    if not found:
        raise OutOfVocabularyError(
            f"name {common_name!r}: no token found in table, missing {missing}",
            missing)
    return np.mean([table.vectors[t] for t in found], axis=0)


@dataclass(frozen=True)
class ClassEmbedding:
    """Embedding vector of one class plus the (source, offset, length) layout."""

    class_name: str
    vector: np.ndarray
    block_layout: tuple[tuple[str, int, int], ...]


@dataclass(frozen=True)
class ClassEmbeddingSet:
    """Embeddings for an ordered class set sharing one block layout.

    The row order of `matrix` defines the canonical class ordering used for
    argmax tie-breaking.
    """

    class_names: tuple[str, ...]
    matrix: np.ndarray  # (n_classes, m) float64
    block_layout: tuple[tuple[str, int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "matrix",
                           np.asarray(self.matrix, dtype=np.float64))
        layout = tuple((str(tag), int(off), int(ln))
                       for tag, off, ln in self.block_layout)
        object.__setattr__(self, "block_layout", layout)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.class_names):
            raise IncompleteCoverageError(
                "embedding matrix rows must match class names")
        if sum(ln for _, _, ln in layout) != self.matrix.shape[1]:
            raise IncompleteCoverageError(
                "block layout lengths must sum to the embedding dimension")
        index = {name: i for i, name in enumerate(self.class_names)}
        if len(index) != len(self.class_names):
            raise IncompleteCoverageError("class names must be unique")
        object.__setattr__(self, "_index", index)

    @property
    def m(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.class_names)

    def __contains__(self, class_name: str) -> bool:
        return class_name in self._index

    def index(self, class_name: str) -> int:
        try:
            return self._index[class_name]
        except KeyError:
            raise IncompleteCoverageError(
                f"class {class_name!r} has no embedding") from None

    def vector(self, class_name: str) -> np.ndarray:
        return self.matrix[self.index(class_name)]

    def embedding(self, class_name: str) -> ClassEmbedding:
        return ClassEmbedding(class_name, self.vector(class_name), self.block_layout)

    def select(self, class_names: Sequence[str]) -> np.ndarray:
        """Rows for the given classes, in the given order."""
        return self.matrix[[self.index(c) for c in class_names]]


@dataclass
class EmbeddingSources:
    """Bundle of raw auxiliary-information inputs the builder draws from."""

    schema: AttributeSchema | None = None
    assignments: Mapping[str, AttributeAssignment] | None = None
    taxonomy: TaxonomyTree | None = None
    leaf_map: Mapping[str, str] | None = None
    word_table: WordVectorTable | None = None
    common_names: Mapping[str, str] = field(default_factory=dict)
    word_policy: str = "strict"


def build_class_embeddings(classes: Sequence[str], sources: Sequence[str],
                           inputs: EmbeddingSources, *,
                           normalize_blocks: bool = False) -> ClassEmbeddingSet:
    """Concatenate the requested source blocks for every class.

    Sources are always laid out in the fixed order attribute, taxonomy, word,
    regardless of the order requested. `normalize_blocks` rescales each block
    of each class to unit length (off by default; the relative scaling of
    binary vs word blocks is otherwise left as-is).
    """
    requested = set(sources)
    unknown = requested - set(SOURCE_ORDER)
    if unknown:
        raise ValueError(f"unknown sources: {sorted(unknown)}")
    if not requested:
        raise ValueError("at least one source is required")
    ordered = [s for s in SOURCE_ORDER if s in requested]

    def blocks_for(name: str) -> list[tuple[str, np.ndarray]]:
        out = []
        for source in ordered:
            if source == "attribute":
                if inputs.schema is None or inputs.assignments is None:
                    raise ValueError("attribute source needs schema and assignments")
                if name not in inputs.assignments:
                    raise IncompleteCoverageError(
                        f"class {name!r} missing from source 'attribute'")
                vec = encode_attributes(inputs.schema, inputs.assignments[name])
            elif source == "taxonomy":
                if inputs.taxonomy is None or inputs.leaf_map is None:
                    raise ValueError("taxonomy source needs a tree and a leaf map")
                if name not in inputs.leaf_map:
                    raise IncompleteCoverageError(
                        f"class {name!r} missing from source 'taxonomy'")
                vec = encode_taxonomy(inputs.taxonomy, inputs.leaf_map[name])
            else:
                if inputs.word_table is None:
                    raise ValueError("word source needs a word-vector table")
                common = inputs.common_names.get(name, name)
                try:
                    vec = encode_words(inputs.word_table, common, inputs.word_policy)
                except OutOfVocabularyError as exc:
                    raise IncompleteCoverageError(
                        f"class {name!r} missing from source 'word': {exc}") from exc
            if normalize_blocks:
                norm = float(np.linalg.norm(vec))
                if norm > 0.0:
                    vec = vec / norm
            out.append((source, vec))
        return out

    rows = []
    layout: tuple[tuple[str, int, int], ...] | None = None
    for name in classes:
        blocks = blocks_for(name)
        offset = 0
        this_layout = []
        for source, vec in blocks:
            this_layout.append((source, offset, len(vec)))
            offset += len(vec)
        this_layout = tuple(this_layout)
        if layout is None:
            layout = this_layout
        elif layout != this_layout:
            raise IncompleteCoverageError(
                f"class {name!r} produced layout {this_layout}, expected {layout}")
        rows.append(np.concatenate([vec for _, vec in blocks]))
    return ClassEmbeddingSet(tuple(classes), np.vstack(rows), layout or ())
