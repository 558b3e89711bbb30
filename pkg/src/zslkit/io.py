"""File formats and experiment-level validation.

All data files are line-oriented UTF-8 text with explicit headers so they
diff cleanly; only model checkpoints use a compact binary layout. Formats:

  features     header `d=<int> n=<int> normalized=<0|1>`, then `id v1 ... vd`
  labels       `id<TAB>class_label`
  splits       sections `[seen]`, `[zsl_validation]`, `[zsl_test]`, one class per line
  word vectors `token v1 ... vD`
  taxonomy     edge list `child_label<TAB>parent_label`
  leaf map     `class<TAB>leaf_label`
  attr schema  `attribute<TAB>value1,value2,...`
  assignments  `class<TAB>attr=v1,v2<TAB>attr2=v3...`
  embeddings   header `m=<int> n=<int>` and `blocks=tag:off:len;...`, then
               `class<TAB>v1 v2 ... vm`
  checkpoint   magic line, JSON metadata line, raw little-endian float64 W_e
  config       flat `key=value`, `#` comments; unknown keys rejected

Floats are written with repr() and therefore round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .embeddings import (
    AttributeAssignment,
    AttributeSchema,
    ClassEmbeddingSet,
    TaxonomyTree,
    WordVectorTable,
)
from .errors import (
    AlignmentError,
    ConfigError,
    DegenerateFeatureError,
    ParseError,
    ZslError,
)
from .evaluate import SPLIT_NAMES, ClassSplits, SplitDataset
from .model import CompatModel
from .optim import AdamState, SgdState

_CHECKPOINT_MAGIC = b"ZSLCKPT1\n"
_OPT_STATE_MAGIC = b"ZSLOPT1\n"


def _fmt(x) -> str:
    return repr(float(x))


def _data_lines(path):
    """Yield (1-based line number, stripped line), skipping blanks."""
    text = Path(path).read_text(encoding="utf-8")
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line:
            yield no, line


# ---------------------------------------------------------------------------
# feature matrices
# ---------------------------------------------------------------------------

@dataclass
class FeatureSet:
    ids: tuple[str, ...]
    matrix: np.ndarray  # (n, d) float64
    normalized: bool

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


def l2_normalize_rows(matrix: np.ndarray, ids=None) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        which = ids[zero[0]] if ids is not None else f"row {zero[0]}"
        raise DegenerateFeatureError(
            f"cannot length-normalize zero feature vector ({which})")
    return matrix / norms[:, None]


def load_features(path, l2_normalize: bool = False) -> FeatureSet:
    lines = list(_data_lines(path))
    if not lines:
        raise ParseError(path, 1, "empty feature file")
    header_no, header = lines[0]
    fields = dict(tok.split("=", 1) for tok in header.split() if "=" in tok)
    try:
        d = int(fields["d"])
        n = int(fields["n"])
        normalized = fields["normalized"] == "1"
    except (KeyError, ValueError):
        raise ParseError(path, header_no,
                         "header must be 'd=<int> n=<int> normalized=<0|1>'") from None
    ids: list[str] = []
    row_lines: list[int] = []
    rows = np.empty((len(lines) - 1, d), dtype=np.float64)
    seen_ids: set[str] = set()
    for r, (no, line) in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != d + 1:
            raise ParseError(path, no,
                             f"expected id plus {d} values, got {len(parts)} fields")
        if parts[0] in seen_ids:
            raise ParseError(path, no, f"duplicate instance id {parts[0]!r}")
        seen_ids.add(parts[0])
        ids.append(parts[0])
        row_lines.append(no)
        try:
            rows[r] = [float(v) for v in parts[1:]]
        except ValueError:
            raise ParseError(path, no, "non-numeric feature value") from None
    if len(ids) != n:
        raise ParseError(path, header_no,
                         f"header declares n={n} but file has {len(ids)} rows")
    if normalized:
        norms = np.linalg.norm(rows, axis=1)
        off = np.flatnonzero(np.abs(norms - 1.0) > 1e-9)
        if off.size:
            raise ParseError(path, row_lines[off[0]],
                             f"row {ids[off[0]]!r} declared normalized but has "
                             f"norm {norms[off[0]]!r}")
    if l2_normalize:
        rows = l2_normalize_rows(rows, ids)
        normalized = True
    return FeatureSet(tuple(ids), rows, normalized)


def save_features(path, features: FeatureSet) -> None:
    out = [f"d={features.d} n={len(features.ids)} "
           f"normalized={1 if features.normalized else 0}"]
    for i, row in zip(features.ids, features.matrix):
        out.append(i + " " + " ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# labels and splits
# ---------------------------------------------------------------------------

def load_labels(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for no, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, no, "expected 'id<TAB>class_label'")
        if parts[0] in out:
            raise ParseError(path, no, f"duplicate instance id {parts[0]!r}")
        out[parts[0]] = parts[1]
    return out


def save_labels(path, labels: Mapping[str, str]) -> None:
    out = [f"{i}\t{c}" for i, c in labels.items()]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_splits(path) -> ClassSplits:
    """Parse the three sections. Structural problems raise ParseError;
    cross-section overlap is semantic and left to ClassSplits checks."""
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for no, line in _data_lines(path):
        if line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1]
            if name not in SPLIT_NAMES:
                raise ParseError(path, no, f"unknown section {name!r}")
            if name in sections:
                raise ParseError(path, no, f"duplicate section {name!r}")
            sections[name] = []
            current = name
        else:
            if current is None:
                raise ParseError(path, no, "class name before any section header")
            if line in sections[current]:
                raise ParseError(path, no,
                                 f"class {line!r} listed twice in [{current}]")
            sections[current].append(line)
    missing = [s for s in SPLIT_NAMES if s not in sections]
    if missing:
        raise ParseError(path, 1, f"missing section(s) {missing}")
    if not sections["seen"]:
        raise ParseError(path, 1, "the [seen] section must be non-empty")
    return ClassSplits(tuple(sections["seen"]),
                       tuple(sections["zsl_validation"]),
                       tuple(sections["zsl_test"]))


def save_splits(path, splits: ClassSplits) -> None:
    out = []
    for name in SPLIT_NAMES:
        out.append(f"[{name}]")
        out.extend(splits.classes(name))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_dataset(features_path, labels_path, splits_path,
                 l2_normalize: bool = False) -> SplitDataset:
    """Join the three files by instance id, in feature-file order."""
    features = load_features(features_path, l2_normalize=l2_normalize)
    labels = load_labels(labels_path)
    splits = load_splits(splits_path)
    missing = [i for i in features.ids if i not in labels]
    if missing:
        raise AlignmentError(f"feature id(s) without a label: {missing[:5]}")
    extra = [i for i in labels if i not in set(features.ids)]
    if extra:
        raise AlignmentError(f"label id(s) without features: {extra[:5]}")
    return SplitDataset(features.ids, features.matrix,
                        tuple(labels[i] for i in features.ids), splits)


# ---------------------------------------------------------------------------
# auxiliary-information sources
# ---------------------------------------------------------------------------

def load_word_vectors(path) -> WordVectorTable:
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    for no, line in _data_lines(path):
        parts = line.split()
        if len(parts) < 2:
            raise ParseError(path, no, "expected 'token v1 ... vD'")
        token = parts[0]
        if token in vectors:
            raise ParseError(path, no, f"duplicate token {token!r}")
        try:
            vec = np.asarray([float(v) for v in parts[1:]], dtype=np.float64)
        except ValueError:
            raise ParseError(path, no, "non-numeric vector value") from None
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise ParseError(path, no,
                             f"vector length {len(vec)} != declared {dim}")
        vectors[token] = vec
    if dim is None:
        raise ParseError(path, 1, "empty word-vector file")
    return WordVectorTable(dim, vectors)


def save_word_vectors(path, table: WordVectorTable) -> None:
    out = [t + " " + " ".join(_fmt(v) for v in vec)
           for t, vec in table.vectors.items()]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_taxonomy(path) -> TaxonomyTree:
    edges = []
    for no, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, no, "expected 'child_label<TAB>parent_label'")
        edges.append((parts[0], parts[1]))
    if not edges:
        raise ParseError(path, 1, "empty taxonomy file")
    return TaxonomyTree.from_edges(edges)


def save_taxonomy(path, tree: TaxonomyTree) -> None:
    out = [f"{node}\t{tree.parent(node)}"
           for node in tree.node_order if tree.parent(node) is not None]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_leaf_map(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for no, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, no, "expected 'class<TAB>leaf_label'")
        if parts[0] in out:
            raise ParseError(path, no, f"duplicate class {parts[0]!r}")
        out[parts[0]] = parts[1]
    return out


def save_leaf_map(path, leaf_map: Mapping[str, str]) -> None:
    out = [f"{c}\t{l}" for c, l in leaf_map.items()]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_attribute_schema(path) -> AttributeSchema:
    attrs = []
    for no, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, no, "expected 'attribute<TAB>v1,v2,...'")
        values = tuple(v.strip() for v in parts[1].split(",") if v.strip())
        attrs.append((parts[0], values))
    if not attrs:
        raise ParseError(path, 1, "empty attribute schema file")
    return AttributeSchema(tuple(attrs))


def save_attribute_schema(path, schema: AttributeSchema) -> None:
    out = [f"{name}\t{','.join(values)}" for name, values in schema.attributes]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_attribute_assignments(path) -> dict[str, AttributeAssignment]:
    out: dict[str, AttributeAssignment] = {}
    for no, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) < 2:
            raise ParseError(path, no,
                             "expected 'class<TAB>attr=v1,v2<TAB>...'")
        name = parts[0]
        if name in out:
            raise ParseError(path, no, f"duplicate class {name!r}")
        chosen: dict[str, frozenset[str]] = {}
        for field in parts[1:]:
            if "=" not in field:
                raise ParseError(path, no, f"field {field!r} lacks '='")
            attr, values = field.split("=", 1)
            chosen[attr] = frozenset(v.strip() for v in values.split(",") if v.strip())
        out[name] = AttributeAssignment(name, chosen)
    return out


def save_attribute_assignments(path, assignments: Mapping[str, AttributeAssignment]) -> None:
    out = []
    for name, a in assignments.items():
        fields = [f"{attr}={','.join(sorted(values))}"
                  for attr, values in a.chosen.items()]
        out.append("\t".join([name] + fields))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# class-embedding matrices
# ---------------------------------------------------------------------------

def load_class_embeddings(path) -> ClassEmbeddingSet:
    lines = list(_data_lines(path))
    if len(lines) < 2:
        raise ParseError(path, 1, "embedding file needs two header lines")
    h1_no, h1 = lines[0]
    fields = dict(tok.split("=", 1) for tok in h1.split() if "=" in tok)
    try:
        m = int(fields["m"])
        n = int(fields["n"])
    except (KeyError, ValueError):
        raise ParseError(path, h1_no, "header must be 'm=<int> n=<int>'") from None
    h2_no, h2 = lines[1]
    if not h2.startswith("blocks="):
        raise ParseError(path, h2_no, "second header line must be 'blocks=...'")
    layout = []
    for item in h2[len("blocks="):].split(";"):
        try:
            tag, off, ln = item.split(":")
            layout.append((tag, int(off), int(ln)))
        except ValueError:
            raise ParseError(path, h2_no, f"bad block spec {item!r}") from None
    names: list[str] = []
    matrix = np.empty((len(lines) - 2, m), dtype=np.float64)
    for r, (no, line) in enumerate(lines[2:]):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(path, no, "expected 'class<TAB>v1 v2 ...'")
        values = parts[1].split()
        if len(values) != m:
            raise ParseError(path, no, f"expected {m} values, got {len(values)}")
        names.append(parts[0])
        try:
            matrix[r] = [float(v) for v in values]
        except ValueError:
            raise ParseError(path, no, "non-numeric embedding value") from None
    if len(names) != n:
        raise ParseError(path, h1_no,
                         f"header declares n={n} but file has {len(names)} rows")
    return ClassEmbeddingSet(tuple(names), matrix, tuple(layout))


def save_class_embeddings(path, embeddings: ClassEmbeddingSet) -> None:
    out = [f"m={embeddings.m} n={len(embeddings)}",
           "blocks=" + ";".join(f"{tag}:{off}:{ln}"
                                for tag, off, ln in embeddings.block_layout)]
    for name, row in zip(embeddings.class_names, embeddings.matrix):
        out.append(name + "\t" + " ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# model checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    model: CompatModel
    classes: tuple[str, ...]  # training class ordering
    block_layout: tuple[tuple[str, int, int], ...]


def save_checkpoint(path, model: CompatModel, classes, block_layout) -> None:
    meta = {
        "d": model.d,
        "m": model.m,
        "classes": list(classes),
        "block_layout": [[tag, off, ln] for tag, off, ln in block_layout],
    }
    blob = (_CHECKPOINT_MAGIC
            + json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n"
            + np.ascontiguousarray(model.W_e, dtype="<f8").tobytes())
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if not blob.startswith(_CHECKPOINT_MAGIC):
        raise ParseError(path, 1, "not a checkpoint file (bad magic)")
    rest = blob[len(_CHECKPOINT_MAGIC):]
    try:
        meta_line, raw = rest.split(b"\n", 1)
        meta = json.loads(meta_line.decode("utf-8"))
        d, m = int(meta["d"]), int(meta["m"])
    except (ValueError, KeyError):
        raise ParseError(path, 2, "bad checkpoint metadata") from None
    expected = (d + 1) * (m + 1) * 8
    if len(raw) != expected:
        raise ParseError(path, 2,
                         f"checkpoint payload is {len(raw)} bytes, expected {expected}")
    W_e = np.frombuffer(raw, dtype="<f8").reshape(d + 1, m + 1).copy()
    layout = tuple((tag, int(off), int(ln))
                   for tag, off, ln in meta.get("block_layout", []))
    return Checkpoint(CompatModel(W_e), tuple(meta.get("classes", [])), layout)


def save_optimizer_state(path, state) -> None:
    """Serialize SgdState or AdamState so training can be checkpointed
    alongside the model."""
    if isinstance(state, SgdState):
        meta = {"kind": "sgd", "alpha": state.alpha}
        payload = b""
    elif isinstance(state, AdamState):
        M = np.zeros((0,)) if state.M is None else state.M
        V = np.zeros((0,)) if state.V is None else state.V
        meta = {"kind": "adam", "alpha": state.alpha, "beta1": state.beta1,
                "beta2": state.beta2, "epsilon": state.epsilon, "t": state.t,
                "shape": list(M.shape)}
        payload = (np.ascontiguousarray(M, dtype="<f8").tobytes()
                   + np.ascontiguousarray(V, dtype="<f8").tobytes())
    else:
        raise TypeError(f"cannot serialize optimizer state {type(state).__name__}")
    Path(path).write_bytes(_OPT_STATE_MAGIC
                           + json.dumps(meta, sort_keys=True).encode("utf-8")
                           + b"\n" + payload)


def load_optimizer_state(path):
    blob = Path(path).read_bytes()
    if not blob.startswith(_OPT_STATE_MAGIC):
        raise ParseError(path, 1, "not an optimizer-state file (bad magic)")
    try:
        meta_line, raw = blob[len(_OPT_STATE_MAGIC):].split(b"\n", 1)
        meta = json.loads(meta_line.decode("utf-8"))
        kind = meta["kind"]
    except (ValueError, KeyError):
        raise ParseError(path, 2, "bad optimizer-state metadata") from None
    if kind == "sgd":
        return SgdState(alpha=float(meta["alpha"]))
    if kind != "adam":
        raise ParseError(path, 2, f"unknown optimizer kind {kind!r}")
    shape = tuple(int(s) for s in meta["shape"])
    count = int(np.prod(shape)) if shape else 0
    if len(raw) != 2 * count * 8:
        raise ParseError(path, 2,
                         f"payload is {len(raw)} bytes, expected {2 * count * 8}")
    M = np.frombuffer(raw[: count * 8], dtype="<f8").reshape(shape).copy()
    V = np.frombuffer(raw[count * 8:], dtype="<f8").reshape(shape).copy()
    return AdamState(alpha=float(meta["alpha"]), beta1=float(meta["beta1"]),
                     beta2=float(meta["beta2"]), epsilon=float(meta["epsilon"]),
                     t=int(meta["t"]), M=M, V=V)


# ---------------------------------------------------------------------------
# experiment configs
# ---------------------------------------------------------------------------

_PATH_KEYS = (
    "features", "labels", "splits",
    "attribute_schema", "attribute_assignments",
    "taxonomy", "leaf_map", "word_vectors",
    "embeddings", "embeddings_out",
    "checkpoint", "checkpoint_out",
    "report_out", "predictions_out",
)

def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


CONFIG_SCHEMA: dict[str, type | object] = {
    **{k: str for k in _PATH_KEYS},
    "sources": str,          # comma-separated subset of attribute,taxonomy,word
    "word_policy": str,
    "normalize_blocks": _parse_bool,
    "l2_normalize": _parse_bool,
    "optimizer": str,
    "learning_rate": float,
    "beta1": float,
    "beta2": float,
    "epsilon": float,
    "batch_size": int,
    "max_iterations": int,
    "eval_every": int,
    "seed": int,
    "init_scheme": str,
    "oversample": _parse_bool,
    "use_wx": _parse_bool,
    "use_wy": _parse_bool,
    "eval_split": str,
    "repeats": int,
    "grid": str,
}


def parse_config_entry(key: str, raw: str):
    if key not in CONFIG_SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return CONFIG_SCHEMA[key](raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def load_config(path) -> dict:
    out: dict = {}
    for no, line in _data_lines(path):
        if line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(path, no, "expected 'key=value'")
        key, raw = line.split("=", 1)
        key, raw = key.strip(), raw.strip()
        if key in out:
            raise ParseError(path, no, f"duplicate config key {key!r}")
        try:
            out[key] = parse_config_entry(key, raw)
        except ConfigError as exc:
            raise ParseError(path, no, str(exc)) from None
    return out


def resolve_config_paths(config: dict, base_dir) -> dict:
    """Return a copy with path values resolved relative to the config file."""
    base = Path(base_dir)
    out = dict(config)
    for key in _PATH_KEYS:
        if key in out:
            out[key] = str(base / out[key])
    return out


# ---------------------------------------------------------------------------
# experiment validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        return "OK" if self.ok else "\n".join(self.violations)


def validate_experiment(config: Mapping) -> ValidationReport:
    """Cross-check every artifact the config names. Violations are report
    content, never exceptions; a missing or unparseable file is itself a
    violation and suppresses the checks that would have needed it."""
    violations: list[str] = []

    def try_load(key, loader):
        if key not in config:
            return None
        try:
            return loader(config[key])
        except (ZslError, OSError) as exc:
            violations.append(f"{key}: {exc}")
            return None

    features = try_load("features", load_features)
    labels = try_load("labels", load_labels)
    splits = try_load("splits", load_splits)
    embeddings = try_load("embeddings", load_class_embeddings)
    checkpoint = try_load("checkpoint", load_checkpoint)

    if splits is not None:
        violations.extend(splits.overlap_violations())
        split_classes = set(splits.all_classes())
        if labels is not None:
            stray = sorted({c for c in labels.values() if c not in split_classes})
            for cls in stray:
                violations.append(f"label class {cls!r} is not in any split")
        if embeddings is not None:
            for name in SPLIT_NAMES:
                for cls in splits.classes(name):
                    if cls not in embeddings:
                        violations.append(
                            f"class {cls!r} in split {name!r} has no embedding")
    if features is not None and labels is not None:
        feature_ids = set(features.ids)
        for i in features.ids:
            if i not in labels:
                violations.append(f"feature id {i!r} has no label")
        for i in labels:
            if i not in feature_ids:
                violations.append(f"label id {i!r} has no feature row")
    if checkpoint is not None:
        if features is not None and features.d != checkpoint.model.d:
            violations.append(
                f"feature dimension d={features.d} != checkpoint d={checkpoint.model.d}")
        if embeddings is not None and embeddings.m != checkpoint.model.m:
            violations.append(
                f"embedding dimension m={embeddings.m} != checkpoint m={checkpoint.model.m}")
    return ValidationReport(violations)
