"""Dataset loading, validation, and synthetic corpus generation.

Feature matrices travel in a small binary container: 4-byte magic ``ASSF``,
then version, rows, cols as little-endian uint32, then the row-major float32
payload.  Label matrices are plain CSV of 0/1 ints.  A dataset bundle ties
two feature files, an optional label file, and a train/query/retrieval split
together through a JSON manifest.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

_MAGIC = b"ASSF"
_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def validate_features(arr: np.ndarray, name: str = "features") -> np.ndarray:
    """Check the feature-matrix contract: 2-d float32, finite, no zero rows."""
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"{name}: expected a non-empty 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr).all(axis=1))[0, 0])
        raise DataError(f"{name}: non-finite entry in row {bad}")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.argmax(norms == 0.0))
        raise DataError(f"{name}: zero-norm row {bad}")
    return arr


def write_features(arr: np.ndarray, path: str) -> None:
    """Serialize a validated feature matrix to the binary container."""
    arr = validate_features(arr)
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, rows, cols))
        fh.write(arr.astype("<f4").tobytes())


def load_features(path: str, expected_dim: int | None = None) -> np.ndarray:
    """Load a feature matrix, accepting the binary container or CSV text.

    The first four bytes decide the format.  Either way the result passes
    through :func:`validate_features`, so malformed headers, dimension
    mismatches, zero-norm rows, and non-finite entries all raise
    :class:`DataError` with the offending location.
    """
    if not os.path.exists(path):
        raise DataError(f"feature file not found: {path}")
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if head[:4] == _MAGIC:
            if len(head) < _HEADER.size:
                raise DataError(f"{path}: truncated header")
            _, version, rows, cols = _HEADER.unpack(head)
            if version != _VERSION:
                raise DataError(f"{path}: unsupported version {version}")
            if rows < 1 or cols < 1:
                raise DataError(f"{path}: bad dimensions {rows}x{cols}")
            payload = fh.read()
            want = rows * cols * 4
            if len(payload) != want:
                raise DataError(
                    f"{path}: payload is {len(payload)} bytes, header implies {want}"
                )
            arr = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
        else:
            try:
                arr = np.loadtxt(path, delimiter=",", dtype=np.float32, ndmin=2)
            except ValueError as exc:
                raise DataError(f"{path}: not a feature container and CSV parse failed: {exc}")
    arr = validate_features(arr, name=path)
    if expected_dim is not None and arr.shape[1] != expected_dim:
        raise DataError(f"{path}: expected {expected_dim} columns, found {arr.shape[1]}")
    return arr


def validate_labels(labels: np.ndarray, name: str = "labels") -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DataError(f"{name}: expected a 2-d matrix, got shape {labels.shape}")
    if not np.isin(labels, (0, 1)).all():
        bad = int(np.argwhere(~np.isin(labels, (0, 1)).all(axis=1))[0, 0])
        raise DataError(f"{name}: non-binary entry at row {bad}")
    labels = labels.astype(np.int8)
    sums = labels.sum(axis=1)
    if np.any(sums == 0):
        bad = int(np.argmax(sums == 0))
        raise DataError(f"{name}: empty label row {bad}")
    return labels


def load_labels(path: str) -> np.ndarray:
    """Parse a CSV label matrix of 0/1 ints; every row needs at least one 1."""
    if not os.path.exists(path):
        raise DataError(f"label file not found: {path}")
    rows = []
    width = None
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataError(f"{path}: ragged row {i} ({len(cells)} cells, expected {width})")
            try:
                row = [int(c) for c in cells]
            except ValueError:
                raise DataError(f"{path}: non-integer entry at row {i}")
            if any(v not in (0, 1) for v in row):
                raise DataError(f"{path}: non-binary entry at row {i}")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no label rows")
    return validate_labels(np.array(rows, dtype=np.int8), name=path)


def write_labels(labels: np.ndarray, path: str) -> None:
    labels = validate_labels(labels)
    with open(path, "w") as fh:
        for row in labels:
            fh.write(",".join(str(int(v)) for v in row))
            fh.write("\n")


@dataclass
class Split:
    """Index lists partitioning a dataset into train/query/retrieval roles."""

    train: np.ndarray
    query: np.ndarray
    retrieval: np.ndarray

    def __post_init__(self) -> None:
        self.train = np.asarray(self.train, dtype=np.int64)
        self.query = np.asarray(self.query, dtype=np.int64)
        self.retrieval = np.asarray(self.retrieval, dtype=np.int64)

    def validate(self, n_rows: int) -> None:
        for name, idx in (("train", self.train), ("query", self.query),
                          ("retrieval", self.retrieval)):
            idx = np.asarray(idx)
            if idx.size == 0:
                raise DataError(f"split: empty {name} cell")
            if idx.min() < 0 or idx.max() >= n_rows:
                raise DataError(f"split: {name} index out of range for {n_rows} rows")
            if len(np.unique(idx)) != len(idx):
                raise DataError(f"split: duplicate indices in {name}")
        q, r, t = set(self.query.tolist()), set(self.retrieval.tolist()), set(self.train.tolist())
        if q & r:
            raise DataError("split: query and retrieval cells overlap")
        # train may sit inside retrieval (database includes the training set)
        # or stand apart from it, but never inside the query cell
        if q & t:
            raise DataError("split: query and train cells overlap")


@dataclass
class DatasetBundle:
    """Paired image/text features with labels and a role split."""

    image_features: np.ndarray
    text_features: np.ndarray
    labels: np.ndarray | None
    split: Split

    def validate(self) -> None:
        fi = validate_features(self.image_features, "image features")
        ft = validate_features(self.text_features, "text features")
        if fi.shape[0] != ft.shape[0]:
            raise DataError(
                f"bundle: image rows {fi.shape[0]} != text rows {ft.shape[0]}"
            )
        if self.labels is not None:
            lab = validate_labels(self.labels)
            if lab.shape[0] != fi.shape[0]:
                raise DataError(
                    f"bundle: label rows {lab.shape[0]} != feature rows {fi.shape[0]}"
                )
        self.split.validate(fi.shape[0])

    @property
    def n_rows(self) -> int:
        return self.image_features.shape[0]


@dataclass
class SynthConfig:
    """Knobs for the synthetic multi-label two-modality corpus."""

    classes: int = 5
    instances: int = 2000
    dim_image: int = 24
    dim_text: int = 20
    label_cardinality: float = 1.0
    noise_sigma: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        for name in ("classes", "instances", "dim_image", "dim_text"):
            if getattr(self, name) < 1:
                raise ConfigError(f"synth: {name} must be >= 1")
        if not 0 < self.label_cardinality <= self.classes:
            raise ConfigError("synth: label_cardinality must be in (0, classes]")
        if self.noise_sigma < 0:
            raise ConfigError("synth: noise_sigma must be >= 0")


def generate_synthetic(cfg: SynthConfig, train_size: int | None = None) -> DatasetBundle:
    """Build a deterministic synthetic bundle with shared class structure.

    Each class owns one fixed random unit prototype per modality.  An
    instance samples its label set (every class independently with
    probability ``label_cardinality / classes``, redrawn while empty), and
    its feature in each modality is the sum of the owned prototypes plus
    isotropic Gaussian noise.  The split reserves 10% of rows as queries,
    the remainder as retrieval, and takes ``train_size`` retrieval rows
    (all of them by default) as the training set.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    protos_i = rng.standard_normal((cfg.classes, cfg.dim_image))
    protos_i /= np.linalg.norm(protos_i, axis=1, keepdims=True)
    protos_t = rng.standard_normal((cfg.classes, cfg.dim_text))
    protos_t /= np.linalg.norm(protos_t, axis=1, keepdims=True)

    p = cfg.label_cardinality / cfg.classes
    labels = np.zeros((cfg.instances, cfg.classes), dtype=np.int8)
    for i in range(cfg.instances):
        row = (rng.random(cfg.classes) < p).astype(np.int8)
        while not row.any():
            row = (rng.random(cfg.classes) < p).astype(np.int8)
        labels[i] = row

    fi = labels @ protos_i + cfg.noise_sigma * rng.standard_normal((cfg.instances, cfg.dim_image))
    ft = labels @ protos_t + cfg.noise_sigma * rng.standard_normal((cfg.instances, cfg.dim_text))

    perm = rng.permutation(cfg.instances)
    n_query = max(1, cfg.instances // 10)
    query = np.sort(perm[:n_query])
    retrieval = np.sort(perm[n_query:])
    if train_size is None:
        train = retrieval.copy()
    else:
        if not 1 <= train_size <= retrieval.size:
            raise ConfigError(
                f"synth: train_size {train_size} outside [1, {retrieval.size}]"
            )
        train = np.sort(rng.permutation(retrieval)[:train_size])

    bundle = DatasetBundle(
        image_features=fi.astype(np.float32),
        text_features=ft.astype(np.float32),
        labels=labels,
        split=Split(train=train, query=query, retrieval=retrieval),
    )
    bundle.validate()
    return bundle


_MANIFEST_NAME = "bundle.json"


def save_bundle(bundle: DatasetBundle, out_dir: str) -> str:
    """Write the bundle's files plus a JSON manifest; returns manifest path."""
    bundle.validate()
    os.makedirs(out_dir, exist_ok=True)
    write_features(bundle.image_features, os.path.join(out_dir, "image.assf"))
    write_features(bundle.text_features, os.path.join(out_dir, "text.assf"))
    manifest = {
        "image_features": "image.assf",
        "text_features": "text.assf",
        "labels": None,
        "split": {
            "train": bundle.split.train.tolist(),
            "query": bundle.split.query.tolist(),
            "retrieval": bundle.split.retrieval.tolist(),
        },
    }
    if bundle.labels is not None:
        write_labels(bundle.labels, os.path.join(out_dir, "labels.csv"))
        manifest["labels"] = "labels.csv"
    path = os.path.join(out_dir, _MANIFEST_NAME)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def load_bundle(path: str) -> DatasetBundle:
    """Load a bundle from its manifest path or the directory holding it."""
    if os.path.isdir(path):
        path = os.path.join(path, _MANIFEST_NAME)
    if not os.path.exists(path):
        raise DataError(f"bundle manifest not found: {path}")
    with open(path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid manifest JSON: {exc}")
    base = os.path.dirname(path)
    for key in ("image_features", "text_features", "split"):
        if key not in manifest:
            raise DataError(f"{path}: manifest missing key '{key}'")
    fi = load_features(os.path.join(base, manifest["image_features"]))
    ft = load_features(os.path.join(base, manifest["text_features"]))
    labels = None
    if manifest.get("labels"):
        labels = load_labels(os.path.join(base, manifest["labels"]))
    sp = manifest["split"]
    for cell in ("train", "query", "retrieval"):
        if cell not in sp:
            raise DataError(f"{path}: split missing cell '{cell}'")
    split = Split(
        train=np.asarray(sp["train"], dtype=np.int64),
        query=np.asarray(sp["query"], dtype=np.int64),
        retrieval=np.asarray(sp["retrieval"], dtype=np.int64),
    )
    bundle = DatasetBundle(image_features=fi, text_features=ft, labels=labels, split=split)
    bundle.validate()
    return bundle
