"""Dataset loading and online-scenario generation.

A scenario turns a labeled dataset into an ordered sequence of phase
streams: a scratch phase introducing the first group of classes, then
incremental phases that mix new-class training samples with streamed
observations of previously introduced classes, plus a held-out test set
that never enters any stream.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .validation import check_labels, check_matrix

VALID_BLOCK_SIZES = (1, 2, 4, 8, 16, 32, 64)

ROLE_NEW = 0
ROLE_OLD = 1


class DataFormatError(ValueError):
    """Raised for malformed dataset files."""


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    label_map: list = field(default_factory=list)

    def __post_init__(self):
        self.X = check_matrix(self.X, name="X")
        self.y = check_labels(self.y, n_samples=self.X.shape[0])
        if not self.label_map:
            self.label_map = [int(c) for c in np.unique(self.y)]

    @property
    def n_classes(self):
        return len(self.label_map)


@dataclass
class Stream:
    X: np.ndarray
    y: np.ndarray
    roles: np.ndarray

    def __len__(self):
        return self.X.shape[0]


@dataclass
class DataBlock:
    X: np.ndarray
    y: np.ndarray
    roles: np.ndarray
    index: int

    def __len__(self):
        return self.X.shape[0]


def iter_blocks(stream, block_size):
    """Cut a stream into consecutive blocks of block_size samples.

    The final block may be shorter; concatenating the blocks reproduces
    the stream.
    """
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    for t, start in enumerate(range(0, len(stream), block_size)):
        stop = start + block_size
        yield DataBlock(
            X=stream.X[start:stop],
            y=stream.y[start:stop],
            roles=stream.roles[start:stop],
            index=t,
        )


# ---------------------------------------------------------------------------
# loaders


def _remap_labels(raw_labels):
    uniq = sorted(set(int(v) for v in raw_labels))
    mapping = {old: new for new, old in enumerate(uniq)}
    return np.array([mapping[int(v)] for v in raw_labels], dtype=np.int64), uniq


def load_delimited(path):
    """Delimited text: integer label first, feature columns after.

    Comma or whitespace separated; labels are remapped to contiguous ids
    with the original values recorded in Dataset.label_map.
    """
    rows = []
    arity = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if arity is None:
                arity = len(parts)
                if arity < 2:
                    raise DataFormatError(f"{path}:{lineno}: need a label and at least one feature")
            elif len(parts) != arity:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {arity} columns, got {len(parts)}"
                )
            try:
                values = [float(v) for v in parts]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no samples")
    arr = np.asarray(rows, dtype=np.float64)
    labels, label_map = _remap_labels(arr[:, 0])
    return Dataset(X=arr[:, 1:], y=labels, label_map=label_map)


def save_delimited(path, X, y):
    X = check_matrix(X)
    y = check_labels(y, n_samples=X.shape[0])
    with open(path, "w") as fh:
        for label, row in zip(y, X):
            fh.write(" ".join([str(int(label))] + [repr(float(v)) for v in row]) + "\n")


IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def _read_idx_images(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise DataFormatError(f"{path}: truncated IDX header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(f"{path}: bad IDX image magic {magic:#x}")
        raw = fh.read(n * rows * cols)
        if len(raw) != n * rows * cols:
            raise DataFormatError(f"{path}: truncated IDX image payload")
    data = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)
    return data.astype(np.float64) / 255.0


def _read_idx_labels(path):
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise DataFormatError(f"{path}: truncated IDX header")
        magic, n = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(f"{path}: bad IDX label magic {magic:#x}")
        raw = fh.read(n)
        if len(raw) != n:
            raise DataFormatError(f"{path}: truncated IDX label payload")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def load_idx(images_path, labels_path):
    """Standard big-endian IDX image/label pair; pixels scaled to [0, 1]."""
    X = _read_idx_images(images_path)
    raw = _read_idx_labels(labels_path)
    if X.shape[0] != raw.shape[0]:
        raise DataFormatError("image and label counts differ")
    labels, label_map = _remap_labels(raw)
    return Dataset(X=X, y=labels, label_map=label_map)


def load_dataset(path, fmt):
    """Load a dataset; fmt is 'csv' (delimited text) or 'idx'.

    For 'idx', path is either 'images_file:labels_file' or the images file
    of a pair following the MNIST -images-idx3-ubyte naming convention.
    """
    if fmt == "csv":
        return load_delimited(path)
    if fmt == "idx":
        if ":" in str(path):
            images, labels = str(path).split(":", 1)
        elif "-images-idx3-ubyte" in str(path):
            images = str(path)
            labels = images.replace("-images-idx3-ubyte", "-labels-idx1-ubyte")
        else:
            raise DataFormatError(
                "idx format needs 'images:labels' or MNIST-style file naming"
            )
        return load_idx(images, labels)
    raise DataFormatError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class DriftSpec:
    """Additive feature shift applied to old-class observations of the
    affected classes from a given block index onward.

    shift is either one vector shared by every affected class or a mapping
    class_id -> vector.
    """

    class_ids: list
    shift: "np.ndarray | dict"
    onset_block: int

    def __post_init__(self):
        if isinstance(self.shift, dict):
            self.shift = {
                int(c): np.asarray(v, dtype=np.float64) for c, v in self.shift.items()
            }
            vectors = self.shift.values()
            missing = [c for c in self.class_ids if int(c) not in self.shift]
            if missing:
                raise ValueError(f"no shift vector for affected classes {missing}")
        else:
            self.shift = np.asarray(self.shift, dtype=np.float64)
            vectors = [self.shift]
        if not all(np.all(np.isfinite(v)) for v in vectors):
            raise ValueError("drift shift must be finite")
        if self.onset_block < 0:
            raise ValueError("onset_block must be >= 0")

    def shift_for(self, class_id):
        if isinstance(self.shift, dict):
            return self.shift[int(class_id)]
        return self.shift


@dataclass
class ScenarioSpec:
    class_splits: list
    block_size: int = 8
    seed: int = 0
    new_fraction: float = 0.6
    old_fraction: float = 0.2
    test_fraction: float = 0.2
    drift: DriftSpec | None = None

    def __post_init__(self):
        if not self.class_splits or any(s < 1 for s in self.class_splits):
            raise ValueError("class_splits must be non-empty positive counts")
        if self.block_size not in VALID_BLOCK_SIZES:
            raise ValueError(f"block_size must be one of {VALID_BLOCK_SIZES}")
        total = self.new_fraction + self.old_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError("new/old/test fractions must sum to 1")
        if min(self.new_fraction, self.old_fraction, self.test_fraction) < 0:
            raise ValueError("fractions must be non-negative")


@dataclass
class Scenario:
    phases: list
    classes_per_phase: list
    test_X: np.ndarray
    test_y: np.ndarray
    spec: ScenarioSpec
    class_map: list = field(default_factory=list)  # scenario id -> dataset class id


def inject_drift(stream, drift, block_size):
    """Return a copy of the stream with the drift shift added to affected
    old-class observations at/after the onset block; labels unchanged."""
    start = drift.onset_block * block_size
    X = stream.X.copy()
    if start < len(stream):
        affected = set(int(c) for c in drift.class_ids)
        for i in range(start, len(stream)):
            if stream.roles[i] == ROLE_OLD and int(stream.y[i]) in affected:
                shift = drift.shift_for(int(stream.y[i]))
                if shift.shape[0] != X.shape[1]:
                    raise ValueError("drift shift dimension does not match features")
                X[i] = X[i] + shift
    return Stream(X=X, y=stream.y.copy(), roles=stream.roles.copy())


def make_scenario(dataset, spec):
    """Deterministically expand a dataset into phase streams per the spec.

    Classes are shuffled by the seed and grouped by class_splits; labels
    are remapped to introduction order (scenario id = position in the
    shuffled class order) so that previously seen classes always occupy
    the first classifier units. Each class's samples are partitioned into
    new-class training, old-class observation, and held-out test parts.
    Phase 0 streams the first group's training samples; each later phase
    shuffles together its own group's training samples and a share of
    every earlier class's observation pool. Drift, when specified, is
    applied to every incremental phase.
    """
    if sum(spec.class_splits) > dataset.n_classes:
        raise ValueError("class_splits request more classes than the dataset has")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(dataset.n_classes)
    class_map = [int(c) for c in order[: sum(spec.class_splits)]]
    remap = np.full(dataset.n_classes, -1, dtype=np.int64)
    for scen_id, orig in enumerate(class_map):
        remap[orig] = scen_id
    classes_per_phase = []
    cursor = 0
    for size in spec.class_splits:
        classes_per_phase.append(list(range(cursor, cursor + size)))
        cursor += size
    n_phases = len(classes_per_phase)

    new_idx = {}
    old_chunks = {}
    test_idx = []
    for phase, classes in enumerate(classes_per_phase):
        for c in classes:
            idx = np.flatnonzero(dataset.y == class_map[c])
            idx = rng.permutation(idx)
            n_test = int(round(spec.test_fraction * len(idx)))
            n_new = int(round(spec.new_fraction * len(idx)))
            if n_new < 1 or n_test < 1:
                raise ValueError(f"class {c} has too few samples for the requested fractions")
            test_idx.append(idx[:n_test])
            new_idx[c] = idx[n_test : n_test + n_new]
            old_pool = idx[n_test + n_new :]
            n_later = n_phases - phase - 1
            old_chunks[c] = np.array_split(old_pool, n_later) if n_later else []

    phases = []
    for phase, classes in enumerate(classes_per_phase):
        parts = [(new_idx[c], ROLE_NEW) for c in classes]
        for earlier in range(phase):
            for c in classes_per_phase[earlier]:
                chunk = old_chunks[c][phase - earlier - 1]
                if len(chunk):
                    parts.append((chunk, ROLE_OLD))
        idx = np.concatenate([p[0] for p in parts])
        roles = np.concatenate(
            [np.full(len(p[0]), p[1], dtype=np.int64) for p in parts]
        )
        perm = rng.permutation(len(idx))
        stream = Stream(
            X=dataset.X[idx[perm]].copy(),
            y=remap[dataset.y[idx[perm]]],
            roles=roles[perm],
        )
        if spec.drift is not None and phase >= 1:
            stream = inject_drift(stream, spec.drift, spec.block_size)
        phases.append(stream)

    test_all = np.concatenate(test_idx)
    return Scenario(
        phases=phases,
        classes_per_phase=classes_per_phase,
        test_X=dataset.X[test_all].copy(),
        test_y=remap[dataset.y[test_all]],
        spec=spec,
        class_map=class_map,
    )
