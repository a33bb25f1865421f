"""Dataset ingestion, splits, synthetic instances, and persistence.

File formats owned by this module:

* feature container: text header (magic ``MVSCFEAT``, version, view
  count, per-view dims, sample count, view names, layout descriptor,
  sample ids) terminated by an ``end`` line, followed by little-endian
  float64 payload, column-major per view, views in order;
* model archive: ``MVSCMODEL`` line, one JSON metadata line, a
  ``BINARY`` line, then named float64 blocks (C-order) in the order the
  metadata lists them;
* synthetic truth: same container shape under ``MVSCTRUTH``.

All writes go through a temp file in the target directory plus an
atomic rename, so a crash cannot leave a half-written file behind.
"""

import csv
import io
import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .classify import LeastSquaresClassifier, LinearSVMClassifier
from .errors import (
    DataError,
    DimensionError,
    ParameterError,
    ProtocolError,
)
from .gabor import REGIONS, FiducialMask, GaborParams
from .solver import DictionarySet, SolverConfig
from .validation import check_scalar, check_views

__all__ = [
    "EXPRESSIONS",
    "ManifestEntry",
    "load_manifest",
    "labels_for_task",
    "load_image",
    "load_annotation",
    "load_labels",
    "save_labels",
    "MultiViewFeatureMatrix",
    "save_features",
    "load_features",
    "SplitSpec",
    "split_dataset",
    "split_labeled",
    "SyntheticSpec",
    "generate_synthetic",
    "save_synthetic_truth",
    "load_synthetic_truth",
    "ModelArchive",
    "save_model",
    "load_model",
]

EXPRESSIONS = ("AN", "DI", "FE", "HA", "NE", "SA", "SU")

_FEATURE_MAGIC = "MVSCFEAT"
_MODEL_MAGIC = "MVSCMODEL"
_TRUTH_MAGIC = "MVSCTRUTH"
_FORMAT_VERSION = 1

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _atomic_write_bytes(path, payload):
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# images and annotations


def _load_pgm(path, data):
    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(data):
            byte = data[pos : pos + 1]
            if byte == b"#":
                newline = data.find(b"\n", pos)
                if newline == -1:
                    raise DataError(f"{path}: unterminated comment in PGM header")
                pos = newline + 1
            elif byte in b" \t\r\n":
                pos += 1
            else:
                break
        if pos >= len(data):
            raise DataError(f"{path}: truncated PGM header")
        start = pos
        while pos < len(data) and data[pos : pos + 1] not in b" \t\r\n#":
            pos += 1
        return data[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise DataError(f"{path}: unsupported PGM magic {magic!r} (binary P5 only)")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError:
        raise DataError(f"{path}: malformed PGM header") from None
    if width <= 0 or height <= 0:
        raise DataError(f"{path}: bad PGM dimensions {width}x{height}")
    if not 0 < maxval < 256:
        raise DataError(f"{path}: unsupported PGM maxval {maxval} (8-bit only)")
    pos += 1  # exactly one whitespace byte separates header and raster
    pixels = data[pos : pos + width * height]
    if len(pixels) < width * height:
        raise DataError(
            f"{path}: unexpected end of data ({len(pixels)} of {width * height} raster bytes)"
        )
    img = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
    return img.astype(float) / float(maxval)


def load_image(path):
    """Load a grayscale image as float64 in [0, 1].

    Binary PGM (P5) is parsed directly; PNG goes through Pillow with a
    luminance conversion for non-grayscale modes. The format is sniffed
    from the file content, not the extension.
    """
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P5":
        return _load_pgm(path, data)
    if data[: len(_PNG_SIGNATURE)] == _PNG_SIGNATURE:
        try:
            with Image.open(io.BytesIO(data)) as img:
                if img.mode != "L":
                    img = img.convert("L")
                arr = np.asarray(img, dtype=float)
        except (UnidentifiedImageError, OSError):
            raise DataError(f"{path}: corrupt PNG data") from None
        return arr / 255.0
    raise DataError(f"{path}: unsupported image format (binary PGM or PNG expected)")


def load_annotation(path, expected_points=122, strict=True):
    """Parse a landmark annotation file into a FiducialMask.

    Lines hold ``x y region`` with ``#`` starting a comment; blank lines
    are skipped. A point count differing from ``expected_points`` raises
    when strict, warns otherwise; pass expected_points=None to skip the
    check.
    """
    path = Path(path)
    points, labels = [], []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 'x y region', got {raw!r}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad coordinates in {raw!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataError(f"{path}:{lineno}: non-finite coordinates in {raw!r}")
        if parts[2] not in REGIONS:
            raise DataError(
                f"{path}:{lineno}: unknown region {parts[2]!r}; expected one of {REGIONS}"
            )
        points.append((x, y))
        labels.append(parts[2])
    if not points:
        raise DataError(f"{path}: no landmark points found")
    if expected_points is not None and len(points) != expected_points:
        message = f"{path}: expected {expected_points} points, found {len(points)}"
        if strict:
            raise DataError(message)
        warnings.warn(message, stacklevel=2)
    return FiducialMask(np.array(points, dtype=float), tuple(labels))


# ---------------------------------------------------------------------------
# manifests and labels


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    subject_id: str
    expression: str
    annotation_path: str


_MANIFEST_FIELDS = ("image_path", "subject_id", "expression", "annotation_path")


def load_manifest(path):
    """Read a dataset manifest CSV into ManifestEntry rows.

    Columns: image_path, subject_id, expression, annotation_path.
    Expressions must come from the seven-label set; image paths must be
    unique (they double as sample ids).
    """
    path = Path(path)
    entries = []
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or set(_MANIFEST_FIELDS) - set(reader.fieldnames):
            raise DataError(
                f"{path}: manifest header must contain {', '.join(_MANIFEST_FIELDS)}"
            )
        for row_number, row in enumerate(reader, start=2):
            values = {name: (row.get(name) or "").strip() for name in _MANIFEST_FIELDS}
            for name in ("image_path", "subject_id", "annotation_path"):
                if not values[name]:
                    raise DataError(f"{path}: row {row_number}: empty {name}")
            if values["expression"] not in EXPRESSIONS:
                raise DataError(
                    f"{path}: row {row_number}: unknown expression"
                    f" {values['expression']!r}; expected one of {EXPRESSIONS}"
                )
            entries.append(ManifestEntry(**values))
    if not entries:
        raise DataError(f"{path}: manifest has no rows")
    seen = set()
    for entry in entries:
        if entry.image_path in seen:
            raise DataError(f"{path}: duplicate image_path {entry.image_path!r}")
        seen.add(entry.image_path)
    return entries


def labels_for_task(manifest, task):
    """(sample_ids, labels) for a manifest under a task.

    Task "fer" labels by expression, "fr" by subject identity.
    """
    if task == "fer":
        return [e.image_path for e in manifest], [e.expression for e in manifest]
    if task == "fr":
        return [e.image_path for e in manifest], [e.subject_id for e in manifest]
    raise ParameterError(f"task must be 'fer' or 'fr', got {task!r}")


def load_labels(path):
    """Read a sample_id,label CSV into an ordered mapping."""
    path = Path(path)
    labels = {}
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or {"sample_id", "label"} - set(reader.fieldnames):
            raise DataError(f"{path}: labels header must contain sample_id,label")
        for row_number, row in enumerate(reader, start=2):
            sample_id = (row.get("sample_id") or "").strip()
            label = (row.get("label") or "").strip()
            if not sample_id or not label:
                raise DataError(f"{path}: row {row_number}: empty sample_id or label")
            if sample_id in labels:
                raise DataError(f"{path}: duplicate sample_id {sample_id!r}")
            labels[sample_id] = label
    if not labels:
        raise DataError(f"{path}: no labels found")
    return labels


def save_labels(path, sample_ids, labels):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "label"])
    for sample_id, label in zip(sample_ids, labels):
        writer.writerow([sample_id, label])
    _atomic_write_bytes(path, buf.getvalue().encode())


# ---------------------------------------------------------------------------
# feature container


@dataclass
class MultiViewFeatureMatrix:
    """Per-view feature matrices over one shared sample set.

    Views are (view_dim, n_samples) with samples in columns; column j of
    every view belongs to sample_ids[j].
    """

    views: list
    sample_ids: list
    view_names: list = None
    descriptor: str = "custom"
    gabor_info: dict = None

    def __post_init__(self):
        self.views = check_views(self.views, "views")
        self.sample_ids = [str(s) for s in self.sample_ids]
        n = self.views[0].shape[1]
        if len(self.sample_ids) != n:
            raise DimensionError(
                f"{len(self.sample_ids)} sample ids for {n} sample columns"
            )
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ParameterError("sample ids must be unique")
        if self.view_names is None:
            self.view_names = [f"view{p}" for p in range(len(self.views))]
        self.view_names = [str(v) for v in self.view_names]
        if len(self.view_names) != len(self.views):
            raise DimensionError(
                f"{len(self.view_names)} view names for {len(self.views)} views"
            )
        if len(set(self.view_names)) != len(self.view_names):
            raise ParameterError("view names must be unique")

    @property
    def n_views(self):
        return len(self.views)

    @property
    def n_samples(self):
        return self.views[0].shape[1]

    @property
    def view_dims(self):
        return [v.shape[0] for v in self.views]

    def stacked(self):
        return np.vstack(self.views)

    def select_ids(self, sample_ids):
        """Sub-matrix holding the given samples, in the given order."""
        position = {s: i for i, s in enumerate(self.sample_ids)}
        try:
            idx = [position[s] for s in sample_ids]
        except KeyError as exc:
            raise ParameterError(f"unknown sample id {exc.args[0]!r}") from None
        return MultiViewFeatureMatrix(
            [v[:, idx].copy() for v in self.views],
            [self.sample_ids[i] for i in idx],
            list(self.view_names),
            self.descriptor,
            self.gabor_info,
        )

    def restrict_to_view(self, view_name):
        """Single-view instance keeping only the named view."""
        if view_name not in self.view_names:
            raise ParameterError(
                f"unknown view {view_name!r}; available: {', '.join(self.view_names)}"
            )
        p = self.view_names.index(view_name)
        return MultiViewFeatureMatrix(
            [self.views[p].copy()],
            list(self.sample_ids),
            [view_name],
            f"single:{view_name} of {self.descriptor}",
            self.gabor_info,
        )


def save_features(path, features):
    """Write a MultiViewFeatureMatrix to its container file."""
    for name in features.view_names:
        if not name or any(c.isspace() for c in name):
            raise ParameterError(f"view name {name!r} must be non-empty without whitespace")
    for sample_id in features.sample_ids:
        if not sample_id or sample_id != sample_id.strip() or "\n" in sample_id or sample_id == "end":
            raise ParameterError(f"sample id {sample_id!r} cannot be stored")
    if "\n" in features.descriptor:
        raise ParameterError("descriptor must be a single line")
    header = [
        f"{_FEATURE_MAGIC} {_FORMAT_VERSION}",
        f"views {features.n_views}",
        "dims " + " ".join(str(d) for d in features.view_dims),
        f"samples {features.n_samples}",
        "names " + " ".join(features.view_names),
        f"descriptor {features.descriptor}",
    ]
    if features.gabor_info is not None:
        header.append(
            "gabor " + json.dumps(_jsonable(features.gabor_info), sort_keys=True, separators=(",", ":"))
        )
    header += [
        "ids",
        *features.sample_ids,
        "end",
        "",
    ]
    payload = b"".join(
        np.asarray(v, dtype="<f8").ravel(order="F").tobytes() for v in features.views
    )
    _atomic_write_bytes(path, "\n".join(header).encode() + payload)


def _split_header(path, data, magic):
    marker = b"\nend\n"
    cut = data.find(marker)
    if cut == -1:
        raise DataError(f"{path}: missing header terminator (not a {magic} file?)")
    try:
        header = data[:cut].decode()
    except UnicodeDecodeError:
        raise DataError(f"{path}: undecodable header") from None
    return header.splitlines(), data[cut + len(marker) :]


def load_features(path):
    """Read a feature container back into a MultiViewFeatureMatrix.

    The binary payload must match the header byte for byte: short files
    and trailing garbage both fail.
    """
    path = Path(path)
    data = path.read_bytes()
    lines, payload = _split_header(path, data, _FEATURE_MAGIC)
    if not lines:
        raise DataError(f"{path}: empty header")
    magic_line = lines[0].split()
    if not magic_line or magic_line[0] != _FEATURE_MAGIC:
        raise DataError(f"{path}: not a feature container")
    if magic_line[1:] != [str(_FORMAT_VERSION)]:
        raise DataError(
            f"{path}: unsupported feature container version"
            f" {' '.join(magic_line[1:]) or '?'} (supported: {_FORMAT_VERSION})"
        )
    fields = {}
    ids = None
    i = 1
    while i < len(lines):
        if lines[i] == "ids":
            ids = lines[i + 1 :]
            break
        key, _, value = lines[i].partition(" ")
        fields[key] = value
        i += 1
    if ids is None:
        raise DataError(f"{path}: missing ids section")
    try:
        n_views = int(fields["views"])
        dims = [int(d) for d in fields["dims"].split()]
        n_samples = int(fields["samples"])
    except (KeyError, ValueError):
        raise DataError(f"{path}: malformed feature header") from None
    names = fields.get("names", "").split()
    descriptor = fields.get("descriptor", "custom")
    gabor_info = None
    if "gabor" in fields:
        try:
            gabor_info = json.loads(fields["gabor"])
        except json.JSONDecodeError:
            raise DataError(f"{path}: bad gabor parameter line") from None
    if n_views < 1 or len(dims) != n_views or len(names) != n_views:
        raise DataError(f"{path}: inconsistent view declarations")
    if n_samples < 1 or len(ids) != n_samples:
        raise DataError(
            f"{path}: header declares {n_samples} samples but lists {len(ids)} ids"
        )
    expected = 8 * n_samples * sum(dims)
    if len(payload) < expected:
        raise DataError(
            f"{path}: unexpected end of data ({len(payload)} of {expected} payload bytes)"
        )
    if len(payload) > expected:
        raise DataError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    views = []
    offset = 0
    for dim in dims:
        count = dim * n_samples
        block = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        views.append(block.reshape((dim, n_samples), order="F").astype(float))
        offset += count * 8
    return MultiViewFeatureMatrix(views, ids, names, descriptor, gabor_info)


# ---------------------------------------------------------------------------
# splits


@dataclass
class SplitSpec:
    """How to cut a dataset into train and test.

    Modes: "paper_protocol" holds out one seeded-random image per
    (subject, expression) pair; "ratio" holds out a seeded stratified
    fraction (``ratio`` is the test share); "explicit" takes
    ``test_ids`` (train is the rest unless ``train_ids`` is given);
    "all" keeps everything for training.
    """

    mode: str = "paper_protocol"
    seed: int = 0
    ratio: float = 0.5
    test_ids: list = None
    train_ids: list = None

    def validate(self):
        if self.mode not in ("paper_protocol", "ratio", "explicit", "all"):
            raise ParameterError(
                f"split mode must be paper_protocol, ratio, explicit, or all,"
                f" got {self.mode!r}"
            )
        if self.mode == "ratio":
            ratio = check_scalar(self.ratio, "ratio")
            if not 0.0 < ratio < 1.0:
                raise ParameterError(f"ratio must lie strictly in (0, 1), got {ratio}")
        if self.mode == "explicit" and not self.test_ids:
            raise ParameterError("explicit split needs test_ids")
        return self


def split_labeled(sample_ids, labels, spec):
    """Split (id, label) pairs per a SplitSpec (no subject structure needed)."""
    spec.validate()
    sample_ids = [str(s) for s in sample_ids]
    labels = list(labels)
    if len(sample_ids) != len(labels):
        raise ParameterError(
            f"{len(sample_ids)} sample ids against {len(labels)} labels"
        )
    if spec.mode == "all":
        return list(sample_ids), []
    if spec.mode == "explicit":
        known = set(sample_ids)
        test = [str(s) for s in spec.test_ids]
        for s in test:
            if s not in known:
                raise ParameterError(f"test id {s!r} not in the dataset")
        test_set = set(test)
        if len(test_set) != len(test):
            raise ParameterError("explicit test_ids contain duplicates")
        if spec.train_ids is not None:
            train = [str(s) for s in spec.train_ids]
            for s in train:
                if s not in known:
                    raise ParameterError(f"train id {s!r} not in the dataset")
                if s in test_set:
                    raise ParameterError(f"id {s!r} appears in both train and test")
        else:
            train = [s for s in sample_ids if s not in test_set]
        return train, test
    if spec.mode == "paper_protocol":
        raise ParameterError(
            "paper_protocol needs subject structure; use split_dataset with a manifest"
        )
    # ratio: stratified, largest-remainder apportioning of the test quota
    groups = {}
    for sample_id, label in zip(sample_ids, labels):
        groups.setdefault(label, []).append(sample_id)
    order = sorted(groups)
    total_test = round(spec.ratio * len(sample_ids))
    quotas = {label: spec.ratio * len(groups[label]) for label in order}
    base = {label: min(int(math.floor(quotas[label])), len(groups[label])) for label in order}
    leftover = total_test - sum(base.values())
    remainders = sorted(
        order, key=lambda lbl: (-(quotas[lbl] - base[lbl]), order.index(lbl))
    )
    while leftover > 0:
        placed = False
        for label in remainders:
            if leftover > 0 and base[label] < len(groups[label]):
                base[label] += 1
                leftover -= 1
                placed = True
        if not placed:
            break
    rng = np.random.default_rng(spec.seed)
    test_set = set()
    for label in order:
        members = groups[label]
        picked = rng.choice(len(members), size=base[label], replace=False)
        test_set.update(members[i] for i in picked)
    train = [s for s in sample_ids if s not in test_set]
    test = [s for s in sample_ids if s in test_set]
    return train, test


def split_dataset(manifest, spec):
    """Split a manifest into (train_ids, test_ids) per a SplitSpec.

    The paper protocol demands at least one image for every
    (subject, expression) pair over the subjects and expressions present
    and holds out exactly one per pair.
    """
    spec.validate()
    if spec.mode != "paper_protocol":
        ids = [e.image_path for e in manifest]
        labels = [e.expression for e in manifest]
        return split_labeled(ids, labels, spec)
    subjects = sorted({e.subject_id for e in manifest})
    expressions = sorted({e.expression for e in manifest})
    by_pair = {}
    for entry in manifest:
        by_pair.setdefault((entry.subject_id, entry.expression), []).append(
            entry.image_path
        )
    rng = np.random.default_rng(spec.seed)
    test = []
    for subject in subjects:
        for expression in expressions:
            group = by_pair.get((subject, expression))
            if not group:
                raise ProtocolError(
                    f"no image for subject {subject!r} with expression {expression!r};"
                    f" the one-per-pair protocol needs full coverage"
                )
            test.append(group[int(rng.integers(len(group)))])
    test_set = set(test)
    train = [e.image_path for e in manifest if e.image_path not in test_set]
    return train, test


# ---------------------------------------------------------------------------
# synthetic instances


@dataclass
class SyntheticSpec:
    """Shape of a planted sparse-coding instance.

    Samples are sparse combinations of unit-norm random atoms; with
    several classes the atoms split into disjoint per-class blocks and
    each sample draws its support from its class block around a fixed
    class template scaled by ``class_separation``. ``snr_db`` sets the
    additive-noise level exactly (None for noiseless).
    """

    n_views: int = 2
    view_dims: tuple = (20, 20)
    n_atoms: int = 16
    n_samples: int = 64
    sparsity: int = 3
    snr_db: float = None
    n_classes: int = 1
    class_separation: float = 1.0
    seed: int = 0

    def validate(self):
        if self.n_views < 1:
            raise ParameterError(f"n_views must be positive, got {self.n_views}")
        dims = list(self.view_dims)
        if len(dims) != self.n_views or any(d < 1 for d in dims):
            raise ParameterError(
                f"view_dims must give {self.n_views} positive sizes, got {dims}"
            )
        if self.n_atoms < 1:
            raise ParameterError(f"n_atoms must be positive, got {self.n_atoms}")
        if self.n_samples < 1:
            raise ParameterError(f"n_samples must be positive, got {self.n_samples}")
        if not 1 <= self.sparsity <= self.n_atoms:
            raise ParameterError(
                f"sparsity must lie in [1, {self.n_atoms}], got {self.sparsity}"
            )
        if self.n_classes < 1:
            raise ParameterError(f"n_classes must be positive, got {self.n_classes}")
        if self.n_classes > self.n_atoms:
            raise ParameterError(
                f"{self.n_classes} classes cannot share {self.n_atoms} atoms"
            )
        smallest_block = self.n_atoms // self.n_classes
        if self.sparsity > smallest_block:
            raise ParameterError(
                f"sparsity {self.sparsity} exceeds the per-class atom budget"
                f" ({smallest_block}); raise n_atoms or lower sparsity"
            )
        check_scalar(self.class_separation, "class_separation", minimum=0.0)
        if self.snr_db is not None:
            check_scalar(self.snr_db, "snr_db")
        return self

    def to_dict(self):
        return {
            "n_views": int(self.n_views),
            "view_dims": [int(d) for d in self.view_dims],
            "n_atoms": int(self.n_atoms),
            "n_samples": int(self.n_samples),
            "sparsity": int(self.sparsity),
            "snr_db": None if self.snr_db is None else float(self.snr_db),
            "n_classes": int(self.n_classes),
            "class_separation": float(self.class_separation),
            "seed": int(self.seed),
        }


def generate_synthetic(spec):
    """Draw a planted instance: (features, true dictionaries, true codes, labels).

    Every code column has exactly ``sparsity`` nonzeros; the generating
    atoms have unit stacked norm; the realized noise is rescaled so the
    overall SNR hits ``snr_db`` exactly.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    dims = [int(d) for d in spec.view_dims]
    total_dim = sum(dims)
    atoms = rng.standard_normal((total_dim, spec.n_atoms))
    atoms /= np.sqrt((atoms * atoms).sum(axis=0))
    blocks = np.array_split(np.arange(spec.n_atoms), spec.n_classes)
    templates = [
        rng.uniform(0.5, 1.5, size=len(block)) * rng.choice([-1.0, 1.0], size=len(block))
        for block in blocks
    ]
    labels = np.arange(spec.n_samples) % spec.n_classes
    codes = np.zeros((spec.n_atoms, spec.n_samples))
    for j in range(spec.n_samples):
        block = blocks[labels[j]]
        template = templates[labels[j]]
        support = rng.choice(len(block), size=spec.sparsity, replace=False)
        codes[block[support], j] = (
            spec.class_separation * template[support]
            + rng.standard_normal(spec.sparsity)
        )
    signal = atoms @ codes
    if spec.snr_db is not None:
        noise = rng.standard_normal(signal.shape)
        signal_power = float(np.vdot(signal, signal))
        noise_power = float(np.vdot(noise, noise))
        scale = math.sqrt(signal_power / (noise_power * 10.0 ** (spec.snr_db / 10.0)))
        signal = signal + scale * noise
    views, row = [], 0
    for dim in dims:
        views.append(signal[row : row + dim].copy())
        row += dim
    features = MultiViewFeatureMatrix(
        views,
        [f"sample-{j:05d}" for j in range(spec.n_samples)],
        [f"view{p}" for p in range(spec.n_views)],
        "synthetic",
    )
    dictionaries = DictionarySet.from_stacked(atoms, dims)
    return features, dictionaries, codes, labels


# ---------------------------------------------------------------------------
# block containers (model archive, synthetic truth)


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _write_container(path, magic, meta, blocks):
    directory = [{"name": name, "shape": list(arr.shape)} for name, arr in blocks]
    meta = dict(meta)
    meta["blocks"] = directory
    header = (
        f"{magic} {_FORMAT_VERSION}\n"
        + json.dumps(_jsonable(meta), sort_keys=True, separators=(",", ":"))
        + "\nBINARY\n"
    )
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in blocks
    )
    _atomic_write_bytes(path, header.encode() + payload)


def _read_container(path, magic):
    path = Path(path)
    data = path.read_bytes()
    marker = b"\nBINARY\n"
    cut = data.find(marker)
    if cut == -1:
        raise DataError(f"{path}: missing BINARY marker (not a {magic} file?)")
    try:
        header_lines = data[:cut].decode().splitlines()
    except UnicodeDecodeError:
        raise DataError(f"{path}: undecodable header") from None
    if len(header_lines) != 2:
        raise DataError(f"{path}: malformed container header")
    magic_line = header_lines[0].split()
    if not magic_line or magic_line[0] != magic:
        raise DataError(f"{path}: expected a {magic} container")
    if magic_line[1:] != [str(_FORMAT_VERSION)]:
        raise DataError(
            f"{path}: unsupported {magic} version"
            f" {' '.join(magic_line[1:]) or '?'} (supported: {_FORMAT_VERSION})"
        )
    try:
        meta = json.loads(header_lines[1])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: bad container metadata ({exc})") from None
    payload = data[cut + len(marker) :]
    blocks = {}
    offset = 0
    for entry in meta.get("blocks", []):
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(payload):
            raise DataError(
                f"{path}: unexpected end of data in block {entry['name']!r}"
            )
        blocks[entry["name"]] = (
            np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
            .reshape(shape)
            .astype(float)
        )
        offset = end
    if offset != len(payload):
        raise DataError(f"{path}: {len(payload) - offset} trailing bytes after blocks")
    return meta, blocks


def save_synthetic_truth(path, spec, dictionaries, codes, labels):
    """Persist the generating structure of a synthetic instance."""
    meta = {
        "kind": "synthetic-truth",
        "spec": spec.to_dict(),
        "labels": [int(v) for v in labels],
        "view_dims": [int(d) for d in dictionaries.view_dims],
    }
    blocks = [(f"dict{p}", d) for p, d in enumerate(dictionaries)]
    blocks.append(("codes", np.asarray(codes, dtype=float)))
    _write_container(path, _TRUTH_MAGIC, meta, blocks)


def load_synthetic_truth(path):
    """Load (spec, dictionaries, codes, labels) back from a truth file."""
    meta, blocks = _read_container(path, _TRUTH_MAGIC)
    try:
        spec = SyntheticSpec(
            n_views=meta["spec"]["n_views"],
            view_dims=tuple(meta["spec"]["view_dims"]),
            n_atoms=meta["spec"]["n_atoms"],
            n_samples=meta["spec"]["n_samples"],
            sparsity=meta["spec"]["sparsity"],
            snr_db=meta["spec"]["snr_db"],
            n_classes=meta["spec"]["n_classes"],
            class_separation=meta["spec"]["class_separation"],
            seed=meta["spec"]["seed"],
        )
        dicts = DictionarySet([blocks[f"dict{p}"] for p in range(spec.n_views)])
        codes = blocks["codes"]
        labels = np.array([int(v) for v in meta["labels"]])
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: incomplete synthetic truth ({exc!r})") from None
    return spec, dicts, codes, labels


# ---------------------------------------------------------------------------
# model archive


_CLASSIFIER_KINDS = ("ls", "svm")


@dataclass
class ModelArchive:
    """Everything needed to encode and classify new samples.

    ``classifiers`` maps "ls"/"svm" to fitted classifier objects.
    ``metadata`` is free-form JSON-able bookkeeping (seed, split ids,
    creation time if the caller wants one).
    """

    dictionaries: DictionarySet
    solver_config: SolverConfig
    descriptor: str = "custom"
    view_names: list = field(default_factory=list)
    gabor_params: GaborParams = None
    normalize: str = "unit"
    classifiers: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.view_names:
            self.view_names = [f"view{p}" for p in range(self.dictionaries.n_views)]
        if len(self.view_names) != self.dictionaries.n_views:
            raise DimensionError(
                f"{len(self.view_names)} view names for"
                f" {self.dictionaries.n_views} dictionary views"
            )
        for name in self.classifiers:
            if name not in _CLASSIFIER_KINDS:
                raise ParameterError(
                    f"unknown classifier kind {name!r}; expected one of {_CLASSIFIER_KINDS}"
                )

    def check_features(self, features):
        """Raise unless the feature set matches the trained views."""
        if features.n_views != self.dictionaries.n_views:
            raise DimensionError(
                f"model expects {self.dictionaries.n_views} views,"
                f" features have {features.n_views}"
            )
        for p, (have, want) in enumerate(
            zip(features.view_dims, self.dictionaries.view_dims)
        ):
            if have != want:
                raise DimensionError(
                    f"view {p} ({self.view_names[p]}): model expects dimension"
                    f" {want}, features have {have}"
                )


def _classifier_meta(name, clf):
    meta = {"classes": [_jsonable(c) for c in clf.classes_]}
    if name == "ls":
        meta["ridge"] = float(clf.ridge)
    else:
        meta["C"] = float(clf.C)
        meta["epochs"] = int(clf.epochs)
        meta["seed"] = int(clf.seed)
    return meta


def _rebuild_classifier(name, meta, weights, biases):
    if name == "ls":
        clf = LeastSquaresClassifier(ridge=meta.get("ridge", 1e-6))
    else:
        clf = LinearSVMClassifier(
            C=meta.get("C", 1.0), epochs=meta.get("epochs", 200), seed=meta.get("seed", 0)
        )
    clf.classes_ = np.array(meta["classes"])
    clf.weights_ = weights
    clf.biases_ = biases
    return clf


def save_model(path, archive):
    """Write a ModelArchive to its container file."""
    meta = {
        "kind": "model",
        "descriptor": archive.descriptor,
        "view_names": list(archive.view_names),
        "view_dims": [int(d) for d in archive.dictionaries.view_dims],
        "n_atoms": int(archive.dictionaries.n_atoms),
        "gabor": None if archive.gabor_params is None else archive.gabor_params.to_dict(),
        "solver": archive.solver_config.to_dict(),
        "normalize": archive.normalize,
        "classifiers": {
            name: _classifier_meta(name, clf)
            for name, clf in sorted(archive.classifiers.items())
        },
        "metadata": archive.metadata,
    }
    blocks = [(f"dict{p}", d) for p, d in enumerate(archive.dictionaries)]
    for name, clf in sorted(archive.classifiers.items()):
        blocks.append((f"{name}.weights", clf.weights_))
        blocks.append((f"{name}.biases", clf.biases_))
    _write_container(path, _MODEL_MAGIC, meta, blocks)


def load_model(path):
    """Load a ModelArchive; models round-trip to identical predictions."""
    meta, blocks = _read_container(path, _MODEL_MAGIC)
    try:
        view_dims = [int(d) for d in meta["view_dims"]]
        dicts = DictionarySet([blocks[f"dict{p}"] for p in range(len(view_dims))])
        solver_config = SolverConfig(**meta["solver"])
        gabor = None if meta["gabor"] is None else GaborParams(**meta["gabor"])
        classifiers = {}
        for name, clf_meta in meta.get("classifiers", {}).items():
            if name not in _CLASSIFIER_KINDS:
                raise DataError(f"{path}: unknown classifier kind {name!r}")
            classifiers[name] = _rebuild_classifier(
                name, clf_meta, blocks[f"{name}.weights"], blocks[f"{name}.biases"]
            )
        archive = ModelArchive(
            dictionaries=dicts,
            solver_config=solver_config,
            descriptor=meta.get("descriptor", "custom"),
            view_names=list(meta.get("view_names", [])),
            gabor_params=gabor,
            normalize=meta.get("normalize", "unit"),
            classifiers=classifiers,
            metadata=meta.get("metadata", {}),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: incomplete model archive ({exc!r})") from None
    if view_dims != archive.dictionaries.view_dims:
        raise DataError(f"{path}: dictionary blocks disagree with declared view dims")
    return archive
