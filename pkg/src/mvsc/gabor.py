"""Gabor kernel bank and point-sampled feature extraction.

Builds complex, DC-free Gabor kernels over a grid of scales and
orientations, samples their correlation responses at annotated landmark
points of a grayscale image, and regroups the resulting magnitude
features into "views" either by landmark region or by kernel
orientation. Feature order is point-major: all responses of point 0
(scale-major, orientation-minor), then point 1, and so on.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataError, DimensionError, ParameterError
from .validation import check_matrix

__all__ = [
    "REGIONS",
    "GaborParams",
    "GaborKernel",
    "GaborBank",
    "FiducialMask",
    "FeatureLayout",
    "FeatureVector",
    "FeatureStats",
    "build_bank",
    "build_kernel",
    "extract_features",
    "partition_by_orientation",
    "merge_orientation_views",
    "partition_by_region",
    "merge_region_views",
    "normalize_features",
    "fit_feature_stats",
    "apply_feature_stats",
    "GaborFeatureTransformer",
]

REGIONS = ("forehead", "eye", "mouth")

MAX_WINDOW_RADIUS = 64


@dataclass(frozen=True)
class GaborParams:
    """Generating parameters of the kernel bank.

    ``k_max`` is the carrier frequency of the finest scale in radians
    per pixel; each coarser scale divides it by ``scale_factor``.
    ``sigma`` sets the Gaussian envelope width relative to the carrier
    wavelength. ``window_radius`` fixes the sampled half-width for every
    scale; leave it None to size each scale automatically at 2.5
    envelope standard deviations (sigma / k_v pixels), capped at 64.
    """

    k_max: float = math.pi / 2
    scale_factor: float = math.sqrt(2.0)
    sigma: float = 2 * math.pi
    num_scales: int = 5
    num_orientations: int = 8
    window_radius: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (np.isfinite(self.k_max) and self.k_max > 0):
            raise ParameterError(f"k_max must be positive, got {self.k_max!r}")
        if not (np.isfinite(self.scale_factor) and self.scale_factor > 1):
            raise ParameterError(
                f"scale_factor must exceed 1, got {self.scale_factor!r}"
            )
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"sigma must be positive, got {self.sigma!r}")
        if int(self.num_scales) != self.num_scales or self.num_scales < 1:
            raise ParameterError(
                f"num_scales must be a positive integer, got {self.num_scales!r}"
            )
        if int(self.num_orientations) != self.num_orientations or self.num_orientations < 1:
            raise ParameterError(
                f"num_orientations must be a positive integer, got {self.num_orientations!r}"
            )
        if self.window_radius is not None and (
            int(self.window_radius) != self.window_radius or self.window_radius < 1
        ):
            raise ParameterError(
                f"window_radius must be a positive integer or None, got {self.window_radius!r}"
            )

    def frequency(self, scale_index):
        """Carrier frequency k_v of the given scale (strictly decreasing in v)."""
        return self.k_max / self.scale_factor**scale_index

    def orientation_angle(self, orientation_index):
        """Carrier direction of the given orientation, in radians."""
        return orientation_index * math.pi / self.num_orientations

    def radius_for_scale(self, scale_index):
        """Half-width in pixels of the sampled grid at this scale."""
        if self.window_radius is not None:
            return int(self.window_radius)
        auto = math.ceil(2.5 * self.sigma / self.frequency(scale_index))
        return min(int(auto), MAX_WINDOW_RADIUS)

    def to_dict(self):
        return {
            "k_max": self.k_max,
            "scale_factor": self.scale_factor,
            "sigma": self.sigma,
            "num_scales": self.num_scales,
            "num_orientations": self.num_orientations,
            "window_radius": self.window_radius,
        }


@dataclass(frozen=True)
class GaborKernel:
    """One sampled complex kernel on a (2r+1) x (2r+1) pixel grid."""

    scale_index: int
    orientation_index: int
    grid: np.ndarray

    @property
    def radius(self):
        return (self.grid.shape[0] - 1) // 2


def build_kernel(params, scale_index, orientation_index):
    """Sample one DC-free complex kernel on its pixel grid.

    The analytic form is a Gaussian envelope scaled by k^2/sigma^2 times
    a plane-wave carrier with its DC component subtracted:

        (k^2/sigma^2) exp(-k^2 |z|^2 / (2 sigma^2)) [exp(i k.z) - exp(-sigma^2/2)]

    The analytic subtraction cancels DC only in the continuum; the
    sampled grid keeps a residual mean well above working precision, so
    the grid mean is removed outright after sampling.
    """
    kv = params.frequency(scale_index)
    phi = params.orientation_angle(orientation_index)
    radius = params.radius_for_scale(scale_index)
    coords = np.arange(-radius, radius + 1, dtype=float)
    x = coords[np.newaxis, :]
    y = coords[:, np.newaxis]
    ksq = kv * kv
    sigsq = params.sigma * params.sigma
    envelope = (ksq / sigsq) * np.exp(-ksq * (x * x + y * y) / (2.0 * sigsq))
    carrier = np.exp(1j * kv * (math.cos(phi) * x + math.sin(phi) * y))
    grid = envelope * (carrier - math.exp(-sigsq / 2.0))
    grid -= grid.mean()
    return GaborKernel(int(scale_index), int(orientation_index), grid)


class GaborBank:
    """The full kernel set: num_scales * num_orientations kernels.

    Kernels are stored flat in scale-major order and also stacked per
    scale (all orientations share a window size) so extraction can hit
    every orientation with one matrix product.
    """

    def __init__(self, params, kernels):
        expected = params.num_scales * params.num_orientations
        if len(kernels) != expected:
            raise ParameterError(
                f"bank needs {expected} kernels, got {len(kernels)}"
            )
        self.params = params
        self.kernels = list(kernels)
        self.scale_stacks = []
        for v in range(params.num_scales):
            grids = [
                self.kernel(v, u).grid for u in range(params.num_orientations)
            ]
            self.scale_stacks.append(np.stack(grids))

    def kernel(self, scale_index, orientation_index):
        return self.kernels[
            scale_index * self.params.num_orientations + orientation_index
        ]

    def __len__(self):
        return len(self.kernels)

    @property
    def max_radius(self):
        return max(k.radius for k in self.kernels)


def build_bank(params=None):
    """Build the kernel bank for the given (or default) parameters."""
    if params is None:
        params = GaborParams()
    params.validate()
    kernels = [
        build_kernel(params, v, u)
        for v in range(params.num_scales)
        for u in range(params.num_orientations)
    ]
    return GaborBank(params, kernels)


@dataclass(frozen=True)
class FiducialMask:
    """Landmark points in pixel coordinates, one region label per point.

    ``points`` holds (x, y) pairs; labels come from REGIONS.
    """

    points: np.ndarray
    regions: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ParameterError(
                f"mask points must have shape (n, 2), got {pts.shape}"
            )
        if pts.size and not np.isfinite(pts).all():
            raise ParameterError("mask points contain non-finite coordinates")
        regions = tuple(self.regions)
        if len(regions) != len(pts):
            raise ParameterError(
                f"mask has {len(pts)} points but {len(regions)} region labels"
            )
        for i, label in enumerate(regions):
            if label not in REGIONS:
                raise DataError(
                    f"unknown region {label!r} for point {i}; expected one of {REGIONS}"
                )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "regions", regions)

    def __len__(self):
        return len(self.points)

    def region_indices(self, region):
        """Indices of the points carrying the given region label, in point order."""
        if region not in REGIONS:
            raise ParameterError(f"unknown region {region!r}; expected one of {REGIONS}")
        return np.array(
            [i for i, label in enumerate(self.regions) if label == region], dtype=int
        )

    def region_counts(self):
        return {region: int(len(self.region_indices(region))) for region in REGIONS}

    def shifted(self, dx, dy):
        """The same mask translated by (dx, dy) pixels."""
        return FiducialMask(self.points + np.array([dx, dy], dtype=float), self.regions)


@dataclass(frozen=True)
class FeatureLayout:
    """Maps (point, scale, orientation) to a flat feature index.

    Point-major, then scale, then orientation.
    """

    num_points: int
    num_scales: int
    num_orientations: int

    @property
    def length(self):
        return self.num_points * self.num_scales * self.num_orientations

    @property
    def per_point(self):
        return self.num_scales * self.num_orientations

    def index(self, point, scale, orientation):
        if not 0 <= point < self.num_points:
            raise ParameterError(f"point index {point} out of range [0, {self.num_points})")
        if not 0 <= scale < self.num_scales:
            raise ParameterError(f"scale index {scale} out of range [0, {self.num_scales})")
        if not 0 <= orientation < self.num_orientations:
            raise ParameterError(
                f"orientation index {orientation} out of range [0, {self.num_orientations})"
            )
        return (point * self.num_scales + scale) * self.num_orientations + orientation


@dataclass(frozen=True)
class FeatureVector:
    """Flat magnitude features of one image plus their layout."""

    values: np.ndarray
    layout: FeatureLayout

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size != self.layout.length:
            raise DimensionError(
                f"feature vector length {vals.size} does not match layout length"
                f" {self.layout.length}"
            )
        object.__setattr__(self, "values", vals)


def _window(img, cy, cx, radius, border, point_index):
    """The (2r+1)-square patch around (cx, cy), zero-padded if allowed."""
    h, w = img.shape
    top, bottom = cy - radius, cy + radius + 1
    left, right = cx - radius, cx + radius + 1
    if top >= 0 and left >= 0 and bottom <= h and right <= w:
        return img[top:bottom, left:right]
    if border == "strict":
        raise ParameterError(
            f"mask point {point_index} at ({cx}, {cy}) needs a {radius}-pixel margin"
            f" inside the {h}x{w} image (border='pad' to zero-pad)"
        )
    side = 2 * radius + 1
    patch = np.zeros((side, side))
    src_top, src_left = max(top, 0), max(left, 0)
    src_bottom, src_right = min(bottom, h), min(right, w)
    patch[
        src_top - top : src_bottom - top, src_left - left : src_right - left
    ] = img[src_top:src_bottom, src_left:src_right]
    return patch


def extract_features(image, mask, bank, border="strict"):
    """Kernel response magnitudes at every mask point of one image.

    For each landmark the kernel window is centered at the rounded pixel
    position and the complex correlation (conjugate inner product) with
    each kernel is reduced to its magnitude. ``border`` is "strict"
    (raise when any window leaves the image) or "pad" (treat outside
    pixels as zero).
    """
    img = check_matrix(image, "image")
    if border not in ("strict", "pad"):
        raise ParameterError(f"border must be 'strict' or 'pad', got {border!r}")
    params = bank.params
    layout = FeatureLayout(len(mask), params.num_scales, params.num_orientations)
    values = np.empty(layout.length)
    h, w = img.shape
    for p, (x, y) in enumerate(mask.points):
        cx, cy = int(round(float(x))), int(round(float(y)))
        if not (0 <= cx < w and 0 <= cy < h):
            raise ParameterError(
                f"mask point {p} at ({x}, {y}) lies outside the {h}x{w} image"
            )
        for v in range(params.num_scales):
            stack = bank.scale_stacks[v]
            radius = (stack.shape[1] - 1) // 2
            patch = _window(img, cy, cx, radius, border, p)
            responses = stack.reshape(params.num_orientations, -1).conj() @ patch.ravel()
            base = (p * params.num_scales + v) * params.num_orientations
            values[base : base + params.num_orientations] = np.abs(responses)
    return FeatureVector(values, layout)


def partition_by_orientation(feature_vector):
    """Split a feature vector into one view per kernel orientation.

    View u collects every feature whose kernel has orientation u, in
    point-major scale-minor order; views all have length
    num_points * num_scales.
    """
    layout = feature_vector.layout
    vals = feature_vector.values.reshape(
        layout.num_points, layout.num_scales, layout.num_orientations
    )
    return [
        vals[:, :, u].reshape(-1).copy() for u in range(layout.num_orientations)
    ]


def merge_orientation_views(views, layout):
    """Inverse of partition_by_orientation: rebuild the flat vector."""
    if len(views) != layout.num_orientations:
        raise DimensionError(
            f"expected {layout.num_orientations} orientation views, got {len(views)}"
        )
    out = np.empty((layout.num_points, layout.num_scales, layout.num_orientations))
    for u, view in enumerate(views):
        view = np.asarray(view, dtype=float)
        if view.shape != (layout.num_points * layout.num_scales,):
            raise DimensionError(
                f"view {u}: expected length {layout.num_points * layout.num_scales},"
                f" got {view.shape}"
            )
        out[:, :, u] = view.reshape(layout.num_points, layout.num_scales)
    return out.reshape(-1)


def partition_by_region(feature_vector, mask):
    """Split a feature vector into one view per landmark region.

    Views come in REGIONS order; each concatenates the full per-point
    feature blocks (all scales and orientations) of that region's
    points, preserving point order.
    """
    layout = feature_vector.layout
    if len(mask) != layout.num_points:
        raise DimensionError(
            f"mask has {len(mask)} points but layout expects {layout.num_points}"
        )
    vals = feature_vector.values.reshape(layout.num_points, layout.per_point)
    return [vals[mask.region_indices(r)].reshape(-1).copy() for r in REGIONS]


def merge_region_views(views, mask, layout):
    """Inverse of partition_by_region: rebuild the flat vector."""
    if len(views) != len(REGIONS):
        raise DimensionError(f"expected {len(REGIONS)} region views, got {len(views)}")
    if len(mask) != layout.num_points:
        raise DimensionError(
            f"mask has {len(mask)} points but layout expects {layout.num_points}"
        )
    out = np.empty((layout.num_points, layout.per_point))
    for view, region in zip(views, REGIONS):
        idx = mask.region_indices(region)
        view = np.asarray(view, dtype=float)
        if view.shape != (len(idx) * layout.per_point,):
            raise DimensionError(
                f"view {region!r}: expected length {len(idx) * layout.per_point},"
                f" got {view.shape}"
            )
        out[idx] = view.reshape(len(idx), layout.per_point)
    return out.reshape(-1)


def normalize_features(values, mode="unit"):
    """Scale a feature vector, or each column of a feature matrix.

    "unit" divides by the Euclidean norm (zero vectors pass through
    unchanged); "none" copies.
    """
    arr = np.asarray(values, dtype=float)
    if mode == "none":
        return arr.copy()
    if mode != "unit":
        raise ParameterError(f"normalize mode must be 'unit' or 'none', got {mode!r}")
    if arr.ndim == 1:
        nrm = np.linalg.norm(arr)
        return arr / nrm if nrm > 0 else arr.copy()
    if arr.ndim == 2:
        norms = np.linalg.norm(arr, axis=0)
        return arr / np.where(norms > 0, norms, 1.0)
    raise ParameterError(f"features must be 1- or 2-dimensional, got shape {arr.shape}")


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature mean and standard deviation over a sample set."""

    mean: np.ndarray
    std: np.ndarray


def fit_feature_stats(matrix):
    """Mean/std per feature row of a (n_features, n_samples) matrix.

    Zero-variance features get std 1 so standardization leaves them at
    zero instead of dividing by zero.
    """
    m = check_matrix(matrix, "feature matrix")
    mean = m.mean(axis=1)
    std = m.std(axis=1)
    std = np.where(std > 0, std, 1.0)
    return FeatureStats(mean, std)


def apply_feature_stats(values, stats):
    """Standardize a vector or a (n_features, n_samples) matrix."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        return (arr - stats.mean) / stats.std
    if arr.ndim == 2:
        return (arr - stats.mean[:, None]) / stats.std[:, None]
    raise ParameterError(f"features must be 1- or 2-dimensional, got shape {arr.shape}")


class GaborFeatureTransformer(BaseEstimator, TransformerMixin):
    """Estimator facade: images in, rows of point-sampled Gabor magnitudes out.

    ``X`` is a sequence of 2-d grayscale arrays; every image must cover
    the mask under the chosen border policy. ``transform`` returns an
    (n_images, n_features) matrix, one row per image, normalized per
    ``normalize`` ("unit" or "none").
    """

    def __init__(self, mask=None, params=None, border="strict", normalize="unit"):
        self.mask = mask
        self.params = params
        self.border = border
        self.normalize = normalize

    def fit(self, X, y=None):
        if self.mask is None:
            raise ParameterError("GaborFeatureTransformer requires a mask")
        self.bank_ = build_bank(self.params)
        self.layout_ = FeatureLayout(
            len(self.mask),
            self.bank_.params.num_scales,
            self.bank_.params.num_orientations,
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_")
        rows = []
        for image in X:
            fv = extract_features(image, self.mask, self.bank_, border=self.border)
            rows.append(normalize_features(fv.values, mode=self.normalize))
        if not rows:
            return np.empty((0, self.layout_.length))
        return np.stack(rows)
