"""Core grid types and per-slice image operations.

Volumes are stored as (nz, ny, nx) float64 arrays so that the raw on-disk
layout (x fastest) matches C order; a "slice" everywhere in the toolkit is
a 2-D (ny, nx) array indexed [y, x].

Grayscale morphology ignores out-of-bounds footprint members: the min/max
at a pixel runs over the in-bounds samples only, which avoids artificial
bright or dark rims at the image edge.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, DegenerateHistogram

HIST_LEVELS = 256


# ---------------------------------------------------------------------------
# grid types
# ---------------------------------------------------------------------------

def _check_grid(data: np.ndarray, spacing) -> None:
    if data.ndim != 3:
        raise ValueError(f"expected 3-D grid, got ndim={data.ndim}")
    if min(data.shape) < 1:
        raise ValueError(f"all dims must be >= 1, got shape {data.shape}")
    if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise ValueError(f"spacing components must be finite and > 0, got {spacing}")


@dataclass
class Volume:
    """3-D scalar grid with physical voxel spacing (sx, sy, sz) in mm."""

    spacing: tuple[float, float, float]
    data: np.ndarray  # (nz, ny, nx) float64

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.spacing = tuple(float(s) for s in self.spacing)
        _check_grid(self.data, self.spacing)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("volume data contains NaN or Inf")

    @property
    def dims(self) -> tuple[int, int, int]:
        """Voxel counts as (nx, ny, nz)."""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def copy(self) -> "Volume":
        return Volume(self.spacing, self.data.copy())


@dataclass
class Mask:
    """Binary companion grid of a Volume; same dims and spacing."""

    spacing: tuple[float, float, float]
    data: np.ndarray  # (nz, ny, nx) bool

    def __post_init__(self):
        self.data = np.asarray(self.data).astype(bool)
        self.spacing = tuple(float(s) for s in self.spacing)
        _check_grid(self.data, self.spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def count(self) -> int:
        return int(self.data.sum())

    def copy(self) -> "Mask":
        return Mask(self.spacing, self.data.copy())

    @classmethod
    def empty_like(cls, other: "Volume | Mask") -> "Mask":
        return cls(other.spacing, np.zeros(other.data.shape, dtype=bool))


def check_aligned(*grids) -> None:
    """Raise AlignmentError unless all grids share dims and spacing."""
    ref = grids[0]
    for g in grids[1:]:
        if g.data.shape != ref.data.shape or g.spacing != ref.spacing:
            raise AlignmentError(
                f"grids are not aligned: {g.data.shape}/{g.spacing} vs "
                f"{ref.data.shape}/{ref.spacing}"
            )


@dataclass
class LabeledCase:
    """A volume plus aligned contour masks and optional ground truth.

    gt_scar is the hyper-enhanced region only; gt_mvo is the disjoint
    microvascular-obstruction region. per_slice_labels, when present, is a
    list of "healthy"/"diseased" of length nz.
    """

    case_id: str
    volume: Volume
    myocardium: Mask
    endocardium: Mask
    epicardium: Mask
    gt_scar: Mask | None = None
    gt_mvo: Mask | None = None
    per_slice_labels: list[str] | None = None

    def __post_init__(self):
        grids = [self.volume, self.myocardium, self.endocardium, self.epicardium]
        grids += [m for m in (self.gt_scar, self.gt_mvo) if m is not None]
        check_aligned(*grids)
        nz = self.volume.data.shape[0]
        if self.per_slice_labels is not None and len(self.per_slice_labels) != nz:
            raise ValueError(
                f"per_slice_labels has {len(self.per_slice_labels)} entries, expected {nz}"
            )

    @property
    def nz(self) -> int:
        return self.volume.data.shape[0]

    def slice_label(self, k: int) -> str:
        """Label of slice k; derived from gt_scar when labels are absent."""
        if self.per_slice_labels is not None:
            return self.per_slice_labels[k]
        if self.gt_scar is not None and self.gt_scar.data[k].any():
            return "diseased"
        return "healthy"


# ---------------------------------------------------------------------------
# structuring elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructuringElement:
    """2-D footprint as (dx, dy) integer offsets around the (0, 0) anchor."""

    offsets: tuple[tuple[int, int], ...]
    kind: str = "custom"

    def __post_init__(self):
        if (0, 0) not in self.offsets:
            raise ValueError("anchor offset (0, 0) must be a footprint member")

    def __len__(self) -> int:
        return len(self.offsets)

    def reflected(self) -> "StructuringElement":
        return StructuringElement(
            tuple((-dx, -dy) for dx, dy in self.offsets), kind=self.kind
        )


def make_disk_se(r: int) -> StructuringElement:
    """Disk footprint: all offsets with Euclidean norm <= r."""
    if r < 0:
        raise ValueError("disk radius must be >= 0")
    offs = [
        (dx, dy)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dx * dx + dy * dy <= r * r
    ]
    return StructuringElement(tuple(offs), kind=f"disk({r})")


def make_bar_se(length: int, theta_deg: float) -> StructuringElement:
    """Linear footprint of `length` collinear pixels along direction theta.

    The bar is rasterized by stepping along the dominant axis of
    (cos theta, -sin theta) with the minor coordinate rounded. For even
    lengths the extra pixel sits on the positive direction.
    """
    if length < 1:
        raise ValueError("bar length must be >= 1")
    theta = np.deg2rad(theta_deg)
    ux, uy = np.cos(theta), -np.sin(theta)
    offs = []
    steps = range(-((length - 1) // 2), length // 2 + 1)
    if abs(ux) >= abs(uy):
        ratio = uy / ux if ux != 0 else 0.0
        sign = 1 if ux >= 0 else -1
        for s in steps:
            dx = sign * s
            offs.append((dx, int(np.floor(dx * ratio + 0.5))))
    else:
        ratio = ux / uy
        sign = 1 if uy >= 0 else -1
        for s in steps:
            dy = sign * s
            offs.append((int(np.floor(dy * ratio + 0.5)), dy))
    return StructuringElement(tuple(offs), kind=f"bar({length},{theta_deg})")


# ---------------------------------------------------------------------------
# grayscale morphology
# ---------------------------------------------------------------------------

def _shift_reduce(img: np.ndarray, offsets, ufunc, init: float) -> np.ndarray:
    """Accumulate ufunc (minimum/maximum) of img shifted by each offset.

    Out-of-bounds samples are skipped; the anchor guarantees every pixel
    receives at least one in-bounds sample.
    """
    ny, nx = img.shape
    out = np.full((ny, nx), init, dtype=np.float64)
    for dx, dy in offsets:
        y0, y1 = max(0, -dy), min(ny, ny - dy)
        x0, x1 = max(0, -dx), min(nx, nx - dx)
        if y0 >= y1 or x0 >= x1:
            continue
        src = img[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
        dst = out[y0:y1, x0:x1]
        ufunc(dst, src, out=dst)
    return out


def gray_erode(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Pointwise min of img over the footprint placed at each pixel."""
    img = np.asarray(img, dtype=np.float64)
    return _shift_reduce(img, se.offsets, np.minimum, np.inf)


def gray_dilate(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Pointwise max with the footprint reflected through the anchor."""
    img = np.asarray(img, dtype=np.float64)
    neg = [(-dx, -dy) for dx, dy in se.offsets]
    return _shift_reduce(img, neg, np.maximum, -np.inf)


def gray_opening(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    return gray_dilate(gray_erode(img, se), se)


def white_tophat(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Image minus its opening; keeps bright structures thinner than se."""
    img = np.asarray(img, dtype=np.float64)
    return img - gray_opening(img, se)


def binary_erode(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    ny, nx = mask.shape
    out = np.ones((ny, nx), dtype=bool)
    for dx, dy in se.offsets:
        y0, y1 = max(0, -dy), min(ny, ny - dy)
        x0, x1 = max(0, -dx), min(nx, nx - dx)
        if y0 >= y1 or x0 >= x1:
            continue
        out[y0:y1, x0:x1] &= mask[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
    return out


def binary_dilate(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    ny, nx = mask.shape
    out = np.zeros((ny, nx), dtype=bool)
    for dx, dy in se.offsets:
        dx, dy = -dx, -dy
        y0, y1 = max(0, -dy), min(ny, ny - dy)
        x0, x1 = max(0, -dx), min(nx, nx - dx)
        if y0 >= y1 or x0 >= x1:
            continue
        out[y0:y1, x0:x1] |= mask[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
    return out


def binary_opening(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    return binary_dilate(binary_erode(mask, se), se)


# ---------------------------------------------------------------------------
# components and holes
# ---------------------------------------------------------------------------

_NEIGHBORS_4 = ((0, 1), (0, -1), (1, 0), (-1, 0))
_NEIGHBORS_8 = _NEIGHBORS_4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


def connected_components(mask: np.ndarray, connectivity: int = 8):
    """Label foreground components; returns (labels, count).

    Labels are dense 1..count, assigned in raster-scan order of each
    component's first pixel.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    neigh = _NEIGHBORS_4 if connectivity == 4 else _NEIGHBORS_8
    mask = np.asarray(mask, dtype=bool)
    ny, nx = mask.shape
    labels = np.zeros((ny, nx), dtype=np.int32)
    count = 0
    ys, xs = np.nonzero(mask)
    for y0, x0 in zip(ys.tolist(), xs.tolist()):
        if labels[y0, x0]:
            continue
        count += 1
        labels[y0, x0] = count
        queue = deque([(y0, x0)])
        while queue:
            y, x = queue.popleft()
            for dy, dx in neigh:
                yy, xx = y + dy, x + dx
                if 0 <= yy < ny and 0 <= xx < nx and mask[yy, xx] and not labels[yy, xx]:
                    labels[yy, xx] = count
                    queue.append((yy, xx))
    return labels, count


def fill_holes_2d(mask: np.ndarray) -> np.ndarray:
    """Add background regions not 4-connected to the slice border."""
    mask = np.asarray(mask, dtype=bool)
    ny, nx = mask.shape
    reached = np.zeros((ny, nx), dtype=bool)
    queue = deque()
    for x in range(nx):
        for y in (0, ny - 1):
            if not mask[y, x] and not reached[y, x]:
                reached[y, x] = True
                queue.append((y, x))
    for y in range(ny):
        for x in (0, nx - 1):
            if not mask[y, x] and not reached[y, x]:
                reached[y, x] = True
                queue.append((y, x))
    while queue:
        y, x = queue.popleft()
        for dy, dx in _NEIGHBORS_4:
            yy, xx = y + dy, x + dx
            if 0 <= yy < ny and 0 <= xx < nx and not mask[yy, xx] and not reached[yy, xx]:
                reached[yy, xx] = True
                queue.append((yy, xx))
    return mask | ~reached


# ---------------------------------------------------------------------------
# histogram and Otsu threshold
# ---------------------------------------------------------------------------

@dataclass
class Histogram:
    """256-bin count histogram over intensity levels 0..255."""

    bins: np.ndarray = field(default_factory=lambda: np.zeros(HIST_LEVELS, dtype=np.int64))

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.int64)
        if self.bins.shape != (HIST_LEVELS,):
            raise ValueError(f"histogram must have {HIST_LEVELS} bins")
        if (self.bins < 0).any():
            raise ValueError("histogram counts must be >= 0")

    @property
    def total(self) -> int:
        return int(self.bins.sum())

    @classmethod
    def from_values(cls, values: np.ndarray) -> "Histogram":
        """Tally normalized intensities; values are rounded to levels 0..255."""
        levels = intensity_levels(values)
        return cls(np.bincount(levels.ravel(), minlength=HIST_LEVELS))


def intensity_levels(values: np.ndarray) -> np.ndarray:
    """Map [0, 255] float intensities to integer levels (round half up)."""
    v = np.floor(np.asarray(values, dtype=np.float64) + 0.5)
    return np.clip(v, 0, HIST_LEVELS - 1).astype(np.int64)


def otsu_threshold(hist: Histogram) -> int:
    """Level t maximizing between-class variance of the {<=t, >t} split.

    Ties break toward the smaller t; foreground is levels strictly above t.
    """
    counts = hist.bins.astype(np.float64)
    total = counts.sum()
    if total < 2 or np.count_nonzero(counts) < 2:
        raise DegenerateHistogram("histogram needs >= 2 samples in >= 2 levels")
    p = counts / total
    levels = np.arange(HIST_LEVELS, dtype=np.float64)
    w0 = np.cumsum(p)[:-1]  # weight of class {<= t}, t = 0..254
    mu_cum = np.cumsum(p * levels)[:-1]
    mu_total = float((p * levels).sum())
    w1 = 1.0 - w0
    valid = (w0 > 0) & (w1 > 0)
    var_b = np.zeros(HIST_LEVELS - 1)
    num = mu_total * w0 - mu_cum
    var_b[valid] = num[valid] ** 2 / (w0[valid] * w1[valid])
    return int(np.argmax(var_b))
