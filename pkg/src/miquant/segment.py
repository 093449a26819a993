"""The segmentation cascade: rotated-bar top-hat enhancement with Otsu
thresholding (coarse stage), boundary-patch ensemble refinement, and
microvascular-obstruction inclusion by hole filling.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import learnlib as ll
from . import vio
from .errors import DegenerateHistogram, EmptyMask, NoGroundTruth
from .volcore import (
    Histogram,
    LabeledCase,
    Mask,
    binary_dilate,
    binary_erode,
    binary_opening,
    fill_holes_2d,
    intensity_levels,
    make_bar_se,
    make_disk_se,
    otsu_threshold,
    white_tophat,
)

BAR_LENGTH = 34
BAR_ANGLES_DEG = (0.0, 30.0, 60.0, 90.0, 120.0, 150.0)
OPENING_RADIUS = 1
BOUNDARY_RADIUS = 2
TRAINING_BAND_RADIUS = 5
PATCH_SIZE = 49
PATCH_STRIDE = 3
ENSEMBLE_MEMBERS = 7
INPUT_SCALE = 1.0 / 255.0  # conditions [0, 255] patches for the nets

_BAR_SES = tuple(make_bar_se(BAR_LENGTH, theta) for theta in BAR_ANGLES_DEG)


def tophat_enhance(img: np.ndarray) -> np.ndarray:
    """Image plus the sum of white top-hats over six bar orientations
    (30-degree steps); clamped to [0, 255] after summation."""
    img = np.asarray(img, dtype=np.float64)
    acc = img.copy()
    for se in _BAR_SES:
        acc += white_tophat(img, se)
    return np.clip(acc, 0.0, 255.0)


def coarse_segment(img: np.ndarray, myo: np.ndarray) -> np.ndarray:
    """Otsu threshold of the enhanced myocardial intensities, then a binary
    opening (disk radius 1) to drop isolated speckles."""
    myo = np.asarray(myo, dtype=bool)
    if not myo.any():
        raise EmptyMask("coarse segmentation needs a non-empty myocardium")
    enhanced = tophat_enhance(img)
    t = otsu_threshold(Histogram.from_values(enhanced[myo]))
    fg = (intensity_levels(enhanced) > t) & myo
    return binary_opening(fg, make_disk_se(OPENING_RADIUS)) & myo


def boundary_region(mask: np.ndarray, radius: int = BOUNDARY_RADIUS) -> np.ndarray:
    """Dilated mask minus eroded mask (disk structuring element)."""
    se = make_disk_se(radius)
    return binary_dilate(mask, se) & ~binary_erode(mask, se)


def extract_patch(img: np.ndarray, cy: int, cx: int, size: int = PATCH_SIZE) -> np.ndarray:
    """Square zero-padded crop centered on (cy, cx)."""
    half = size // 2
    out = np.zeros((size, size))
    ny, nx = img.shape
    y0, x0 = cy - half, cx - half
    sy0, sy1 = max(0, y0), min(ny, y0 + size)
    sx0, sx1 = max(0, x0), min(nx, x0 + size)
    out[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = img[sy0:sy1, sx0:sx1]
    return out


@dataclass
class PatchEnsemble:
    members: list  # odd number of NetModel voters
    mean_patch: np.ndarray
    patch_size: int = PATCH_SIZE

    def __post_init__(self):
        if len(self.members) % 2 == 0:
            raise ValueError("ensemble needs an odd member count")

    def vote(self, patches: np.ndarray) -> np.ndarray:
        """Majority vote over zero-centered patches; True means scar."""
        x = (patches - self.mean_patch[None, :, :, None]) * INPUT_SCALE
        votes = np.zeros(len(patches), dtype=np.int64)
        for member in self.members:
            votes += member.forward(x).argmax(axis=1)
        return votes >= (len(self.members) + 1) // 2

    def to_doc(self) -> dict:
        return {
            "kind": "ensemble",
            "patch_size": self.patch_size,
            "mean_patch": vio.encode_array(self.mean_patch),
            "members": [m.to_doc() for m in self.members],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "PatchEnsemble":
        return cls(
            members=[ll.NetModel.from_doc(d) for d in doc["members"]],
            mean_patch=vio.decode_array(doc["mean_patch"]),
            patch_size=int(doc["patch_size"]),
        )

    def save(self, path: str) -> None:
        vio.save_model(self.to_doc(), path)

    @classmethod
    def load(cls, path: str) -> "PatchEnsemble":
        return cls.from_doc(vio.load_model(path, expect_kind="ensemble"))


def sample_training_patches(case: LabeledCase, stride: int = PATCH_STRIDE,
                            seed: int = 0, patch_size: int = PATCH_SIZE):
    """Class-balanced boundary patches around the ground-truth scar.

    Healthy centers come from dilate(GT, 5) minus GT, scar centers from GT
    minus erode(GT, 5) -- or from the whole GT on slices where the erosion
    empties it -- subsampled on a stride lattice.
    """
    if case.gt_scar is None or case.gt_scar.count() == 0:
        raise NoGroundTruth(f"case {case.case_id} has no scar ground truth")
    se = make_disk_se(TRAINING_BAND_RADIUS)
    patches, labels = [], []
    for k in range(case.nz):
        gt = case.gt_scar.data[k]
        if not gt.any():
            continue
        healthy_band = binary_dilate(gt, se) & ~gt
        eroded = binary_erode(gt, se)
        scar_band = gt & ~eroded if eroded.any() else gt
        img = case.volume.data[k]
        for band, label in ((healthy_band, 0), (scar_band, 1)):
            ys, xs = np.nonzero(band)
            keep = (ys % stride == 0) & (xs % stride == 0)
            for y, x in zip(ys[keep].tolist(), xs[keep].tolist()):
                patches.append(extract_patch(img, y, x, patch_size)[..., None])
                labels.append(label)
    x = np.stack(patches)
    y = np.asarray(labels, dtype=np.int64)
    return ll.balance_classes(x, y, seed=seed)


@dataclass(frozen=True)
class EnsembleConfig:
    members: int = ENSEMBLE_MEMBERS
    patch_size: int = PATCH_SIZE
    stride: int = PATCH_STRIDE
    widths: tuple[int, ...] = (16, 32, 64)
    fc: int = 128
    train: ll.TrainConfig = ll.TrainConfig()  # Table-style defaults
    max_patches_per_class: int | None = None


def train_patch_ensemble(cases: list[LabeledCase], cfg: EnsembleConfig, seed: int) -> PatchEnsemble:
    """Train the voter ensemble on pooled boundary patches.

    Members follow a k-fold strategy over the patch pool: member i trains
    on every fold but its own. All patches are zero-centered by the pooled
    mean image.
    """
    ss = np.random.SeedSequence(seed)
    case_seeds = ss.spawn(len(cases))
    xs, ys = [], []
    for case, child in zip(cases, case_seeds):
        if case.gt_scar is None or case.gt_scar.count() == 0:
            continue
        x, y = sample_training_patches(
            case, stride=cfg.stride, seed=int(child.generate_state(1)[0]),
            patch_size=cfg.patch_size,
        )
        xs.append(x)
        ys.append(y)
    if not xs:
        raise NoGroundTruth("no case provided scar ground truth")
    x = np.concatenate(xs)
    y = np.concatenate(ys)

    pool_seed, cap_seed = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    x, y = ll.balance_classes(x, y, seed=pool_seed)
    if cfg.max_patches_per_class is not None:
        x, y = _cap_per_class(x, y, cfg.max_patches_per_class, cap_seed)

    mean_patch = x.mean(axis=0)[:, :, 0]
    xc = (x - mean_patch[None, :, :, None]) * INPUT_SCALE

    rng = np.random.default_rng(int(ss.spawn(1)[0].generate_state(1)[0]))
    order = rng.permutation(len(xc))
    folds = np.array_split(order, cfg.members)
    members = []
    for i in range(cfg.members):
        train_idx = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        member_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        net = ll.build_classifier(
            cfg.patch_size, seed=member_seed, widths=cfg.widths, fc=cfg.fc,
            dropout=cfg.train.dropout,
        )
        ll.net_train(xc[train_idx], y[train_idx], net,
                     replace(cfg.train, seed=member_seed))
        members.append(net)
    return PatchEnsemble(members=members, mean_patch=mean_patch,
                         patch_size=cfg.patch_size)


def _cap_per_class(x, y, cap, seed):
    rng = np.random.default_rng(seed)
    keep = []
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        if len(idx) > cap:
            idx = rng.choice(idx, size=cap, replace=False)
        keep.append(idx)
    order = np.sort(np.concatenate(keep))
    return x[order], y[order]


def refine(img: np.ndarray, coarse: np.ndarray, ensemble: PatchEnsemble,
           myo: np.ndarray) -> np.ndarray:
    """Reclassify boundary-band voxels by ensemble majority vote.

    Voxels inside the eroded coarse mask stay scar; voxels outside the
    dilated mask stay background; the output is limited to the myocardium.
    """
    se = make_disk_se(BOUNDARY_RADIUS)
    core = binary_erode(coarse, se) & coarse
    band = binary_dilate(coarse, se) & ~core
    out = core.copy()
    ys, xs = np.nonzero(band)
    if len(ys):
        patches = np.stack(
            [extract_patch(img, y, x, ensemble.patch_size)[..., None]
             for y, x in zip(ys.tolist(), xs.tolist())]
        )
        scar = ensemble.vote(patches)
        out[ys[scar], xs[scar]] = True
    return out & np.asarray(myo, dtype=bool)


def include_mvo(hyper: np.ndarray, endo: np.ndarray, myo: np.ndarray):
    """Fill holes of (endocardium | hyper); enclosed dark clusters inside the
    myocardium become the MVO mask. Returns (final, mvo), disjoint."""
    hyper = np.asarray(hyper, dtype=bool)
    union = np.asarray(endo, dtype=bool) | hyper
    filled = fill_holes_2d(union)
    mvo = filled & ~union & np.asarray(myo, dtype=bool)
    return hyper | mvo, mvo


@dataclass
class SliceOutcome:
    index: int
    gated_out: bool = False
    degenerate_histogram: bool = False
    refined: bool = False


@dataclass
class SegmentationResult:
    case_id: str
    coarse: Mask
    hyper: Mask
    mvo: Mask
    final: Mask
    scar_volume_cm3: float
    pct_infarct: float | None
    outcomes: list = field(default_factory=list)

    def __post_init__(self):
        assert not (self.hyper.data & self.mvo.data).any()
        assert np.array_equal(self.final.data, self.hyper.data | self.mvo.data)


def segment_case(case: LabeledCase, ensemble: PatchEnsemble | None = None,
                 detection=None, refine_on: bool = True,
                 mvo_on: bool = True) -> SegmentationResult:
    """Run the cascade over every slice of a preprocessed case.

    Slices the detector calls healthy get empty masks; per-slice numeric
    failures produce empty masks plus a flag rather than aborting the case.
    """
    from .detect import detect_predict

    nz = case.nz
    shape = case.volume.data.shape
    coarse_v = np.zeros(shape, dtype=bool)
    hyper_v = np.zeros(shape, dtype=bool)
    mvo_v = np.zeros(shape, dtype=bool)
    outcomes = []

    gate = None
    if detection is not None:
        gate = [label for _, label in detect_predict(detection, case)]

    for k in range(nz):
        outcome = SliceOutcome(index=k)
        outcomes.append(outcome)
        if gate is not None and gate[k] == "healthy":
            outcome.gated_out = True
            continue
        myo = case.myocardium.data[k]
        img = case.volume.data[k]
        try:
            coarse = coarse_segment(img, myo)
        except (DegenerateHistogram, EmptyMask):
            outcome.degenerate_histogram = True
            continue
        coarse_v[k] = coarse
        if ensemble is not None and refine_on:
            hyper = refine(img, coarse, ensemble, myo)
            outcome.refined = True
        else:
            hyper = coarse
        if mvo_on:
            final, mvo = include_mvo(hyper, case.endocardium.data[k], myo)
        else:
            final, mvo = hyper, np.zeros_like(hyper)
        hyper_v[k] = hyper
        mvo_v[k] = mvo

    spacing = case.volume.spacing
    final_mask = Mask(spacing, hyper_v | mvo_v)
    voxel_cm3 = final_mask.voxel_volume_mm3 / 1000.0
    myo_count = case.myocardium.count()
    return SegmentationResult(
        case_id=case.case_id,
        coarse=Mask(spacing, coarse_v),
        hyper=Mask(spacing, hyper_v),
        mvo=Mask(spacing, mvo_v),
        final=final_mask,
        scar_volume_cm3=final_mask.count() * voxel_cm3,
        pct_infarct=(100.0 * final_mask.count() / myo_count) if myo_count else None,
        outcomes=outcomes,
    )
