"""Volume homogenization: denoise, reslice to the canonical grid, per-slice
intensity normalization inside the epicardium, and gamma enhancement.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateRange, EmptyRegion, SpacingError
from .volcore import LabeledCase, Mask, Volume

CANONICAL_SPACING = (1.25, 1.25, 8.0)


@dataclass(frozen=True)
class PreprocessConfig:
    target_spacing: tuple[float, float, float] = CANONICAL_SPACING
    gamma: float = 1.5
    nlm_patch_radius: int = 1
    nlm_search_radius: int = 3
    nlm_h_factor: float = 0.6  # h = factor * sigma
    p_lo: float = 1.0   # percentile of myocardial intensities mapped to 0
    p_hi: float = 99.0  # percentile of blood-pool intensities mapped to 255
    denoise: bool = True

    def __post_init__(self):
        if any(s <= 0 for s in self.target_spacing):
            raise ValueError("target spacing must be > 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if not (0 <= self.p_lo < self.p_hi <= 100):
            raise ValueError("percentiles must satisfy 0 <= p_lo < p_hi <= 100")


def estimate_noise_sigma(img: np.ndarray) -> float:
    """Robust noise SD from the median absolute 5-point Laplacian.

    For iid Gaussian noise the Laplacian response is N(0, 20*sigma^2), so
    sigma = MAD(L) / 0.6745 / sqrt(20). Computed on the interior to avoid
    border effects; requires at least a 3x3 slice.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError("noise estimation needs a slice of at least 3x3")
    lap = (
        img[:-2, 1:-1] + img[2:, 1:-1] + img[1:-1, :-2] + img[1:-1, 2:]
        - 4.0 * img[1:-1, 1:-1]
    )
    mad = float(np.median(np.abs(lap)))
    return mad / 0.6745 / np.sqrt(20.0)


def denoise_nlm(img: np.ndarray, sigma: float, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Non-local means with Gaussian patch-distance weights, h = k * sigma.

    Each output pixel is a convex combination of the pixels in its search
    window; sigma = 0 degenerates to the identity.
    """
    img = np.asarray(img, dtype=np.float64)
    if sigma <= 0:
        return img.copy()
    pr, sr = cfg.nlm_patch_radius, cfg.nlm_search_radius
    h2 = (cfg.nlm_h_factor * sigma) ** 2
    pad = pr + sr
    padded = np.pad(img, pad, mode="reflect")
    ny, nx = img.shape

    acc = np.zeros((ny, nx))
    wsum = np.zeros((ny, nx))
    patch_n = (2 * pr + 1) ** 2
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            # squared difference of the two patch stacks, box-summed
            a = padded[pad - pr : pad + pr + ny, pad - pr : pad + pr + nx]
            b = padded[pad - pr + dy : pad + pr + ny + dy, pad - pr + dx : pad + pr + nx + dx]
            diff2 = (a - b) ** 2
            # integral image for the (2pr+1)^2 box sum
            ii = np.cumsum(np.cumsum(diff2, axis=0), axis=1)
            ii = np.pad(ii, ((1, 0), (1, 0)))
            k = 2 * pr + 1
            box = ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k]
            d2 = box / patch_n
            w = np.exp(-d2 / h2)
            values = padded[pad + dy : pad + dy + ny, pad + dx : pad + dx + nx]
            acc += w * values
            wsum += w
    return acc / wsum


def reslice(volume: Volume, target_spacing=CANONICAL_SPACING) -> Volume:
    """In-plane bilinear resample to the target sx, sy; z grid untouched.

    Raises SpacingError when sz differs from the target (through-plane
    resampling is out of scope).
    """
    sx, sy, sz = volume.spacing
    tx, ty, tz = target_spacing
    if abs(sz - tz) > 1e-9:
        raise SpacingError(f"through-plane resampling required ({sz} mm vs {tz} mm)")
    if abs(sx - tx) < 1e-12 and abs(sy - ty) < 1e-12:
        return volume.copy()
    nx, ny, nz = volume.dims
    nx2 = max(1, int(round(nx * sx / tx)))
    ny2 = max(1, int(round(ny * sy / ty)))
    u = np.clip(np.arange(nx2) * tx / sx, 0, nx - 1)
    v = np.clip(np.arange(ny2) * ty / sy, 0, ny - 1)
    out = np.empty((nz, ny2, nx2))
    for k in range(nz):
        out[k] = _bilinear(volume.data[k], v, u)
    return Volume((tx, ty, tz), out)


def reslice_mask(mask: Mask, target_spacing=CANONICAL_SPACING) -> Mask:
    """Nearest-neighbor reslice; keeps masks binary."""
    sx, sy, sz = mask.spacing
    tx, ty, tz = target_spacing
    if abs(sz - tz) > 1e-9:
        raise SpacingError(f"through-plane resampling required ({sz} mm vs {tz} mm)")
    if abs(sx - tx) < 1e-12 and abs(sy - ty) < 1e-12:
        return mask.copy()
    nx, ny, nz = mask.dims
    nx2 = max(1, int(round(nx * sx / tx)))
    ny2 = max(1, int(round(ny * sy / ty)))
    ui = np.clip(np.floor(np.arange(nx2) * tx / sx + 0.5).astype(int), 0, nx - 1)
    vi = np.clip(np.floor(np.arange(ny2) * ty / sy + 0.5).astype(int), 0, ny - 1)
    out = mask.data[:, vi[:, None], ui[None, :]]
    return Mask((tx, ty, tz), out)


def _bilinear(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, img.shape[0] - 1)
    c1 = np.minimum(c0 + 1, img.shape[1] - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = img[np.ix_(r0, c0)] * (1 - fc) + img[np.ix_(r0, c1)] * fc
    bot = img[np.ix_(r1, c0)] * (1 - fc) + img[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


def normalize_slice(
    img: np.ndarray,
    myo: np.ndarray,
    bloodpool: np.ndarray,
    cfg: PreprocessConfig = PreprocessConfig(),
) -> np.ndarray:
    """Affine map to [0, 255] anchored on the reference regions.

    The p_lo percentile of myocardial intensities goes to 0 and the p_hi
    percentile of blood-pool intensities to 255; everything is clamped, and
    pixels outside the epicardium (myo union blood pool) are zeroed.
    """
    img = np.asarray(img, dtype=np.float64)
    myo = np.asarray(myo, dtype=bool)
    bloodpool = np.asarray(bloodpool, dtype=bool)
    if not myo.any():
        raise EmptyRegion("myocardium reference region is empty")
    if not bloodpool.any():
        raise EmptyRegion("blood-pool reference region is empty")
    lo = float(np.percentile(img[myo], cfg.p_lo))
    hi = float(np.percentile(img[bloodpool], cfg.p_hi))
    if hi <= lo:
        raise DegenerateRange(f"reference range is degenerate (lo={lo}, hi={hi})")
    out = np.clip(255.0 * (img - lo) / (hi - lo), 0.0, 255.0)
    out[~(myo | bloodpool)] = 0.0
    return out


def gamma_enhance(img: np.ndarray, gamma: float) -> np.ndarray:
    """out = 255 * (in/255)^gamma on [0, 255]; endpoints fixed, monotone."""
    img = np.asarray(img, dtype=np.float64)
    return 255.0 * (np.clip(img, 0.0, 255.0) / 255.0) ** gamma


def preprocess_case(case: LabeledCase, cfg: PreprocessConfig = PreprocessConfig()) -> LabeledCase:
    """Denoise -> reslice -> per-slice normalize -> gamma.

    Masks are resliced nearest-neighbor. Slices whose reference regions are
    empty (no contoured heart) are zeroed rather than failing the case.
    """
    data = case.volume.data
    if cfg.denoise:
        denoised = np.empty_like(data)
        for k in range(data.shape[0]):
            sigma = estimate_noise_sigma(data[k])
            denoised[k] = denoise_nlm(data[k], sigma, cfg)
        data = denoised
    vol = reslice(Volume(case.volume.spacing, data), cfg.target_spacing)

    def rs(mask):
        return None if mask is None else reslice_mask(mask, cfg.target_spacing)

    myo = rs(case.myocardium)
    endo = rs(case.endocardium)
    epi = rs(case.epicardium)
    gt_scar = rs(case.gt_scar)
    gt_mvo = rs(case.gt_mvo)

    out = np.empty_like(vol.data)
    for k in range(vol.data.shape[0]):
        try:
            normalized = normalize_slice(vol.data[k], myo.data[k], endo.data[k], cfg)
        except (EmptyRegion, DegenerateRange):
            out[k] = 0.0
            continue
        out[k] = gamma_enhance(normalized, cfg.gamma)

    return LabeledCase(
        case_id=case.case_id,
        volume=Volume(cfg.target_spacing, out),
        myocardium=myo,
        endocardium=endo,
        epicardium=epi,
        gt_scar=gt_scar,
        gt_mvo=gt_mvo,
        per_slice_labels=case.per_slice_labels,
    )
