"""Segmentation evaluation: overlap and surface distances, clinical
markers, agreement statistics, and hypothesis tests.

The p-values are computed with documented series/continued-fraction
expansions (normal CDF via erfc, Student t via the regularized incomplete
beta) rather than an external statistics dependency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import (
    DivisionByZero,
    EmptyDenominator,
    EmptyMask,
    LengthMismatch,
    ZeroVariance,
)
from .volcore import Mask, check_aligned

BRUTE_FORCE_PAIR_LIMIT = 50_000


# ---------------------------------------------------------------------------
# overlap and distance
# ---------------------------------------------------------------------------

def dice(a: Mask, b: Mask) -> float:
    """2|A^B| / (|A|+|B|); defined as 1 when both masks are empty."""
    check_aligned(a, b)
    na, nb = a.count(), b.count()
    if na == 0 and nb == 0:
        return 1.0
    inter = int((a.data & b.data).sum())
    return 2.0 * inter / (na + nb)


def _directed_hausdorff_edt(src: np.ndarray, dst: np.ndarray, sampling) -> float:
    dt = distance_transform_edt(~dst, sampling=sampling)
    return float(dt[src].max())


def hausdorff3d(a: Mask, b: Mask) -> float:
    """Symmetric 3-D Hausdorff distance in mm under anisotropic spacing.

    Exact all-pairs computation when |A|*|B| is small; an exact Euclidean
    distance transform above that.
    """
    check_aligned(a, b)
    na, nb = a.count(), b.count()
    if na == 0 or nb == 0:
        raise EmptyMask("Hausdorff distance is undefined for empty masks")
    sx, sy, sz = a.spacing
    sampling = (sz, sy, sx)  # data is (z, y, x)
    if na * nb <= BRUTE_FORCE_PAIR_LIMIT:
        pa = np.argwhere(a.data) * np.asarray(sampling)
        pb = np.argwhere(b.data) * np.asarray(sampling)
        d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
        h_ab = np.sqrt(d2.min(axis=1).max())
        h_ba = np.sqrt(d2.min(axis=0).max())
        return float(max(h_ab, h_ba))
    return max(
        _directed_hausdorff_edt(a.data, b.data, sampling),
        _directed_hausdorff_edt(b.data, a.data, sampling),
    )


def scar_volume_cm3(mask: Mask) -> float:
    return mask.count() * mask.voxel_volume_mm3 / 1000.0


def percent_infarct(scar: Mask, myo: Mask) -> float:
    check_aligned(scar, myo)
    if myo.count() == 0:
        raise DivisionByZero("percent infarct needs a non-empty myocardium")
    return 100.0 * scar.count() / myo.count()


# ---------------------------------------------------------------------------
# agreement statistics
# ---------------------------------------------------------------------------

def bland_altman(x, y) -> tuple[float, float]:
    """(mean, sample SD) of the paired differences y - x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"series lengths differ: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise LengthMismatch("Bland-Altman needs at least 2 pairs")
    d = y - x
    return float(d.mean()), float(d.std(ddof=1))


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of average ranks (ties share averaged ranks)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch("series lengths differ")
    if len(x) < 3:
        raise LengthMismatch("Spearman needs at least 3 pairs")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx**2).sum()) * float((ry**2).sum()))
    if denom == 0.0:
        raise ZeroVariance("a series is constant under ranking")
    return float((rx * ry).sum() / denom)


# ---------------------------------------------------------------------------
# hypothesis tests
# ---------------------------------------------------------------------------

def _normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 200):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf_two_tailed(t: float, dof: int) -> float:
    """Two-tailed p for a Student t statistic."""
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))


def mann_whitney_u(x, y) -> tuple[float, float]:
    """U of the first sample (ties counted half) and a two-tailed p via the
    tie-corrected normal approximation with continuity correction."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, m = len(x), len(y)
    if n < 2 or m < 2:
        raise LengthMismatch("both samples need at least 2 values")
    pooled = np.concatenate([x, y])
    ranks = _average_ranks(pooled)
    r_x = float(ranks[:n].sum())
    u = r_x - n * (n + 1) / 2.0

    big_n = n + m
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts).sum())) / (big_n * (big_n - 1))
    sigma2 = n * m / 12.0 * ((big_n + 1) - tie_term)
    mu = n * m / 2.0
    if sigma2 <= 0.0:
        return u, 1.0
    z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(sigma2)
    p = min(1.0, 2.0 * _normal_cdf(-z))
    return u, p


def paired_t(x, y) -> tuple[float, float]:
    """Paired Student t on d = x - y; two-tailed p with n-1 dof."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch("series lengths differ")
    n = len(x)
    if n < 2:
        raise LengthMismatch("paired t needs at least 2 pairs")
    d = x - y
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise ZeroVariance("paired differences have zero variance")
    t = float(d.mean()) / (sd / math.sqrt(n))
    return t, student_t_sf_two_tailed(t, n - 1)


# ---------------------------------------------------------------------------
# classification and MVO metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def sens_spec_acc(c: ConfusionCounts) -> tuple[float, float, float]:
    if c.tp + c.fn == 0 or c.tn + c.fp == 0 or c.total == 0:
        raise EmptyDenominator("confusion table has an empty margin")
    se = c.tp / (c.tp + c.fn)
    sp = c.tn / (c.tn + c.fp)
    acc = (c.tp + c.tn) / c.total
    return se, sp, acc


def mvo_sensitivity(pred: Mask, gt_mvo: Mask) -> float:
    check_aligned(pred, gt_mvo)
    denom = gt_mvo.count()
    if denom == 0:
        raise EmptyDenominator("MVO sensitivity needs a non-empty GT region")
    return int((pred.data & gt_mvo.data).sum()) / denom


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

def case_row(case_id: str, method: str, pred_final: Mask, gt_total: Mask,
             myo: Mask, gt_mvo: Mask | None):
    """Volume-level report row for one (case, method) prediction."""
    from .vio import ReportRow

    try:
        hd = hausdorff3d(pred_final, gt_total)
    except EmptyMask:
        hd = None
    row = ReportRow(
        case_id=case_id,
        slice="all",
        method=method,
        dice_pct=100.0 * dice(pred_final, gt_total),
        hausdorff_mm=hd,
        scar_volume_cm3=scar_volume_cm3(pred_final),
        pct_infarct=percent_infarct(pred_final, myo),
    )
    if gt_mvo is not None and gt_mvo.count() > 0:
        row.mvo_sensitivity = mvo_sensitivity(pred_final, gt_mvo)
    return row


def summarize(report) -> dict:
    """Per-method mean/SD of every metric plus volume agreement with the
    'manual' rows (Spearman rho, Bland-Altman bias, paired-t p)."""
    methods: dict[str, dict[str, list]] = {}
    manual_vols: dict[str, float] = {}
    for row in report.rows:
        if row.method == "manual":
            manual_vols[row.case_id] = row.scar_volume_cm3
            continue
        rec = methods.setdefault(
            row.method,
            {"dice_pct": [], "hausdorff_mm": [], "scar_volume_cm3": [],
             "pct_infarct": [], "mvo_sensitivity": [], "case_ids": []},
        )
        for key in ("dice_pct", "hausdorff_mm", "scar_volume_cm3",
                    "pct_infarct", "mvo_sensitivity"):
            value = getattr(row, key)
            if value is not None:
                rec[key].append(value)
        rec["case_ids"].append((row.case_id, row.scar_volume_cm3))

    summary: dict[str, dict] = {}
    for method, rec in sorted(methods.items()):
        entry = {}
        for key in ("dice_pct", "hausdorff_mm", "scar_volume_cm3",
                    "pct_infarct", "mvo_sensitivity"):
            vals = rec[key]
            if vals:
                arr = np.asarray(vals)
                entry[key] = {
                    "mean": float(arr.mean()),
                    "sd": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
                    "n": len(arr),
                }
        paired = [
            (manual_vols[cid], vol)
            for cid, vol in rec["case_ids"]
            if cid in manual_vols and vol is not None
        ]
        if len(paired) >= 3:
            manual = [p[0] for p in paired]
            pred = [p[1] for p in paired]
            agreement = {}
            try:
                agreement["spearman_rho"] = spearman(manual, pred)
            except ZeroVariance:
                agreement["spearman_rho"] = None
            bias_mean, bias_sd = bland_altman(manual, pred)
            agreement["ba_bias_mean"] = bias_mean
            agreement["ba_bias_sd"] = bias_sd
            try:
                _, p = paired_t(pred, manual)
                agreement["paired_t_p"] = p
            except ZeroVariance:
                agreement["paired_t_p"] = None
            entry["volume_agreement"] = agreement
        summary[method] = entry
    return summary
