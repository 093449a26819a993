"""Principal component analysis with a retained-variance cutoff."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import vio
from ..errors import DegenerateData


@dataclass
class PcaModel:
    mean: np.ndarray        # (D,)
    axes: np.ndarray        # (D, K), orthonormal columns
    variances: np.ndarray   # (K,), non-increasing
    k: int

    def to_doc(self) -> dict:
        return {
            "kind": "pca",
            "mean": vio.encode_array(self.mean),
            "axes": vio.encode_array(self.axes),
            "variances": vio.encode_array(self.variances),
            "k": self.k,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "PcaModel":
        return cls(
            mean=vio.decode_array(doc["mean"]),
            axes=vio.decode_array(doc["axes"]),
            variances=vio.decode_array(doc["variances"]),
            k=int(doc["k"]),
        )


def pca_fit(x: np.ndarray, var_frac: float = 0.95) -> PcaModel:
    """Eigendecomposition of the sample covariance; K is minimal with
    cumulative variance fraction >= var_frac.

    Axis signs are fixed (largest-magnitude component positive) so fits
    are reproducible.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DegenerateData("PCA needs an N x D matrix with N >= 2")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = evals.sum()
    if total <= 0.0:
        raise DegenerateData("all observations are identical")
    cum = np.cumsum(evals) / total
    k = int(np.searchsorted(cum, var_frac - 1e-12) + 1)
    axes = evecs[:, :k]
    flip = axes[np.abs(axes).argmax(axis=0), np.arange(k)] < 0
    axes = axes * np.where(flip, -1.0, 1.0)
    return PcaModel(mean=mean, axes=axes, variances=evals[:k], k=k)


def pca_project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """Project a vector or an (N, D) batch onto the retained axes."""
    x = np.asarray(x, dtype=np.float64)
    return (x - model.mean) @ model.axes
