"""Linear max-margin classifier trained by deterministic subgradient
descent on the regularized hinge loss.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import vio
from ..errors import SingleClassError


@dataclass
class MarginModel:
    w: np.ndarray
    b: float
    lam: float

    def to_doc(self) -> dict:
        return {"kind": "margin", "w": vio.encode_array(self.w), "b": self.b, "lam": self.lam}

    @classmethod
    def from_doc(cls, doc: dict) -> "MarginModel":
        return cls(w=vio.decode_array(doc["w"]), b=float(doc["b"]), lam=float(doc["lam"]))


def hinge_objective(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, lam: float) -> float:
    margins = 1.0 - y * (x @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.mean(np.maximum(margins, 0.0)))


def margin_train(x: np.ndarray, y: np.ndarray, lam: float = 1e-3,
                 epochs: int = 300, seed: int = 0) -> MarginModel:
    """Full-batch subgradient descent with decaying steps and iterate
    averaging; the returned model is the averaged iterate.

    The per-epoch objective of the running average is stored on the model
    as ``objective_trace``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=np.float64)
    classes = np.unique(y)
    if not (len(classes) == 2 and set(classes) == {-1.0, 1.0}):
        raise SingleClassError(f"labels must contain both -1 and +1, got {classes}")

    n, d = x.shape
    # scale-aware base step: hinge subgradients are O(mean |x|)
    base = 1.0 / max(1e-12, float(np.abs(x).mean()))
    w = np.zeros(d)
    b = 0.0
    w_avg = np.zeros(d)
    b_avg = 0.0
    trace = []
    for t in range(1, epochs + 1):
        margins = 1.0 - y * (x @ w + b)
        active = margins > 0.0
        gw = lam * w
        gb = 0.0
        if active.any():
            gw = gw - (y[active, None] * x[active]).sum(axis=0) / n
            gb = -float(y[active].sum()) / n
        step = base / (1.0 + 0.1 * t)
        w = w - step * gw
        b = b - step * gb
        w_avg += (w - w_avg) / t
        b_avg += (b - b_avg) / t
        trace.append(hinge_objective(w_avg, b_avg, x, y, lam))
    model = MarginModel(w=w_avg, b=b_avg, lam=lam)
    model.objective_trace = trace
    return model


def margin_decide(model: MarginModel, x: np.ndarray):
    """Signed decision value; the ROC-sweepable score."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(x @ model.w + model.b)
    return x @ model.w + model.b
