"""Small convolutional networks with from-scratch backpropagation and
SGD-with-momentum training, in 64-bit floats throughout.

Conventions: batches are (N, H, W, C); convolutions are valid-padding,
stride 1; pooling is 2x2 stride 2 (odd remainders dropped); the terminal
layer is a softmax over two classes. L2 regularization acts on connection
weights, not biases.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import vio
from ..errors import DivergenceError, ShapeError


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(N, H, W, C) -> (N*OH*OW, kh*kw*C) patch matrix for valid stride-1."""
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))  # (N, OH, OW, C, kh, kw)
    n, oh, ow = windows.shape[:3]
    cols = np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3))
    return cols.reshape(n * oh * ow, -1), (n, oh, ow)


class Conv2D:
    param_names = ("w", "b")

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = w  # (kh, kw, cin, cout)
        self.b = b
        self.dw = None
        self.db = None
        self._cols = None

    def forward(self, x, train=False, rng=None):
        kh, kw, cin, cout = self.w.shape
        if x.shape[3] != cin or x.shape[1] < kh or x.shape[2] < kw:
            raise ShapeError(f"conv {self.w.shape} cannot take input {x.shape}")
        cols, (n, oh, ow) = _im2col(x, kh, kw)
        out = cols @ self.w.reshape(-1, cout) + self.b
        if train:
            self._cols = cols
        return out.reshape(n, oh, ow, cout)

    def backward(self, dout, need_dx=True):
        kh, kw, cin, cout = self.w.shape
        n, oh, ow, _ = dout.shape
        dmat = dout.reshape(-1, cout)
        self.dw = (self._cols.T @ dmat).reshape(kh, kw, cin, cout)
        self.db = dmat.sum(axis=0)
        self._cols = None
        if not need_dx:
            return None
        padded = np.pad(dout, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
        dcols, (_, h, w) = _im2col(padded, kh, kw)
        # full correlation with the kernel rotated 180 deg, channels swapped
        wmat = self.w[::-1, ::-1, :, :].transpose(0, 1, 3, 2).reshape(-1, cin)
        return (dcols @ wmat).reshape(n, h, w, cin)

    def spec(self):
        return ("conv", self.w.shape[0], self.w.shape[3])


class ReLU:
    param_names = ()

    def forward(self, x, train=False, rng=None):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dout):
        return dout * self._mask

    def spec(self):
        return ("relu",)


class MaxPool2:
    """2x2 max pooling, stride 2. Gradient routes to the first max."""

    param_names = ()

    def forward(self, x, train=False, rng=None):
        n, h, w, c = x.shape
        oh, ow = h // 2, w // 2
        if oh < 1 or ow < 1:
            raise ShapeError(f"input {x.shape} too small for 2x2 pooling")
        xc = x[:, : oh * 2, : ow * 2, :]
        quads = (
            xc.reshape(n, oh, 2, ow, 2, c)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, oh, ow, c, 4)
        )
        idx = np.argmax(quads, axis=-1)
        out = np.take_along_axis(quads, idx[..., None], axis=-1)[..., 0]
        if train:
            self._idx = idx
            self._xshape = x.shape
        return out

    def backward(self, dout):
        n, h, w, c = self._xshape
        oh, ow = h // 2, w // 2
        grads = np.zeros((n, oh, ow, c, 4))
        np.put_along_axis(grads, self._idx[..., None], dout[..., None], axis=-1)
        dx = np.zeros((n, h, w, c))
        dx[:, : oh * 2, : ow * 2, :] = (
            grads.reshape(n, oh, ow, c, 2, 2)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, oh * 2, ow * 2, c)
        )
        return dx

    def spec(self):
        return ("maxpool",)


class Flatten:
    param_names = ()

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def spec(self):
        return ("flatten",)


class Dense:
    param_names = ("w", "b")

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = w  # (din, dout)
        self.b = b
        self.dw = None
        self.db = None

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != self.w.shape[0]:
            raise ShapeError(f"dense {self.w.shape} cannot take input {x.shape}")
        if train:
            self._x = x
        return x @ self.w + self.b

    def backward(self, dout, need_dx=True):
        self.dw = self._x.T @ dout
        self.db = dout.sum(axis=0)
        self._x = None
        if not need_dx:
            return None
        return dout @ self.w.T

    def spec(self):
        return ("dense", self.w.shape[1])


class Dropout:
    """Inverted dropout; identity at inference."""

    param_names = ()

    def __init__(self, rate: float):
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate <= 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask

    def spec(self):
        return ("dropout", self.rate)


class Softmax:
    param_names = ()

    def forward(self, x, train=False, rng=None):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def spec(self):
        return ("softmax",)


_LAYER_TAGS = {"conv", "relu", "maxpool", "flatten", "dense", "dropout", "softmax"}


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass
class NetModel:
    layers: list
    input_shape: tuple[int, int, int]  # (H, W, C)
    feature_layer: int | None = None   # layer count defining the feature head
    train_meta: dict = field(default_factory=dict)

    def forward(self, x, train=False, rng=None, n_layers=None):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != tuple(self.input_shape):
            raise ShapeError(f"expected input {self.input_shape}, got {x.shape[1:]}")
        stop = len(self.layers) if n_layers is None else n_layers
        for layer in self.layers[:stop]:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def features(self, x):
        """Activations of the feature head (penultimate FC), inference mode."""
        if self.feature_layer is None:
            raise ShapeError("model has no feature head")
        return self.forward(x, n_layers=self.feature_layer)

    def logits(self, x, train=False, rng=None):
        assert isinstance(self.layers[-1], Softmax)
        return self.forward(x, train=train, rng=rng, n_layers=len(self.layers) - 1)

    def backward_from_logits(self, dlogits):
        d = dlogits
        for i in range(len(self.layers) - 2, -1, -1):
            layer = self.layers[i]
            if i == 0 and isinstance(layer, (Conv2D, Dense)):
                # the input gradient of the bottom layer is never consumed
                layer.backward(d, need_dx=False)
                return None
            d = layer.backward(d)
        return d

    def parameters(self):
        for layer in self.layers:
            for name in layer.param_names:
                yield layer, name

    def to_doc(self) -> dict:
        layers = []
        for layer in self.layers:
            doc = {"spec": list(layer.spec())}
            for name in layer.param_names:
                doc[name] = vio.encode_array(getattr(layer, name))
            layers.append(doc)
        return {
            "kind": "net",
            "input_shape": list(self.input_shape),
            "feature_layer": self.feature_layer,
            "layers": layers,
            "train_meta": self.train_meta,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "NetModel":
        layers = []
        for ldoc in doc["layers"]:
            tag = ldoc["spec"][0]
            if tag == "conv":
                layers.append(Conv2D(vio.decode_array(ldoc["w"]), vio.decode_array(ldoc["b"])))
            elif tag == "dense":
                layers.append(Dense(vio.decode_array(ldoc["w"]), vio.decode_array(ldoc["b"])))
            elif tag == "relu":
                layers.append(ReLU())
            elif tag == "maxpool":
                layers.append(MaxPool2())
            elif tag == "flatten":
                layers.append(Flatten())
            elif tag == "dropout":
                layers.append(Dropout(ldoc["spec"][1]))
            elif tag == "softmax":
                layers.append(Softmax())
            else:
                raise ShapeError(f"unknown layer tag {tag!r}")
        return cls(
            layers=layers,
            input_shape=tuple(doc["input_shape"]),
            feature_layer=doc.get("feature_layer"),
            train_meta=doc.get("train_meta", {}),
        )


def build_net(input_shape, layer_specs, seed: int, feature_layer=None) -> NetModel:
    """Instantiate a network from ("conv", k, cout)-style layer specs.

    He-normal weight init, zero biases, seeded.
    """
    rng = np.random.default_rng(seed)
    h, w, c = input_shape
    flat = None
    layers = []
    for spec in layer_specs:
        tag = spec[0]
        if tag == "conv":
            _, k, cout = spec
            std = np.sqrt(2.0 / (k * k * c))
            layers.append(Conv2D(rng.normal(0, std, (k, k, c, cout)), np.zeros(cout)))
            h, w, c = h - k + 1, w - k + 1, cout
            if h < 1 or w < 1:
                raise ShapeError("conv layer does not fit its input")
        elif tag == "relu":
            layers.append(ReLU())
        elif tag == "maxpool":
            layers.append(MaxPool2())
            h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ShapeError("pool layer does not fit its input")
        elif tag == "flatten":
            layers.append(Flatten())
            flat = h * w * c
        elif tag == "dense":
            _, dout = spec
            din = flat if flat is not None else c
            std = np.sqrt(2.0 / din)
            layers.append(Dense(rng.normal(0, std, (din, dout)), np.zeros(dout)))
            flat = dout
        elif tag == "dropout":
            layers.append(Dropout(spec[1]))
        elif tag == "softmax":
            layers.append(Softmax())
        else:
            raise ShapeError(f"unknown layer tag {tag!r}")
    return NetModel(layers, tuple(input_shape), feature_layer=feature_layer)


def classifier_specs(input_size: int, widths=(16, 32, 64), fc: int = 128,
                     dropout: float = 0.5, classes: int = 2):
    """Conv/pool trunk sized to the input, then FC + dropout + softmax.

    Trailing conv/pool stages that no longer fit small inputs are dropped,
    so the same stack scales from full-size patches down to toy grids.
    """
    specs = []
    size = input_size
    kernels = [5, 3, 3]
    for k, width in zip(kernels, widths):
        if size - k + 1 < 2:
            break
        specs += [("conv", k, width), ("relu",), ("maxpool",)]
        size = (size - k + 1) // 2
        if size < 1:
            raise ShapeError("input too small for the classifier trunk")
    specs += [("flatten",), ("dense", fc), ("relu",)]
    feature_layer = len(specs)
    if dropout > 0:
        specs.append(("dropout", dropout))
    specs += [("dense", classes), ("softmax",)]
    return specs, feature_layer


def build_classifier(input_size: int, seed: int, widths=(16, 32, 64), fc: int = 128,
                     dropout: float = 0.5) -> NetModel:
    specs, feature_layer = classifier_specs(input_size, widths, fc, dropout)
    return build_net((input_size, input_size, 1), specs, seed, feature_layer=feature_layer)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    momentum: float = 0.75
    batch_size: int = 256
    l2: float = 1e-4
    epochs: int = 50
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def softmax_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(probs[np.arange(len(labels)), labels], 1e-300, None)
    return float(-np.mean(np.log(p)))


def net_loss(model: NetModel, x, labels, train=False, rng=None):
    """(cross-entropy, dlogits) for a batch."""
    logits = model.logits(x, train=train, rng=rng)
    probs = Softmax().forward(logits)
    loss = softmax_cross_entropy(probs, labels)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1.0
    dlogits = (probs - onehot) / len(labels)
    return loss, dlogits


def net_train(x: np.ndarray, y: np.ndarray, model: NetModel, cfg: TrainConfig) -> NetModel:
    """SGDM training: v <- m*v - lr*(grad + l2*w); w <- w + v.

    Shuffles every epoch with a seeded generator; dropout is active only
    here. Mutates and returns the model, recording the per-epoch loss
    trace in train_meta.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    velocity = {id(l): {n: np.zeros_like(getattr(l, n)) for n in l.param_names}
                for l in model.layers}
    trace = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x))
        epoch_loss = 0.0
        for start in range(0, len(x), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, dlogits = net_loss(model, x[batch], y[batch], train=True, rng=rng)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss became {loss}")
            model.backward_from_logits(dlogits)
            for layer, name in model.parameters():
                grad = getattr(layer, "d" + name)
                if name == "w" and cfg.l2 > 0:
                    grad = grad + cfg.l2 * getattr(layer, name)
                v = velocity[id(layer)][name]
                v *= cfg.momentum
                v -= cfg.learning_rate * grad
                getattr(layer, name)[...] += v
            epoch_loss += loss * len(batch)
        trace.append(epoch_loss / len(x))
    model.train_meta = dict(model.train_meta)
    model.train_meta.update(
        {
            "loss_trace": trace,
            "config": {
                "learning_rate": cfg.learning_rate,
                "momentum": cfg.momentum,
                "batch_size": cfg.batch_size,
                "l2": cfg.l2,
                "epochs": cfg.epochs,
                "dropout": cfg.dropout,
                "seed": cfg.seed,
            },
        }
    )
    return model


def grad_check(model: NetModel, x: np.ndarray, labels: np.ndarray, epsilon: float = 1e-5) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Dropout must be inactive (inference path is used for both sides).
    """
    x = np.asarray(x, dtype=np.float64)
    _, dlogits = net_loss(model, x, labels, train=True)
    model.backward_from_logits(dlogits)
    worst = 0.0
    for layer, name in model.parameters():
        param = getattr(layer, name)
        analytic = getattr(layer, "d" + name)
        it = np.nditer(param, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = param[idx]
            param[idx] = orig + epsilon
            hi, _ = net_loss(model, x, labels)
            param[idx] = orig - epsilon
            lo, _ = net_loss(model, x, labels)
            param[idx] = orig
            numeric = (hi - lo) / (2 * epsilon)
            a = analytic[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-5)
            worst = max(worst, err)
            it.iternext()
    return worst
