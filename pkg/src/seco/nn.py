"""Fixed-point feed-forward models, their split into gateway/remote parts, and the
exact integer reference forward pass.

Values are integers at scale 2^s.  Every linear layer (fully connected,
convolution, average pooling) is a matrix over Z_t; convolution and pooling
are lowered to dense matrices.  A linear layer and the ReLU that follows it
form one *stage*.  After each stage but the last the result is shifted
right (toward zero) by the layer's weight scale, then passed through the
ReLU if there is one.  The last stage is not truncated.
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT = "seco-model/1"
LINEAR_KINDS = ("fc", "conv", "avgpool")
KINDS = LINEAR_KINDS + ("relu",)


class ModelError(ValueError):
    pass


def _b64_encode(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<i8")
    return {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode()}


def _b64_decode(obj) -> np.ndarray | None:
    if obj is None:
        return None
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<i8").astype(np.int64).reshape(obj["shape"])


@dataclass
class LayerSpec:
    kind: str
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    weights: np.ndarray | None = None  # fc: (out, in); conv: (k, k, c_in, c_out)
    bias: np.ndarray | None = None  # at scale s + weight_scale
    weight_scale: int = 0
    kernel: int = 0
    stride: int = 1
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def in_size(self) -> int:
        return math.prod(self.in_shape)

    @property
    def out_size(self) -> int:
        return math.prod(self.out_shape)

    @property
    def linear(self) -> bool:
        return self.kind in LINEAR_KINDS

    def matrix(self) -> np.ndarray:
        """Dense (out_size, in_size) integer matrix of a linear layer."""
        if self._matrix is None:
            if self.kind == "fc":
                self._matrix = np.asarray(self.weights, dtype=np.int64)
            elif self.kind == "conv":
                self._matrix = conv_matrix(self.weights, self.in_shape, self.stride)
            elif self.kind == "avgpool":
                self._matrix = pool_matrix(self.in_shape, self.kernel)
            else:
                raise ModelError("ReLU has no matrix")
        return self._matrix


def conv_output_shape(in_shape, kernel: int, stride: int, channels: int) -> tuple[int, int, int]:
    h, w, _ = in_shape
    return ((h - kernel) // stride + 1, (w - kernel) // stride + 1, channels)


def conv_matrix(kernel: np.ndarray, in_shape, stride: int = 1) -> np.ndarray:
    """Lower a valid (unpadded) convolution over HWC data to a dense matrix."""
    kh, kw, c_in, c_out = kernel.shape
    h, w, c = in_shape
    if c != c_in:
        raise ModelError("kernel channels do not match the input")
    oh, ow, _ = conv_output_shape(in_shape, kh, stride, c_out)
    mat = np.zeros((oh * ow * c_out, h * w * c), dtype=np.int64)
    oy, ox, ky, kx, ci, co = np.indices((oh, ow, kh, kw, c, c_out)).reshape(6, -1)
    rows = (oy * ow + ox) * c_out + co
    cols = ((oy * stride + ky) * w + (ox * stride + kx)) * c + ci
    mat[rows, cols] = kernel[ky, kx, ci, co]
    return mat


def pool_matrix(in_shape, window: int) -> np.ndarray:
    """Sum pooling over non-overlapping window x window blocks (the shift divides)."""
    h, w, c = in_shape
    oh, ow = h // window, w // window
    mat = np.zeros((oh * ow * c, h * w * c), dtype=np.int64)
    oy, ox, ky, kx, ci = np.indices((oh, ow, window, window, c)).reshape(5, -1)
    mat[(oy * ow + ox) * c + ci, ((oy * window + ky) * w + (ox * window + kx)) * c + ci] = 1
    return mat


def conv_direct(x: np.ndarray, kernel: np.ndarray, stride: int = 1) -> np.ndarray:
    """Naive convolution over an HWC array; reference for the lowering."""
    kh, kw, _, c_out = kernel.shape
    oh, ow, _ = conv_output_shape(x.shape, kh, stride, c_out)
    out = np.zeros((oh, ow, c_out), dtype=np.int64)
    for i in range(oh):
        for j in range(ow):
            patch = x[i * stride:i * stride + kh, j * stride:j * stride + kw, :]
            out[i, j] = np.tensordot(patch, kernel, axes=([0, 1, 2], [0, 1, 2]))
    return out


def im2col_lower(layer: LayerSpec) -> LayerSpec:
    """Equivalent fully connected layer for a convolution or pooling layer."""
    if not layer.linear:
        raise ModelError("only linear layers can be lowered")
    return LayerSpec("fc", (layer.in_size,), (layer.out_size,), layer.matrix(), layer.bias,
                     layer.weight_scale)


@dataclass
class Model:
    name: str
    scale: int
    input_shape: tuple[int, ...]
    layers: list[LayerSpec]

    @property
    def L(self) -> int:
        return len(self.layers)

    @property
    def input_size(self) -> int:
        return math.prod(self.input_shape)

    @property
    def output_size(self) -> int:
        return self.layers[-1].out_size

    @property
    def output_scale(self) -> int:
        return self.scale + self.stages()[-1].weight_scale

    def stages(self) -> list["Stage"]:
        return build_stages(self)

    def validate(self):
        if not self.layers:
            raise ModelError("model has no layers")
        size = self.input_size
        prev_linear = False
        for i, layer in enumerate(self.layers, 1):
            if layer.kind not in KINDS:
                raise ModelError(f"layer {i}: unknown kind {layer.kind!r}")
            if layer.in_size != size:
                raise ModelError(f"layer {i}: expects {layer.in_size} inputs, previous layer gives {size}")
            if layer.kind == "relu":
                if not prev_linear:
                    raise ModelError(f"layer {i}: ReLU must follow a linear layer")
                if layer.out_size != layer.in_size:
                    raise ModelError(f"layer {i}: ReLU changes the size")
            elif layer.kind == "fc" and layer.weights.shape != (layer.out_size, layer.in_size):
                raise ModelError(f"layer {i}: weight shape {layer.weights.shape} does not match dims")
            if layer.bias is not None and layer.bias.shape != (layer.out_size,):
                raise ModelError(f"layer {i}: bias shape mismatch")
            prev_linear = layer.linear
            size = layer.out_size


@dataclass(frozen=True, eq=False)
class Stage:
    """One linear layer plus the ReLU (if any) that follows it."""

    index: int  # 0-based stage number
    layer: int  # 1-based model index of the linear layer
    last_layer: int  # 1-based model index of the last layer covered (the ReLU, if any)
    matrix: np.ndarray
    bias: np.ndarray | None
    weight_scale: int
    activation: str  # "relu" or "identity"
    is_last: bool

    @property
    def in_size(self) -> int:
        return self.matrix.shape[1]

    @property
    def out_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def shift(self) -> int:
        return 0 if self.is_last else self.weight_scale


def build_stages(model: Model) -> list[Stage]:
    linear_idx = [i for i, layer in enumerate(model.layers) if layer.linear]
    stages = []
    for n, i in enumerate(linear_idx):
        layer = model.layers[i]
        relu = i + 1 < model.L and model.layers[i + 1].kind == "relu"
        stages.append(Stage(n, i + 1, i + 2 if relu else i + 1, layer.matrix(), layer.bias,
                            layer.weight_scale, "relu" if relu else "identity",
                            n == len(linear_idx) - 1))
    return stages


def gateway_stage_count(model: Model, l: int) -> int:
    """Number of stages whose linear layer sits at a model index <= l."""
    if not 0 <= l <= model.L:
        raise ModelError(f"split point {l} outside [0, {model.L}]")
    return sum(1 for st in model.stages() if st.layer <= l)


@dataclass(frozen=True, eq=False)
class WeightShares:
    f2: np.ndarray
    f3: np.ndarray
    b2: np.ndarray | None
    b3: np.ndarray | None


@dataclass(eq=False)
class ModelSplit:
    model: Model
    l: int
    t: int
    gateway: list[Stage]
    remote: list[Stage]
    shares: dict  # stage index -> WeightShares

    @property
    def stages(self) -> list[Stage]:
        return self.gateway + self.remote


def split_model(model: Model, l: int, t: int, rng: np.random.Generator) -> ModelSplit:
    """Divide the stages at split point l and share every remote weight matrix additively mod t."""
    stages = model.stages()
    g = gateway_stage_count(model, l)
    shares = {}
    for st in stages[g:]:
        f2 = rng.integers(0, t, size=st.matrix.shape, dtype=np.int64)
        f3 = np.mod(st.matrix - f2, t)
        b2 = b3 = None
        if st.bias is not None:
            b2 = rng.integers(0, t, size=st.bias.shape, dtype=np.int64)
            b3 = np.mod(st.bias - b2, t)
        shares[st.index] = WeightShares(f2, f3, b2, b3)
    return ModelSplit(model, l, t, stages[:g], stages[g:], shares)


# -- fixed point --------------------------------------------------------------

@dataclass(frozen=True)
class FixedPointConfig:
    scale: int
    t: int

    def encode(self, x) -> np.ndarray:
        return np.rint(np.asarray(x, dtype=np.float64) * (1 << self.scale)).astype(np.int64)

    def decode(self, v, scale: int | None = None) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) / (1 << (self.scale if scale is None else scale))


def centered(v, t: int) -> np.ndarray:
    v = np.mod(np.asarray(v, dtype=object), t)
    return np.where(v > t // 2, v - t, v)


def apply_stage(stage: Stage, x_res: np.ndarray, t: int) -> np.ndarray:
    """One stage on residues mod t, exactly as the share circuits compute it."""
    v = np.asarray(stage.matrix, dtype=object).dot(np.asarray(x_res, dtype=object))
    if stage.bias is not None:
        v = v + np.asarray(stage.bias, dtype=object)
    return truncate_activate(v, t, stage.shift, stage.activation)


def truncate_activate(v, t: int, shift: int, activation: str) -> np.ndarray:
    v = np.mod(np.asarray(v, dtype=object), t)
    neg = v >= (t + 1) // 2
    if activation == "relu":
        return np.where(neg, 0, v >> shift).astype(object)
    mag = np.where(neg, t - v, v)
    return np.where(neg, np.mod(-(mag >> shift), t), mag >> shift).astype(object)


def plaintext_infer(model: Model, x, t: int, trace: bool = False):
    """Exact fixed-point forward pass; returns centered logits (and per-stage residues)."""
    x = np.asarray(x, dtype=object).reshape(-1)
    if x.shape[0] != model.input_size:
        raise ModelError(f"input has {x.shape[0]} entries, model expects {model.input_size}")
    cur = np.mod(x, t)
    inter = [cur]
    for st in model.stages():
        cur = apply_stage(st, cur, t)
        inter.append(cur)
    out = centered(cur, t)
    return (out, inter) if trace else out


def float_infer(model: Model, x) -> np.ndarray:
    """Floating-point forward pass with the same weights, for drift checks."""
    s = model.scale
    cur = np.asarray(x, dtype=np.float64).reshape(-1)
    for layer in model.layers:
        if layer.kind == "relu":
            cur = np.maximum(cur, 0)
            continue
        w = layer.matrix().astype(np.float64) / (1 << layer.weight_scale)
        cur = w @ cur
        if layer.bias is not None:
            cur = cur + layer.bias / float(1 << (s + layer.weight_scale))
    return cur


# -- model files ----------------------------------------------------------------

def _layer_from_json(obj, in_shape, scale, rng, weight_range):
    kind = obj["kind"]
    in_shape = tuple(obj.get("in_shape", in_shape))
    bound = max(1, int(round(weight_range * (1 << scale))))

    def weights_or_random(shape):
        w = _b64_decode(obj.get("weights"))
        if w is None:
            if rng is None:
                raise ModelError(f"{kind} layer has no weights and no generator")
            w = rng.integers(-bound, bound + 1, size=shape, dtype=np.int64)
        return w

    if kind == "fc":
        out = int(obj["out"])
        n_in = math.prod(in_shape)
        w = weights_or_random((out, n_in))
        layer = LayerSpec("fc", (n_in,), (out,), w, None, int(obj.get("weight_scale", scale)))
    elif kind == "conv":
        k, ch, stride = int(obj["kernel"]), int(obj["out_channels"]), int(obj.get("stride", 1))
        if len(in_shape) != 3:
            raise ModelError("convolution needs an HWC input shape")
        w = weights_or_random((k, k, in_shape[2], ch))
        layer = LayerSpec("conv", in_shape, conv_output_shape(in_shape, k, stride, ch), w, None,
                          int(obj.get("weight_scale", scale)), k, stride)
    elif kind == "avgpool":
        k = int(obj["window"])
        if k & (k - 1):
            raise ModelError("pooling window must be a power of two")
        h, w_, c = in_shape
        layer = LayerSpec("avgpool", in_shape, (h // k, w_ // k, c), None, None,
                          int(math.log2(k * k)), k, k)
    elif kind == "relu":
        layer = LayerSpec("relu", in_shape, in_shape)
    else:
        raise ModelError(f"unknown layer kind {kind!r}")
    bias = obj.get("bias")
    if bias == "random" and layer.linear:
        if rng is None:
            raise ModelError("random bias needs a generator")
        layer.bias = rng.integers(-bound << scale, (bound << scale) + 1, size=layer.out_size, dtype=np.int64)
    elif bias is not None:
        layer.bias = _b64_decode(bias).reshape(-1)
    return layer


def model_from_dict(doc: dict) -> Model:
    if doc.get("format") != FORMAT:
        raise ModelError(f"unsupported model format {doc.get('format')!r}")
    scale = int(doc.get("scale", 10))
    gen = doc.get("generator")
    rng = np.random.default_rng(int(gen["seed"])) if gen else None
    weight_range = float(gen.get("weight_range", 0.25)) if gen else 0.0
    shape = tuple(doc["input_shape"])
    layers = []
    for obj in doc["layers"]:
        layer = _layer_from_json(obj, shape, scale, rng, weight_range)
        layers.append(layer)
        shape = layer.out_shape
    model = Model(doc.get("name", "model"), scale, tuple(doc["input_shape"]), layers)
    model.validate()
    return model


def model_to_dict(model: Model) -> dict:
    layers = []
    for layer in model.layers:
        obj = {"kind": layer.kind, "in_shape": list(layer.in_shape)}
        if layer.kind == "fc":
            obj.update(out=layer.out_size, weights=_b64_encode(layer.weights), weight_scale=layer.weight_scale)
        elif layer.kind == "conv":
            obj.update(kernel=layer.kernel, out_channels=layer.out_shape[2], stride=layer.stride,
                       weights=_b64_encode(layer.weights), weight_scale=layer.weight_scale)
        elif layer.kind == "avgpool":
            obj.update(window=layer.kernel)
        if layer.bias is not None:
            obj["bias"] = _b64_encode(layer.bias)
        layers.append(obj)
    return {"format": FORMAT, "name": model.name, "scale": model.scale,
            "input_shape": list(model.input_shape), "layers": layers}


BUNDLED_DIR = Path(__file__).parent / "models"


def resolve_model_path(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    alias = p.name.replace(".", "-")
    for cand in (BUNDLED_DIR / p.name, BUNDLED_DIR / f"{p.name}.json", BUNDLED_DIR / f"{alias}.json"):
        if cand.exists():
            return cand
    raise ModelError(f"model file {path!s} not found")


def load_model(path) -> Model:
    try:
        doc = json.loads(resolve_model_path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"cannot parse model file: {exc}") from None
    try:
        return model_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed model file: {exc}") from None


def save_model(model: Model, path):
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def bundled_models() -> list[str]:
    return sorted(p.stem for p in BUNDLED_DIR.glob("*.json"))
