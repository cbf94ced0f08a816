"""Small CNN: architecture, forward/backward passes, SGD training, embeddings."""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from . import tensor as T
from .errors import ConfigError, ConsistencyError, DimensionError, TrainingDivergedError


# ---------------------------------------------------------------------------
# layer specs

@dataclass(frozen=True)
class Conv2d:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    kind = "conv"


@dataclass(frozen=True)
class ReLU:
    kind = "relu"


@dataclass(frozen=True)
class MaxPool2d:
    window: int
    stride: Optional[int] = None  # defaults to the window size
    kind = "maxpool"

    def __post_init__(self):
        if self.stride is None:
            object.__setattr__(self, "stride", self.window)

    @property
    def step(self):
        return self.stride


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"


@dataclass(frozen=True)
class Linear:
    units: int
    kind = "linear"


LayerSpec = Union[Conv2d, ReLU, MaxPool2d, Flatten, Linear]

PARAMETRIC = (Conv2d, Linear)


def parse_layer(text):
    """Parse ``conv:8:3:1:1``, ``relu``, ``maxpool:2[:2]``, ``flatten`` or ``linear:2``."""
    parts = [p.strip() for p in text.strip().split(":")]
    name, args = parts[0].lower(), parts[1:]
    try:
        nums = [int(a) for a in args]
    except ValueError:
        raise ConfigError(f"non-integer layer argument in {text!r}") from None
    if name == "conv" and 2 <= len(nums) <= 4:
        return Conv2d(*nums)
    if name == "relu" and not nums:
        return ReLU()
    if name == "maxpool" and 1 <= len(nums) <= 2:
        return MaxPool2d(*nums)
    if name == "flatten" and not nums:
        return Flatten()
    if name == "linear" and len(nums) == 1:
        return Linear(nums[0])
    raise ConfigError(f"cannot parse layer spec {text!r}")


def format_layer(layer):
    if isinstance(layer, Conv2d):
        return f"conv:{layer.out_channels}:{layer.kernel}:{layer.stride}:{layer.padding}"
    if isinstance(layer, MaxPool2d):
        return f"maxpool:{layer.window}:{layer.step}"
    if isinstance(layer, Linear):
        return f"linear:{layer.units}"
    return layer.kind


DEFAULT_ARCHITECTURE = (
    Conv2d(8, 3, 1, 1),
    ReLU(),
    MaxPool2d(2, 2),
    Conv2d(16, 3, 1, 1),
    ReLU(),
    MaxPool2d(2, 2),
    Flatten(),
    Linear(2),
)
DEFAULT_INPUT_SHAPE = (1, 32, 32)
DEFAULT_CONCEPT_LAYER = 3
DEFAULT_EMBEDDING_LAYER = 5


def infer_shapes(layers, input_shape):
    """Output shape of every layer (without batch axis); validates compatibility."""
    shape = tuple(input_shape)
    shapes = []
    flattened = False
    for i, layer in enumerate(layers):
        if isinstance(layer, Conv2d):
            if flattened or len(shape) != 3:
                raise ConfigError(f"layer {i}: conv needs a (C, H, W) input, got {shape}")
            c, h, w = shape
            k, s, p = layer.kernel, layer.stride, layer.padding
            if layer.out_channels < 1 or k < 1 or s < 1 or p < 0 or k > h + 2 * p or k > w + 2 * p:
                raise ConfigError(f"layer {i}: conv {format_layer(layer)} does not fit input {shape}")
            shape = (layer.out_channels, T.conv_output_size(h, k, s, p), T.conv_output_size(w, k, s, p))
        elif isinstance(layer, MaxPool2d):
            if flattened or len(shape) != 3:
                raise ConfigError(f"layer {i}: maxpool needs a (C, H, W) input, got {shape}")
            c, h, w = shape
            if layer.window < 1 or layer.step < 1 or layer.window > min(h, w):
                raise ConfigError(f"layer {i}: pool window {layer.window} does not fit {shape}")
            shape = (c, (h - layer.window) // layer.step + 1, (w - layer.window) // layer.step + 1)
        elif isinstance(layer, Flatten):
            if flattened:
                raise ConfigError(f"layer {i}: second flatten")
            flattened = True
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Linear):
            if not flattened:
                raise ConfigError(f"layer {i}: linear before flatten")
            if layer.units < 1:
                raise ConfigError(f"layer {i}: linear needs at least one unit")
            shape = (layer.units,)
        elif not isinstance(layer, ReLU):
            raise ConfigError(f"layer {i}: unknown layer {layer!r}")
        shapes.append(shape)
    if not flattened:
        raise ConfigError("architecture has no flatten layer")
    return shapes


# ---------------------------------------------------------------------------
# network

@dataclass(frozen=True)
class Network:
    layers: tuple
    input_shape: tuple
    params: dict = field(repr=False)
    concept_layer: Optional[int] = DEFAULT_CONCEPT_LAYER
    embedding_layer: int = DEFAULT_EMBEDDING_LAYER
    class_count: int = 2

    def __post_init__(self):
        shapes = infer_shapes(self.layers, self.input_shape)
        n = len(self.layers)
        if not 0 <= self.embedding_layer < n:
            raise ConfigError(f"embedding_layer {self.embedding_layer} out of range for {n} layers")
        if self.concept_layer is not None:
            if not 0 <= self.concept_layer <= self.embedding_layer:
                raise ConfigError(
                    f"concept_layer {self.concept_layer} must lie in [0, embedding_layer={self.embedding_layer}]"
                )
            if not isinstance(self.layers[self.concept_layer], Conv2d):
                raise ConfigError(f"concept_layer {self.concept_layer} is not a conv layer")
        if shapes[-1] != (self.class_count,):
            raise ConfigError(f"network ends in shape {shapes[-1]}, expected ({self.class_count},)")
        for name, shape in param_shapes(self.layers, self.input_shape).items():
            if name not in self.params:
                raise ConfigError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise DimensionError(f"parameter {name} has shape {self.params[name].shape}, expected {shape}")
        object.__setattr__(self, "shapes", shapes)

    @property
    def concept_channels(self):
        if self.concept_layer is None:
            raise ConfigError("network has no concept layer")
        return self.layers[self.concept_layer].out_channels

    @property
    def embedding_size(self):
        return int(np.prod(self.shapes[self.embedding_layer]))

    def with_params(self, params):
        return replace(self, params={k: np.array(v, dtype=np.float64) for k, v in params.items()})

    def param_names(self):
        return list(param_shapes(self.layers, self.input_shape))


def param_shapes(layers, input_shape):
    shapes = {}
    prev = tuple(input_shape)
    for i, (layer, out) in enumerate(zip(layers, infer_shapes(layers, input_shape))):
        if isinstance(layer, Conv2d):
            shapes[f"layer{i}.weight"] = (layer.out_channels, prev[0], layer.kernel, layer.kernel)
            shapes[f"layer{i}.bias"] = (layer.out_channels,)
        elif isinstance(layer, Linear):
            shapes[f"layer{i}.weight"] = (layer.units, prev[0])
            shapes[f"layer{i}.bias"] = (layer.units,)
        prev = out
    return shapes


def init_params(layers, input_shape, seed):
    """Glorot-uniform weights from a seeded generator; zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(layers, input_shape).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
            continue
        receptive = int(np.prod(shape[2:])) if len(shape) == 4 else 1
        fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def build_network(
    layers=DEFAULT_ARCHITECTURE,
    input_shape=DEFAULT_INPUT_SHAPE,
    concept_layer=DEFAULT_CONCEPT_LAYER,
    embedding_layer=DEFAULT_EMBEDDING_LAYER,
    seed=0,
    class_count=2,
):
    layers = tuple(layers)
    input_shape = tuple(input_shape)
    return Network(
        layers=layers,
        input_shape=input_shape,
        params=init_params(layers, input_shape, seed),
        concept_layer=concept_layer,
        embedding_layer=embedding_layer,
        class_count=class_count,
    )


# ---------------------------------------------------------------------------
# forward / backward

@dataclass
class Trace:
    """Activations of one forward pass over a batch.

    ``activations[0]`` is the input and ``activations[i + 1]`` the output of
    layer ``i``; ``pool_index[i]`` holds the argmax map of pooling layer ``i``.
    """

    activations: list
    pool_index: dict

    @property
    def logits(self):
        return self.activations[-1]

    @property
    def batch_size(self):
        return self.activations[0].shape[0]

    def check(self, net):
        if len(self.activations) != len(net.layers) + 1:
            raise ConsistencyError(
                f"trace has {len(self.activations) - 1} layers, network has {len(net.layers)}"
            )
        expected = [tuple(net.input_shape)] + list(net.shapes)
        for i, (act, shape) in enumerate(zip(self.activations, expected)):
            if act.shape[1:] != shape:
                raise ConsistencyError(f"trace entry {i} has shape {act.shape[1:]}, network expects {shape}")


def _check_input(net, x):
    if x.shape[1:] != tuple(net.input_shape):
        raise DimensionError(f"image shape {x.shape[1:]} does not match network input {tuple(net.input_shape)}")


def forward_batch(net, images, upto=None):
    """Run a ``(B, C, H, W)`` batch through the network and return the full trace.

    With ``upto`` set, evaluation stops after layer ``upto``.
    """
    x = T.as_tensor(images)
    _check_input(net, x)
    acts = [x]
    pool_index = {}
    layers = net.layers if upto is None else net.layers[:upto + 1]
    for i, layer in enumerate(layers):
        if isinstance(layer, Conv2d):
            x = T.conv2d_batch(x, net.params[f"layer{i}.weight"], net.params[f"layer{i}.bias"],
                               layer.stride, layer.padding)
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
        elif isinstance(layer, MaxPool2d):
            x, pool_index[i] = T.maxpool2d_batch(x, layer.window, layer.step)
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Linear):
            x = x @ net.params[f"layer{i}.weight"].T + net.params[f"layer{i}.bias"]
        acts.append(x)
    return Trace(acts, pool_index)


def forward(net, image):
    """Logits and activation trace for a single ``(C, H, W)`` image."""
    image = T.as_tensor(image)
    trace = forward_batch(net, image[None])
    return trace.logits[0].copy(), trace


def predict(net, images, batch_size=256):
    images = T.as_tensor(images)
    out = [forward_batch(net, images[i:i + batch_size]).logits for i in range(0, len(images), batch_size)]
    return np.concatenate(out).argmax(axis=1)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy of a batch."""
    logp = T.log_softmax(logits, axis=1)
    return float(-logp[np.arange(len(labels)), labels].mean())


def backward(net, trace, grad_logits):
    """Backpropagate ``d loss / d logits`` through a recorded trace."""
    grads = {}
    g = grad_logits
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        x_in = trace.activations[i]
        if isinstance(layer, Linear):
            w = net.params[f"layer{i}.weight"]
            grads[f"layer{i}.weight"] = g.T @ x_in
            grads[f"layer{i}.bias"] = g.sum(axis=0)
            g = g @ w
        elif isinstance(layer, Flatten):
            g = g.reshape(x_in.shape)
        elif isinstance(layer, MaxPool2d):
            g = T.unpool(g, trace.pool_index[i], x_in.shape)
        elif isinstance(layer, ReLU):
            g = g * (x_in > 0)
        elif isinstance(layer, Conv2d):
            w = net.params[f"layer{i}.weight"]
            g, grads[f"layer{i}.weight"], grads[f"layer{i}.bias"] = T.conv2d_backward(
                x_in, w, g, layer.stride, layer.padding
            )
    return grads


def loss_and_gradients(net, images, labels):
    labels = np.asarray(labels, dtype=np.int64)
    trace = forward_batch(net, images)
    logits = trace.logits
    probs = T.softmax(logits, axis=1)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1.0
    grads = backward(net, trace, (probs - onehot) / len(labels))
    return cross_entropy(logits, labels), grads


def gradients(net, image, label):
    """Cross-entropy gradients w.r.t. every parameter for a single example."""
    _, grads = loss_and_gradients(net, T.as_tensor(image)[None], [label])
    return grads


def embedding(net, image):
    """Flattened output of the embedding layer; the classifier head is never evaluated."""
    return embeddings(net, T.as_tensor(image)[None])[0]


def embeddings(net, images):
    x = T.as_tensor(images)
    _check_input(net, x)
    out = forward_batch(net, x, upto=net.embedding_layer).activations[-1]
    return out.reshape(len(x), -1).copy()


# ---------------------------------------------------------------------------
# data + training

@dataclass(frozen=True)
class Instance:
    image: np.ndarray
    label: int
    id: str


@dataclass
class Dataset:
    instances: list
    split: str = "train"
    class_names: tuple = ("class0", "class1")

    def __post_init__(self):
        self.instances = sorted(self.instances, key=lambda inst: inst.id)
        shapes = {inst.image.shape for inst in self.instances}
        if len(shapes) > 1:
            raise DimensionError(f"images of differing shapes in one dataset: {sorted(shapes)}")
        for inst in self.instances:
            if inst.label not in (0, 1):
                raise DimensionError(f"label {inst.label} of {inst.id!r} is not binary")

    def __len__(self):
        return len(self.instances)

    @property
    def images(self):
        return np.stack([inst.image for inst in self.instances])

    @property
    def labels(self):
        return np.array([inst.label for inst in self.instances], dtype=np.int64)

    @property
    def ids(self):
        return [inst.id for inst in self.instances]

    def get(self, instance_id):
        for inst in self.instances:
            if inst.id == instance_id:
                return inst
        return None

    def map_images(self, fn: Callable[[Instance], np.ndarray]):
        return Dataset(
            [Instance(fn(inst), inst.label, inst.id) for inst in self.instances],
            self.split,
            self.class_names,
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0


def train(net, data, config, on_epoch=None):
    """Mini-batch SGD on softmax cross-entropy.

    Batches are drawn from a per-epoch permutation of a generator seeded with
    ``config.seed``, so a run is bit-reproducible. ``on_epoch(epoch, loss)``
    receives the full-training-set loss after every epoch.
    """
    if len(data) == 0:
        raise DimensionError("cannot train on an empty dataset")
    if not config.learning_rate > 0:
        raise ConfigError("learning_rate must be positive")
    if config.batch_size < 1:
        raise ConfigError("batch_size must be positive")
    images, labels = data.images, data.labels
    params = {k: v.copy() for k, v in net.params.items()}
    current = replace(net, params=params)
    rng = np.random.default_rng(config.seed)
    with np.errstate(over="ignore", invalid="ignore"):
        _sgd_epochs(current, params, images, labels, config, rng, on_epoch)
    return current


def _sgd_epochs(current, params, images, labels, config, rng, on_epoch):
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(images))
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_gradients(current, images[idx], labels[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            for name, g in grads.items():
                params[name] -= config.learning_rate * g
        full = dataset_loss(current, images, labels)
        if not np.isfinite(full) or not all(np.all(np.isfinite(p)) for p in params.values()):
            raise TrainingDivergedError(epoch, full)
        if on_epoch is not None:
            on_epoch(epoch, full)


def dataset_loss(net, images, labels, batch_size=256):
    total = 0.0
    for i in range(0, len(images), batch_size):
        chunk = labels[i:i + batch_size]
        total += cross_entropy(forward_batch(net, images[i:i + batch_size]).logits, chunk) * len(chunk)
    return total / len(images)


def accuracy(net, data):
    if len(data) == 0:
        return float("nan")
    return float((predict(net, data.images) == data.labels).mean())
