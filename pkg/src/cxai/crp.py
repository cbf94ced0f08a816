"""Concept relevance propagation.

Relevance starts as the raw logit of the explained class and is pushed back
with the epsilon rule through conv/linear layers, routed to the argmax through
max pooling and passed unchanged through ReLU. The epsilon-rule denominator
is the bias-free pre-activation, so relevance is conserved layer by layer up to
the epsilon absorption.

A concept is one channel of the concept layer; its score is the summed
relevance of that channel. Masking all other channels and continuing the
backward pass below the concept layer gives the concept's input heatmap.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .network import Conv2d, Flatten, Linear, MaxPool2d, ReLU, forward, forward_batch

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class ConceptAttribution:
    instance_id: str
    class_index: int
    scores: np.ndarray

    @property
    def total(self):
        return float(self.scores.sum())


@dataclass
class RelevanceTrace:
    """Relevance per activation index: ``relevance[i]`` matches ``trace.activations[i]``."""

    relevance: dict

    def at_input(self):
        return self.relevance[0]

    def lowest(self):
        return self.relevance[min(self.relevance)]


def _stabilize(z, eps):
    # sign(0) counts as +1 so a zero pre-activation never divides by zero
    return z + eps * np.where(z >= 0, 1.0, -1.0)


def _relprop_layer(net, trace, i, r_out, eps):
    """Relevance of the input of layer ``i`` given relevance of its output."""
    layer = net.layers[i]
    x = trace.activations[i]
    if isinstance(layer, Linear):
        w = net.params[f"layer{i}.weight"]
        s = r_out / _stabilize(x @ w.T, eps)
        return x * (s @ w)
    if isinstance(layer, Conv2d):
        w = net.params[f"layer{i}.weight"]
        z = T.conv2d_batch(x, w, np.zeros(w.shape[0]), layer.stride, layer.padding)
        s = r_out / _stabilize(z, eps)
        return x * T.conv2d_transpose(s, w, x.shape, layer.stride, layer.padding)
    if isinstance(layer, MaxPool2d):
        return T.unpool(r_out, trace.pool_index[i], x.shape)
    if isinstance(layer, Flatten):
        return r_out.reshape(x.shape)
    if isinstance(layer, ReLU):
        return r_out
    raise ConfigError(f"no relevance rule for layer {layer!r}")


def propagate(net, trace, relevance, start, stop=0, eps=DEFAULT_EPSILON):
    """Push ``relevance`` (aligned with ``trace.activations[start]``) down to activation ``stop``."""
    out = {start: relevance}
    for i in range(start - 1, stop - 1, -1):
        relevance = _relprop_layer(net, trace, i, relevance, eps)
        out[i] = relevance
    return RelevanceTrace(out)


def initial_relevance(trace, class_index):
    logits = trace.logits
    idx = np.broadcast_to(np.asarray(class_index), (len(logits),))
    if np.any(idx < 0) or np.any(idx >= logits.shape[1]):
        raise DimensionError(f"class index {class_index} out of range for {logits.shape[1]} classes")
    r = np.zeros_like(logits)
    rows = np.arange(len(logits))
    r[rows, idx] = logits[rows, idx]
    return r


def lrp_backward(net, trace, class_index, rule_epsilon=DEFAULT_EPSILON, stop=0):
    """Full relevance trace from the output down to activation index ``stop``."""
    trace.check(net)
    top = len(net.layers)
    return propagate(net, trace, initial_relevance(trace, class_index), top, stop, rule_epsilon)


def _concept_index(net):
    if net.concept_layer is None:
        raise ConfigError("network has no concept layer configured")
    return net.concept_layer + 1


def concept_relevance_batch(net, trace, class_index, rule_epsilon=DEFAULT_EPSILON):
    """Relevance tensor ``(B, C, H, W)`` at the output of the concept layer."""
    return lrp_backward(net, trace, class_index, rule_epsilon, stop=_concept_index(net)).lowest()


def concept_scores_batch(net, images, class_indices, ids, rule_epsilon=DEFAULT_EPSILON):
    _concept_index(net)
    trace = forward_batch(net, images)
    rel = concept_relevance_batch(net, trace, np.asarray(class_indices), rule_epsilon)
    scores = rel.sum(axis=(2, 3))
    return [
        ConceptAttribution(str(i), int(c), s.copy())
        for i, c, s in zip(ids, class_indices, scores)
    ]


def concept_scores(net, image, class_index, rule_epsilon=DEFAULT_EPSILON, instance_id=""):
    """Per-channel concept relevance for one image.

    Channel masks partition the concept layer, so the masked score of channel
    ``c`` is simply the sum of the unmasked relevance over that channel.
    """
    return concept_scores_batch(net, T.as_tensor(image)[None], [class_index], [instance_id], rule_epsilon)[0]


def heatmap(net, image, class_index, channel, rule_epsilon=DEFAULT_EPSILON):
    """Input-space relevance of a single concept channel."""
    start = _concept_index(net)
    if not 0 <= channel < net.concept_channels:
        raise DimensionError(f"channel {channel} out of range for {net.concept_channels} concepts")
    _, trace = forward(net, image)
    rel = concept_relevance_batch(net, trace, class_index, rule_epsilon)
    masked = np.zeros_like(rel)
    masked[:, channel] = rel[:, channel]
    return propagate(net, trace, masked, start, 0, rule_epsilon).at_input()[0]
