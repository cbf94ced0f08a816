"""Independent loop-level reference implementations used as test oracles.

Nothing here calls into cxai's numerical code; only the layer spec classes and
raw parameter arrays are read.
"""

import math

from cxai.network import Conv2d, Flatten, Linear, MaxPool2d, ReLU


def conv2d_loops(x, w, b, stride=1, pad=0):
    c_in, h, wd = len(x), len(x[0]), len(x[0][0])
    c_out, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = [[[0.0] * wo for _ in range(ho)] for _ in range(c_out)]
    for o in range(c_out):
        for p in range(ho):
            for q in range(wo):
                acc = float(b[o])
                for c in range(c_in):
                    for i in range(kh):
                        for j in range(kw):
                            r, s = p * stride + i - pad, q * stride + j - pad
                            if 0 <= r < h and 0 <= s < wd:
                                acc += x[c][r][s] * w[o, c, i, j]
                out[o][p][q] = acc
    return out


def _shape(t):
    if isinstance(t[0], list):
        return (len(t),) + _shape(t[0])
    return (len(t),)


def _zeros(shape):
    if len(shape) == 1:
        return [0.0] * shape[0]
    return [_zeros(shape[1:]) for _ in range(shape[0])]


def forward_loops(net, image):
    """Activations (as nested lists) and pool argmax maps, computed with explicit loops."""
    x = image.tolist()
    acts, argmax = [x], {}
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Conv2d):
            x = conv2d_loops(x, net.params[f"layer{i}.weight"], net.params[f"layer{i}.bias"],
                             layer.stride, layer.padding)
        elif isinstance(layer, ReLU):
            x = _map(x, lambda v: v if v > 0 else 0.0)
        elif isinstance(layer, MaxPool2d):
            x, argmax[i] = _maxpool_loops(x, layer.window, layer.step)
        elif isinstance(layer, Flatten):
            x = _flatten(x)
        elif isinstance(layer, Linear):
            w, b = net.params[f"layer{i}.weight"], net.params[f"layer{i}.bias"]
            x = [float(b[k]) + sum(w[k, j] * x[j] for j in range(len(x))) for k in range(len(b))]
        acts.append(x)
    return acts, argmax


def _map(t, fn):
    if isinstance(t, list):
        return [_map(v, fn) for v in t]
    return fn(t)


def _flatten(t):
    if isinstance(t, list):
        return [v for sub in t for v in _flatten(sub)] if isinstance(t[0], list) else list(t)
    return [t]


def _maxpool_loops(x, k, s):
    c, h, w = _shape(x)
    ho, wo = (h - k) // s + 1, (w - k) // s + 1
    out = [[[0.0] * wo for _ in range(ho)] for _ in range(c)]
    where = [[[None] * wo for _ in range(ho)] for _ in range(c)]
    for ch in range(c):
        for p in range(ho):
            for q in range(wo):
                best, pos = -math.inf, None
                for i in range(k):
                    for j in range(k):
                        v = x[ch][p * s + i][q * s + j]
                        if v > best:
                            best, pos = v, (p * s + i, q * s + j)
                out[ch][p][q] = best
                where[ch][p][q] = pos
    return out, where


def _stab(z, eps):
    return z + (eps if z >= 0 else -eps)


def lrp_loops(net, image, class_index, eps, stop, mask_channel=None, mask_at=None):
    """Epsilon-rule relevance at activation index ``stop`` using only explicit loops.

    If ``mask_channel`` is given, relevance at activation ``mask_at`` is zeroed
    outside that channel before continuing down.
    """
    acts, argmax = forward_loops(net, image)
    n = len(net.layers)
    rel = [0.0] * len(acts[n])
    rel[class_index] = acts[n][class_index]
    for i in range(n - 1, stop - 1, -1):
        if mask_channel is not None and i + 1 == mask_at:
            rel = [ch if c == mask_channel else _map(ch, lambda v: 0.0) for c, ch in enumerate(rel)]
        layer, x = net.layers[i], acts[i]
        if isinstance(layer, Linear):
            w = net.params[f"layer{i}.weight"]
            new = [0.0] * len(x)
            for k in range(len(rel)):
                z = sum(x[j] * w[k, j] for j in range(len(x)))
                for j in range(len(x)):
                    new[j] += x[j] * w[k, j] / _stab(z, eps) * rel[k]
            rel = new
        elif isinstance(layer, Flatten):
            c, h, w = _shape(x)
            rel = [[[rel[(ch * h + r) * w + s] for s in range(w)] for r in range(h)] for ch in range(c)]
        elif isinstance(layer, ReLU):
            pass
        elif isinstance(layer, MaxPool2d):
            new = _zeros(_shape(x))
            for ch, plane in enumerate(argmax[i]):
                for p, row in enumerate(plane):
                    for q, (r, s) in enumerate(row):
                        new[ch][r][s] += rel[ch][p][q]
            rel = new
        elif isinstance(layer, Conv2d):
            w = net.params[f"layer{i}.weight"]
            c_in, h, wd = _shape(x)
            c_out, _, kh, kw = w.shape
            st, pad = layer.stride, layer.padding
            new = _zeros((c_in, h, wd))
            for o in range(c_out):
                for p in range(len(rel[0])):
                    for q in range(len(rel[0][0])):
                        taps = []
                        for c in range(c_in):
                            for a in range(kh):
                                for b in range(kw):
                                    r, s = p * st + a - pad, q * st + b - pad
                                    if 0 <= r < h and 0 <= s < wd:
                                        taps.append((c, r, s, x[c][r][s] * w[o, c, a, b]))
                        z = sum(t[3] for t in taps)
                        for c, r, s, zjk in taps:
                            new[c][r][s] += zjk / _stab(z, eps) * rel[o][p][q]
            rel = new
    return rel


def concept_scores_loops(net, image, class_index, eps):
    rel = lrp_loops(net, image, class_index, eps, stop=net.concept_layer + 1)
    return [sum(sum(row) for row in plane) for plane in rel]


def rank_loops(scores):
    """(channel, range name) in rank order."""
    names = ["very_strong", "strong", "low", "very_low"]
    pos = [c for c in range(len(scores)) if scores[c] > 0]
    pos.sort(key=lambda c: (-scores[c], c))
    total = sum(scores[c] for c in pos)
    out, before = [], 0.0
    for c in pos:
        frac = before / total
        idx = 0 if frac < 0.25 else 1 if frac < 0.5 else 2 if frac < 0.75 else 3
        out.append((c, names[idx]))
        before += scores[c]
    rest = sorted((c for c in range(len(scores)) if scores[c] <= 0), key=lambda c: (-scores[c], c))
    out.extend((c, "very_low") for c in rest)
    return out


def algorithm1_reference(net, instances, target_id, eps):
    """Straight-line contrastive explanation for one target.

    ``instances`` is a list of (id, image, label). Returns the match id, its
    similarity, and per-range (present, absent) channel sets.
    """
    logits, emb = {}, {}
    for iid, img, _ in instances:
        acts, _ = forward_loops(net, img)
        logits[iid] = acts[-1]
        emb[iid] = _flatten(acts[net.embedding_layer + 1])
    pred = {iid: max(range(len(l)), key=lambda k: (l[k], -k)) for iid, l in logits.items()}
    label = {iid: lab for iid, _, lab in instances}
    image = {iid: img for iid, img, _ in instances}
    correct = {iid for iid in label if pred[iid] == label[iid]}
    assert target_id in correct
    t = label[target_id]
    max_sim, best = -1.0, None
    for iid in sorted(correct):
        if label[iid] == t:
            continue
        a, b = emb[iid], emb[target_id]
        s = sum(u * v for u, v in zip(a, b)) / math.sqrt(sum(u * u for u in a) * sum(v * v for v in b))
        if s > max_sim:
            max_sim, best = s, iid
    c1 = rank_loops(concept_scores_loops(net, image[target_id], pred[target_id], eps))
    c0 = rank_loops(concept_scores_loops(net, image[best], pred[best], eps))
    per_range = {}
    for name in ("very_strong", "strong", "low", "very_low"):
        s1 = {c for c, r in c1 if r == name}
        s0 = {c for c, r in c0 if r == name}
        per_range[name] = (s1 - s0, s0 - s1)
    return best, max_sim, per_range
