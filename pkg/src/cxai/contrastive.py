"""Contrastive explanations: best match, relevance ranges, unique concepts, rendering."""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import crp
from .errors import (
    DataError,
    DegenerateAttributionError,
    DimensionError,
    NoContrastError,
    NotExplainableError,
    NotFoundError,
)
from .network import embeddings, predict
from .tensor import cosine_similarity


class RelevanceRange(enum.Enum):
    VeryStrong = "very_strong"
    Strong = "strong"
    Low = "low"
    VeryLow = "very_low"

    @property
    def lower(self):
        return RANGE_BOUNDS[self][0]

    @property
    def upper(self):
        return RANGE_BOUNDS[self][1]

    @classmethod
    def parse(cls, text):
        key = text.strip().lower().replace("-", "_").replace(" ", "_")
        for r in cls:
            if r.value == key or r.name.lower() == key:
                return r
        raise ValueError(f"unknown relevance range {text!r}; expected one of {[r.value for r in cls]}")


RANGES = tuple(RelevanceRange)
RANGE_BOUNDS = {
    RelevanceRange.VeryStrong: (0.0, 0.25),
    RelevanceRange.Strong: (0.25, 0.5),
    RelevanceRange.Low: (0.5, 0.75),
    RelevanceRange.VeryLow: (0.75, 1.0),
}


def range_of_fraction(start):
    """Range whose interval contains a cumulative-start fraction in [0, 1]."""
    if start < 0.25:
        return RelevanceRange.VeryStrong
    if start < 0.5:
        return RelevanceRange.Strong
    if start < 0.75:
        return RelevanceRange.Low
    return RelevanceRange.VeryLow


@dataclass(frozen=True)
class RankedConcepts:
    source_id: str
    entries: tuple  # (channel, score, RelevanceRange), scores non-increasing

    def range_set(self, rrange):
        return frozenset(ch for ch, _, r in self.entries if r is rrange)

    def order(self):
        return [ch for ch, _, _ in self.entries]


def rank_and_partition(attr):
    """Sort concepts by relevance and assign each to a relevance range.

    A positive concept falls in the range containing its cumulative start
    fraction (positive mass ranked before it over the total positive mass).
    Zero and negative concepts go to VeryLow after the positive ones.
    """
    scores = np.asarray(attr.scores, dtype=np.float64)
    positive = [int(c) for c in np.flatnonzero(scores > 0)]
    if not positive:
        raise DegenerateAttributionError(f"attribution {attr.instance_id!r} has no positive concept score")
    positive.sort(key=lambda c: (-scores[c], c))
    rest = sorted((int(c) for c in np.flatnonzero(scores <= 0)), key=lambda c: (-scores[c], c))
    total = float(sum(scores[c] for c in positive))
    entries = []
    cumulative = 0.0
    for c in positive:
        entries.append((c, float(scores[c]), range_of_fraction(cumulative / total)))
        cumulative += scores[c]
    entries.extend((c, float(scores[c]), RelevanceRange.VeryLow) for c in rest)
    return RankedConcepts(attr.instance_id, tuple(entries))


def unique_difference(c1, c0, rrange):
    """Channels of ``rrange`` present only in the target (``c1``) or only in the contrast (``c0``)."""
    s1, s0 = c1.range_set(rrange), c0.range_set(rrange)
    return s1 - s0, s0 - s1


@dataclass(frozen=True)
class SimilarityMatch:
    target_id: str
    best_match_id: str
    similarity: float
    runners_up: tuple = ()


def best_match(target_embedding, candidates, runners_up=5):
    """Opposite-class candidate with the highest cosine similarity.

    Candidates are scanned in lexicographic id order and only a strictly
    larger similarity replaces the current best, so ties go to the smallest id.
    """
    if not candidates:
        raise NoContrastError("no candidates to match against")
    scored = []
    best_id, best_sim = None, -np.inf
    for cid, emb in sorted(candidates, key=lambda c: c[0]):
        if len(emb) != len(target_embedding):
            raise DimensionError(f"candidate {cid!r} embedding length {len(emb)} != {len(target_embedding)}")
        s = cosine_similarity(emb, target_embedding)
        scored.append((cid, s))
        if s > best_sim:
            best_id, best_sim = cid, s
    others = sorted((c for c in scored if c[0] != best_id), key=lambda c: (-c[1], c[0]))
    return SimilarityMatch("", best_id, best_sim, tuple(others[:runners_up]))


@dataclass(frozen=True)
class ContrastiveExplanation:
    target_class: str
    contrast_class: str
    range: RelevanceRange
    present: tuple
    absent: tuple
    rendered: str
    target_id: str = ""
    contrast_id: str = ""
    similarity: float = float("nan")
    present_channels: tuple = ()
    absent_channels: tuple = ()

    @property
    def length(self):
        return len(self.present) + len(self.absent)


def concept_name(channel, names):
    return (names or {}).get(channel, f"concept#{channel}")


def render_text(target_class, contrast_class, present, absent):
    head = f"The model classified the image as a {target_class} instead of a {contrast_class} because it"
    first = f"contains the concepts {', '.join(present)}" if present else "contains no distinguishing concepts"
    second = (
        f"does not contain the concepts {', '.join(absent)}" if absent
        else "lacks no distinguishing concepts"
    )
    return f"{head} {first}, and {second}."


def render(target_class, contrast_class, rrange, present, absent, names=None, **extra):
    """Fill the explanation template.

    ``present`` and ``absent`` are channel ids in display order; channels
    without a name are shown as ``concept#<id>``.
    """
    if not target_class or not contrast_class:
        raise ValueError("class names must be non-empty")
    present_names = tuple(concept_name(c, names) for c in present)
    absent_names = tuple(concept_name(c, names) for c in absent)
    return ContrastiveExplanation(
        target_class=target_class,
        contrast_class=contrast_class,
        range=rrange,
        present=present_names,
        absent=absent_names,
        rendered=render_text(target_class, contrast_class, present_names, absent_names),
        present_channels=tuple(present),
        absent_channels=tuple(absent),
        **extra,
    )


def load_names(path, channel_count):
    """Read a ``channel_id<TAB>name`` file; ids outside the concept layer are rejected."""
    names = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise DataError(f"{path}:{lineno}: expected 'channel_id<TAB>name'")
            key, name = line.split("\t", 1)
            try:
                channel = int(key)
            except ValueError:
                raise DataError(f"{path}:{lineno}: channel id {key!r} is not an integer") from None
            if not 0 <= channel < channel_count:
                raise DataError(f"{path}:{lineno}: unknown concept id {channel} (layer has {channel_count})")
            names[channel] = name
    return names


# ---------------------------------------------------------------------------
# end-to-end

@dataclass
class Explainer:
    """Explanation pipeline over one test set.

    Predictions, embeddings and concept rankings are computed once and shared
    by every explanation drawn from this set.
    """

    net: object
    data: object
    rule_epsilon: float = crp.DEFAULT_EPSILON
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        images = self.data.images if len(self.data) else np.zeros((0,) + tuple(self.net.input_shape))
        self.predictions = predict(self.net, images) if len(self.data) else np.zeros(0, dtype=np.int64)
        self.correct = {
            inst.id for inst, p in zip(self.data.instances, self.predictions) if p == inst.label
        }
        self._index = {inst.id: k for k, inst in enumerate(self.data.instances)}
        self._embeddings = {}
        self._rankings = {}
        ok = [k for k, inst in enumerate(self.data.instances) if inst.id in self.correct]
        if ok:
            emb = embeddings(self.net, images[ok])
            for k, e in zip(ok, emb):
                self._embeddings[self.data.instances[k].id] = e

    def instance(self, instance_id):
        k = self._index.get(instance_id)
        if k is None:
            raise NotFoundError(f"unknown instance id {instance_id!r}")
        return self.data.instances[k]

    def predicted(self, instance_id):
        return int(self.predictions[self._index[instance_id]])

    def correct_ids(self, label=None):
        return [i.id for i in self.data.instances if i.id in self.correct and (label is None or i.label == label)]

    def embedding(self, instance_id):
        return self._embeddings[instance_id]

    def attributions(self, ids):
        todo = [i for i in ids if i not in self._rankings]
        if todo:
            images = np.stack([self.instance(i).image for i in todo])
            classes = [self.predicted(i) for i in todo]
            for attr in crp.concept_scores_batch(self.net, images, classes, todo, self.rule_epsilon):
                self._rankings[attr.instance_id] = (attr, None)
        return [self._rankings[i][0] for i in ids]

    def ranking(self, instance_id):
        attr = self.attributions([instance_id])[0]
        cached = self._rankings[instance_id][1]
        if cached is None:
            cached = rank_and_partition(attr)
            self._rankings[instance_id] = (attr, cached)
        return cached

    def match(self, target_id):
        target = self.instance(target_id)
        if target_id not in self.correct:
            raise NotExplainableError(target_id, self.predicted(target_id), target.label)
        pool = [(i, self._embeddings[i]) for i in self.correct_ids(1 - target.label)]
        if not pool:
            raise NoContrastError(f"no correctly classified instance of the class opposite to {target_id!r}")
        m = best_match(self._embeddings[target_id], pool)
        return SimilarityMatch(target_id, m.best_match_id, m.similarity, m.runners_up)

    def explain(self, target_id, rrange):
        m = self.match(target_id)
        c1 = self.ranking(target_id)
        c0 = self.ranking(m.best_match_id)
        present, absent = unique_difference(c1, c0, rrange)
        label = self.instance(target_id).label
        return render(
            self.data.class_names[label],
            self.data.class_names[1 - label],
            rrange,
            [c for c in c1.order() if c in present],
            [c for c in c0.order() if c in absent],
            self.names,
            target_id=target_id,
            contrast_id=m.best_match_id,
            similarity=m.similarity,
        )


def explain(net, data, target_id, rrange, names=None, rule_epsilon=crp.DEFAULT_EPSILON):
    return Explainer(net, data, rule_epsilon, names or {}).explain(target_id, rrange)
