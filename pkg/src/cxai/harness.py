"""Experiment orchestration: model preparation, length-vs-range study, augmentation study.

Outputs are CSV files written through one writer with deterministic row order
(instance id, range, condition), so identical configs give identical bytes.
"""

import csv
import io
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import stats
from .contrastive import RANGES, Explainer, RelevanceRange, load_names
from .data import SynthSpec, load_dataset, synthesize_dataset
from .errors import (
    ConfigError,
    DegenerateAttributionError,
    InsufficientDataError,
    NoContrastError,
    NotExplainableError,
    ZeroVarianceError,
)
from .network import TrainConfig, accuracy, build_network, train
from .weights import load_weights, save_weights

log = logging.getLogger(__name__)

ORIGINAL = "original"


@dataclass(frozen=True)
class LengthRecord:
    instance_id: str
    label: int
    range: RelevanceRange
    condition: str
    length: int
    match_id: str
    similarity: float


# ---------------------------------------------------------------------------
# model + data

def load_data(cfg):
    """Train and test sets described by the config."""
    if cfg.dataset == "synthetic":
        make = lambda n, split: synthesize_dataset(SynthSpec(
            n, cfg.synth_image_size, cfg.seed_for("synth"), split, tuple(cfg.class_names)))
        return make(cfg.synth_train_per_class, "train"), make(cfg.synth_test_per_class, "test")
    if not cfg.train_dir or not cfg.test_dir:
        raise ConfigError("dataset = directory needs train_dir and test_dir")
    channels = cfg.input_shape[0]
    return (
        load_dataset(cfg.train_dir, tuple(cfg.class_names), "train", channels),
        load_dataset(cfg.test_dir, tuple(cfg.class_names), "test", channels),
    )


def initial_network(cfg):
    return build_network(cfg.architecture, cfg.input_shape, cfg.concept_layer, cfg.embedding_layer,
                         cfg.seed_for("init"))


def prepare_model(cfg, train_data=None):
    """Train from scratch, load weights, or fine-tune loaded weights."""
    net = initial_network(cfg)
    if cfg.weights:
        net = load_weights(cfg.weights, net)
        if not cfg.finetune:
            return net
    if train_data is None:
        train_data, _ = load_data(cfg)
    tc = TrainConfig(cfg.epochs, cfg.batch_size, cfg.learning_rate, cfg.seed_for("train"))
    return train(net, train_data, tc, on_epoch=lambda e, loss: log.info("epoch %d loss %.6f", e, loss))


def concept_names(cfg, net):
    return load_names(cfg.names_file, net.concept_channels) if cfg.names_file else {}


def setup(cfg):
    train_data, test_data = load_data(cfg)
    net = prepare_model(cfg, train_data)
    return net, train_data, test_data


# ---------------------------------------------------------------------------
# explanation lengths per condition

def condition_lengths(explainer, condition, ids=None):
    """Lengths in every range for each correctly classified instance.

    Returns ``(records, dropped)``; ``dropped`` maps instance id to the reason
    it has no explanation in this condition.
    """
    records, dropped = [], {}
    ids = explainer.correct_ids() if ids is None else ids
    for iid in ids:
        try:
            exps = [explainer.explain(iid, r) for r in RANGES]
        except NotExplainableError:
            dropped[iid] = "misclassified"
            continue
        except NoContrastError:
            dropped[iid] = "no_contrast"
            continue
        except DegenerateAttributionError:
            dropped[iid] = "degenerate_attribution"
            continue
        label = explainer.instance(iid).label
        for r, e in zip(RANGES, exps):
            records.append(LengthRecord(iid, label, r, condition, e.length, e.contrast_id, e.similarity))
    return records, dropped


def _require_per_class(explainer, minimum=2):
    for label, name in enumerate(explainer.data.class_names):
        n = len(explainer.correct_ids(label))
        if n < minimum:
            raise InsufficientDataError(
                f"only {n} correctly classified test instances of class {name!r}; need {minimum}"
            )


def _sort_key(rec):
    return rec.instance_id, RANGES.index(rec.range), rec.condition


def _by_range(records):
    return {r: [rec.length for rec in records if rec.range is r] for r in RANGES}


# ---------------------------------------------------------------------------
# CSV output

def fmt(x, digits=6):
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "n/a"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.{digits}f}"


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_outputs(out_dir, files):
    """Single writer for all report files: ``{name: text}``."""
    os.makedirs(out_dir, exist_ok=True)
    for name in sorted(files):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(files[name])


def length_rows(records):
    return [
        [r.instance_id, r.label, r.range.value, r.condition, r.length, r.match_id, fmt(r.similarity)]
        for r in sorted(records, key=_sort_key)
    ]


LENGTH_HEADER = ["instance_id", "label", "range", "condition", "length", "match_id", "similarity"]
SUMMARY_HEADER = ["condition", "range", "n", "min", "q1", "median", "q3", "max",
                  "whisker_low", "whisker_high", "outliers"]


def boxplot_summary(values):
    """Tukey boxplot numbers: quartiles, 1.5 IQR whiskers, and outliers."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    outliers = v[(v < q1 - 1.5 * iqr) | (v > q3 + 1.5 * iqr)]
    return {
        "n": len(v), "min": v[0], "q1": q1, "median": med, "q3": q3, "max": v[-1],
        "whisker_low": inside.min(), "whisker_high": inside.max(), "outliers": outliers.tolist(),
    }


def summary_rows(records, conditions):
    rows = []
    for cond in conditions:
        groups = _by_range([r for r in records if r.condition == cond])
        for r in RANGES:
            if not groups[r]:
                continue
            s = boxplot_summary(groups[r])
            rows.append([cond, r.value, s["n"]] + [fmt(s[k], 4) for k in SUMMARY_HEADER[3:10]]
                        + [";".join(f"{o:g}" for o in s["outliers"])])
    return rows


# ---------------------------------------------------------------------------
# experiments

@dataclass
class R1Result:
    records: list
    anova: object  # StatTestResult, or None when every range has constant lengths
    dropped: dict
    test_accuracy: float

    def medians(self):
        return {r: float(np.median(v)) for r, v in _by_range(self.records).items()}


def run_r1(cfg, net=None, test_data=None, write=True):
    """Explanation length across relevance ranges, with a one-way ANOVA over the four ranges."""
    if net is None or test_data is None:
        net, _, test_data = setup(cfg)
    explainer = Explainer(net, test_data, cfg.rule_epsilon, concept_names(cfg, net))
    _require_per_class(explainer)
    records, dropped = condition_lengths(explainer, ORIGINAL)
    groups = _by_range(records)
    try:
        anova = stats.anova_oneway([groups[r] for r in RANGES])
    except ZeroVarianceError:
        log.warning("explanation lengths are constant within every range; ANOVA reported as n/a")
        anova = None
    result = R1Result(records, anova, dropped, accuracy(net, test_data))
    if write:
        med = result.medians()
        files = {
            "r1_lengths.csv": csv_text(LENGTH_HEADER, length_rows(records)),
            "r1_anova.csv": csv_text(
                ["test", "statistic", "df_between", "df_within", "p_value", "n_instances", "n_dropped",
                 "test_accuracy"] + [f"median_{r.value}" for r in RANGES],
                [["anova_oneway"]
                 + ([fmt(anova.statistic, 4), fmt(anova.df[0], 0), fmt(anova.df[1], 0), fmt(anova.p_value, 4)]
                    if anova else ["n/a"] * 4)
                 + [len(groups[RANGES[0]]), len(dropped), fmt(result.test_accuracy, 4)]
                 + [fmt(med[r], 1) for r in RANGES]],
            ),
            "r1_summary.csv": csv_text(SUMMARY_HEADER, summary_rows(records, [ORIGINAL])),
        }
        write_outputs(cfg.out_dir, files)
    return result


@dataclass(frozen=True)
class R2Row:
    range: RelevanceRange
    augmentation: str
    test: object  # StatTestResult or None on the zero-variance path
    mean_orig: float
    mean_aug: float
    n: int
    dropped: int


@dataclass
class R2Result:
    rows: list
    records: list
    dropped: dict  # augmentation -> {instance_id: reason}


def run_r2(cfg, net=None, test_data=None, write=True):
    """Paired t-tests of explanation length, original vs each augmentation, per range.

    Targets and the contrast pool are augmented identically, and the whole
    pipeline (classification filter, matching, attribution) is rerun per condition.
    """
    if net is None or test_data is None:
        net, _, test_data = setup(cfg)
    names = concept_names(cfg, net)
    base = Explainer(net, test_data, cfg.rule_epsilon, names)
    _require_per_class(base)
    orig_records, orig_dropped = condition_lengths(base, ORIGINAL)
    orig = {(r.instance_id, r.range): r.length for r in orig_records}
    orig_ids = sorted({r.instance_id for r in orig_records})
    all_records = list(orig_records)
    rows, dropped = [], {}
    for spec in cfg.augment_specs():
        aug_data = test_data.map_images(lambda inst, s=spec: s.apply(inst.image, inst.id))
        explainer = Explainer(net, aug_data, cfg.rule_epsilon, names)
        recs, lost = condition_lengths(explainer, spec.name, ids=orig_ids)
        for iid in orig_ids:
            if iid not in explainer.correct and iid not in lost:
                lost[iid] = "misclassified"
        dropped[spec.name] = lost
        all_records.extend(recs)
        aug = {(r.instance_id, r.range): r.length for r in recs}
        for rr in RANGES:
            keys = [(i, rr) for i in orig_ids if (i, rr) in aug]
            a = [orig[k] for k in keys]
            b = [aug[k] for k in keys]
            test = None
            if len(keys) >= 2:
                try:
                    test = stats.t_paired(a, b)
                except ZeroVarianceError:
                    test = None
            rows.append(R2Row(rr, spec.name, test,
                              float(np.mean(a)) if a else float("nan"),
                              float(np.mean(b)) if b else float("nan"),
                              len(keys), len(lost)))
    result = R2Result(rows, all_records, dropped)
    if write:
        table = [
            [row.range.value, row.augmentation,
             fmt(row.test.statistic, 4) if row.test else "n/a",
             fmt(row.test.p_value, 4) if row.test else "n/a",
             fmt(row.mean_orig, 4), fmt(row.mean_aug, 4), row.n, row.dropped]
            for row in sorted(rows, key=lambda x: (RANGES.index(x.range), x.augmentation))
        ]
        conditions = [ORIGINAL] + [s.name for s in cfg.augment_specs()]
        files = {
            "r2_table.csv": csv_text(["range", "augmentation", "t", "p", "mean_orig", "mean_aug", "n", "dropped"],
                                     table),
            "r2_lengths.csv": csv_text(LENGTH_HEADER, length_rows(all_records)),
            "r2_summary.csv": csv_text(SUMMARY_HEADER, summary_rows(all_records, conditions)),
        }
        write_outputs(cfg.out_dir, files)
    return result


def explain_one(cfg, target_id, rrange, net=None, test_data=None):
    """Explanation for one test instance as a JSON-ready dict."""
    if net is None or test_data is None:
        net, _, test_data = setup(cfg)
    explainer = Explainer(net, test_data, cfg.rule_epsilon, concept_names(cfg, net))
    exp = explainer.explain(target_id, rrange)
    c1 = explainer.ranking(target_id)
    c0 = explainer.ranking(exp.contrast_id)
    return {
        "explanation": exp.rendered,
        "target_id": target_id,
        "target_class": exp.target_class,
        "contrast_id": exp.contrast_id,
        "contrast_class": exp.contrast_class,
        "similarity": exp.similarity,
        "range": rrange.value,
        "length": exp.length,
        "present": list(exp.present),
        "absent": list(exp.absent),
        "present_channels": list(exp.present_channels),
        "absent_channels": list(exp.absent_channels),
        "target_scores": [{"channel": c, "score": s, "range": r.value} for c, s, r in c1.entries],
        "contrast_scores": [{"channel": c, "score": s, "range": r.value} for c, s, r in c0.entries],
    }


def format_explanation(info):
    lines = [
        info["explanation"],
        f"match: {info['contrast_id']} (cosine similarity {info['similarity']:.6f})",
        f"range: {info['range']}  length: {info['length']}",
        f"concept relevance of {info['target_id']}:",
    ]
    lines += [f"  {e['channel']:>4d}  {e['score']: .6e}  {e['range']}" for e in info["target_scores"]]
    lines.append(f"concept relevance of {info['contrast_id']}:")
    lines += [f"  {e['channel']:>4d}  {e['score']: .6e}  {e['range']}" for e in info["contrast_scores"]]
    return "\n".join(lines)


def run_train(cfg):
    net, train_data, test_data = setup(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "weights.cxw")
    save_weights(net, path)
    return path, accuracy(net, train_data), accuracy(net, test_data)
