"""Dataset ingestion: Netpbm directory trees and a synthetic teapot/vase generator."""

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyDatasetError, InconsistentShapeError, TooSmallError
from .netpbm import read_netpbm, to_grayscale, write_netpbm
from .network import Dataset, Instance

DEFAULT_CLASS_NAMES = ("vase", "teapot")
_EXTENSIONS = (".pgm", ".ppm")
_SPLIT_CODES = {"train": 0, "test": 1}


def load_dataset(root, class_names=None, split="train", channels=1):
    """Read ``<root>/<class_name>/<id>.pgm|ppm``.

    ``class_names`` gives the (label 0, label 1) directory names; by default
    the two subdirectories in sorted order. Instance ids are
    ``<class_name>/<file stem>``.
    """
    if not os.path.isdir(root):
        raise DataError(f"dataset directory {root!r} does not exist")
    if class_names is None:
        class_names = tuple(sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))))
        if len(class_names) != 2:
            raise DataError(f"{root!r} must contain exactly two class directories, found {list(class_names)}")
    instances = []
    for label, name in enumerate(class_names):
        cdir = os.path.join(root, name)
        if not os.path.isdir(cdir):
            raise DataError(f"class directory {cdir!r} does not exist")
        for fname in sorted(os.listdir(cdir)):
            stem, ext = os.path.splitext(fname)
            if ext.lower() not in _EXTENSIONS:
                continue
            path = os.path.join(cdir, fname)
            try:
                img = read_netpbm(path)
            except DataError as exc:
                raise type(exc)(f"{path}: {exc}") from None
            if channels == 1:
                img = to_grayscale(img)
            elif img.shape[0] != channels:
                raise InconsistentShapeError(f"{path}: {img.shape[0]} channels, model expects {channels}")
            instances.append(Instance(img, label, f"{name}/{stem}"))
    if not instances:
        raise EmptyDatasetError(f"no .pgm/.ppm images under {root!r}")
    shapes = sorted({inst.image.shape for inst in instances})
    if len(shapes) > 1:
        raise InconsistentShapeError(f"images under {root!r} have differing shapes {shapes}")
    return Dataset(instances, split, tuple(class_names))


def save_dataset(data, root):
    for inst in data.instances:
        cls = data.class_names[inst.label]
        stem = inst.id.split("/")[-1]
        os.makedirs(os.path.join(root, cls), exist_ok=True)
        ext = ".pgm" if inst.image.shape[0] == 1 else ".ppm"
        write_netpbm(os.path.join(root, cls, stem + ext), inst.image)


@dataclass(frozen=True)
class SynthSpec:
    count_per_class: int
    image_size: int = 32
    seed: int = 0
    split: str = "train"
    class_names: tuple = DEFAULT_CLASS_NAMES


def _ellipse(yy, xx, cy, cx, ry, rx):
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _teapot(rng, s):
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    cy = s * 0.55 + rng.uniform(-0.06, 0.06) * s
    cx = s * 0.5 + rng.uniform(-0.06, 0.06) * s
    ry = s * rng.uniform(0.16, 0.22)
    rx = s * rng.uniform(0.22, 0.28)
    side = rng.choice([-1.0, 1.0])
    body = _ellipse(yy, xx, cy, cx, ry, rx)
    # handle: ring segment on one side of the body
    hcx = cx + side * rx
    hr = ry * rng.uniform(0.7, 0.9)
    dist = np.hypot(yy - cy, xx - hcx)
    handle = (dist <= hr) & (dist >= hr - max(1.5, s * 0.06)) & (side * (xx - hcx) >= 0)
    # spout: wedge rising from the other side
    base_x = cx - side * rx * 0.8
    tip_x = cx - side * (rx + s * rng.uniform(0.12, 0.18))
    tip_y = cy - ry * rng.uniform(1.0, 1.4)
    t = np.clip((xx - base_x) / (tip_x - base_x), 0.0, 1.0)
    centre_y = cy + (tip_y - cy) * t
    half = (1.0 - t) * ry * 0.35 + 0.7
    along = ((xx - base_x) * (tip_x - base_x)) >= 0
    spout = along & (np.abs(xx - base_x) <= abs(tip_x - base_x)) & (np.abs(yy - centre_y) <= half)
    lid = _ellipse(yy, xx, cy - ry, cx, s * 0.04 + 0.5, rx * 0.35)
    return body | handle | spout | lid


def _vase(rng, s):
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    cx = s * 0.5 + rng.uniform(-0.06, 0.06) * s
    cy = s * 0.5 + rng.uniform(-0.05, 0.05) * s
    ry = s * rng.uniform(0.15, 0.2)
    rx = s * rng.uniform(0.13, 0.18)
    body = _ellipse(yy, xx, cy, cx, ry, rx)
    # narrow neck with a flared lip
    neck_top = cy - ry - s * rng.uniform(0.14, 0.2)
    neck_half = max(1.0, s * rng.uniform(0.04, 0.06))
    neck = (yy >= neck_top) & (yy <= cy) & (np.abs(xx - cx) <= neck_half)
    lip = (np.abs(yy - neck_top) <= max(0.8, s * 0.025)) & (np.abs(xx - cx) <= neck_half * 2.2)
    # tapering bottom: trapezoid narrowing down to the foot
    foot_y = cy + ry + s * rng.uniform(0.12, 0.18)
    frac = np.clip((yy - cy) / (foot_y - cy), 0.0, 1.0)
    half = rx * (1.0 - 0.65 * frac)
    taper = (yy >= cy) & (yy <= foot_y) & (np.abs(xx - cx) <= half)
    return body | neck | lip | taper


def synthesize_dataset(spec):
    """Deterministic toy stand-in for a teapot (label 1) vs vase (label 0) dataset."""
    if spec.image_size < 16:
        raise TooSmallError(f"image_size {spec.image_size} is below the minimum of 16")
    if spec.count_per_class <= 0:
        raise EmptyDatasetError("count_per_class must be positive")
    if spec.split not in _SPLIT_CODES:
        raise DataError(f"unknown split {spec.split!r}")
    rng = np.random.default_rng([spec.seed, _SPLIT_CODES[spec.split]])
    s = spec.image_size
    instances = []
    for label, draw in ((0, _vase), (1, _teapot)):
        name = spec.class_names[label]
        for k in range(spec.count_per_class):
            mask = draw(rng, s)
            intensity = rng.uniform(0.6, 1.0)
            background = rng.uniform(0.0, 0.08, size=(s, s))
            img = np.where(mask, intensity, 0.0) + background
            instances.append(Instance(np.clip(img, 0.0, 1.0)[None], label, f"{name}_{k:04d}"))
    return Dataset(instances, spec.split, tuple(spec.class_names))
