"""Image augmentations: seeded Gaussian noise and rotation about the image center.

Noise is generated without numpy's bit generators so that the stream is fully
specified: the i-th 64-bit word is splitmix64 applied to ``seed + (i + 1) *
0x9E3779B97F4A7C15`` (mod 2**64), words are turned into uniforms in [0, 1)
from their top 53 bits, and consecutive uniform pairs ``(u1, u2)`` give two
normals by Box-Muller with ``r = sqrt(-2 ln(1 - u1))``, ``z0 = r cos(2 pi u2)``,
``z1 = r sin(2 pi u2)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MASK64 = (1 << 64) - 1


def splitmix64(seed, count):
    """First ``count`` outputs of splitmix64 seeded with ``seed``."""
    state = np.uint64(seed & _MASK64)
    with np.errstate(over="ignore"):
        z = state + np.arange(1, count + 1, dtype=np.uint64) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def uniforms(seed, count):
    return (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def standard_normals(seed, count):
    pairs = (count + 1) // 2
    u = uniforms(seed, 2 * pairs).reshape(pairs, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1).ravel()[:count]


def fnv1a64(text):
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def instance_seed(base_seed, instance_id):
    return (base_seed ^ fnv1a64(instance_id)) & _MASK64


def gaussian_noise(image, sigma, seed, clip=True):
    """Add i.i.d. N(0, sigma^2) noise and clamp to [0, 1]."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    image = np.asarray(image, dtype=np.float64)
    if sigma == 0:
        return image.copy()
    noisy = image + sigma * standard_normals(seed, image.size).reshape(image.shape)
    return np.clip(noisy, 0.0, 1.0) if clip else noisy


def _rotate_plane_bilinear(plane, angle):
    h, w = plane.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    t = np.deg2rad(angle)
    cos, sin = np.cos(t), np.sin(t)
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = rows - cy, cols - cx
    # counterclockwise on screen (row axis points down); inverse map output -> source
    src_x = cx + cos * dx - sin * dy
    src_y = cy + sin * dx + cos * dy
    x0 = np.floor(src_x).astype(int)
    y0 = np.floor(src_y).astype(int)
    fx, fy = src_x - x0, src_y - y0
    out = np.zeros_like(plane)
    for oy, ox, wgt in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        yy, xx = y0 + oy, x0 + ox
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = np.zeros_like(plane)
        vals[inside] = plane[yy[inside], xx[inside]]
        out += wgt * vals
    return out


def rotate(image, angle_degrees):
    """Rotate a ``(C, H, W)`` (or ``(H, W)``) image counterclockwise about its center.

    Multiples of 90 degrees are exact index permutations (90/270 only for
    square images); any other angle uses bilinear inverse mapping with zero fill.
    """
    image = np.asarray(image, dtype=np.float64)
    if not np.isfinite(angle_degrees):
        raise ValueError(f"angle must be finite, got {angle_degrees}")
    h, w = image.shape[-2:]
    quarter = angle_degrees / 90.0
    if quarter == int(quarter):
        k = int(quarter) % 4
        if k % 2 == 0 or h == w:
            return np.rot90(image, k=k, axes=(-2, -1)).copy()
    flat = image.reshape(-1, h, w)
    out = np.stack([_rotate_plane_bilinear(p, angle_degrees) for p in flat])
    return out.reshape(image.shape)


@dataclass(frozen=True)
class AugmentSpec:
    """One augmentation condition.

    ``repeat`` applies the transform several times in a row (e.g. a double
    180 degree rotation as an identity control).
    """

    kind: str  # "gaussian_noise" | "rotation"
    value: float  # sigma or angle in degrees
    seed: int = 0
    repeat: int = 1
    name: str = ""

    def __post_init__(self):
        if self.kind == "gaussian_noise":
            if not self.value >= 0:
                raise ConfigError(f"noise sigma must be >= 0, got {self.value}")
        elif self.kind == "rotation":
            if not -360 < self.value < 360:
                raise ConfigError(f"rotation angle must lie in (-360, 360), got {self.value}")
        else:
            raise ConfigError(f"unknown augmentation kind {self.kind!r}")
        if self.repeat < 1:
            raise ConfigError("repeat must be >= 1")
        if not self.name:
            object.__setattr__(self, "name", self.default_name())

    def default_name(self):
        if self.kind == "rotation":
            base = f"rot{self.value:g}".replace("-", "m")
        else:
            base = "noise"
        return base if self.repeat == 1 else f"{base}x{self.repeat}"

    def apply(self, image, instance_id=""):
        out = np.asarray(image, dtype=np.float64)
        for step in range(self.repeat):
            if self.kind == "rotation":
                out = rotate(out, self.value)
            else:
                seed = instance_seed(self.seed, instance_id)
                out = gaussian_noise(out, self.value, (seed + step) & _MASK64)
        return out


def parse_augmentation(text, noise_seed=0):
    """Parse ``rotate:<deg>``, ``noise:<sigma>``, optionally suffixed ``x<repeat>``, and optional ``name=`` prefix."""
    text = text.strip()
    name = ""
    if "=" in text:
        name, text = (s.strip() for s in text.split("=", 1))
    repeat = 1
    head, _, arg = text.partition(":")
    if "x" in arg:
        arg, _, rep = arg.partition("x")
        try:
            repeat = int(rep)
        except ValueError:
            raise ConfigError(f"bad repeat count in augmentation {text!r}") from None
    try:
        value = float(arg)
    except ValueError:
        raise ConfigError(f"bad augmentation {text!r}; expected rotate:<deg> or noise:<sigma>") from None
    kinds = {"rotate": "rotation", "rotation": "rotation", "noise": "gaussian_noise", "gaussian_noise": "gaussian_noise"}
    if head.strip() not in kinds:
        raise ConfigError(f"unknown augmentation {head!r}")
    return AugmentSpec(kinds[head.strip()], value, noise_seed, repeat, name)
