"""Procedural factor datasets with exactly recoverable ground truth.

Images hold one hard-edged colored shape on a gray background. The
size factor is defined as the square root of the covered area fraction,
so every shape with the same size covers the same number of pixels and
the probe can invert it by counting. Rendering tests pixel centers
against the ideal outline with no anti-aliasing; that keeps probe
recovery exact instead of approximate.
"""

from __future__ import annotations

import json
import math
import os
import pathlib
from dataclasses import asdict, dataclass

import numpy as np

from repdiff import png_io
from repdiff.errors import BlankImageError, DataFormatError, ValidationError

SHAPES = ("disc", "square", "bar")
IMAGE_SIZE = 32
LARGE_SIZE_THRESHOLD = 0.2

# single source of truth for binary attributes; is_large is strict so
# size exactly at the threshold counts as small
ATTRIBUTE_DEFS = (
    ("is_red", lambda f: f.hue_index == 0),
    ("is_green", lambda f: f.hue_index == 1),
    ("is_blue", lambda f: f.hue_index == 2),
    ("is_large", lambda f: f.size > LARGE_SIZE_THRESHOLD),
    ("is_left", lambda f: f.x < 0.5),
)

ATTRIBUTE_NAMES = tuple(name for name, _ in ATTRIBUTE_DEFS)

# probe tuning: contrast below which an image counts as blank, the
# foreground threshold as a fraction of peak contrast, and the channel
# spread that marks a saturated full-frame image
_BLANK_CONTRAST = 0.05
_MASK_FRACTION = 0.4
_SATURATED_SPREAD = 0.5

_FACTOR_RANGES = {
    "x": (0.2, 0.8),
    "y": (0.2, 0.8),
    "size": (0.1, 0.3),
    "background": (0.0, 0.3),
}


@dataclass(frozen=True)
class FactorSpec:
    """Ground-truth generative factors for one image."""

    shape: str
    hue_index: int
    x: float
    y: float
    size: float
    background: float

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValidationError(f"unknown shape {self.shape!r}; choose from {SHAPES}")
        if self.hue_index not in (0, 1, 2):
            raise ValidationError(f"hue_index must be 0, 1, or 2, got {self.hue_index}")
        for field_name, (lo, hi) in _FACTOR_RANGES.items():
            value = getattr(self, field_name)
            if not lo <= value <= hi:
                raise ValidationError(
                    f"{field_name}={value} outside [{lo}, {hi}]"
                )


@dataclass(frozen=True)
class ProbeResult:
    """Factor estimates read back out of an image."""

    hue_index: int
    x: float
    y: float
    size: float
    background: float
    clipped: bool = False


@dataclass
class FactorSample:
    image: np.ndarray
    factors: FactorSpec
    attributes: dict[str, int]


@dataclass
class Dataset:
    """Images plus whatever ground truth the source directory carried."""

    images: np.ndarray
    factors: list[FactorSpec] | None
    labels: dict[str, np.ndarray] | None
    filenames: list[str]

    @property
    def n(self) -> int:
        return int(self.images.shape[0])


def factor_attributes(factors: FactorSpec) -> dict[str, int]:
    return {name: int(pred(factors)) for name, pred in ATTRIBUTE_DEFS}


def _membership(factors: FactorSpec, size: int) -> np.ndarray:
    """Boolean (size, size) mask of pixels whose centers fall inside
    the ideal shape outline."""
    centers = np.arange(size) + 0.5
    px = centers[None, :] - factors.x * size
    py = centers[:, None] - factors.y * size
    extent = factors.size * size
    if factors.shape == "disc":
        radius = extent / math.sqrt(math.pi)
        return px * px + py * py <= radius * radius
    if factors.shape == "square":
        half = extent / 2.0
        return (np.abs(px) <= half) & (np.abs(py) <= half)
    half_w = extent / math.sqrt(2.0)
    return (np.abs(px) <= half_w) & (np.abs(py) <= half_w / 2.0)


def render(factors: FactorSpec, image_size: int = IMAGE_SIZE) -> FactorSample:
    """Deterministic hard-edged rendering of one factor spec."""
    if image_size < 8:
        raise ValidationError(f"image_size must be >= 8, got {image_size}")
    member = _membership(factors, image_size)
    img = np.full((3, image_size, image_size), factors.background, dtype=np.float64)
    img[:, member] = 0.0
    img[factors.hue_index, member] = 1.0
    return FactorSample(image=img, factors=factors, attributes=factor_attributes(factors))


def sample_factors(n: int, seed: int) -> list[FactorSpec]:
    """n factor specs drawn uniformly from the documented ranges."""
    if n < 1:
        raise ValidationError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(n):
        specs.append(
            FactorSpec(
                shape=SHAPES[int(rng.integers(0, len(SHAPES)))],
                hue_index=int(rng.integers(0, 3)),
                x=float(rng.uniform(*_FACTOR_RANGES["x"])),
                y=float(rng.uniform(*_FACTOR_RANGES["y"])),
                size=float(rng.uniform(*_FACTOR_RANGES["size"])),
                background=float(rng.uniform(*_FACTOR_RANGES["background"])),
            )
        )
    return specs


def sample_dataset(n: int, seed: int, image_size: int = IMAGE_SIZE) -> list[FactorSample]:
    return [render(f, image_size) for f in sample_factors(n, seed)]


def probe(image: np.ndarray) -> ProbeResult:
    """Estimate factors from an image by foreground segmentation.

    The background is the per-channel median; foreground is whatever
    stands out from it by at least 40 percent of the peak contrast.
    Raises BlankImageError when nothing does.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3 or arr.shape[1] != arr.shape[2]:
        raise ValidationError(f"expected a (3, S, S) image, got shape {arr.shape}")
    side = arr.shape[1]
    flat = arr.reshape(3, -1)
    bg = np.median(flat, axis=1)
    if float(bg.max() - bg.min()) > _SATURATED_SPREAD:
        # a colored majority: the shape fills the frame, so position is
        # meaningless and size saturates at the whole-image value
        return ProbeResult(
            hue_index=int(np.argmax(bg)),
            x=0.5,
            y=0.5,
            size=1.0,
            background=0.0,
            clipped=True,
        )
    contrast = np.abs(arr - bg[:, None, None]).max(axis=0)
    peak = float(contrast.max())
    if peak < _BLANK_CONTRAST:
        raise BlankImageError(f"no foreground found (peak contrast {peak:.4f})")
    mask = contrast >= max(_BLANK_CONTRAST, _MASK_FRACTION * peak)
    rows, cols = np.nonzero(mask)
    hue = int(np.argmax(arr[:, mask].mean(axis=1)))
    rest = ~mask
    background = float(np.median(arr[:, rest])) if rest.any() else 0.0
    return ProbeResult(
        hue_index=hue,
        x=float((cols + 0.5).mean() / side),
        y=float((rows + 0.5).mean() / side),
        size=float(math.sqrt(mask.sum() / (side * side))),
        background=background,
        clipped=False,
    )


def attribute_table(samples: list[FactorSample]) -> dict[str, np.ndarray]:
    """Binary label columns for an EmbeddingMatrix, one per attribute."""
    if not samples:
        raise ValidationError("attribute_table needs at least one sample")
    return {
        name: np.array([s.attributes[name] for s in samples], dtype=np.float64)
        for name in ATTRIBUTE_NAMES
    }


def _atomic_write_text(path: pathlib.Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_dataset(samples: list[FactorSample], out_dir) -> pathlib.Path:
    """PNG per sample plus a manifest.json with factors and attributes."""
    if not samples:
        raise ValidationError("write_dataset needs at least one sample")
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, sample in enumerate(samples):
        filename = f"img_{i:05d}.png"
        png_io.write_png(out / filename, sample.image)
        manifest.append(
            {
                "filename": filename,
                "factors": asdict(sample.factors),
                "attributes": sample.attributes,
            }
        )
    path = out / "manifest.json"
    _atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _parse_manifest(path: pathlib.Path) -> list[dict]:
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(entries, list) or not all(isinstance(e, dict) for e in entries):
        raise DataFormatError("manifest must be a JSON list of objects")
    for entry in entries:
        if "filename" not in entry:
            raise DataFormatError("manifest entry missing filename")
    return entries


def load_dataset(path) -> Dataset:
    """Load a dataset directory: our own exports or any folder of 8-bit
    PNGs, with ground truth taken from manifest.json when present."""
    root = pathlib.Path(path)
    if not root.is_dir():
        raise ValidationError(f"{root} is not a directory")
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        entries = _parse_manifest(manifest_path)
        filenames = [e["filename"] for e in entries]
    else:
        entries = None
        filenames = sorted(p.name for p in root.glob("*.png"))
    if not filenames:
        raise ValidationError(f"no PNG images found in {root}")
    images = []
    for name in filenames:
        img = png_io.read_png(root / name)
        if img.shape[0] == 1:
            img = np.repeat(img, 3, axis=0)
        images.append(img)
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise ValidationError(f"images disagree on shape: {sorted(shapes)}")
    factors = None
    labels = None
    if entries is not None:
        if all("factors" in e for e in entries):
            try:
                factors = [FactorSpec(**e["factors"]) for e in entries]
            except TypeError as exc:
                raise DataFormatError(f"bad factors in manifest: {exc}") from None
        if all("attributes" in e for e in entries):
            names = sorted({k for e in entries for k in e["attributes"]})
            labels = {
                name: np.array(
                    [float(e["attributes"].get(name, 0)) for e in entries]
                )
                for name in names
            }
    return Dataset(
        images=np.stack(images).astype(np.float32),
        factors=factors,
        labels=labels,
        filenames=filenames,
    )
