"""Representation vectors, embedding matrices, and the toy encoders.

An encoder turns an image into the conditioning vector the denoiser
sees. Three families are built in: ``pixel_stats`` (pooled pixels,
centered and whitened with corpus statistics), ``random_projection``
(a fixed seeded Gaussian map), and ``pca_features`` (projection onto
principal components fitted to a corpus). Externally computed
embeddings enter through RCDE files instead of bundled model weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from repdiff import rcde
from repdiff.errors import DimensionMismatchError, NumericalError, ValidationError

ENCODER_NAMES = ("pixel_stats", "random_projection", "pca_features")
_POOL_TO = 8
_RANDOM_PROJECTION_DIM = 32
_PCA_FEATURES_DIM = 32
_WHITEN_EPS = 1e-8


@dataclass
class RepresentationVector:
    """A conditioning vector C with a provenance tag."""

    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValidationError(f"expected a non-empty vector, got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise NumericalError("representation vector contains non-finite values")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass
class EmbeddingMatrix:
    """n representation vectors of common dimension, with optional
    per-row attribute labels."""

    values: np.ndarray
    labels: dict[str, np.ndarray] | None = None
    source: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValidationError(f"expected (n, d) values, got shape {self.values.shape}")
        if self.values.shape[1] < 1:
            raise ValidationError("dimension must be >= 1")
        if not np.isfinite(self.values).all():
            raise NumericalError("embedding matrix contains non-finite values")
        if self.labels is not None:
            self.labels = {k: np.asarray(v, dtype=np.float64) for k, v in self.labels.items()}
            for attr, vals in self.labels.items():
                if vals.shape != (self.n,):
                    raise ValidationError(
                        f"label {attr!r} has shape {vals.shape}, expected ({self.n},)"
                    )

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def row(self, i: int) -> RepresentationVector:
        if not 0 <= i < self.n:
            raise ValidationError(f"row {i} out of range for {self.n} rows")
        return RepresentationVector(self.values[i], source=f"{self.source}[{i}]")

    def attribute(self, name: str) -> np.ndarray:
        if self.labels is None or name not in self.labels:
            available = sorted(self.labels) if self.labels else []
            raise ValidationError(f"unknown attribute {name!r}; available: {available}")
        return self.labels[name]


@dataclass
class EncoderSpec:
    """An encoder's identity plus everything needed to apply it.

    ``meta`` holds JSON-able settings; ``arrays`` holds fitted statistics
    or fixed projection matrices. Once constructed, encoding is a pure
    function.
    """

    name: str
    dim: int
    image_channels: int
    image_size: int
    meta: dict = field(default_factory=dict)
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self) -> None:
        if self.name not in ENCODER_NAMES:
            raise ValidationError(
                f"unknown encoder {self.name!r}; built-ins: {', '.join(ENCODER_NAMES)}"
            )
        if self.dim < 1:
            raise ValidationError("encoder dimension must be >= 1")


def _check_image(spec: EncoderSpec, image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    expected = (spec.image_channels, spec.image_size, spec.image_size)
    if arr.shape != expected:
        raise DimensionMismatchError(f"image shape {arr.shape} != encoder input {expected}")
    return arr


def _pool(images: np.ndarray, size: int) -> np.ndarray:
    """Average-pool (n, C, S, S) to (n, C*size*size) block means."""
    n, c, s, _ = images.shape
    if s % size != 0:
        raise ValidationError(f"image side {s} not divisible by pool size {size}")
    f = s // size
    pooled = images.reshape(n, c, size, f, size, f).mean(axis=(3, 5))
    return pooled.reshape(n, c * size * size)


def make_pixel_stats(image_channels: int, image_size: int) -> EncoderSpec:
    """Unfitted pixel_stats spec: identity centering until fit."""
    d = image_channels * _POOL_TO * _POOL_TO
    return EncoderSpec(
        name="pixel_stats",
        dim=d,
        image_channels=image_channels,
        image_size=image_size,
        meta={"pool": _POOL_TO, "fitted": False},
        arrays={"center": np.zeros(d), "scale": np.ones(d)},
    )


def fit_pixel_stats(images: np.ndarray) -> EncoderSpec:
    """Fit centering/whitening statistics on a corpus (n, C, S, S)."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[0] < 1:
        raise ValidationError(f"expected non-empty (n, C, S, S) corpus, got {arr.shape}")
    pooled = _pool(arr, _POOL_TO)
    spec = make_pixel_stats(arr.shape[1], arr.shape[2])
    spec.meta["fitted"] = True
    spec.arrays["center"] = pooled.mean(axis=0)
    spec.arrays["scale"] = np.maximum(pooled.std(axis=0), _WHITEN_EPS)
    return spec


def make_random_projection(image_channels: int, image_size: int, seed: int = 0) -> EncoderSpec:
    npix = image_channels * image_size * image_size
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((_RANDOM_PROJECTION_DIM, npix)) / np.sqrt(npix)
    return EncoderSpec(
        name="random_projection",
        dim=_RANDOM_PROJECTION_DIM,
        image_channels=image_channels,
        image_size=image_size,
        meta={"seed": seed},
        arrays={"projection": projection},
    )


def make_pca_features(image_channels: int, image_size: int) -> EncoderSpec:
    """Unfitted pca_features spec; fit_pca_features trains it on a corpus."""
    d = min(_PCA_FEATURES_DIM, image_channels * _POOL_TO * _POOL_TO)
    k = image_channels * _POOL_TO * _POOL_TO
    return EncoderSpec(
        name="pca_features",
        dim=d,
        image_channels=image_channels,
        image_size=image_size,
        meta={"pool": _POOL_TO, "fitted": False},
        arrays={"center": np.zeros(k), "components": np.eye(d, k)},
    )


def fit_pca_features(images: np.ndarray, dim: int | None = None) -> EncoderSpec:
    """Fit a PCA projection of pooled pixels; the one trainable encoder."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[0] < 2:
        raise ValidationError(f"need at least 2 corpus images, got {arr.shape}")
    pooled = _pool(arr, _POOL_TO)
    d = dim or min(_PCA_FEATURES_DIM, pooled.shape[1], arr.shape[0] - 1)
    if not 1 <= d <= min(arr.shape[0] - 1, pooled.shape[1]):
        raise ValidationError(f"cannot extract {d} components from {arr.shape[0]} images")
    center = pooled.mean(axis=0)
    cov = np.cov(pooled - center, rowvar=False, ddof=1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:d]
    components = eigvecs[:, order].T
    spec = make_pca_features(arr.shape[1], arr.shape[2])
    spec.dim = d
    spec.meta["fitted"] = True
    spec.arrays["center"] = center
    spec.arrays["components"] = components
    return spec


def built_in_encoders(image_channels: int = 3, image_size: int = 32) -> list[EncoderSpec]:
    return [
        make_pixel_stats(image_channels, image_size),
        make_random_projection(image_channels, image_size),
        make_pca_features(image_channels, image_size),
    ]


def fit_encoder(name: str, images: np.ndarray, seed: int = 0) -> EncoderSpec:
    """Build a ready-to-use encoder from a corpus (n, C, S, S)."""
    arr = np.asarray(images)
    if name == "pixel_stats":
        return fit_pixel_stats(arr)
    if name == "random_projection":
        return make_random_projection(arr.shape[1], arr.shape[2], seed=seed)
    if name == "pca_features":
        return fit_pca_features(arr)
    raise ValidationError(f"unknown encoder {name!r}; built-ins: {', '.join(ENCODER_NAMES)}")


def encode(spec: EncoderSpec, image: np.ndarray) -> RepresentationVector:
    """Map one (C, S, S) image in [0, 1] to its representation."""
    spec.validate()
    arr = _check_image(spec, image)
    if spec.name == "pixel_stats":
        pooled = _pool(arr[None], spec.meta.get("pool", _POOL_TO))[0]
        values = (pooled - spec.arrays["center"]) / spec.arrays["scale"]
    elif spec.name == "random_projection":
        values = spec.arrays["projection"] @ arr.ravel()
    else:
        pooled = _pool(arr[None], spec.meta.get("pool", _POOL_TO))[0]
        values = spec.arrays["components"] @ (pooled - spec.arrays["center"])
    if values.shape[0] != spec.dim:
        raise DimensionMismatchError(
            f"encoder produced dim {values.shape[0]}, declared {spec.dim}"
        )
    return RepresentationVector(values, source=spec.name)


def encode_batch(spec: EncoderSpec, images: np.ndarray) -> EmbeddingMatrix:
    """Encode (n, C, S, S) images into an EmbeddingMatrix."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim != 4:
        raise ValidationError(f"expected (n, C, S, S) images, got {arr.shape}")
    rows = [encode(spec, img).values for img in arr]
    stacked = np.stack(rows) if rows else np.zeros((0, spec.dim))
    return EmbeddingMatrix(stacked.astype(np.float32), labels=None, source=spec.name)


def save_embeddings(matrix: EmbeddingMatrix, path) -> str:
    labels = None
    if matrix.labels is not None:
        labels = {k: [float(v) for v in vals] for k, vals in matrix.labels.items()}
    data = rcde.encode(matrix.values, labels, matrix.source)
    with open(path, "wb") as fh:
        fh.write(data)
    return str(path)


def load_embeddings(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    values, labels, source = rcde.decode(data)
    return EmbeddingMatrix(values, labels=labels, source=source)
