"""Edits in representation space: perturbation, interpolation,
supervised attribute directions, and PCA direction discovery.

Every edit is exact affine arithmetic on the conditioning vector; the
provenance tag on the result records what was done. PCA uses the sample
covariance (divisor n - 1) of centered rows and fixes each component's
sign so that its largest-magnitude coordinate is positive, which makes
direction banks deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from repdiff.encoders import EmbeddingMatrix, RepresentationVector
from repdiff.errors import (
    DataFormatError,
    DimensionMismatchError,
    NumericalError,
    ValidationError,
)

# strength preset for PCA direction edits in the UI and CLI
DEFAULT_DIRECTION_SCALE = -25.0

DIRECTION_KINDS = ("pca", "attribute_mean", "attribute_diff")
_ORTHO_TOL = 1e-6


@dataclass
class SemanticDirection:
    """A unit (pca) or raw (attribute) direction in representation space."""

    vector: np.ndarray
    kind: str
    component_index: int | None = None
    explained_variance: float | None = None
    attribute: str | None = None
    sample_count: int | None = None

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.ndim != 1:
            raise ValidationError(f"direction must be a vector, got {self.vector.shape}")
        if self.kind not in DIRECTION_KINDS:
            raise ValidationError(f"unknown direction kind {self.kind!r}")
        if self.kind == "pca":
            if abs(np.linalg.norm(self.vector) - 1.0) > 1e-6:
                raise ValidationError("pca direction must be unit length")
            if self.component_index is None or self.component_index < 1:
                raise ValidationError("pca direction needs component_index >= 1")
            if self.explained_variance is None or self.explained_variance < 0:
                raise ValidationError("pca direction needs explained_variance >= 0")
        else:
            if self.sample_count is None or self.sample_count < 1:
                raise ValidationError("attribute direction needs sample_count >= 1")

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass
class DirectionBank:
    """Ordered PCA directions with the centering mean and total variance."""

    directions: list[SemanticDirection]
    mean: np.ndarray
    total_variance: float

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)

    def validate(self) -> None:
        evs = [d.explained_variance for d in self.directions]
        if any(d.kind != "pca" for d in self.directions):
            raise ValidationError("direction banks hold pca directions only")
        if any(a < b - 1e-12 for a, b in zip(evs, evs[1:])):
            raise ValidationError("directions must be ordered by explained variance")
        if sum(evs) > self.total_variance + _ORTHO_TOL:
            raise ValidationError("explained variances exceed total variance")
        vecs = np.stack([d.vector for d in self.directions])
        gram = vecs @ vecs.T
        if np.abs(gram - np.eye(len(self.directions))).max() > _ORTHO_TOL:
            raise ValidationError("directions are not orthonormal")

    def __len__(self) -> int:
        return len(self.directions)

    def component(self, k: int) -> SemanticDirection:
        if not 1 <= k <= len(self.directions):
            raise ValidationError(f"component {k} out of range; bank holds {len(self)}")
        return self.directions[k - 1]

    def to_json(self) -> str:
        doc = {
            "mean": [float(v) for v in self.mean],
            "total_variance": float(self.total_variance),
            "directions": [
                {
                    "vector": [float(v) for v in d.vector],
                    "kind": d.kind,
                    "component_index": d.component_index,
                    "explained_variance": d.explained_variance,
                }
                for d in self.directions
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DirectionBank":
        try:
            doc = json.loads(text)
            bank = cls(
                directions=[
                    SemanticDirection(
                        vector=d["vector"],
                        kind=d["kind"],
                        component_index=d["component_index"],
                        explained_variance=d["explained_variance"],
                    )
                    for d in doc["directions"]
                ],
                mean=doc["mean"],
                total_variance=doc["total_variance"],
            )
            bank.validate()
        except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as exc:
            raise DataFormatError(f"invalid direction bank: {exc}") from None
        return bank


def _check_dims(a: int, b: int, what: str) -> None:
    if a != b:
        raise DimensionMismatchError(f"{what}: dimension {a} != {b}")


def perturb(c: RepresentationVector, lam: float, noise: np.ndarray) -> RepresentationVector:
    """C_hat = C + lam * noise; lam must be >= 0 (sign belongs to noise)."""
    if lam < 0:
        raise ValidationError(f"perturbation strength must be >= 0, got {lam}")
    noise = np.asarray(noise, dtype=np.float64)
    _check_dims(noise.shape[-1] if noise.ndim else 0, c.dim, "perturb noise")
    if noise.ndim != 1:
        raise ValidationError(f"noise must be a vector, got shape {noise.shape}")
    return RepresentationVector(
        c.values + lam * noise, source=f"{c.source}|perturb(lambda={lam:g})"
    )


def interpolate(
    c1: RepresentationVector, c2: RepresentationVector, alpha: float
) -> RepresentationVector:
    """C_hat = alpha * C1 + (1 - alpha) * C2; alpha outside [0, 1] is
    extrapolation and gets flagged in the provenance tag."""
    _check_dims(c1.dim, c2.dim, "interpolate")
    if alpha == 1.0:
        values = c1.values.copy()
    elif alpha == 0.0:
        values = c2.values.copy()
    else:
        # 1 - (1 - alpha) re-rounds alpha onto the grid where the swap
        # alpha <-> 1 - alpha is an exact float involution, so swapping
        # the arguments and the weight gives bitwise-identical values.
        a2 = 1.0 - alpha
        a1 = 1.0 - a2
        values = a1 * c1.values + a2 * c2.values
    tag = f"interp(alpha={alpha:g})"
    if not 0.0 <= alpha <= 1.0:
        tag += "[extrapolated]"
    return RepresentationVector(values, source=f"{c1.source}~{c2.source}|{tag}")


def fit_pca_directions(matrix: EmbeddingMatrix, num_components: int) -> DirectionBank:
    """Top eigenvectors of the sample covariance of the centered rows."""
    n, d = matrix.n, matrix.dim
    if n < 2:
        raise ValidationError(f"PCA needs at least 2 rows, got {n}")
    if not 1 <= num_components <= min(n - 1, d):
        raise ValidationError(
            f"num_components must lie in [1, {min(n - 1, d)}], got {num_components}"
        )
    rows = matrix.values.astype(np.float64)
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = (centered.T @ centered) / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    total = float(np.trace(cov))
    # Centering residue puts noise of order (eps * data scale)^2 on the
    # covariance, so rank must be judged against that floor, not zero.
    scale = float(np.abs(rows).max()) if rows.size else 0.0
    noise_floor = (np.finfo(np.float64).eps * scale) ** 2 * max(n, d)
    usable = int(np.sum(eigvals > noise_floor))
    if num_components > usable:
        raise NumericalError(
            f"degenerate covariance: rank {usable} < requested {num_components}"
        )
    directions = []
    for k in range(num_components):
        vec = eigvecs[:, k]
        if vec[np.argmax(np.abs(vec))] < 0:
            vec = -vec
        directions.append(
            SemanticDirection(
                vector=vec,
                kind="pca",
                component_index=k + 1,
                explained_variance=float(max(eigvals[k], 0.0)),
            )
        )
    bank = DirectionBank(directions=directions, mean=mean, total_variance=total)
    bank.validate()
    return bank


def apply_direction(
    c: RepresentationVector, direction: SemanticDirection, scale: float
) -> RepresentationVector:
    """C_hat = C + scale * V."""
    _check_dims(direction.dim, c.dim, "apply_direction")
    label = direction.attribute or f"pca{direction.component_index}"
    return RepresentationVector(
        c.values + scale * direction.vector,
        source=f"{c.source}|direction({label},scale={scale:g})",
    )


def _positive_mask(matrix: EmbeddingMatrix, attribute: str) -> np.ndarray:
    return matrix.attribute(attribute) > 0.5


def attribute_mean_edit(
    c: RepresentationVector, matrix: EmbeddingMatrix, attribute: str, scale: float
) -> RepresentationVector:
    """Add scale times the mean representation of the positive class;
    scale 1 is the literal mean-representation edit."""
    _check_dims(matrix.dim, c.dim, "attribute_mean_edit")
    mask = _positive_mask(matrix, attribute)
    count = int(mask.sum())
    if count == 0:
        raise ValidationError(f"attribute {attribute!r} has no positive rows")
    mean = matrix.values[mask].astype(np.float64).mean(axis=0)
    return RepresentationVector(
        c.values + scale * mean,
        source=f"{c.source}|mean_add({attribute},scale={scale:g},n={count})",
    )


def attribute_diff_direction(matrix: EmbeddingMatrix, attribute: str) -> SemanticDirection:
    """mean(positive) - mean(negative); unnormalized, labeled extension."""
    mask = _positive_mask(matrix, attribute)
    pos, neg = int(mask.sum()), int((~mask).sum())
    if pos == 0 or neg == 0:
        raise ValidationError(
            f"attribute {attribute!r} needs both classes; positives={pos}, negatives={neg}"
        )
    rows = matrix.values.astype(np.float64)
    return SemanticDirection(
        vector=rows[mask].mean(axis=0) - rows[~mask].mean(axis=0),
        kind="attribute_diff",
        attribute=attribute,
        sample_count=matrix.n,
    )


def attribute_mean_direction(matrix: EmbeddingMatrix, attribute: str) -> SemanticDirection:
    """The positive-class mean itself, packaged as a direction."""
    mask = _positive_mask(matrix, attribute)
    count = int(mask.sum())
    if count == 0:
        raise ValidationError(f"attribute {attribute!r} has no positive rows")
    return SemanticDirection(
        vector=matrix.values[mask].astype(np.float64).mean(axis=0),
        kind="attribute_mean",
        attribute=attribute,
        sample_count=count,
    )


def normalize(c: RepresentationVector) -> RepresentationVector:
    norm = float(np.linalg.norm(c.values))
    if norm == 0.0:
        raise ValidationError("cannot normalize the zero vector")
    return RepresentationVector(c.values / norm, source=f"{c.source}|unit")
