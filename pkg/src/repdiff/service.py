"""Local HTTP API for checkpoint loading, generation, and latent edits.

The session keeps uploaded embedding matrices, fitted direction banks,
and reference vectors under opaque ids; /api/generate composes a
conditioning vector from a reference plus an ordered list of edit
descriptors, samples an image, and echoes the exact final vector in a
base64 JSON response header so every image is auditable. Model access is
serialized through a lock by default (``serial_generation=False`` allows
parallel read-only sampling); everything else handles requests
concurrently. Local tool: CORS is wide open and there is no auth.
"""

from __future__ import annotations

import base64
import itertools
import json
import threading
import zipfile
from dataclasses import dataclass, field
from typing import Annotated, Literal, Union

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, ConfigDict, Field

from repdiff import encoders, latent, png_io
from repdiff.diffusion import SAMPLERS, from_model_range, sample
from repdiff.errors import (
    DataFormatError,
    NumericalError,
    RepdiffError,
    ValidationError,
)
from repdiff.training import Checkpoint, load_checkpoint

PROVENANCE_HEADER = "X-Repdiff-Provenance"
DEFAULT_STEPS = 50


# ---------------------------------------------------------------------------
# request models


class PerturbOp(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    op: Literal["perturb"]
    lam: float = Field(alias="lambda", ge=0.0)
    noise_seed: int = Field(default=0, ge=0)


class InterpolateOp(BaseModel):
    model_config = ConfigDict(extra="forbid")
    op: Literal["interpolate"]
    other_ref: str
    alpha: float


class PcaOp(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    op: Literal["pca"]
    bank_id: str
    k: int = Field(alias="K", ge=1)
    alpha: float


class AttrOp(BaseModel):
    model_config = ConfigDict(extra="forbid")
    op: Literal["attr"]
    matrix_id: str
    attribute: str
    scale: float = 1.0
    mode: Literal["mean-add", "diff"] = "mean-add"


EditOp = Annotated[
    Union[PerturbOp, InterpolateOp, PcaOp, AttrOp], Field(discriminator="op")
]


class ConditionRef(BaseModel):
    model_config = ConfigDict(extra="forbid")
    ref_id: str
    ops: list[EditOp] = Field(default_factory=list)


class GenerateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    condition: Union[list[float], ConditionRef]
    sampler: Literal["ddpm", "ddim"] = "ddim"
    steps: int = Field(default=DEFAULT_STEPS, ge=1)
    seed: int = Field(default=0, ge=0)


class CheckpointRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    path: str


class PcaFitRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    matrix_id: str
    k: int = Field(alias="K", ge=1)


class ReferenceFromRow(BaseModel):
    model_config = ConfigDict(extra="forbid")
    matrix_id: str
    row: int = Field(ge=0)


# ---------------------------------------------------------------------------
# session state


@dataclass
class LoadedCheckpoint:
    checkpoint_id: str
    path: str
    checkpoint: Checkpoint
    manifest: dict
    handle: object  # cached EMA denoiser, reused across requests


@dataclass
class SessionState:
    """Objects the UI refers to by id; ids are opaque and process-local."""

    loaded: LoadedCheckpoint | None = None
    matrices: dict[str, encoders.EmbeddingMatrix] = field(default_factory=dict)
    banks: dict[str, latent.DirectionBank] = field(default_factory=dict)
    references: dict[str, encoders.RepresentationVector] = field(default_factory=dict)
    _ids: itertools.count = field(default_factory=lambda: itertools.count(1))
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def new_id(self, prefix: str) -> str:
        with self._lock:
            return f"{prefix}{next(self._ids)}"

    def require_loaded(self) -> LoadedCheckpoint:
        if self.loaded is None:
            raise HTTPException(status_code=409, detail="no checkpoint loaded")
        return self.loaded

    def matrix(self, matrix_id: str) -> encoders.EmbeddingMatrix:
        try:
            return self.matrices[matrix_id]
        except KeyError:
            raise HTTPException(status_code=400, detail=f"unknown matrix_id {matrix_id!r}")

    def bank(self, bank_id: str) -> latent.DirectionBank:
        try:
            return self.banks[bank_id]
        except KeyError:
            raise HTTPException(status_code=400, detail=f"unknown bank_id {bank_id!r}")

    def reference(self, ref_id: str) -> encoders.RepresentationVector:
        try:
            return self.references[ref_id]
        except KeyError:
            raise HTTPException(status_code=400, detail=f"unknown ref_id {ref_id!r}")


def _read_manifest(path) -> dict:
    with zipfile.ZipFile(path) as zf:
        return json.loads(zf.read("manifest.json"))


def _load_into(session: SessionState, path) -> LoadedCheckpoint:
    ckpt = load_checkpoint(path)
    loaded = LoadedCheckpoint(
        checkpoint_id=session.new_id("c"),
        path=str(path),
        checkpoint=ckpt,
        manifest=_read_manifest(path),
        handle=ckpt.denoiser(use_ema=True),
    )
    session.loaded = loaded
    return loaded


# ---------------------------------------------------------------------------
# vector composition


def _apply_op(session: SessionState, vec, op) -> encoders.RepresentationVector:
    if isinstance(op, PerturbOp):
        noise = np.random.default_rng(op.noise_seed).standard_normal(vec.dim)
        return latent.perturb(vec, op.lam, noise)
    if isinstance(op, InterpolateOp):
        return latent.interpolate(vec, session.reference(op.other_ref), op.alpha)
    if isinstance(op, PcaOp):
        return latent.apply_direction(vec, session.bank(op.bank_id).component(op.k), op.alpha)
    matrix = session.matrix(op.matrix_id)
    if op.mode == "mean-add":
        return latent.attribute_mean_edit(vec, matrix, op.attribute, op.scale)
    return latent.apply_direction(
        vec, latent.attribute_diff_direction(matrix, op.attribute), op.scale
    )


def _compose_condition(
    session: SessionState, body: GenerateRequest, cond_dim: int
) -> encoders.RepresentationVector:
    if isinstance(body.condition, list):
        if len(body.condition) != cond_dim:
            raise HTTPException(
                status_code=400,
                detail=f"condition has dimension {len(body.condition)}, "
                f"checkpoint expects {cond_dim}",
            )
        vec = encoders.RepresentationVector(
            np.asarray(body.condition, dtype=np.float64), source="request"
        )
    else:
        vec = session.reference(body.condition.ref_id)
        for op in body.condition.ops:
            vec = _apply_op(session, vec, op)
    if vec.dim != cond_dim:
        raise HTTPException(
            status_code=400,
            detail=f"composed vector has dimension {vec.dim}, "
            f"checkpoint expects {cond_dim}",
        )
    return vec


def _provenance(vec, body: GenerateRequest) -> str:
    doc = {
        "condition": [float(x) for x in vec.values],
        "source": vec.source,
        "sampler": body.sampler,
        "steps": body.steps,
        "seed": body.seed,
    }
    return base64.b64encode(
        json.dumps(doc, separators=(",", ":")).encode("utf-8")
    ).decode("ascii")


# ---------------------------------------------------------------------------
# app factory


def create_app(
    checkpoint_path=None, frontend_dir=None, serial_generation: bool = True
) -> FastAPI:
    """Build the API app. ``serial_generation`` queues sampling behind a
    lock so one model runs at a time; pass False to sample in parallel
    (safe: generation never mutates the model)."""
    app = FastAPI(title="repdiff service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=[PROVENANCE_HEADER],
    )

    session = SessionState()
    generate_lock = threading.Lock() if serial_generation else None
    app.state.session = session

    @app.exception_handler(ValidationError)
    def _validation(request: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(DataFormatError)
    def _data_format(request: Request, exc: DataFormatError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(NumericalError)
    def _numerical(request: Request, exc: NumericalError):
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.exception_handler(RepdiffError)
    def _other(request: Request, exc: RepdiffError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/api/meta")
    def meta():
        loaded = session.require_loaded()
        return {
            "checkpoint": loaded.manifest,
            "cond_dim": loaded.checkpoint.denoiser_config.cond_dim,
            "samplers": list(SAMPLERS),
            "encoders": list(encoders.ENCODER_NAMES),
        }

    @app.post("/api/checkpoint")
    def load_checkpoint_endpoint(body: CheckpointRequest):
        try:
            loaded = _load_into(session, body.path)
        except OSError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"checkpoint_id": loaded.checkpoint_id, "manifest": loaded.manifest}

    @app.post("/api/generate")
    def generate(body: GenerateRequest):
        loaded = session.require_loaded()
        vec = _compose_condition(session, body, loaded.checkpoint.denoiser_config.cond_dim)
        schedule = loaded.checkpoint.schedule
        if generate_lock is not None:
            with generate_lock:
                out = sample(
                    loaded.handle, vec, schedule, body.sampler, body.steps, body.seed
                )
        else:
            out = sample(loaded.handle, vec, schedule, body.sampler, body.steps, body.seed)
        png = png_io.encode_png(from_model_range(out.data))
        return Response(
            content=png,
            media_type="image/png",
            headers={PROVENANCE_HEADER: _provenance(vec, body)},
        )

    @app.post("/api/embeddings")
    async def upload_embeddings(request: Request):
        data = await _uploaded_bytes(request)
        from repdiff import rcde

        values, labels, source = rcde.decode(data)
        matrix = encoders.EmbeddingMatrix(values, labels=labels, source=source)
        matrix_id = session.new_id("m")
        session.matrices[matrix_id] = matrix
        return {
            "matrix_id": matrix_id,
            "n": matrix.n,
            "d": matrix.dim,
            "attributes": sorted(matrix.labels) if matrix.labels else [],
        }

    @app.post("/api/directions/pca")
    def fit_pca(body: PcaFitRequest):
        matrix = session.matrix(body.matrix_id)
        bank = latent.fit_pca_directions(matrix, body.k)
        bank_id = session.new_id("b")
        session.banks[bank_id] = bank
        return {
            "bank_id": bank_id,
            "explained_variances": [d.explained_variance for d in bank.directions],
        }

    @app.post("/api/reference")
    async def make_reference(request: Request):
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            vec = await _reference_from_upload(request, session)
        else:
            try:
                body = ReferenceFromRow.model_validate(await request.json())
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            matrix = session.matrix(body.matrix_id)
            try:
                vec = matrix.row(body.row)
            except ValidationError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        ref_id = session.new_id("r")
        session.references[ref_id] = vec
        return {"ref_id": ref_id, "dim": vec.dim, "source": vec.source}

    @app.get("/api/reference/{ref_id}")
    def reference_meta(ref_id: str):
        vec = session.reference(ref_id)
        return {
            "ref_id": ref_id,
            "dim": vec.dim,
            "source": vec.source,
            "vector": [float(x) for x in vec.values],
        }

    if checkpoint_path is not None:
        _load_into(session, checkpoint_path)

    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")

    return app


async def _uploaded_bytes(request: Request) -> bytes:
    content_type = request.headers.get("content-type", "")
    if content_type.startswith("multipart/form-data"):
        form = await request.form()
        for value in form.values():
            if hasattr(value, "read"):
                return await value.read()
        raise HTTPException(status_code=422, detail="multipart body carries no file")
    data = await request.body()
    if not data:
        raise HTTPException(status_code=422, detail="empty upload")
    return data


async def _reference_from_upload(
    request: Request, session: SessionState
) -> encoders.RepresentationVector:
    loaded = session.require_loaded()
    form = await request.form()
    upload = form.get("image")
    if upload is None or not hasattr(upload, "read"):
        raise HTTPException(status_code=422, detail="multipart field 'image' is required")
    encoder_name = form.get("encoder")
    spec = loaded.checkpoint.encoder
    if encoder_name is not None and encoder_name != spec.name:
        raise HTTPException(
            status_code=400,
            detail=f"encoder {encoder_name!r} is not the loaded checkpoint's "
            f"encoder {spec.name!r}",
        )
    img = png_io.decode_png(await upload.read())
    if img.shape[0] == 1 and spec.image_channels == 3:
        img = np.repeat(img, 3, axis=0)
    return encoders.encode(spec, img)
