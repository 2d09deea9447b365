"""Training loop for the conditional denoiser: Adam, EMA, checkpoints.

A whole run is driven by one generator seeded from (seed, starting step).
Per epoch it draws the sample permutation; per step it draws, in this
order, the batch timesteps, the noise, and the condition-dropout
uniforms.  Replaying a config therefore replays the exact loss history.

Checkpoints are single zip archives: parameter arrays (raw and EMA, both
float32 little-endian) as .npy entries plus a JSON manifest carrying
every config field and a content hash.  Entries are stored uncompressed
with fixed timestamps, so save -> load -> save reproduces identical
bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import tempfile
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from repdiff.denoiser import DenoiserConfig, DenoiserHandle, build_denoiser, param_specs
from repdiff.diffusion import DiffusionSample, forward_sample, to_model_range
from repdiff.encoders import EncoderSpec, encode_batch
from repdiff.errors import (
    CorruptCheckpointError,
    DimensionMismatchError,
    NumericalError,
    ValidationError,
    VersionMismatchError,
)
from repdiff.schedule import NoiseSchedule, schedule_from_manifest

CHECKPOINT_VERSION = "repdiff-ckpt-1"

DEFAULT_LEARNING_RATE = 2e-4
DEFAULT_EMA_DECAY = 0.999
DEFAULT_CONDITION_DROPOUT = 0.1

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8

# Fixed zip metadata so archive bytes depend only on the payload.
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters plus the schedule and encoder a run trains against."""

    epochs: int
    batch_size: int
    schedule: NoiseSchedule
    encoder: EncoderSpec
    learning_rate: float = DEFAULT_LEARNING_RATE
    ema_decay: float = DEFAULT_EMA_DECAY
    seed: int = 0
    condition_dropout: float = DEFAULT_CONDITION_DROPOUT

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValidationError("learning_rate must be positive and finite")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValidationError("ema_decay must lie in [0, 1)")
        # 1.0 is allowed so a run can be made fully unconditional.
        if not 0.0 <= self.condition_dropout <= 1.0:
            raise ValidationError("condition_dropout must lie in [0, 1]")
        if self.seed < 0:
            raise ValidationError("seed must be >= 0")
        self.schedule.validate()
        self.encoder.validate()

    def to_manifest(self) -> dict:
        """Scalar fields only; schedule and encoder serialize separately."""
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "ema_decay": self.ema_decay,
            "seed": self.seed,
            "condition_dropout": self.condition_dropout,
        }


@dataclass
class Checkpoint:
    """Everything needed to resume a run or sample from it: both configs,
    raw and EMA parameters, encoder statistics, and the loss record."""

    denoiser_config: DenoiserConfig
    train_config: TrainConfig
    raw_params: dict[str, np.ndarray] = field(repr=False)
    ema_params: dict[str, np.ndarray] = field(repr=False)
    step_count: int = 0
    loss_history: list[float] = field(default_factory=list, repr=False)
    version: str = CHECKPOINT_VERSION

    @property
    def schedule(self) -> NoiseSchedule:
        return self.train_config.schedule

    @property
    def encoder(self) -> EncoderSpec:
        return self.train_config.encoder

    def validate(self) -> None:
        if self.version != CHECKPOINT_VERSION:
            raise VersionMismatchError(
                f"checkpoint version {self.version!r} != {CHECKPOINT_VERSION!r}"
            )
        self.denoiser_config.validate()
        self.train_config.validate()
        enc, cfg = self.encoder, self.denoiser_config
        if enc.dim != cfg.cond_dim:
            raise DimensionMismatchError(
                f"encoder dim {enc.dim} != denoiser cond_dim {cfg.cond_dim}"
            )
        if (enc.image_channels, enc.image_size) != (cfg.image_channels, cfg.image_size):
            raise DimensionMismatchError(
                "encoder image geometry "
                f"({enc.image_channels}, {enc.image_size}) does not match the "
                f"denoiser's ({cfg.image_channels}, {cfg.image_size})"
            )
        expected = {name: tuple(shape) for name, shape, _ in param_specs(cfg)}
        for label, params in (("raw", self.raw_params), ("ema", self.ema_params)):
            if set(params) != set(expected):
                raise ValidationError(
                    f"{label} parameter names do not match the denoiser layout"
                )
            for name, arr in params.items():
                if tuple(arr.shape) != expected[name]:
                    raise ValidationError(
                        f"{label} parameter {name}: shape {arr.shape} != {expected[name]}"
                    )
        if self.step_count < 0:
            raise ValidationError("step_count must be >= 0")
        if len(self.loss_history) != self.step_count:
            raise ValidationError(
                f"loss history has {len(self.loss_history)} entries "
                f"for {self.step_count} steps"
            )

    def denoiser(self, use_ema: bool = True) -> DenoiserHandle:
        """Build a handle on the stored weights; EMA is the sampling set."""
        handle = DenoiserHandle(config=self.denoiser_config, params={})
        source = self.ema_params if use_ema else self.raw_params
        handle.import_parameters({k: v.copy() for k, v in source.items()})
        return handle


class _Adam:
    """Adaptive-moment optimizer.  Moments live in float64; parameters are
    updated in float64 and stored back at their own dtype."""

    def __init__(self, lr: float, params: dict[str, np.ndarray]) -> None:
        self.lr = lr
        self.step = 0
        self.m = {k: np.zeros(v.shape, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros(v.shape, dtype=np.float64) for k, v in params.items()}

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.step += 1
        c1 = 1.0 - _ADAM_BETA1**self.step
        c2 = 1.0 - _ADAM_BETA2**self.step
        for name in params:
            g = grads[name].astype(np.float64)
            m = self.m[name] = _ADAM_BETA1 * self.m[name] + (1.0 - _ADAM_BETA1) * g
            v = self.v[name] = _ADAM_BETA2 * self.v[name] + (1.0 - _ADAM_BETA2) * g * g
            delta = self.lr * (m / c1) / (np.sqrt(v / c2) + _ADAM_EPS)
            p = params[name]
            params[name] = (p.astype(np.float64) - delta).astype(p.dtype)


def _ema_update(ema: dict[str, np.ndarray], params: dict[str, np.ndarray], decay: float) -> None:
    for name, p in params.items():
        mixed = decay * ema[name].astype(np.float64) + (1.0 - decay) * p.astype(np.float64)
        ema[name] = mixed.astype(p.dtype)


def _check_resume(resume: Checkpoint, config: TrainConfig, denoiser_config: DenoiserConfig) -> None:
    resume.validate()
    if resume.denoiser_config.to_manifest() != denoiser_config.to_manifest():
        raise ValidationError("resume checkpoint holds a different denoiser configuration")
    if resume.schedule.to_manifest() != config.schedule.to_manifest():
        raise ValidationError("resume checkpoint holds a different noise schedule")
    a, b = resume.encoder, config.encoder
    if (a.name, a.dim) != (b.name, b.dim):
        raise ValidationError(
            f"resume checkpoint encoder ({a.name}, dim {a.dim}) differs "
            f"from the config's ({b.name}, dim {b.dim})"
        )


def train(
    config: TrainConfig,
    denoiser_config: DenoiserConfig,
    dataset,
    out=None,
    resume: Checkpoint | None = None,
    on_epoch: Callable[[int, int, float], None] | None = None,
) -> Checkpoint:
    """Optimize the denoiser on (image, representation) pairs.

    ``dataset`` is an (n, C, H, W) array of [0, 1] images, or any object
    carrying one as an ``.images`` attribute.  Conditions are computed
    once up front with ``config.encoder``.  With ``out`` set, a checkpoint
    is written atomically to that path after every epoch; the final epoch's
    write is the returned checkpoint.  ``resume`` continues a previous
    run's parameters, step count, and loss history.  ``on_epoch`` receives
    (epoch number, total steps, mean epoch loss) after each epoch.
    """
    config.validate()
    denoiser_config.validate()
    images = np.asarray(getattr(dataset, "images", dataset), dtype=np.float64)
    if images.ndim != 4:
        raise ValidationError(f"expected images shaped (n, C, H, W), got {images.shape}")
    if images.shape[0] == 0:
        raise ValidationError("dataset is empty")
    n, ch, hh, ww = images.shape
    want = (denoiser_config.image_channels, denoiser_config.image_size, denoiser_config.image_size)
    if (ch, hh, ww) != want:
        raise DimensionMismatchError(
            f"images shaped {images.shape[1:]} do not match the denoiser's {want}"
        )
    if config.encoder.dim != denoiser_config.cond_dim:
        raise DimensionMismatchError(
            f"encoder dim {config.encoder.dim} != denoiser cond_dim {denoiser_config.cond_dim}"
        )
    if not np.isfinite(images).all() or images.min() < 0.0 or images.max() > 1.0:
        raise ValidationError("images must be finite and lie in [0, 1]")

    handle = build_denoiser(denoiser_config, seed=config.seed)
    start_step = 0
    history: list[float] = []
    if resume is not None:
        _check_resume(resume, config, denoiser_config)
        handle.import_parameters({k: v.copy() for k, v in resume.raw_params.items()})
        ema = {k: v.copy() for k, v in resume.ema_params.items()}
        start_step = resume.step_count
        history = [float(x) for x in resume.loss_history]
    else:
        ema = {k: v.copy() for k, v in handle.params.items()}

    conditions = encode_batch(config.encoder, images).values
    x0 = to_model_range(images)
    schedule = config.schedule
    optimizer = _Adam(config.learning_rate, handle.params)
    rng = np.random.default_rng([config.seed, start_step])
    step = start_step
    ckpt = None
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_losses: list[float] = []
        for lo in range(0, n, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            t = rng.integers(1, schedule.T + 1, size=idx.size)
            eps = rng.standard_normal((idx.size, ch, hh, ww))
            u = rng.random(idx.size)
            x_t = np.stack(
                [
                    forward_sample(
                        DiffusionSample(data=x0[i], t=0), int(t[j]), schedule, eps[j]
                    ).data
                    for j, i in enumerate(idx)
                ]
            )
            cond = conditions[idx].copy()
            cond[u < config.condition_dropout] = 0.0
            loss, grads, _, _ = handle.loss_grads(
                np.moveaxis(x_t, 1, -1).astype(np.float32),
                t,
                cond,
                np.moveaxis(eps, 1, -1).astype(np.float32),
            )
            step += 1
            if not math.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss {loss} at step {step} (epoch {epoch + 1}, "
                    f"lr {config.learning_rate}); run aborted"
                )
            optimizer.update(handle.params, grads)
            _ema_update(ema, handle.params, config.ema_decay)
            history.append(float(loss))
            epoch_losses.append(float(loss))
        ckpt = Checkpoint(
            denoiser_config=denoiser_config,
            train_config=config,
            raw_params=handle.export_parameters(),
            ema_params={k: v.copy() for k, v in ema.items()},
            step_count=step,
            loss_history=list(history),
        )
        if out is not None:
            save_checkpoint(ckpt, out)
        if on_epoch is not None:
            on_epoch(epoch + 1, step, float(np.mean(epoch_losses)))
    return ckpt


def smoothed_loss(history, window: int = 50) -> np.ndarray:
    """Trailing moving average: index i averages the last ``window``
    entries up to and including i (fewer near the start)."""
    arr = np.asarray(history, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("loss history must be a non-empty 1-D sequence")
    if window < 1:
        raise ValidationError("window must be >= 1")
    csum = np.concatenate(([0.0], np.cumsum(arr)))
    idx = np.arange(1, arr.size + 1)
    lo = np.maximum(0, idx - window)
    return (csum[idx] - csum[lo]) / (idx - lo)


def conditioning_sensitivity(
    handle: DenoiserHandle,
    x: np.ndarray,
    t: np.ndarray,
    cond: np.ndarray,
    probes: int = 4,
    delta: float = 1e-2,
    seed: int = 0,
) -> float:
    """Mean directional-derivative norm of the predicted noise with respect
    to the condition, over random unit directions.  A conditionally trained
    model scores well above an unconditional one."""
    if probes < 1:
        raise ValidationError("probes must be >= 1")
    if delta <= 0:
        raise ValidationError("delta must be > 0")
    x = np.asarray(x, dtype=np.float32)
    cond = np.asarray(cond, dtype=np.float32)
    t = np.asarray(t)
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(probes):
        v = rng.standard_normal(cond.shape[-1])
        v = (v / np.linalg.norm(v)).astype(np.float32)
        hi = handle.predict_batch(x, t, cond + delta * v)
        low = handle.predict_batch(x, t, cond - delta * v)
        diff = hi.astype(np.float64) - low.astype(np.float64)
        total += float(np.linalg.norm(diff / (2.0 * delta)))
    return total / probes


def _array_payload(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, arr, allow_pickle=False)
    return buf.getvalue()


def _archive_entries(ckpt: Checkpoint) -> dict[str, bytes]:
    entries: dict[str, bytes] = {}
    for name, arr in ckpt.raw_params.items():
        entries[f"params/raw/{name}.npy"] = _array_payload(np.asarray(arr, dtype="<f4"))
    for name, arr in ckpt.ema_params.items():
        entries[f"params/ema/{name}.npy"] = _array_payload(np.asarray(arr, dtype="<f4"))
    for key, arr in ckpt.encoder.arrays.items():
        entries[f"encoder/{key}.npy"] = _array_payload(np.ascontiguousarray(arr))
    return entries


def _manifest_core(ckpt: Checkpoint) -> dict:
    enc = ckpt.encoder
    return {
        "version": ckpt.version,
        "denoiser": ckpt.denoiser_config.to_manifest(),
        "schedule": ckpt.schedule.to_manifest(),
        "train": ckpt.train_config.to_manifest(),
        "encoder": {
            "name": enc.name,
            "dim": enc.dim,
            "image_channels": enc.image_channels,
            "image_size": enc.image_size,
            "meta": enc.meta,
            "arrays": {
                key: {
                    "dtype": str(np.asarray(arr).dtype),
                    "shape": list(np.asarray(arr).shape),
                }
                for key, arr in enc.arrays.items()
            },
        },
        "step_count": ckpt.step_count,
        "loss_history": [float(x) for x in ckpt.loss_history],
    }


def _content_hash(entries: dict[str, bytes], core: dict) -> str:
    h = hashlib.sha256()
    for name in sorted(entries):
        h.update(name.encode("utf-8"))
        h.update(b"\0")
        h.update(entries[name])
    h.update(json.dumps(core, sort_keys=True, separators=(",", ":")).encode("utf-8"))
    return h.hexdigest()


def save_checkpoint(ckpt: Checkpoint, path) -> str:
    """Write the checkpoint archive atomically; returns the path written."""
    ckpt.validate()
    entries = _archive_entries(ckpt)
    core = _manifest_core(ckpt)
    manifest = dict(core)
    manifest["content_hash"] = _content_hash(entries, core)
    entries["manifest.json"] = (
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    ).encode("utf-8")

    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(target.parent), suffix=".ckpt.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            with zipfile.ZipFile(fh, "w", zipfile.ZIP_STORED) as zf:
                for name in sorted(entries):
                    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
                    info.external_attr = 0o644 << 16
                    zf.writestr(info, entries[name])
        os.chmod(tmp, 0o644)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return str(target)


def _load_array(payload: bytes, where: str) -> np.ndarray:
    try:
        return np.load(io.BytesIO(payload), allow_pickle=False)
    except ValueError as exc:
        raise CorruptCheckpointError(f"bad array payload at {where}: {exc}") from exc


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint archive back; verifies version, hash, and layout."""
    try:
        with zipfile.ZipFile(path, "r") as zf:
            raw_entries = {name: zf.read(name) for name in zf.namelist()}
    except zipfile.BadZipFile as exc:
        raise CorruptCheckpointError(f"not a checkpoint archive: {exc}") from exc

    if "manifest.json" not in raw_entries:
        raise CorruptCheckpointError("archive has no manifest.json")
    try:
        manifest = json.loads(raw_entries["manifest.json"].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise CorruptCheckpointError("manifest must be a JSON object")
    version = manifest.get("version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"checkpoint version {version!r} != {CHECKPOINT_VERSION!r}"
        )

    core = {k: v for k, v in manifest.items() if k != "content_hash"}
    entries = {k: v for k, v in raw_entries.items() if k != "manifest.json"}
    if manifest.get("content_hash") != _content_hash(entries, core):
        raise CorruptCheckpointError("content hash mismatch; archive is damaged")

    try:
        denoiser_config = DenoiserConfig.from_manifest(core["denoiser"])
        schedule = schedule_from_manifest(core["schedule"])
        train_m = core["train"]
        enc_m = core["encoder"]
        enc_arrays: dict[str, np.ndarray] = {}
        for key, spec in enc_m["arrays"].items():
            entry = f"encoder/{key}.npy"
            if entry not in entries:
                raise CorruptCheckpointError(f"missing array entry {entry}")
            arr = _load_array(entries[entry], entry)
            if str(arr.dtype) != spec["dtype"] or list(arr.shape) != list(spec["shape"]):
                raise CorruptCheckpointError(
                    f"array {entry} does not match its manifest declaration"
                )
            enc_arrays[key] = arr
        encoder = EncoderSpec(
            name=enc_m["name"],
            dim=int(enc_m["dim"]),
            image_channels=int(enc_m["image_channels"]),
            image_size=int(enc_m["image_size"]),
            meta=dict(enc_m["meta"]),
            arrays=enc_arrays,
        )
        train_config = TrainConfig(
            epochs=int(train_m["epochs"]),
            batch_size=int(train_m["batch_size"]),
            schedule=schedule,
            encoder=encoder,
            learning_rate=float(train_m["learning_rate"]),
            ema_decay=float(train_m["ema_decay"]),
            seed=int(train_m["seed"]),
            condition_dropout=float(train_m["condition_dropout"]),
        )
        params: dict[str, dict[str, np.ndarray]] = {"raw": {}, "ema": {}}
        for group in params:
            for name, _, _ in param_specs(denoiser_config):
                entry = f"params/{group}/{name}.npy"
                if entry not in entries:
                    raise CorruptCheckpointError(f"missing array entry {entry}")
                params[group][name] = _load_array(entries[entry], entry)
        ckpt = Checkpoint(
            denoiser_config=denoiser_config,
            train_config=train_config,
            raw_params=params["raw"],
            ema_params=params["ema"],
            step_count=int(core["step_count"]),
            loss_history=[float(x) for x in core["loss_history"]],
            version=version,
        )
    except (KeyError, TypeError, ValidationError) as exc:
        raise CorruptCheckpointError(f"manifest field error: {exc!r}") from exc
    try:
        ckpt.validate()
    except (ValidationError, DimensionMismatchError) as exc:
        raise CorruptCheckpointError(f"inconsistent checkpoint: {exc}") from exc
    return ckpt
