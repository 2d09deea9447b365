"""Command-line workflow: synthesize data, fit encoders, train, sample,
and render edit sweeps as image grids.

Every command is deterministic given its flags; ``--seed`` defaults to 0
everywhere and is echoed in the JSON sidecar written next to each output
(``<out>.json`` for files, ``run.json`` inside the directory for synth).
Grid commands also record the exact conditioning vector behind every
cell so any cell can be regenerated bit for bit.

Exit codes: 0 success, 2 usage or validation error, 3 malformed input
data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from repdiff import encoders, latent, png_io, rcde, synth
from repdiff.denoiser import DenoiserConfig
from repdiff.diffusion import SAMPLERS, from_model_range, sample
from repdiff.errors import (
    DataFormatError,
    DimensionMismatchError,
    NumericalError,
    RepdiffError,
    ValidationError,
)
from repdiff.grid import make_grid
from repdiff.schedule import make_schedule
from repdiff.training import (
    DEFAULT_CONDITION_DROPOUT,
    DEFAULT_EMA_DECAY,
    DEFAULT_LEARNING_RATE,
    TrainConfig,
    load_checkpoint,
    smoothed_loss,
    train,
)

DEFAULT_LAMBDAS = "0,0.1,0.2,0.3,0.4,0.6,0.8"
DEFAULT_INTERP_STEPS = 11
DEFAULT_SAMPLE_STEPS = 50


# ---------------------------------------------------------------------------
# small helpers


def _write_bytes(path, data: bytes) -> None:
    """Write through a temp file in the target directory, then rename."""
    target = os.fspath(path)
    parent = os.path.dirname(target) or "."
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _write_json(path, payload: dict) -> None:
    _write_bytes(path, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _sidecar(out_path, payload: dict) -> None:
    _write_json(f"{os.fspath(out_path)}.json", payload)


def _vec(v: encoders.RepresentationVector) -> list[float]:
    return [float(x) for x in v.values]


def _check_cond_dim(vec: encoders.RepresentationVector, ckpt) -> None:
    want = ckpt.denoiser_config.cond_dim
    if vec.dim != want:
        raise DimensionMismatchError(
            f"condition has dimension {vec.dim}, checkpoint expects {want}"
        )


def _load_reference_image(path, spec: encoders.EncoderSpec) -> np.ndarray:
    img = png_io.read_png(path)
    if img.shape[0] == 1 and spec.image_channels == 3:
        img = np.repeat(img, 3, axis=0)
    return img


def _parse_reference(ref: str) -> tuple[str, int | None]:
    """Split ``path@ROW`` (embeddings row) from a bare image path."""
    base, sep, tail = ref.rpartition("@")
    if sep and tail.isdigit():
        return base, int(tail)
    if ref.endswith(".rcde"):
        raise ValidationError(
            f"reference {ref!r} is an embeddings file; select a row with PATH@ROW"
        )
    return ref, None


def _reference_vector(ref: str, ckpt) -> encoders.RepresentationVector:
    path, row = _parse_reference(ref)
    if row is not None:
        vec = encoders.load_embeddings(path).row(row)
    else:
        vec = encoders.encode(ckpt.encoder, _load_reference_image(path, ckpt.encoder))
    _check_cond_dim(vec, ckpt)
    return vec


def _vector_from_file(path) -> encoders.RepresentationVector:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, list) or not doc or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in doc
    ):
        raise ValidationError(f"{path} must hold a non-empty JSON array of numbers")
    return encoders.RepresentationVector(
        np.asarray(doc, dtype=np.float64), source=f"file:{Path(path).name}"
    )


def _sample_cell(ckpt, handle, vec, sampler: str, steps: int, seed: int) -> np.ndarray:
    out = sample(handle, vec, ckpt.schedule, sampler=sampler, steps=steps, seed=seed)
    return from_model_range(out.data)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _csv_floats(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _add_sampling_flags(p: argparse.ArgumentParser, steps_flag: str = "--steps") -> None:
    p.add_argument("--sampler", choices=SAMPLERS, default="ddim")
    p.add_argument(
        steps_flag,
        dest="sample_steps",
        type=_positive_int,
        default=DEFAULT_SAMPLE_STEPS,
        help="denoising steps per generated image",
    )


# ---------------------------------------------------------------------------
# train config parsing

_TOP_KEYS = {
    "epochs",
    "batch_size",
    "learning_rate",
    "ema_decay",
    "seed",
    "condition_dropout",
    "schedule",
    "encoder",
    "denoiser",
}
_SCHEDULE_KEYS = {"kind", "T", "beta_start", "beta_end"}
_ENCODER_KEYS = {"name", "seed"}
_DENOISER_KEYS = {"base_width", "depth", "time_embed_dim", "injection"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ValidationError(f"unknown {where} config fields: {', '.join(unknown)}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ValidationError(f"config is missing required field {where}{key}")
    return section[key]


def _load_train_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("train config must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "top-level")
    schedule = doc.get("schedule", {})
    enc = doc.get("encoder", {})
    den = doc.get("denoiser", {})
    for section, allowed, where in (
        (schedule, _SCHEDULE_KEYS, "schedule"),
        (enc, _ENCODER_KEYS, "encoder"),
        (den, _DENOISER_KEYS, "denoiser"),
    ):
        if not isinstance(section, dict):
            raise ValidationError(f"{where} config section must be a JSON object")
        _check_keys(section, allowed, where)
    return {
        "epochs": _require(doc, "epochs", ""),
        "batch_size": _require(doc, "batch_size", ""),
        "learning_rate": doc.get("learning_rate", DEFAULT_LEARNING_RATE),
        "ema_decay": doc.get("ema_decay", DEFAULT_EMA_DECAY),
        "seed": doc.get("seed", 0),
        "condition_dropout": doc.get("condition_dropout", DEFAULT_CONDITION_DROPOUT),
        "schedule": schedule,
        "encoder": {"name": enc.get("name", "pixel_stats"), "seed": enc.get("seed", 0)},
        "denoiser": den,
    }


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    samples = synth.sample_dataset(args.n, args.seed, args.image_size)
    synth.write_dataset(samples, args.out)
    out_dir = Path(args.out)
    _write_json(
        out_dir / "run.json",
        {
            "command": "synth",
            "n": args.n,
            "seed": args.seed,
            "image_size": args.image_size,
            "out": str(out_dir),
        },
    )
    print(f"wrote {args.n} images to {out_dir}")
    return 0


def cmd_encode(args) -> int:
    dataset = synth.load_dataset(args.image_dir)
    spec = encoders.fit_encoder(args.encoder, dataset.images, seed=args.seed)
    matrix = encoders.encode_batch(spec, dataset.images)
    matrix = encoders.EmbeddingMatrix(
        matrix.values,
        labels=dataset.labels,
        source=f"{spec.name}:{Path(args.image_dir).name}",
    )
    labels = None
    if matrix.labels is not None:
        labels = {k: [float(x) for x in v] for k, v in matrix.labels.items()}
    _write_bytes(args.out, rcde.encode(matrix.values, labels, matrix.source))
    _sidecar(
        args.out,
        {
            "command": "encode",
            "encoder": spec.name,
            "image_dir": str(args.image_dir),
            "n": matrix.n,
            "dim": matrix.dim,
            "seed": args.seed,
            "attributes": sorted(matrix.labels) if matrix.labels else [],
        },
    )
    print(f"encoded {matrix.n} images to {args.out} (dim {matrix.dim})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_train_config(args.config)
    dataset = synth.load_dataset(args.data)
    images = dataset.images
    if images.shape[2] != images.shape[3]:
        raise ValidationError(f"training images must be square, got {images.shape[2:]}")

    resume_ckpt = None
    if args.resume is not None:
        resume_ckpt = load_checkpoint(args.resume)
        if resume_ckpt.encoder.name != cfg["encoder"]["name"]:
            raise ValidationError(
                f"config encoder {cfg['encoder']['name']!r} does not match "
                f"checkpoint encoder {resume_ckpt.encoder.name!r}"
            )
        # Reuse the fitted statistics so conditions continue bit for bit.
        spec = resume_ckpt.encoder
    else:
        spec = encoders.fit_encoder(
            cfg["encoder"]["name"], images, seed=cfg["encoder"]["seed"]
        )

    schedule = make_schedule(**cfg["schedule"])
    den = cfg["denoiser"]
    denoiser_config = DenoiserConfig(
        image_channels=int(images.shape[1]),
        image_size=int(images.shape[2]),
        cond_dim=spec.dim,
        **den,
    )
    config = TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        schedule=schedule,
        encoder=spec,
        learning_rate=cfg["learning_rate"],
        ema_decay=cfg["ema_decay"],
        seed=cfg["seed"],
        condition_dropout=cfg["condition_dropout"],
    )

    def report(epoch: int, step: int, mean_loss: float) -> None:
        print(f"epoch {epoch}/{config.epochs}: step {step}, mean loss {mean_loss:.6f}")

    ckpt = train(
        config,
        denoiser_config,
        images,
        out=args.out,
        resume=resume_ckpt,
        on_epoch=report,
    )
    _sidecar(
        args.out,
        {
            "command": "train",
            "config": str(args.config),
            "data": str(args.data),
            "resume": None if args.resume is None else str(args.resume),
            "seed": config.seed,
            "steps": ckpt.step_count,
            "final_smoothed_loss": float(smoothed_loss(ckpt.loss_history)[-1]),
        },
    )
    print(f"checkpoint written to {args.out} ({ckpt.step_count} steps)")
    return 0


def _condition_from_args(args, ckpt) -> encoders.RepresentationVector:
    if args.from_image is not None:
        vec = encoders.encode(
            ckpt.encoder, _load_reference_image(args.from_image, ckpt.encoder)
        )
    elif args.from_rcde is not None:
        vec = encoders.load_embeddings(args.from_rcde).row(args.row)
    else:
        vec = _vector_from_file(args.vector_file)
    _check_cond_dim(vec, ckpt)
    return vec


def cmd_sample(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    vec = _condition_from_args(args, ckpt)
    img = _sample_cell(
        ckpt, ckpt.denoiser(), vec, args.sampler, args.sample_steps, args.seed
    )
    _write_bytes(args.out, png_io.encode_png(img))
    _sidecar(
        args.out,
        {
            "command": "sample",
            "checkpoint": str(args.ckpt),
            "sampler": args.sampler,
            "steps": args.sample_steps,
            "seed": args.seed,
            "condition": _vec(vec),
            "condition_source": vec.source,
        },
    )
    print(f"wrote {args.out}")
    return 0


def cmd_perturb_sweep(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    base = _reference_vector(args.reference, ckpt)
    handle = ckpt.denoiser()
    # Separate noise stream so cell sampling still sees the plain seed.
    rng = np.random.default_rng([args.seed, 1])
    shared = rng.standard_normal(base.dim) if args.reuse_noise else None
    cells, records = [], []
    for lam in args.lambdas:
        noise = shared if shared is not None else rng.standard_normal(base.dim)
        vec = latent.perturb(base, lam, noise)
        cells.append(
            _sample_cell(ckpt, handle, vec, args.sampler, args.sample_steps, args.seed)
        )
        records.append({"lambda": lam, "vector": _vec(vec), "source": vec.source})
    _write_bytes(args.out, png_io.encode_png(make_grid(cells)))
    _sidecar(
        args.out,
        {
            "command": "perturb-sweep",
            "checkpoint": str(args.ckpt),
            "reference": args.reference,
            "sampler": args.sampler,
            "steps": args.sample_steps,
            "seed": args.seed,
            "reuse_noise": bool(args.reuse_noise),
            "cells": records,
        },
    )
    print(f"wrote {len(cells)}-cell sweep to {args.out}")
    return 0


def cmd_interp_sweep(args) -> int:
    if args.steps < 2:
        raise ValidationError(f"interpolation needs at least 2 steps, got {args.steps}")
    ckpt = load_checkpoint(args.ckpt)
    ref_a = _reference_vector(args.ref_a, ckpt)
    ref_b = _reference_vector(args.ref_b, ckpt)
    handle = ckpt.denoiser()
    cells, records = [], []
    for i in range(args.steps):
        alpha = i / (args.steps - 1)
        vec = latent.interpolate(ref_a, ref_b, alpha)
        cells.append(
            _sample_cell(ckpt, handle, vec, args.sampler, args.sample_steps, args.seed)
        )
        records.append({"alpha": alpha, "vector": _vec(vec), "source": vec.source})
    _write_bytes(args.out, png_io.encode_png(make_grid(cells)))
    _sidecar(
        args.out,
        {
            "command": "interp-sweep",
            "checkpoint": str(args.ckpt),
            "ref_a": args.ref_a,
            "ref_b": args.ref_b,
            "sampler": args.sampler,
            "steps": args.sample_steps,
            "interpolation_steps": args.steps,
            "seed": args.seed,
            "cells": records,
        },
    )
    print(f"wrote {len(cells)}-cell sweep to {args.out}")
    return 0


def cmd_directions_pca(args) -> int:
    matrix = encoders.load_embeddings(args.rcde)
    bank = latent.fit_pca_directions(matrix, args.k)
    _write_bytes(args.out, (bank.to_json() + "\n").encode("utf-8"))
    _sidecar(
        args.out,
        {
            "command": "directions pca",
            "rcde": str(args.rcde),
            "k": args.k,
            "n": matrix.n,
            "dim": matrix.dim,
            "seed": args.seed,
            "explained_variances": [d.explained_variance for d in bank.directions],
        },
    )
    print(f"wrote {args.k} PCA directions to {args.out}")
    return 0


def cmd_directions_apply(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    base = _reference_vector(args.reference, ckpt)
    with open(args.bank, "r", encoding="utf-8") as fh:
        bank = latent.DirectionBank.from_json(fh.read())
    direction = bank.component(args.k)
    if direction.dim != base.dim:
        raise DimensionMismatchError(
            f"direction bank dimension {direction.dim} does not match condition {base.dim}"
        )
    edited = latent.apply_direction(base, direction, args.alpha)
    handle = ckpt.denoiser()
    cells = [
        _sample_cell(ckpt, handle, v, args.sampler, args.sample_steps, args.seed)
        for v in (base, edited)
    ]
    _write_bytes(args.out, png_io.encode_png(make_grid(cells)))
    _sidecar(
        args.out,
        {
            "command": "directions apply",
            "checkpoint": str(args.ckpt),
            "reference": args.reference,
            "bank": str(args.bank),
            "k": args.k,
            "alpha": args.alpha,
            "sampler": args.sampler,
            "steps": args.sample_steps,
            "seed": args.seed,
            "cells": [
                {"role": "baseline", "vector": _vec(base), "source": base.source},
                {"role": "edited", "vector": _vec(edited), "source": edited.source},
            ],
        },
    )
    print(f"wrote baseline/edited pair to {args.out}")
    return 0


def cmd_directions_attr(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    base = _reference_vector(args.reference, ckpt)
    matrix = encoders.load_embeddings(args.rcde)
    if args.mode == "mean-add":
        vec = latent.attribute_mean_edit(base, matrix, args.attribute, args.scale)
    else:
        direction = latent.attribute_diff_direction(matrix, args.attribute)
        vec = latent.apply_direction(base, direction, args.scale)
    _check_cond_dim(vec, ckpt)
    img = _sample_cell(
        ckpt, ckpt.denoiser(), vec, args.sampler, args.sample_steps, args.seed
    )
    _write_bytes(args.out, png_io.encode_png(img))
    _sidecar(
        args.out,
        {
            "command": "directions attr",
            "checkpoint": str(args.ckpt),
            "reference": args.reference,
            "rcde": str(args.rcde),
            "attribute": args.attribute,
            "mode": args.mode,
            "scale": args.scale,
            "sampler": args.sampler,
            "steps": args.sample_steps,
            "seed": args.seed,
            "condition": _vec(vec),
            "condition_source": vec.source,
        },
    )
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    # Lazy imports keep the core CLI usable without the service extras.
    try:
        import uvicorn

        from repdiff.service import create_app
    except ImportError as exc:
        raise ValidationError(
            f"serve needs the service extras (fastapi, uvicorn): {exc}"
        ) from exc
    app = create_app(checkpoint_path=args.ckpt, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repdiff",
        description="Representation-conditioned diffusion: data, training, "
        "sampling, and latent-space edits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic shape dataset")
    p.add_argument("--n", type=_positive_int, required=True, help="number of images")
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--image-size", type=_positive_int, default=synth.IMAGE_SIZE)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("encode", help="fit an encoder and embed a dataset")
    p.add_argument("--encoder", required=True, help="encoder name")
    p.add_argument("--image-dir", required=True)
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--out", required=True, help="output .rcde file")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train a conditional denoiser")
    p.add_argument("--config", required=True, help="JSON training config")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate one image from a condition")
    p.add_argument("--ckpt", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--from-image", default=None, help="encode this PNG as the condition")
    src.add_argument("--from-rcde", default=None, help="embeddings file; see --row")
    src.add_argument("--vector-file", default=None, help="JSON array with the raw vector")
    p.add_argument("--row", type=_nonnegative_int, default=0, help="row for --from-rcde")
    _add_sampling_flags(p)
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_sample)

    ref_help = "PNG path, or embeddings row as PATH@ROW"

    p = sub.add_parser("perturb-sweep", help="grid of increasingly perturbed conditions")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--reference", required=True, help=ref_help)
    p.add_argument("--lambdas", type=_csv_floats, default=DEFAULT_LAMBDAS)
    p.add_argument(
        "--reuse-noise",
        action="store_true",
        help="one noise draw for all strengths instead of fresh noise per cell",
    )
    _add_sampling_flags(p, "--sample-steps")
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--out", required=True, help="output grid PNG")
    p.set_defaults(func=cmd_perturb_sweep)

    p = sub.add_parser("interp-sweep", help="grid interpolating between two references")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ref-a", required=True, help=ref_help + " (weighted by alpha)")
    p.add_argument("--ref-b", required=True, help=ref_help + " (weighted by 1 - alpha)")
    p.add_argument(
        "--steps",
        type=_positive_int,
        default=DEFAULT_INTERP_STEPS,
        help="number of interpolation points, alpha ascending left to right",
    )
    _add_sampling_flags(p, "--sample-steps")
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--out", required=True, help="output grid PNG")
    p.set_defaults(func=cmd_interp_sweep)

    directions = sub.add_parser("directions", help="semantic direction tools")
    dsub = directions.add_subparsers(dest="directions_command", required=True)

    p = dsub.add_parser("pca", help="fit a PCA direction bank from embeddings")
    p.add_argument("--rcde", required=True)
    p.add_argument("--k", type=_positive_int, required=True, help="number of components")
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--out", required=True, help="output bank JSON")
    p.set_defaults(func=cmd_directions_pca)

    p = dsub.add_parser("apply", help="move a reference along a PCA direction")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--reference", required=True, help=ref_help)
    p.add_argument("--bank", required=True, help="direction bank JSON")
    p.add_argument("--k", type=_positive_int, required=True, help="1-based component")
    p.add_argument("--alpha", type=float, default=latent.DEFAULT_DIRECTION_SCALE)
    _add_sampling_flags(p, "--sample-steps")
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--out", required=True, help="output grid PNG (baseline, edited)")
    p.set_defaults(func=cmd_directions_apply)

    p = dsub.add_parser("attr", help="edit a reference along an attribute direction")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--reference", required=True, help=ref_help)
    p.add_argument("--rcde", required=True, help="labeled embeddings file")
    p.add_argument("--attribute", required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--mode", choices=("mean-add", "diff"), default="mean-add")
    _add_sampling_flags(p, "--sample-steps")
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_directions_attr)

    p = sub.add_parser("serve", help="run the HTTP generation service")
    p.add_argument("--ckpt", default=None, help="checkpoint to load at startup")
    p.add_argument("--frontend", default=None, help="static bundle directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=_positive_int, default=8000)
    p.add_argument("--seed", type=_nonnegative_int, default=0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except RepdiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
