import hashlib
import json
import zipfile

import numpy as np
import pytest

from repdiff.denoiser import DenoiserConfig, build_denoiser
from repdiff.schedule import make_schedule

# Tiny but real training setup shared by the CLI and service tests:
# 10 square shapes at 16x16 (seed 2 gives both classes of every
# attribute), a 192-dim pixel_stats encoder, and a 2-step model.
PIPELINE_N = 10
PIPELINE_SEED = 2
PIPELINE_SIZE = 16
PIPELINE_DIM = 192
TRAIN_CONFIG = {
    "epochs": 1,
    "batch_size": 6,
    "seed": 3,
    "schedule": {"kind": "linear", "T": 10},
    "encoder": {"name": "pixel_stats"},
    "denoiser": {"base_width": 4, "depth": 1, "time_embed_dim": 8},
}


@pytest.fixture(scope="session")
def tiny_pipeline(tmp_path_factory):
    """Dataset, embeddings, and checkpoint built through the real CLI."""
    from repdiff.cli import main

    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    args = ["synth", "--n", str(PIPELINE_N), "--seed", str(PIPELINE_SEED),
            "--image-size", str(PIPELINE_SIZE), "--out", str(data)]
    assert main(args) == 0
    emb = root / "emb.rcde"
    assert main(["encode", "--encoder", "pixel_stats", "--image-dir", str(data),
                 "--out", str(emb)]) == 0
    config = root / "config.json"
    config.write_text(json.dumps(TRAIN_CONFIG))
    ckpt = root / "model.ckpt"
    assert main(["train", "--config", str(config), "--data", str(data),
                 "--out", str(ckpt)]) == 0
    return {"root": root, "data": data, "emb": emb, "config": config, "ckpt": ckpt}


def checkpoint_content_hash(path) -> str:
    """Independent recomputation of a checkpoint's manifest hash."""
    with zipfile.ZipFile(path) as zf:
        entries = {name: zf.read(name) for name in zf.namelist()}
    manifest = json.loads(entries["manifest.json"])
    core = {k: v for k, v in manifest.items() if k != "content_hash"}
    h = hashlib.sha256()
    for name in sorted(n for n in entries if n != "manifest.json"):
        h.update(name.encode("utf-8"))
        h.update(b"\0")
        h.update(entries[name])
    h.update(json.dumps(core, sort_keys=True, separators=(",", ":")).encode("utf-8"))
    return h.hexdigest()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def toy_schedule():
    # betas 0.1..0.4 give hand-checkable products: abar = (.9,.72,.504,.3024)
    return make_schedule("linear", T=4, beta_start=0.1, beta_end=0.4)


@pytest.fixture
def tiny_config():
    return DenoiserConfig(
        image_channels=1,
        image_size=8,
        cond_dim=4,
        base_width=8,
        depth=1,
        time_embed_dim=8,
    )


@pytest.fixture
def tiny_denoiser(tiny_config):
    return build_denoiser(tiny_config, seed=11)
