"""HTTP API tests through an in-process ASGI client.

The fixtures load the shared tiny checkpoint and exercise the real
request path: JSON (de)serialization, multipart uploads, edit-op
composition, and binary PNG responses with the provenance header.
"""

import base64
import json
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from repdiff import encoders, latent, png_io
from repdiff.service import PROVENANCE_HEADER, create_app
from repdiff.training import load_checkpoint

from conftest import PIPELINE_DIM, checkpoint_content_hash

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient


def provenance(response) -> dict:
    return json.loads(base64.b64decode(response.headers[PROVENANCE_HEADER]))


@pytest.fixture(scope="module")
def ws(tiny_pipeline):
    return tiny_pipeline


@pytest.fixture(scope="module")
def client(ws):
    app = create_app(checkpoint_path=ws["ckpt"])
    with TestClient(app) as c:
        yield c


@pytest.fixture()
def bare_client():
    app = create_app()
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def ids(client, ws):
    """Upload the embeddings, register row 2, and fit a 2-direction bank."""
    r = client.post("/api/embeddings", content=ws["emb"].read_bytes())
    assert r.status_code == 200, r.text
    mid = r.json()["matrix_id"]
    r = client.post("/api/reference", json={"matrix_id": mid, "row": 2})
    assert r.status_code == 200, r.text
    rid = r.json()["ref_id"]
    r = client.post("/api/directions/pca", json={"matrix_id": mid, "K": 2})
    assert r.status_code == 200, r.text
    bid = r.json()["bank_id"]
    return {"matrix": mid, "ref": rid, "bank": bid}


def generate(client, condition, steps=4, seed=7, sampler="ddim"):
    return client.post(
        "/api/generate",
        json={"condition": condition, "sampler": sampler, "steps": steps, "seed": seed},
    )


@pytest.fixture(scope="module")
def baseline(client, ids):
    r = generate(client, {"ref_id": ids["ref"], "ops": []})
    assert r.status_code == 200, r.text
    return {"png": r.content, "vector": provenance(r)["condition"]}


class TestMeta:
    def test_409_before_checkpoint(self, bare_client):
        r = bare_client.get("/api/meta")
        assert r.status_code == 409
        assert "no checkpoint" in r.json()["detail"]

    def test_shape_after_load(self, client):
        r = client.get("/api/meta")
        assert r.status_code == 200
        meta = r.json()
        assert meta["cond_dim"] == PIPELINE_DIM
        assert meta["samplers"] == ["ddpm", "ddim"]
        assert meta["encoders"] == ["pixel_stats", "random_projection", "pca_features"]
        assert meta["checkpoint"]["denoiser"]["cond_dim"] == PIPELINE_DIM

    def test_manifest_hash_matches_file(self, client, ws):
        meta = client.get("/api/meta").json()
        assert meta["checkpoint"]["content_hash"] == checkpoint_content_hash(ws["ckpt"])

    def test_cors_headers(self, client):
        r = client.get("/api/meta", headers={"Origin": "http://localhost:5173"})
        assert r.headers["access-control-allow-origin"] == "*"


class TestCheckpointEndpoint:
    def test_load_returns_id_and_manifest(self, ws, bare_client):
        r = bare_client.post("/api/checkpoint", json={"path": str(ws["ckpt"])})
        assert r.status_code == 200
        body = r.json()
        assert body["checkpoint_id"]
        assert body["manifest"]["step_count"] == 2
        assert bare_client.get("/api/meta").status_code == 200

    def test_missing_path(self, bare_client, tmp_path):
        r = bare_client.post("/api/checkpoint", json={"path": str(tmp_path / "no.ckpt")})
        assert r.status_code == 400

    def test_non_checkpoint_file(self, ws, bare_client):
        r = bare_client.post("/api/checkpoint", json={"path": str(ws["emb"])})
        assert r.status_code == 400


class TestGenerate:
    def test_returns_png_with_provenance(self, baseline):
        img = png_io.decode_png(baseline["png"])
        assert img.shape[0] == 3
        assert len(baseline["vector"]) == PIPELINE_DIM

    def test_deterministic(self, client, ids, baseline):
        r = generate(client, {"ref_id": ids["ref"], "ops": []})
        assert r.content == baseline["png"]

    def test_direct_condition_equals_empty_ops(self, client, baseline):
        r = generate(client, baseline["vector"])
        assert r.status_code == 200
        assert r.content == baseline["png"]

    def test_replaying_echoed_vector_reproduces_bytes(self, client, ids):
        ops = [{"op": "perturb", "lambda": 0.3, "noise_seed": 11}]
        first = generate(client, {"ref_id": ids["ref"], "ops": ops})
        replay = generate(client, provenance(first)["condition"])
        assert replay.content == first.content

    def test_interpolate_alpha_one_is_identity(self, client, ids, baseline):
        r = client.post("/api/reference", json={"matrix_id": ids["matrix"], "row": 5})
        other = r.json()["ref_id"]
        ops = [{"op": "interpolate", "other_ref": other, "alpha": 1.0}]
        r = generate(client, {"ref_id": ids["ref"], "ops": ops})
        assert r.content == baseline["png"]

    def test_ops_compose_like_latent_toolkit(self, client, ids, ws):
        matrix = encoders.load_embeddings(ws["emb"])
        bank = latent.fit_pca_directions(matrix, 2)
        want = matrix.row(2)
        want = latent.perturb(want, 0.2, np.random.default_rng(5).standard_normal(want.dim))
        want = latent.apply_direction(want, bank.component(1), -3.0)
        want = latent.attribute_mean_edit(want, matrix, "is_green", 0.25)
        ops = [
            {"op": "perturb", "lambda": 0.2, "noise_seed": 5},
            {"op": "pca", "bank_id": ids["bank"], "K": 1, "alpha": -3.0},
            {"op": "attr", "matrix_id": ids["matrix"], "attribute": "is_green",
             "scale": 0.25, "mode": "mean-add"},
        ]
        r = generate(client, {"ref_id": ids["ref"], "ops": ops})
        assert r.status_code == 200
        assert provenance(r)["condition"] == [float(x) for x in want.values]

    def test_attr_diff_mode(self, client, ids, ws):
        matrix = encoders.load_embeddings(ws["emb"])
        direction = latent.attribute_diff_direction(matrix, "is_red")
        want = latent.apply_direction(matrix.row(2), direction, 0.5)
        ops = [{"op": "attr", "matrix_id": ids["matrix"], "attribute": "is_red",
                "scale": 0.5, "mode": "diff"}]
        r = generate(client, {"ref_id": ids["ref"], "ops": ops})
        assert provenance(r)["condition"] == [float(x) for x in want.values]

    def test_ddpm_sampler(self, client, ids):
        r = generate(client, {"ref_id": ids["ref"], "ops": []}, steps=3, sampler="ddpm")
        assert r.status_code == 200
        assert png_io.decode_png(r.content).shape[0] == 3

    def test_409_without_checkpoint(self, bare_client):
        r = generate(bare_client, [0.0, 1.0])
        assert r.status_code == 409

    def test_dimension_mismatch_is_400(self, client):
        r = generate(client, [1.0, 2.0, 3.0])
        assert r.status_code == 400
        assert "dimension" in r.json()["detail"]

    def test_unknown_ref_is_400(self, client):
        r = generate(client, {"ref_id": "r999", "ops": []})
        assert r.status_code == 400

    def test_unknown_bank_and_matrix_are_400(self, client, ids):
        for op in (
            {"op": "pca", "bank_id": "b999", "K": 1, "alpha": 1.0},
            {"op": "attr", "matrix_id": "m999", "attribute": "is_red"},
        ):
            r = generate(client, {"ref_id": ids["ref"], "ops": [op]})
            assert r.status_code == 400, op

    @pytest.mark.parametrize(
        "op",
        [
            {"op": "warp"},
            {"op": "perturb"},
            {"op": "perturb", "lambda": -0.5},
            {"op": "perturb", "lambda": 0.1, "extra": 1},
            {"op": "interpolate", "alpha": 0.5},
            {"op": "pca", "bank_id": "b1", "K": 0, "alpha": 1.0},
            {"op": "attr", "matrix_id": "m1", "attribute": "is_red", "mode": "sub"},
        ],
    )
    def test_invalid_op_descriptor_is_422(self, client, ids, op):
        r = generate(client, {"ref_id": ids["ref"], "ops": [op]})
        assert r.status_code == 422

    def test_malformed_condition_is_422(self, client):
        assert generate(client, {"ops": []}).status_code == 422
        assert generate(client, "not a condition").status_code == 422

    def test_concurrent_identical_requests_identical_bytes(self, client, ids):
        body = {"ref_id": ids["ref"], "ops": []}
        with ThreadPoolExecutor(max_workers=4) as pool:
            futures = [pool.submit(generate, client, body, 2, 3) for _ in range(4)]
            blobs = [f.result().content for f in futures]
        assert all(b == blobs[0] for b in blobs)


class TestEmbeddings:
    def test_upload_reports_shape_and_attributes(self, client, ids, ws):
        matrix = encoders.load_embeddings(ws["emb"])
        r = client.post("/api/embeddings", content=ws["emb"].read_bytes())
        body = r.json()
        assert body["n"] == matrix.n
        assert body["d"] == matrix.dim
        assert body["attributes"] == sorted(matrix.labels)

    def test_multipart_upload(self, client, ws):
        with open(ws["emb"], "rb") as fh:
            r = client.post("/api/embeddings", files={"file": ("e.rcde", fh)})
        assert r.status_code == 200
        assert r.json()["d"] == PIPELINE_DIM

    def test_row_round_trip(self, client, ids, ws):
        r = client.post("/api/reference", json={"matrix_id": ids["matrix"], "row": 0})
        ref_id = r.json()["ref_id"]
        got = client.get(f"/api/reference/{ref_id}").json()
        want = encoders.load_embeddings(ws["emb"]).row(0)
        assert got["vector"] == [float(x) for x in want.values]

    def test_bad_magic_is_400(self, client):
        r = client.post("/api/embeddings", content=b"garbage bytes")
        assert r.status_code == 400

    def test_empty_upload_is_422(self, client):
        r = client.post("/api/embeddings", content=b"")
        assert r.status_code == 422


class TestDirectionsEndpoint:
    def test_explained_variances_match_toolkit(self, client, ids, ws):
        bank = latent.fit_pca_directions(encoders.load_embeddings(ws["emb"]), 2)
        r = client.post("/api/directions/pca", json={"matrix_id": ids["matrix"], "K": 2})
        assert r.json()["explained_variances"] == [
            d.explained_variance for d in bank.directions
        ]

    def test_unknown_matrix_is_400(self, client):
        r = client.post("/api/directions/pca", json={"matrix_id": "m999", "K": 1})
        assert r.status_code == 400

    def test_k_too_large_is_400(self, client, ids):
        r = client.post("/api/directions/pca", json={"matrix_id": ids["matrix"], "K": 500})
        assert r.status_code == 400

    def test_k_zero_is_422(self, client, ids):
        r = client.post("/api/directions/pca", json={"matrix_id": ids["matrix"], "K": 0})
        assert r.status_code == 422


class TestReference:
    def test_from_row_metadata(self, client, ids):
        r = client.post("/api/reference", json={"matrix_id": ids["matrix"], "row": 1})
        body = r.json()
        assert body["dim"] == PIPELINE_DIM
        assert body["source"].endswith("[1]")

    def test_row_out_of_range_is_400(self, client, ids):
        r = client.post("/api/reference", json={"matrix_id": ids["matrix"], "row": 99})
        assert r.status_code == 400

    def test_unknown_matrix_is_400(self, client):
        r = client.post("/api/reference", json={"matrix_id": "m999", "row": 0})
        assert r.status_code == 400

    def test_missing_field_is_422(self, client):
        r = client.post("/api/reference", json={"matrix_id": "m1"})
        assert r.status_code == 422

    def test_image_upload_encodes_with_checkpoint_encoder(self, client, ws):
        path = ws["data"] / "img_00002.png"
        with open(path, "rb") as fh:
            r = client.post("/api/reference", files={"image": ("ref.png", fh)})
        assert r.status_code == 200
        ref_id = r.json()["ref_id"]
        got = client.get(f"/api/reference/{ref_id}").json()
        ckpt = load_checkpoint(ws["ckpt"])
        want = encoders.encode(ckpt.encoder, png_io.read_png(path))
        assert got["vector"] == [float(x) for x in want.values]

    def test_image_upload_with_wrong_encoder_name_is_400(self, client, ws):
        with open(ws["data"] / "img_00000.png", "rb") as fh:
            r = client.post(
                "/api/reference",
                files={"image": ("ref.png", fh)},
                data={"encoder": "random_projection"},
            )
        assert r.status_code == 400

    def test_image_upload_without_checkpoint_is_409(self, bare_client, ws):
        with open(ws["data"] / "img_00000.png", "rb") as fh:
            r = bare_client.post("/api/reference", files={"image": ("ref.png", fh)})
        assert r.status_code == 409

    def test_get_unknown_ref_is_400(self, client):
        assert client.get("/api/reference/r999").status_code == 400


class TestStaticFrontend:
    def test_serves_bundle_and_api(self, ws, tmp_path):
        (tmp_path / "index.html").write_text("<html><body>explorer</body></html>")
        app = create_app(checkpoint_path=ws["ckpt"], frontend_dir=tmp_path)
        with TestClient(app) as c:
            page = c.get("/")
            assert page.status_code == 200
            assert "explorer" in page.text
            assert c.get("/api/meta").status_code == 200
