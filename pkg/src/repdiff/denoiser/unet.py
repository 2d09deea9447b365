"""Conditional U-Net noise predictor with explicit forward/backward passes.

One residual block per resolution stage on each side plus a bottleneck
block; downsampling by 2x2 average pooling, upsampling by nearest
neighbour, skip concatenation at equal resolution. The conditioning
vector enters either as per-block channel scale/shift after the first
normalization (``add_after_norm``) or folded once into the timestep
embedding (``concat_to_time``).

Parameters live in a flat name -> array dict; names are stable and are
the checkpoint serialization layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from repdiff.denoiser import layers as L
from repdiff.denoiser.config import DenoiserConfig
from repdiff.diffusion import DiffusionSample
from repdiff.errors import DimensionMismatchError, NumericalError, ValidationError

# Scaled by 1/sqrt(cond_dim). Small but nonzero: the conditioning path
# must be live at init, yet weak enough that a run whose conditioning
# inputs are always dropped stays effectively unconditional.
COND_PROJ_STD = 0.01


def _block_plan(cfg: DenoiserConfig) -> list[tuple[str, int, int]]:
    """(name, c_in, c_out) for every residual block, in forward order."""
    ch = [cfg.base_width] + cfg.stage_channels()
    plan = [(f"down{i}", ch[i - 1], ch[i]) for i in range(1, cfg.depth + 1)]
    plan.append(("mid", ch[cfg.depth], ch[cfg.depth]))
    for i in range(cfg.depth, 0, -1):
        plan.append((f"up{i}", 2 * ch[i], ch[i - 1]))
    return plan


def param_specs(cfg: DenoiserConfig) -> list[tuple[str, tuple, str]]:
    """Ordered (name, shape, init) triples defining the parameter layout."""
    te, th, d = cfg.time_embed_dim, cfg.time_hidden, cfg.cond_dim
    w0, ci = cfg.base_width, cfg.image_channels
    specs = [
        ("time_mlp.w1", (te, th), "he"),
        ("time_mlp.b1", (th,), "zeros"),
        ("time_mlp.w2", (th, th), "he"),
        ("time_mlp.b2", (th,), "zeros"),
    ]
    if cfg.injection == "concat_to_time":
        specs += [("cond_mlp.w", (d, th), "cond"), ("cond_mlp.b", (th,), "zeros")]
    specs += [("stem.w", (3, 3, ci, w0), "he_conv"), ("stem.b", (w0,), "zeros")]
    for name, cin, cout in _block_plan(cfg):
        specs += [(f"{name}.gn1.g", (cin,), "ones"), (f"{name}.gn1.b", (cin,), "zeros")]
        if cfg.injection == "add_after_norm":
            specs += [
                (f"{name}.cond.w", (d, 2 * cin), "cond"),
                (f"{name}.cond.b", (2 * cin,), "zeros"),
            ]
        specs += [
            (f"{name}.conv1.w", (3, 3, cin, cout), "he_conv"),
            (f"{name}.conv1.b", (cout,), "zeros"),
            (f"{name}.time.w", (th, cout), "he"),
            (f"{name}.time.b", (cout,), "zeros"),
            (f"{name}.gn2.g", (cout,), "ones"),
            (f"{name}.gn2.b", (cout,), "zeros"),
            (f"{name}.conv2.w", (3, 3, cout, cout), "he_conv"),
            (f"{name}.conv2.b", (cout,), "zeros"),
        ]
        if cin != cout:
            specs += [
                (f"{name}.skip.w", (cin, cout), "he"),
                (f"{name}.skip.b", (cout,), "zeros"),
            ]
    specs += [
        ("head.gn.g", (w0,), "ones"),
        ("head.gn.b", (w0,), "zeros"),
        ("head.conv.w", (3, 3, w0, ci), "he_conv"),
        ("head.conv.b", (ci,), "zeros"),
    ]
    return specs


def init_params(cfg: DenoiserConfig, seed: int, dtype=np.float32) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape, kind in param_specs(cfg):
        if kind == "zeros":
            arr = np.zeros(shape)
        elif kind == "ones":
            arr = np.ones(shape)
        elif kind == "he_conv":
            fan_in = 9 * shape[2]
            arr = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif kind == "he":
            arr = rng.standard_normal(shape) * np.sqrt(2.0 / shape[0])
        elif kind == "cond":
            arr = rng.standard_normal(shape) * (COND_PROJ_STD / np.sqrt(shape[0]))
        else:
            raise ValueError(f"unknown init kind {kind}")
        params[name] = arr.astype(dtype)
    return params


def _resblock_forward(name, params, x, st, cond, cfg, keep):
    p = lambda k: params[f"{name}.{k}"]
    cin = x.shape[-1]
    film = cfg.injection == "add_after_norm"
    a1, gn1_cache = L.groupnorm_forward(x, p("gn1.g"), p("gn1.b"))
    if film:
        sb = L.linear_forward(cond, p("cond.w"), p("cond.b"))
        scale, shift = sb[:, :cin], sb[:, cin:]
        a2 = L.film_forward(a1, scale, shift)
    else:
        scale = None
        a2 = a1
    a3 = L.silu_forward(a2)
    a4 = L.conv3_forward(a3, p("conv1.w"), p("conv1.b"))
    a5, gn2_cache = L.groupnorm_forward(a4, p("gn2.g"), p("gn2.b"))
    tb = L.linear_forward(st, p("time.w"), p("time.b"))
    a6 = a5 + tb[:, None, None, :]
    a7 = L.silu_forward(a6)
    a8 = L.conv3_forward(a7, p("conv2.w"), p("conv2.b"))
    if f"{name}.skip.w" in params:
        sk = L.conv1_forward(x, p("skip.w"), p("skip.b"))
    else:
        sk = x
    out = a8 + sk
    cache = (x, gn1_cache, a1, scale, a2, a3, gn2_cache, a6, a7) if keep else None
    return out, cache


def _resblock_backward(name, params, grads, dout, cache, st, cond, cfg, dst, dcond):
    p = lambda k: params[f"{name}.{k}"]
    g = lambda k: f"{name}.{k}"
    x, gn1_cache, a1, scale, a2, a3, gn2_cache, a6, a7 = cache
    film = cfg.injection == "add_after_norm"

    da7, grads[g("conv2.w")], grads[g("conv2.b")] = L.conv3_backward(dout, a7, p("conv2.w"))
    da6 = L.silu_backward(da7, a6)
    dtb = da6.sum(axis=(1, 2))
    dst_part, grads[g("time.w")], grads[g("time.b")] = L.linear_backward(dtb, st, p("time.w"))
    dst += dst_part
    da4, grads[g("gn2.g")], grads[g("gn2.b")] = L.groupnorm_backward(da6, p("gn2.g"), gn2_cache)
    da3, grads[g("conv1.w")], grads[g("conv1.b")] = L.conv3_backward(da4, a3, p("conv1.w"))
    da2 = L.silu_backward(da3, a2)
    if film:
        da1, dscale, dshift = L.film_backward(da2, a1, scale)
        dsb = np.concatenate([dscale, dshift], axis=1)
        dcond_part, grads[g("cond.w")], grads[g("cond.b")] = L.linear_backward(
            dsb, cond, p("cond.w")
        )
        dcond += dcond_part
    else:
        da1 = da2
    dx, grads[g("gn1.g")], grads[g("gn1.b")] = L.groupnorm_backward(da1, p("gn1.g"), gn1_cache)
    if f"{name}.skip.w" in params:
        dsk, grads[g("skip.w")], grads[g("skip.b")] = L.conv1_backward(dout, x, p("skip.w"))
        dx += dsk
    else:
        dx += dout
    return dx


def forward(cfg, params, x, t, cond, keep_cache=False):
    """Predict noise for a batch: x (N, S, S, C), t (N,), cond (N, d).

    Returns (eps, cache); cache is None unless keep_cache.
    """
    dtype = params["stem.w"].dtype
    x = np.ascontiguousarray(x, dtype=dtype)
    cond = np.ascontiguousarray(cond, dtype=dtype)
    temb0 = L.timestep_embedding(t, cfg.time_embed_dim, dtype=dtype)
    h1 = L.linear_forward(temb0, params["time_mlp.w1"], params["time_mlp.b1"])
    h2 = L.silu_forward(h1)
    temb = L.linear_forward(h2, params["time_mlp.w2"], params["time_mlp.b2"])
    if cfg.injection == "concat_to_time":
        temb = temb + L.linear_forward(cond, params["cond_mlp.w"], params["cond_mlp.b"])
    st = L.silu_forward(temb)

    h = L.conv3_forward(x, params["stem.w"], params["stem.b"])
    stem_in = x

    plan = _block_plan(cfg)
    down_names = [n for n, _, _ in plan if n.startswith("down")]
    up_names = [n for n, _, _ in plan if n.startswith("up")]
    block_caches = {}
    skips = []
    for name in down_names:
        h, bc = _resblock_forward(name, params, h, st, cond, cfg, keep_cache)
        block_caches[name] = bc
        skips.append(h)
        h = L.avgpool2_forward(h)
    h, block_caches["mid"] = _resblock_forward("mid", params, h, st, cond, cfg, keep_cache)
    for name in up_names:
        i = int(name[2:])
        h = L.upsample2_forward(h)
        h = np.concatenate([h, skips[i - 1]], axis=-1)
        h, bc = _resblock_forward(name, params, h, st, cond, cfg, keep_cache)
        block_caches[name] = bc
    hn, head_gn_cache = L.groupnorm_forward(h, params["head.gn.g"], params["head.gn.b"])
    ha = L.silu_forward(hn)
    eps = L.conv3_forward(ha, params["head.conv.w"], params["head.conv.b"])

    cache = None
    if keep_cache:
        cache = {
            "cfg": cfg,
            "x": stem_in,
            "t": t,
            "cond": cond,
            "temb0": temb0,
            "h1": h1,
            "h2": h2,
            "temb": temb,
            "st": st,
            "blocks": block_caches,
            "head": (h, head_gn_cache, hn, ha),
        }
    return eps, cache


def backward(cfg, params, cache, deps):
    """Gradient of a scalar loss through forward(); deps = dL/d eps.

    Returns (grads dict, dx, dcond)."""
    grads: dict[str, np.ndarray] = {}
    st = cache["st"]
    cond = cache["cond"]
    dst = np.zeros_like(st)
    dcond = np.zeros_like(cond)

    h, head_gn_cache, hn, ha = cache["head"]
    dha, grads["head.conv.w"], grads["head.conv.b"] = L.conv3_backward(
        deps, ha, params["head.conv.w"]
    )
    dhn = L.silu_backward(dha, hn)
    dh, grads["head.gn.g"], grads["head.gn.b"] = L.groupnorm_backward(
        dhn, params["head.gn.g"], head_gn_cache
    )

    plan = _block_plan(cfg)
    ch = [cfg.base_width] + cfg.stage_channels()
    up_names = [n for n, _, _ in plan if n.startswith("up")]
    down_names = [n for n, _, _ in plan if n.startswith("down")]
    dskips: dict[int, np.ndarray] = {}
    for name in reversed(up_names):
        i = int(name[2:])
        dcat = _resblock_backward(
            name, params, grads, dh, cache["blocks"][name], st, cond, cfg, dst, dcond
        )
        split = dcat.shape[-1] - ch[i]
        dskips[i] = dcat[..., split:]
        dh = L.upsample2_backward(dcat[..., :split])
    dh = _resblock_backward(
        "mid", params, grads, dh, cache["blocks"]["mid"], st, cond, cfg, dst, dcond
    )
    for name in reversed(down_names):
        i = int(name[4:])
        dh = L.avgpool2_backward(dh)
        dh += dskips[i]
        dh = _resblock_backward(
            name, params, grads, dh, cache["blocks"][name], st, cond, cfg, dst, dcond
        )
    dx, grads["stem.w"], grads["stem.b"] = L.conv3_backward(dh, cache["x"], params["stem.w"])

    dtemb = L.silu_backward(dst, cache["temb"])
    if cfg.injection == "concat_to_time":
        dcond_part, grads["cond_mlp.w"], grads["cond_mlp.b"] = L.linear_backward(
            dtemb, cond, params["cond_mlp.w"]
        )
        dcond += dcond_part
    dh2, grads["time_mlp.w2"], grads["time_mlp.b2"] = L.linear_backward(
        dtemb, cache["h2"], params["time_mlp.w2"]
    )
    dh1 = L.silu_backward(dh2, cache["h1"])
    _, grads["time_mlp.w1"], grads["time_mlp.b1"] = L.linear_backward(
        dh1, cache["temb0"], params["time_mlp.w1"]
    )
    return grads, dx, dcond


@dataclass
class DenoiserHandle:
    """A built denoiser: config plus its parameter collection."""

    config: DenoiserConfig
    params: dict[str, np.ndarray] = field(repr=False)

    @property
    def parameter_count(self) -> int:
        return sum(int(a.size) for a in self.params.values())

    def predict_batch(self, x: np.ndarray, t: np.ndarray, cond: np.ndarray) -> np.ndarray:
        """(N, S, S, C) NHWC batch in, predicted noise out; no cache kept."""
        self._check_cond(cond)
        eps, _ = forward(self.config, self.params, x, t, cond)
        return eps

    def loss_grads(self, x, t, cond, eps_true):
        """MSE loss and full gradient set for one batch; used by the trainer."""
        eps, cache = forward(self.config, self.params, x, t, cond, keep_cache=True)
        diff = eps - eps_true
        loss = float(np.mean(diff.astype(np.float64) ** 2))
        deps = (2.0 / diff.size) * diff
        grads, dx, dcond = backward(self.config, self.params, cache, deps)
        return loss, grads, dx, dcond

    def _check_cond(self, cond: np.ndarray) -> None:
        if cond.shape[-1] != self.config.cond_dim:
            raise DimensionMismatchError(
                f"condition dim {cond.shape[-1]} != cond_dim {self.config.cond_dim}"
            )

    def export_parameters(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def import_parameters(self, named: dict[str, np.ndarray]) -> None:
        expected = {name: shape for name, shape, _ in param_specs(self.config)}
        if set(named) != set(expected):
            missing = sorted(set(expected) - set(named))
            extra = sorted(set(named) - set(expected))
            raise ValidationError(f"parameter name mismatch; missing={missing}, extra={extra}")
        for name, arr in named.items():
            if tuple(arr.shape) != tuple(expected[name]):
                raise ValidationError(
                    f"parameter {name}: shape {arr.shape} != expected {expected[name]}"
                )
        self.params = {k: np.asarray(v) for k, v in named.items()}


def build_denoiser(config: DenoiserConfig, seed: int, dtype=np.float32) -> DenoiserHandle:
    """Deterministically initialize a denoiser; same (config, seed) gives
    identical parameters."""
    config.validate()
    return DenoiserHandle(config=config, params=init_params(config, seed, dtype=dtype))


def predict_noise(denoiser: DenoiserHandle, x_t, t: int, condition) -> np.ndarray:
    """Single-sample prediction: (C, H, W) in, (C, H, W) noise estimate out."""
    data = x_t.data if isinstance(x_t, DiffusionSample) else np.asarray(x_t)
    if isinstance(x_t, DiffusionSample) and x_t.t != t:
        raise ValidationError(f"sample timestep {x_t.t} disagrees with t={t}")
    if t < 0:
        raise ValidationError(f"timestep must be >= 0, got {t}")
    cfg = denoiser.config
    if data.shape != (cfg.image_channels, cfg.image_size, cfg.image_size):
        raise DimensionMismatchError(
            f"input shape {data.shape} does not match config "
            f"({cfg.image_channels}, {cfg.image_size}, {cfg.image_size})"
        )
    values = np.asarray(getattr(condition, "values", condition), dtype=np.float64)
    if values.ndim != 1 or values.shape[0] != cfg.cond_dim:
        raise DimensionMismatchError(
            f"condition dim {values.shape} != cond_dim {cfg.cond_dim}"
        )
    x = np.moveaxis(data, 0, -1)[None, ...]
    eps = denoiser.predict_batch(x, np.array([t]), values[None, :].astype(np.float32))
    if not np.isfinite(eps).all():
        raise NumericalError("denoiser produced non-finite output")
    return np.moveaxis(eps[0], -1, 0)


def count_receptive_conditioning(denoiser: DenoiserHandle) -> int:
    """Number of network sites where the conditioning vector is injected."""
    if denoiser.config.injection == "concat_to_time":
        return 1
    return 2 * denoiser.config.depth + 1
