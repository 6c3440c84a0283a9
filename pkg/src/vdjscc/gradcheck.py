"""Central finite-difference checks of reverse-mode gradients."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from . import multiscale as ms
from . import st_transformer as stt
from . import token_select as ts
from .autodiff import Tensor
from .config import PipelineConfig, TubeletConfig
from .errors import ConfigError
from .params import ParamStore

FD_STEP = 1e-5
PRIMITIVE_TOL = 1e-4
PIPELINE_TOL = 1e-3
MAX_K = 64


def rel_error(analytic, numeric) -> float:
    """max |a - n| / max(1, |n|) elementwise."""
    a, n = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1.0, np.abs(n))))


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, step: float = FD_STEP, elements=None) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. entries of ``t`` (all, or the flat ``elements``)."""
    flat = t.data.reshape(-1)
    picks = range(flat.size) if elements is None else elements
    out = np.zeros(len(picks)) if elements is not None else np.zeros(flat.size)
    with ad.no_grad():
        for j, i in enumerate(picks):
            orig = flat[i]
            flat[i] = orig + step
            up = fn().item()
            flat[i] = orig - step
            down = fn().item()
            flat[i] = orig
            out[j if elements is not None else i] = (up - down) / (2 * step)
    return out if elements is not None else out.reshape(t.shape)


def check(fn: Callable[[], Tensor], inputs: Sequence[Tensor], step: float = FD_STEP) -> float:
    """Max relative error over all inputs of the analytic vs numeric gradient of ``fn``."""
    grads = ad.backward(fn(), wrt=inputs)
    return max(rel_error(grads[t], numeric_grad(fn, t, step)) for t in inputs)


def _rand(rng, *shape, scale=1.0) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


def primitive_cases(seed: int = 0) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    # each case contracts the op output with a fixed random weight so every element matters
    rng = np.random.default_rng(seed)
    cases = {}

    a, b = _rand(rng, 4, 5), _rand(rng, 5, 3)
    cases["matmul"] = (lambda a=a, b=b: ad.sum_all(ad.matmul(a, b)), [a, b])
    ba, bb = _rand(rng, 2, 3, 4), _rand(rng, 4, 2)
    w_bm = rng.normal(size=(2, 3, 2))
    cases["matmul_batched"] = (lambda: ad.sum_all(ad.matmul(ba, bb) * Tensor(w_bm)), [ba, bb])

    x = _rand(rng, 3, 4)
    w_sm = rng.normal(size=(3, 4))
    cases["softmax"] = (lambda: ad.sum_all(ad.softmax(x, axis=-1) * Tensor(w_sm)), [x])
    x0 = _rand(rng, 3, 4)
    cases["softmax_axis0"] = (lambda: ad.sum_all(ad.softmax(x0, axis=0) * Tensor(w_sm)), [x0])

    xl, g, bl = _rand(rng, 2, 3, 6), _rand(rng, 6, scale=0.5), _rand(rng, 6)
    w_ln = rng.normal(size=(2, 3, 6))
    cases["layer_norm"] = (lambda: ad.sum_all(ad.layer_norm(xl, g, bl) * Tensor(w_ln)), [xl, g, bl])

    xa, ya = _rand(rng, 3, 4), _rand(rng, 4)
    w_add = rng.normal(size=(3, 4))
    cases["add"] = (lambda: ad.sum_all((xa + ya) * Tensor(w_add)), [xa, ya])
    xm, ym = _rand(rng, 3, 4), _rand(rng, 3, 4)
    cases["mul"] = (lambda: ad.sum_all(xm * ym), [xm, ym])
    xd, yd = _rand(rng, 3, 4), Tensor(rng.uniform(1.0, 2.0, size=(3, 1)), requires_grad=True)
    cases["div"] = (lambda: ad.sum_all((xd / yd) * Tensor(w_add)), [xd, yd])

    xi, wi, bi = _rand(rng, 2, 3, 4), _rand(rng, 4, 5), _rand(rng, 5)
    w_lin = rng.normal(size=(2, 3, 5))
    cases["linear"] = (lambda: ad.sum_all(ad.linear(xi, wi, bi) * Tensor(w_lin)), [xi, wi, bi])

    xg = _rand(rng, 3, 5, scale=2.0)
    w_g = rng.normal(size=(3, 5))
    cases["gelu"] = (lambda: ad.sum_all(ad.gelu(xg) * Tensor(w_g)), [xg])
    xs = _rand(rng, 3, 5, scale=3.0)
    cases["sigmoid"] = (lambda: ad.sum_all(ad.sigmoid(xs) * Tensor(w_g)), [xs])
    xq = Tensor(rng.uniform(0.5, 2.0, size=(3, 5)), requires_grad=True)
    cases["sqrt"] = (lambda: ad.sum_all(ad.sqrt(xq) * Tensor(w_g)), [xq])
    cases["square"] = (lambda: ad.sum_all(ad.square(xg) * Tensor(w_g)), [xg])

    xmean = _rand(rng, 2, 3, 4)
    w_mean = rng.normal(size=(2, 4))
    cases["mean"] = (lambda: ad.sum_all(ad.mean(xmean, axis=1) * Tensor(w_mean)), [xmean])
    cases["sum"] = (lambda: ad.sum_all(xmean), [xmean])

    w_rs = rng.normal(size=(6, 4))
    cases["reshape"] = (lambda: ad.sum_all(ad.reshape(xmean, (6, 4)) * Tensor(w_rs)), [xmean])
    w_tr = rng.normal(size=(4, 2, 3))
    cases["transpose"] = (lambda: ad.sum_all(ad.transpose_axes(xmean, (2, 0, 1)) * Tensor(w_tr)), [xmean])
    c1, c2 = _rand(rng, 2, 3), _rand(rng, 2, 2)
    w_cat = rng.normal(size=(2, 5))
    cases["concat"] = (lambda: ad.sum_all(ad.concat([c1, c2], axis=-1) * Tensor(w_cat)), [c1, c2])

    xt = _rand(rng, 5, 3)
    idx = np.array([4, 0, 2, 0])
    w_ga = rng.normal(size=(4, 3))
    cases["gather"] = (lambda: ad.sum_all(ad.gather(xt, idx, axis=0) * Tensor(w_ga)), [xt])
    xb = _rand(rng, 2, 5, 3)
    idx_b = np.array([[0, 3], [4, 1]])
    w_gb = rng.normal(size=(2, 2, 3))
    cases["gather_batched"] = (lambda: ad.sum_all(ad.gather(xb, idx_b, axis=1) * Tensor(w_gb)), [xb])
    xsc = _rand(rng, 2, 3)
    w_sc = rng.normal(size=(5, 3))
    cases["scatter_zeros"] = (lambda: ad.sum_all(ad.scatter_zeros(xsc, [1, 3], 5) * Tensor(w_sc)), [xsc])
    w_sl = rng.normal(size=(2, 3, 2))
    cases["slice"] = (lambda: ad.sum_all(ad.slice_axis(xmean, 1, 3, axis=-1) * Tensor(w_sl)), [xmean])
    xbr = _rand(rng, 2, 1, 3)
    w_br = rng.normal(size=(2, 4, 3))
    cases["broadcast"] = (lambda: ad.sum_all(ad.broadcast_to(xbr, (2, 4, 3)) * Tensor(w_br)), [xbr])
    return cases


def module_cases(seed: int = 0) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    """Encoder layer, stacks, patch merging and token scoring at toy sizes (K=8, N=6, 2 heads)."""
    rng = np.random.default_rng(seed)
    K, heads = 8, 2
    store = ParamStore(seed)
    stt.init_layer(store, "layer", K)
    stt.init_stack(store, "stack", K, 1, 2, 4)
    ms.init_merge(store, "merge", K)
    ts.init_selector(store, "sel", K)
    for t in store.values():  # move away from the degenerate init so every path carries signal
        t.data = t.data + rng.normal(0.0, 0.3, size=t.shape)
    cases = {}

    x = _rand(rng, 3, 6, K)
    wl = rng.normal(size=(3, 6, K))
    layer_params = [t for n, t in store.items() if n.startswith("layer.")]
    cases["encoder_layer"] = (lambda: ad.sum_all(stt.encoder_layer(x, store, "layer", heads) * Tensor(wl)), [x] + layer_params)

    grid = _rand(rng, 2, 4, K)
    wg = rng.normal(size=(2, 4, K))
    stack_params = [t for n, t in store.items() if n.startswith("stack.")]
    cases["st_then_tt"] = (lambda: ad.sum_all(stt.st_then_tt(grid, store, "stack", heads, 1) * Tensor(wg)), [grid] + stack_params)
    cases["tt_then_st"] = (lambda: ad.sum_all(stt.tt_then_st(grid, store, "stack", heads, 1) * Tensor(wg)), [grid] + stack_params)

    f = _rand(rng, 2, 16, K)
    wm = rng.normal(size=(2, 16, K))
    merge_params = [t for n, t in store.items() if n.startswith("merge.")]

    def merge_round():
        fs = ms.patch_merge(f, store, "merge", 4, 4)
        return ad.sum_all(ms.patch_reverse_merge(fs, store, "merge", 4, 4) * Tensor(wm))

    cases["patch_merge"] = (merge_round, [f] + merge_params)

    s = _rand(rng, 2, 6, K)
    wp = rng.normal(size=(2, 6, 1))
    sel_params = [t for n, t in store.items() if n.startswith("sel.")]

    def scoring():
        local, glob = ts.split_features(s, store, "sel")
        return ad.sum_all(ts.score_tokens(local, glob, store, "sel") * Tensor(wp))

    cases["score_tokens"] = (scoring, [s] + sel_params)
    return cases


def toy_pipeline_config(K: int = 16) -> PipelineConfig:
    return PipelineConfig(
        tubelet=TubeletConfig(T=4, C=1, H=16, W=16, t=2, h=4, w=4, K=K),
        L=1,
        n_heads=2,
        c=4,
        gamma=0.5,
        snr_db=7.0,
    )


@dataclass
class PipelineCheck:
    max_rel_error: float
    checked: list[tuple[str, int, float]]  # (param name, flat index, rel error)


def pipeline_check(cfg: PipelineConfig | None = None, seed: int = 0, per_param: int = 1, n_random: int = 20) -> PipelineCheck:
    """End-to-end MSE gradient vs central differences on sampled parameter entries.

    The selection mask, the stop-gradient copy of the keep probabilities and
    the channel noise are frozen at their base-point values, so the loss is a
    smooth function of every parameter, including the scorer.
    """
    from . import pipeline
    from .training import mse_loss
    from .video_io import synthesize_clip

    cfg = cfg or toy_pipeline_config()
    if cfg.tubelet.K > MAX_K:
        raise ConfigError(f"gradient check refuses K={cfg.tubelet.K} > {MAX_K}")
    rng = np.random.default_rng(seed)
    params = pipeline.init_params(cfg, seed)
    for t in params.values():
        t.data = t.data + rng.normal(0.0, 0.1, size=t.shape)
    tc = cfg.tubelet
    clips = [synthesize_clip(seed + i, tc.T, tc.C, tc.H, tc.W).frames for i in range(2)]
    x = Tensor(np.stack(clips))
    with ad.no_grad():
        _, base = pipeline.forward(x, params, cfg, None)
    k = base.indices.shape[1]
    noise = pipeline.batch_noise(rng, 2, k, cfg.c, cfg.snr_db)

    def loss():
        out, _ = pipeline.forward(x, params, cfg, noise, mask_override=base.mask, p_ref=base.keep_probs)
        return mse_loss(x, out)

    names = list(params)
    grads = ad.backward(loss(), wrt=list(params.values()))
    picks = [(n, int(rng.integers(params[n].data.size))) for n in names for _ in range(per_param)]
    picks += [(n, int(rng.integers(params[n].data.size))) for n in rng.choice(names, size=n_random)]
    checked = []
    for name, i in picks:
        t = params[name]
        fd = numeric_grad(loss, t, elements=[i])[0]
        checked.append((name, i, rel_error(grads[t].reshape(-1)[i], fd)))
    return PipelineCheck(max(e for *_, e in checked), checked)


def run_suite(K: int = 16, seed: int = 0, corrupt: str | None = None) -> list[tuple[str, float, float]]:
    """All checks as ``(name, max_rel_error, tolerance)`` rows."""
    if K > MAX_K:
        raise ConfigError(f"gradient check refuses K={K} > {MAX_K} (toy dimensions only)")
    rows = []
    ctx = ad.corrupt_gradients(corrupt) if corrupt else contextlib.nullcontext()
    with ctx:
        for name, (fn, inputs) in {**primitive_cases(seed), **module_cases(seed)}.items():
            rows.append((name, check(fn, inputs), PRIMITIVE_TOL))
        res = pipeline_check(toy_pipeline_config(K), seed)
        rows.append(("pipeline", res.max_rel_error, PIPELINE_TOL))
    return rows
