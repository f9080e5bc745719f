"""Deterministic synthetic GPT-2 weights.

Mirrors `tokentrail::synthetic` bit for bit: every element is drawn from a
counter-based splitmix64 stream seeded by the FNV-1a hash of the tensor name,
mapped to `center + scale * (2u - 1)` in float64 and rounded to float32.
Tensors use the published checkpoint naming and Conv1D (in, out) layout.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)

SMALL = dict(n_layers=12, d_model=768, n_heads=12, vocab_size=50257, n_ctx=1024)
TINY = dict(n_layers=12, d_model=64, n_heads=4, vocab_size=50257, n_ctx=1024)


def fnv1a64(name: str) -> int:
    h = 0xCBF29CE484222325
    for b in name.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def uniform_stream(name: str, count: int, chunk: int = 1 << 22) -> np.ndarray:
    seed = np.uint64(fnv1a64(name))
    out = np.empty(count, dtype=np.float64)
    with np.errstate(over="ignore"):
        for start in range(0, count, chunk):
            stop = min(count, start + chunk)
            i = np.arange(start + 1, stop + 1, dtype=np.uint64)
            z = seed + i * GOLDEN
            z = (z ^ (z >> np.uint64(30))) * MIX1
            z = (z ^ (z >> np.uint64(27))) * MIX2
            z = z ^ (z >> np.uint64(31))
            out[start:stop] = (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
    return out


def tensor(name: str, shape, center: float, scale: float) -> np.ndarray:
    count = int(np.prod(shape))
    u = uniform_stream(name, count)
    vals = center + scale * (2.0 * u - 1.0)
    return vals.astype(np.float32).reshape(shape)


def tensor_specs(cfg):
    d, v, ctx = cfg["d_model"], cfg["vocab_size"], cfg["n_ctx"]
    specs = [
        ("wte.weight", (v, d), 0.0, 0.08),
        ("wpe.weight", (ctx, d), 0.0, 0.02),
    ]
    for b in range(cfg["n_layers"]):
        p = f"h.{b}."
        specs += [
            (p + "ln_1.weight", (d,), 1.0, 0.2),
            (p + "ln_1.bias", (d,), 0.0, 0.05),
            (p + "attn.c_attn.weight", (d, 3 * d), 0.0, 0.08),
            (p + "attn.c_attn.bias", (3 * d,), 0.0, 0.02),
            (p + "attn.c_proj.weight", (d, d), 0.0, 0.04),
            (p + "attn.c_proj.bias", (d,), 0.0, 0.02),
            (p + "ln_2.weight", (d,), 1.0, 0.2),
            (p + "ln_2.bias", (d,), 0.0, 0.05),
            (p + "mlp.c_fc.weight", (d, 4 * d), 0.0, 0.08),
            (p + "mlp.c_fc.bias", (4 * d,), 0.0, 0.02),
            (p + "mlp.c_proj.weight", (4 * d, d), 0.0, 0.04),
            (p + "mlp.c_proj.bias", (d,), 0.0, 0.02),
        ]
    specs += [
        ("ln_f.weight", (d,), 1.0, 0.2),
        ("ln_f.bias", (d,), 0.0, 0.05),
    ]
    return specs


def build(cfg):
    return {name: tensor(name, shape, c, s) for name, shape, c, s in tensor_specs(cfg)}
