"""Neural building blocks shared by the encoder and acoustic models.

Everything is composed from autodiff primitives, so gradients come for free
and are covered by one finite-difference suite.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, as_tensor, permute


# ---------------------------------------------------------------------------
# parameter creation


class ParamBank:
    """Creates uniquely named parameters with the standard initializers."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.params: dict[str, Parameter] = {}

    def _register(self, name: str, data: np.ndarray) -> Parameter:
        if name in self.params:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Parameter(name, data)
        self.params[name] = p
        return p

    def linear(self, name: str, fan_in: int, fan_out: int) -> Parameter:
        bound = 1.0 / np.sqrt(fan_in)
        return self._register(name, self.rng.uniform(-bound, bound, size=(fan_in, fan_out)))

    def bias(self, name: str, n: int) -> Parameter:
        return self._register(name, np.zeros(n))

    def ones(self, name: str, n: int) -> Parameter:
        return self._register(name, np.ones(n))

    def gaussian(self, name: str, shape: tuple[int, ...], std: float) -> Parameter:
        return self._register(name, self.rng.normal(0.0, std, size=shape))


# ---------------------------------------------------------------------------
# layers


def linear(x: Tensor, w: Parameter, b: Parameter | None = None) -> Tensor:
    return ad.affine(x, w, b)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return ad.softmax_op(x, axis=axis)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if x.shape[-1] < 2:
        raise ValueError("layer_norm needs last-dimension size >= 2")
    return ad.layer_norm_op(x, gain, bias, eps)


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention: softmax(q k^T / sqrt(d)) v.

    Accepts (n_q, d) operands or a stacked (B, n_q, d) batch.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValueError(
            f"attention shape mismatch: q{q.shape} k{k.shape} v{v.shape}")
    inv = 1.0 / np.sqrt(q.shape[-1])
    if q.ndim == 3:
        if k.ndim != 3 or v.ndim != 3 or q.shape[0] != k.shape[0]:
            raise ValueError("batched attention needs matching leading dims")
        scores = ad.scale(ad.bmm(q, permute(k, (0, 2, 1))), inv)
        return ad.bmm(softmax(scores, axis=-1), v)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("attention expects 2-D or 3-D operands")
    scores = ad.scale(ad.matmul(q, ad.transpose2d(k)), inv)
    return ad.matmul(softmax(scores, axis=-1), v)


def film(h: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """Feature-wise linear modulation: scale * h + shift (broadcasting)."""
    h, scale, shift = as_tensor(h), as_tensor(scale), as_tensor(shift)
    try:
        np.broadcast_shapes(h.shape, scale.shape, shift.shape)
    except ValueError as e:
        raise ValueError(f"film broadcast failure: {e}") from None
    return ad.add(ad.mul(scale, h), shift)


def conv1d_same(x: Tensor, w: Parameter, b: Parameter | None,
                kernel: int, dilation: int = 1) -> Tensor:
    """Dilated 1-D convolution over axis 0 with zero same-padding."""
    return ad.conv1d_op(x, w, b, kernel, dilation)


def time_embedding(t: float, dim: int) -> Tensor:
    """Sinusoidal embedding of a scalar time in [0, 1].

    dim/2 sin components over a geometric frequency ladder, then the matching
    cos components; the norm is sqrt(dim/2) for every t.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"time step {t} outside [0, 1]")
    if dim < 2 or dim % 2 != 0:
        raise ValueError("time embedding dimension must be even and >= 2")
    half = dim // 2
    if half == 1:
        freqs = np.array([1.0])
    else:
        freqs = np.exp(np.linspace(0.0, np.log(1000.0), half))
    ang = freqs * t
    return Tensor(np.concatenate([np.sin(ang), np.cos(ang)]))


def sinusoidal_positions(n: int, dim: int) -> np.ndarray:
    """Fixed transformer positional-encoding table, shape (n, dim)."""
    pos = np.arange(n)[:, None]
    i = np.arange(dim // 2)[None, :]
    ang = pos / np.power(10000.0, 2.0 * i / dim)
    table = np.zeros((n, dim))
    table[:, 0::2] = np.sin(ang)
    table[:, 1::2] = np.cos(ang)
    return table


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    """(T, d) -> (heads, T, d/heads)."""
    t_len, d = x.shape
    return permute(ad.reshape(x, (t_len, n_heads, d // n_heads)), (1, 0, 2))


def multi_head_attention(x_q: Tensor, x_kv: Tensor, p: dict[str, Parameter],
                         prefix: str, n_heads: int) -> Tensor:
    """Standard MHA; all heads run in one batched attention."""
    d = x_q.shape[-1]
    if d % n_heads != 0:
        raise ValueError("model width must divide evenly into heads")
    q = _split_heads(linear(x_q, p[f"{prefix}.wq"], p[f"{prefix}.bq"]), n_heads)
    k = _split_heads(linear(x_kv, p[f"{prefix}.wk"], p[f"{prefix}.bk"]), n_heads)
    v = _split_heads(linear(x_kv, p[f"{prefix}.wv"], p[f"{prefix}.bv"]), n_heads)
    merged = ad.reshape(permute(attention(q, k, v), (1, 0, 2)), (x_q.shape[0], d))
    return linear(merged, p[f"{prefix}.wo"], p[f"{prefix}.bo"])


def init_mha(bank: ParamBank, prefix: str, d: int):
    for nm in ("wq", "wk", "wv", "wo"):
        bank.linear(f"{prefix}.{nm}", d, d)
    for nm in ("bq", "bk", "bv", "bo"):
        bank.bias(f"{prefix}.{nm}", d)


def transformer_layer(x: Tensor, p: dict[str, Parameter], prefix: str,
                      n_heads: int) -> Tensor:
    """Pre-LN encoder layer: MHA + residual, then GELU feed-forward + residual."""
    xn = layer_norm(x, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    h = ad.add(x, multi_head_attention(xn, xn, p, f"{prefix}.attn", n_heads))
    hn = layer_norm(h, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
    ff = linear(ad.gelu(linear(hn, p[f"{prefix}.ff.w1"], p[f"{prefix}.ff.b1"])),
                p[f"{prefix}.ff.w2"], p[f"{prefix}.ff.b2"])
    return ad.add(h, ff)


def init_transformer_layer(bank: ParamBank, prefix: str, d: int, d_ff: int):
    bank.ones(f"{prefix}.ln1.g", d)
    bank.bias(f"{prefix}.ln1.b", d)
    init_mha(bank, f"{prefix}.attn", d)
    bank.ones(f"{prefix}.ln2.g", d)
    bank.bias(f"{prefix}.ln2.b", d)
    bank.linear(f"{prefix}.ff.w1", d, d_ff)
    bank.bias(f"{prefix}.ff.b1", d_ff)
    bank.linear(f"{prefix}.ff.w2", d_ff, d)
    bank.bias(f"{prefix}.ff.b2", d)


def l2_normalize_rows(x: Tensor) -> Tensor:
    norm = ad.sqrt(ad.tsum(ad.mul(x, x), axis=-1, keepdims=True))
    return ad.div(x, norm)


# ---------------------------------------------------------------------------
# optimization


class MomentumSgd:
    """Plain SGD with classical momentum: v <- mu v + g; p <- p - lr v."""

    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Parameter], grads: dict[str, np.ndarray]):
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            p.data = p.data - self.lr * v


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is <= max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for name in grads:
            grads[name] = grads[name] * scale
    return total
