"""End-to-end model assembly and checkpoint IO.

Three variants share one residual-stream layout:

  hybrid:    dense 24->64, +positional encoding, N Fourier-mixing encoder
             layers, GRU over time, last hidden state, dense 64->1
  gru_only:  dense 24->64, GRU, last hidden, dense 64->1
  ftt_only:  dense 24->64, +positional encoding, encoder layers,
             mean over time, dense 64->1

The regression head is linear; ``output_scale`` multiplies the head output
so the optimizer works on O(1) activations while predictions stay in label
units (cycles).
"""

import json
import struct
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from fttgru import nn
from fttgru.numerics import NumericsError, check_finite

VARIANTS = ("hybrid", "gru_only", "ftt_only")
DISPLAY_NAMES = {"hybrid": "FTT-GRU", "gru_only": "GRU-only", "ftt_only": "FTT-only"}

_CKPT_MAGIC = b"FTGRUCK1"


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    variant: str = "hybrid"
    seq_len: int = 30
    n_features: int = 24
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    gru_units: int = 64
    ffn_width: int = 128
    fnet_mode: bool = False
    output_scale: float = 1.0

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.seq_len < 1 or self.n_features < 1:
            raise ConfigError("seq_len and n_features must be >= 1")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.d_model % 2:
            raise ConfigError("d_model must be even (positional encoding pairs sin/cos)")
        if min(self.d_model, self.n_layers, self.n_heads, self.gru_units, self.ffn_width) < 1:
            raise ConfigError("model dimensions must be >= 1")
        if not (self.output_scale > 0 and np.isfinite(self.output_scale)):
            raise ConfigError("output_scale must be finite and positive")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d).validate()


@dataclass
class EncoderLayerParams:
    ln1_gamma: nn.Parameter
    ln1_beta: nn.Parameter
    filt_re: nn.Parameter
    filt_im: nn.Parameter
    proj_w: nn.Parameter
    proj_b: nn.Parameter
    ln2_gamma: nn.Parameter
    ln2_beta: nn.Parameter
    ffn1_w: nn.Parameter
    ffn1_b: nn.Parameter
    ffn2_w: nn.Parameter
    ffn2_b: nn.Parameter

    def params(self):
        return [self.ln1_gamma, self.ln1_beta, self.filt_re, self.filt_im,
                self.proj_w, self.proj_b, self.ln2_gamma, self.ln2_beta,
                self.ffn1_w, self.ffn1_b, self.ffn2_w, self.ffn2_b]


@dataclass
class ModelState:
    config: ModelConfig
    rng_seed: int
    input_w: nn.Parameter
    input_b: nn.Parameter
    pos_table: Optional[np.ndarray]
    encoder: List[EncoderLayerParams]
    gru: Optional[nn.GruParams]
    head_w: nn.Parameter
    head_b: nn.Parameter

    def parameters(self):
        out = [self.input_w, self.input_b]
        for layer in self.encoder:
            out.extend(layer.params())
        if self.gru is not None:
            out.extend(self.gru.params())
        out.extend([self.head_w, self.head_b])
        return out

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    def param_count(self):
        return sum(p.value.size for p in self.parameters())


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def build_model(config, seed):
    """Deterministically initialize a model; same (config, seed) gives
    bit-identical parameters."""
    config.validate()
    rng = np.random.default_rng([int(seed), 0])
    d, f, u = config.d_model, config.n_features, config.gru_units
    k_bins = config.seq_len // 2 + 1

    input_w = nn.Parameter("input.w", _glorot(rng, f, d, (f, d)))
    input_b = nn.Parameter("input.b", np.zeros(d))

    use_encoder = config.variant in ("hybrid", "ftt_only")
    use_gru = config.variant in ("hybrid", "gru_only")

    encoder = []
    if use_encoder:
        for i in range(config.n_layers):
            pfx = f"enc{i}."
            encoder.append(EncoderLayerParams(
                ln1_gamma=nn.Parameter(pfx + "ln1.gamma", np.ones(d)),
                ln1_beta=nn.Parameter(pfx + "ln1.beta", np.zeros(d)),
                # identity-gain start: the mixing is a no-op until trained
                filt_re=nn.Parameter(pfx + "filter.re", np.ones((config.n_heads, k_bins))),
                filt_im=nn.Parameter(pfx + "filter.im", np.zeros((config.n_heads, k_bins))),
                proj_w=nn.Parameter(pfx + "proj.w", _glorot(rng, d, d, (d, d))),
                proj_b=nn.Parameter(pfx + "proj.b", np.zeros(d)),
                ln2_gamma=nn.Parameter(pfx + "ln2.gamma", np.ones(d)),
                ln2_beta=nn.Parameter(pfx + "ln2.beta", np.zeros(d)),
                ffn1_w=nn.Parameter(pfx + "ffn1.w", _glorot(rng, d, config.ffn_width, (d, config.ffn_width))),
                ffn1_b=nn.Parameter(pfx + "ffn1.b", np.zeros(config.ffn_width)),
                ffn2_w=nn.Parameter(pfx + "ffn2.w", _glorot(rng, config.ffn_width, d, (config.ffn_width, d))),
                ffn2_b=nn.Parameter(pfx + "ffn2.b", np.zeros(d)),
            ))

    gru = None
    if use_gru:
        rec_limit = np.sqrt(1.0 / u)
        gru = nn.GruParams(
            w_z=nn.Parameter("gru.w_z", _glorot(rng, d, u, (d, u))),
            w_r=nn.Parameter("gru.w_r", _glorot(rng, d, u, (d, u))),
            w_h=nn.Parameter("gru.w_h", _glorot(rng, d, u, (d, u))),
            u_z=nn.Parameter("gru.u_z", rng.uniform(-rec_limit, rec_limit, (u, u))),
            u_r=nn.Parameter("gru.u_r", rng.uniform(-rec_limit, rec_limit, (u, u))),
            u_h=nn.Parameter("gru.u_h", rng.uniform(-rec_limit, rec_limit, (u, u))),
            b_z=nn.Parameter("gru.b_z", np.zeros(u)),
            b_r=nn.Parameter("gru.b_r", np.zeros(u)),
            b_h=nn.Parameter("gru.b_h", np.zeros(u)),
        )

    head_in = u if use_gru else d
    head_w = nn.Parameter("head.w", _glorot(rng, head_in, 1, (head_in, 1)))
    head_b = nn.Parameter("head.b", np.zeros(1))

    pos = nn.positional_encoding(config.seq_len, d) if use_encoder else None
    return ModelState(config, int(seed), input_w, input_b, pos, encoder, gru, head_w, head_b)


@dataclass
class EncoderLayerCaches:
    ln1: nn.LayerNormCache
    mix: nn.FourierMixCache
    ln2: nn.LayerNormCache
    ffn1: nn.DenseCache
    act: np.ndarray
    ffn2: nn.DenseCache


@dataclass
class ModelCaches:
    batch: int
    input_dense: nn.DenseCache
    encoder: List[EncoderLayerCaches]
    gru: Optional[nn.GruSeqCache]
    head: nn.DenseCache
    encoder_out: Optional[np.ndarray]
    gru_out: Optional[np.ndarray]
    last_hidden: Optional[np.ndarray]
    summary: np.ndarray = field(default=None)


def model_forward(state, x):
    """Map a window batch (B, seq_len, n_features) to RUL predictions (B,)."""
    cfg = state.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (cfg.seq_len, cfg.n_features):
        raise NumericsError(
            f"expected input (B, {cfg.seq_len}, {cfg.n_features}), got {x.shape}"
        )
    check_finite(x, "model input")
    b, t, _ = x.shape
    d = cfg.d_model

    flat, c_in = nn.dense_forward(x.reshape(b * t, -1), state.input_w, state.input_b)
    cur = flat.reshape(b, t, d)
    if state.pos_table is not None:
        cur = cur + state.pos_table[None, :, :]

    enc_caches = []
    for layer in state.encoder:
        normed, c_ln1 = nn.layer_norm_forward(cur, layer.ln1_gamma, layer.ln1_beta)
        mixed, c_mix = nn.fourier_mix_forward(
            normed, layer.filt_re, layer.filt_im, layer.proj_w, layer.proj_b,
            cfg.n_heads, cfg.fnet_mode,
        )
        cur = cur + mixed
        normed2, c_ln2 = nn.layer_norm_forward(cur, layer.ln2_gamma, layer.ln2_beta)
        f1, c_f1 = nn.dense_forward(normed2.reshape(b * t, d), layer.ffn1_w, layer.ffn1_b)
        act, c_act = nn.tanh_forward(f1)
        f2, c_f2 = nn.dense_forward(act, layer.ffn2_w, layer.ffn2_b)
        cur = cur + f2.reshape(b, t, d)
        enc_caches.append(EncoderLayerCaches(c_ln1, c_mix, c_ln2, c_f1, c_act, c_f2))
    encoder_out = cur if state.encoder else None

    c_gru = None
    gru_out = None
    last_hidden = None
    if state.gru is not None:
        gru_out, last_hidden, c_gru = nn.gru_sequence(cur, None, state.gru)
        summary = last_hidden
    else:
        summary = cur.mean(axis=1)

    head_out, c_head = nn.dense_forward(summary, state.head_w, state.head_b)
    pred = head_out[:, 0] * cfg.output_scale
    caches = ModelCaches(b, c_in, enc_caches, c_gru, c_head,
                         encoder_out, gru_out, last_hidden, summary)
    return pred, caches


def model_backward(state, dpred, caches):
    """Accumulate parameter gradients for an upstream dL/dpred of shape (B,)."""
    cfg = state.config
    b = caches.batch
    if dpred.shape != (b,):
        raise NumericsError(f"expected dpred shape ({b},), got {dpred.shape}")
    t, d = cfg.seq_len, cfg.d_model

    d_head = dpred[:, None] * cfg.output_scale
    d_summary = nn.dense_backward(d_head, caches.head)

    if state.gru is not None:
        d_all = np.zeros_like(caches.gru_out)
        dcur = nn.gru_backward(d_all, d_summary, caches.gru)
    else:
        dcur = np.broadcast_to(d_summary[:, None, :] / t, (b, t, d)).copy()

    for layer_cache in reversed(caches.encoder):
        d_f2 = dcur.reshape(b * t, d)
        d_act = nn.dense_backward(d_f2, layer_cache.ffn2)
        d_f1 = nn.tanh_backward(d_act, layer_cache.act)
        d_norm2 = nn.dense_backward(d_f1, layer_cache.ffn1).reshape(b, t, d)
        dcur = dcur + nn.layer_norm_backward(d_norm2, layer_cache.ln2)
        d_norm1 = nn.fourier_mix_backward(dcur, layer_cache.mix)
        dcur = dcur + nn.layer_norm_backward(d_norm1, layer_cache.ln1)

    nn.dense_backward(dcur.reshape(b * t, d), caches.input_dense)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(state, path):
    """Flat binary container: magic, header JSON (config + parameter index),
    then each parameter's row-major float64 payload. Round-trips bit-exactly."""
    header = {
        "format_version": 1,
        "config": state.config.to_dict(),
        "rng_seed": state.rng_seed,
        "params": [{"name": p.name, "shape": list(p.value.shape)} for p in state.parameters()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in state.parameters():
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        if header.get("format_version") != 1:
            raise ConfigError(f"{path}: unsupported checkpoint version")
        config = ModelConfig.from_dict(header["config"])
        state = build_model(config, header["rng_seed"])
        params = state.parameters()
        if [p.name for p in params] != [e["name"] for e in header["params"]]:
            raise ConfigError(f"{path}: parameter index mismatches config")
        for p, entry in zip(params, header["params"]):
            shape = tuple(entry["shape"])
            if p.value.shape != shape:
                raise ConfigError(f"{path}: shape mismatch for {p.name}")
            raw = fh.read(p.value.size * 8)
            if len(raw) != p.value.size * 8:
                raise ConfigError(f"{path}: truncated payload at {p.name}")
            p.value = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
            p.grad = np.zeros_like(p.value)
        if fh.read(1):
            raise ConfigError(f"{path}: trailing bytes after last parameter")
    return state
