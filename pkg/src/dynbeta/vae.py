"""Encoder/decoder stack, reparameterization, loss terms and one training step.

Layer widths are listed as *output* widths per layer, so the default
encoder is nine layers 193->193->128->128->64->32->16->8->4->(2+2) and the
decoder ten layers 2->2->4->8->16->32->32->64->128->128->193.  The encoder's
last layer emits the posterior mean and log-variance side by side.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import clustering_loss_grad
from .errors import ConfigError, InputError, NumericalError, ShapeError
from .numerics import AdamState, DenseLayer, adam_step, init_params, linear_backward, sigmoid
from .signal import atomic_write_bytes

LATENT_DIM = 2
INPUT_WIDTH = 193
ENCODER_WIDTHS = (193, 128, 128, 64, 32, 16, 8, 4, 2 * LATENT_DIM)
DECODER_WIDTHS = (2, 4, 8, 16, 32, 32, 64, 128, 128, 193)
MAGIC = b"DBV1"


@dataclass
class ModelParams:
    encoder: list
    decoder: list

    @classmethod
    def init(
        cls,
        seed=0,
        input_width: int = INPUT_WIDTH,
        encoder_widths=ENCODER_WIDTHS,
        decoder_widths=DECODER_WIDTHS,
        width_scale: float = 1.0,
    ) -> "ModelParams":
        enc = list(encoder_widths)
        dec = list(decoder_widths)
        if width_scale != 1.0:
            enc = [max(1, math.ceil(w * width_scale)) for w in enc[:-1]] + enc[-1:]
            dec = [max(1, math.ceil(w * width_scale)) for w in dec[:-1]] + dec[-1:]
        if enc[-1] != 2 * LATENT_DIM:
            raise ConfigError(f"encoder must end in {2 * LATENT_DIM} units (mean + log-variance)")
        if dec[-1] != input_width:
            raise ConfigError("decoder output width must equal the input width")
        rng = np.random.default_rng(seed)
        encoder, width = [], input_width
        for i, w in enumerate(enc):
            act = "identity" if i == len(enc) - 1 else "relu"
            encoder.append(init_params((width, w, act), rng))
            width = w
        decoder, width = [], LATENT_DIM
        for i, w in enumerate(dec):
            act = "sigmoid" if i == len(dec) - 1 else "relu"
            decoder.append(init_params((width, w, act), rng))
            width = w
        return cls(encoder, decoder)

    @property
    def layers(self) -> list:
        return self.encoder + self.decoder

    @property
    def input_width(self) -> int:
        return self.encoder[0].in_width

    def flat(self) -> list:
        """Parameter arrays in storage order: W, b per layer, encoder then decoder."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def with_flat(self, arrays) -> "ModelParams":
        layers = [
            DenseLayer(arrays[2 * i], arrays[2 * i + 1], layer.activation)
            for i, layer in enumerate(self.layers)
        ]
        n = len(self.encoder)
        return ModelParams(layers[:n], layers[n:])

    def zeros_like(self) -> "ModelParams":
        return self.with_flat([np.zeros_like(a) for a in self.flat()])

    def architecture(self) -> dict:
        def describe(layers):
            return [
                {"in": l.in_width, "out": l.out_width, "activation": l.activation} for l in layers
            ]

        return {
            "input_width": self.input_width,
            "latent_dim": LATENT_DIM,
            "encoder": describe(self.encoder),
            "decoder": describe(self.decoder),
        }


def _forward(layers, x):
    """Run ``layers``; return final pre-activation and per-layer (input, pre) caches."""
    cache = []
    h = pre = x
    for layer in layers:
        pre = h @ layer.weight.T + layer.bias
        cache.append((h, pre))
        h = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
    return pre, cache


def _backward(layers, cache, grad_pre_last):
    """Backpropagate a gradient w.r.t. the last pre-activation; returns (grads, grad_input)."""
    grads = [None] * (2 * len(layers))
    g = grad_pre_last
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        h, pre = cache[i]
        if i < len(layers) - 1 and layer.activation == "relu":
            g = g * (pre > 0)
        gw, gb, g = linear_backward(layer.weight, h, g)
        grads[2 * i] = gw
        grads[2 * i + 1] = gb
    return grads, g


def _check_width(params: ModelParams, x: np.ndarray):
    if x.ndim != 2 or x.shape[1] != params.input_width:
        got = x.shape[1] if x.ndim == 2 else x.shape
        raise ShapeError(f"model expects {params.input_width} input features, got {got}")


def encode(params: ModelParams, x) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and log-variance, each ``(N, 2)``."""
    x = np.asarray(x, dtype=np.float64)
    _check_width(params, x)
    out, _ = _forward(params.encoder, x)
    return out[:, :LATENT_DIM], out[:, LATENT_DIM:]


def reparameterize(mu, logvar, rng) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu {mu.shape} and logvar {logvar.shape} differ")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return mu + np.exp(0.5 * logvar) * rng.standard_normal(mu.shape)


# keeps decoded values strictly inside (0, 1) where sigmoid would round to 1.0
_PROB_EPS = 1e-15


def decode(params: ModelParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != LATENT_DIM:
        raise ShapeError(f"latent codes must be (N, {LATENT_DIM}), got {z.shape}")
    logits, _ = _forward(params.decoder, z)
    return np.clip(sigmoid(logits), _PROB_EPS, 1.0 - _PROB_EPS)


def recon_loss(x, x_hat, kind: str = "bce", reduction: str = "sum") -> float:
    """Reconstruction loss, summed (or averaged) over features and averaged over the batch.

    ``kind="bce"`` is the Bernoulli negative log-likelihood; ``"mse"`` is the
    squared error.
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"x {x.shape} and reconstruction {x_hat.shape} differ")
    if kind == "bce":
        if np.any(x_hat <= 0) or np.any(x_hat >= 1) or not np.all(np.isfinite(x_hat)):
            raise NumericalError("reconstruction entries must lie strictly inside (0, 1)")
        per = -(x * np.log(x_hat) + (1.0 - x) * np.log1p(-x_hat))
    elif kind == "mse":
        per = (x - x_hat) ** 2
    else:
        raise ConfigError(f"unknown reconstruction loss {kind!r}")
    per_sample = per.sum(axis=1) if reduction == "sum" else per.mean(axis=1)
    return float(per_sample.mean())


def kld_loss(mu, logvar) -> float:
    """KL divergence to the standard normal prior, summed over dims, mean over batch."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu {mu.shape} and logvar {logvar.shape} differ")
    if not np.all(np.isfinite(logvar)):
        raise NumericalError("non-finite log-variance")
    per = -0.5 * (1.0 + logvar - mu * mu - np.exp(logvar))
    return float(per.sum(axis=1).mean())


@dataclass(frozen=True)
class StepLosses:
    rec: float
    reg: float
    cls: float

    @property
    def as_tuple(self):
        return (self.rec, self.reg, self.cls)


def loss_and_grads(
    params: ModelParams,
    x: np.ndarray,
    noise: np.ndarray,
    beta: float,
    gamma: float = 0.0,
    labelled=None,
    recon: str = "bce",
    reduction: str = "sum",
    cls_epsilon: float = 1e-8,
):
    """Composite loss ``rec + beta*reg + gamma*cls`` and its exact gradient.

    ``noise`` is the standard-normal draw used by the reparameterization, so
    the result is a deterministic function of the parameters.  ``labelled``
    is ``(x_labelled, integer_labels)``; only posterior means of labelled
    rows enter the clustering term.
    Returns ``(StepLosses, grads)`` with grads in :meth:`ModelParams.flat` order.
    """
    n = x.shape[0]
    enc_out, enc_cache = _forward(params.encoder, x)
    mu = enc_out[:, :LATENT_DIM]
    logvar = enc_out[:, LATENT_DIM:]
    std = np.exp(0.5 * logvar)
    z = mu + std * noise
    logits, dec_cache = _forward(params.decoder, z)

    s = sigmoid(logits)
    nfeat = x.shape[1]
    scale = 1.0 if reduction == "sum" else 1.0 / nfeat
    if recon == "bce":
        # softplus(l) - x*l, stable for large |l|
        per = np.maximum(logits, 0) + np.log1p(np.exp(-np.abs(logits))) - x * logits
        g_logits = (s - x) * (scale / n)
    elif recon == "mse":
        per = (s - x) ** 2
        g_logits = 2.0 * (s - x) * s * (1.0 - s) * (scale / n)
    else:
        raise ConfigError(f"unknown reconstruction loss {recon!r}")
    l_rec = float(per.sum()) * scale / n
    var = std * std
    l_reg = float((-0.5 * (1.0 + logvar - mu * mu - var)).sum()) / n

    dec_grads, g_z = _backward(params.decoder, dec_cache, g_logits)
    g_enc = np.empty_like(enc_out)
    g_enc[:, :LATENT_DIM] = g_z + beta * mu / n
    g_enc[:, LATENT_DIM:] = g_z * noise * 0.5 * std + beta * 0.5 * (var - 1.0) / n
    enc_grads, _ = _backward(params.encoder, enc_cache, g_enc)

    l_cls = 0.0
    if gamma > 0:
        if labelled is None:
            raise ConfigError("gamma > 0 requires a labelled batch")
        xl, yl = labelled
        lab_out, lab_cache = _forward(params.encoder, xl)
        parts, g_mu = clustering_loss_grad(lab_out[:, :LATENT_DIM], yl, cls_epsilon)
        l_cls = parts.loss
        g_lab = np.zeros_like(lab_out)
        g_lab[:, :LATENT_DIM] = gamma * g_mu
        lab_grads, _ = _backward(params.encoder, lab_cache, g_lab)
        enc_grads = [a + b for a, b in zip(enc_grads, lab_grads)]

    return StepLosses(l_rec, l_reg, l_cls), enc_grads + dec_grads


def total_loss(losses: StepLosses, beta: float, gamma: float) -> float:
    return losses.rec + beta * losses.reg + gamma * losses.cls


def train_step(
    params: ModelParams,
    adam: AdamState,
    batch,
    beta: float,
    gamma: float = 0.0,
    labelled=None,
    rng=None,
    recon: str = "bce",
    reduction: str = "sum",
    cls_epsilon: float = 1e-8,
):
    """One Adam step on the composite objective.

    Returns ``(params, adam, StepLosses)``; the losses are those of this
    batch before the update.
    """
    if beta < 0 or gamma < 0:
        raise ConfigError("beta and gamma must be non-negative")
    if (labelled is not None) != (gamma > 0):
        raise ConfigError("a labelled batch must be given exactly when gamma > 0")
    x = np.asarray(batch, dtype=np.float64)
    _check_width(params, x)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    noise = rng.standard_normal((x.shape[0], LATENT_DIM))
    losses, grads = loss_and_grads(
        params, x, noise, beta, gamma, labelled, recon, reduction, cls_epsilon
    )
    if not all(math.isfinite(v) for v in losses.as_tuple):
        raise NumericalError(f"non-finite loss {losses}")
    flat, adam = adam_step(params.flat(), grads, adam)
    return params.with_flat(flat), adam, losses


# --- DBV1 container --------------------------------------------------------

def save_model(params: ModelParams, path, metadata: dict | None = None) -> None:
    """Write ``MAGIC | u32 header length | JSON header | float64 LE parameters``."""
    header = params.architecture()
    header["format"] = MAGIC.decode()
    header.update(metadata or {})
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.flat())
    atomic_write_bytes(path, MAGIC + struct.pack("<I", len(hbytes)) + hbytes + body)


def load_model(path) -> tuple[ModelParams, dict]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise InputError(f"{path}: not a DBV1 model file")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    values = np.frombuffer(data[8 + hlen :], dtype="<f8").astype(np.float64)
    offset = 0
    layers = []
    for part in ("encoder", "decoder"):
        for spec in header[part]:
            n_w = spec["out"] * spec["in"]
            if offset + n_w + spec["out"] > values.size:
                raise InputError(f"{path}: truncated parameter block")
            w = values[offset : offset + n_w].reshape(spec["out"], spec["in"])
            offset += n_w
            b = values[offset : offset + spec["out"]]
            offset += spec["out"]
            layers.append(DenseLayer(w.copy(), b.copy(), spec["activation"]))
    if offset != values.size:
        raise InputError(f"{path}: {values.size - offset} trailing parameter values")
    n_enc = len(header["encoder"])
    return ModelParams(layers[:n_enc], layers[n_enc:]), header
