"""Autoencoder with a topologically constrained latent space.

The latent vector is split into leading topological coordinates, pushed
onto a target manifold by an absolute-value penalty, and trailing general
coordinates with a standard normal prior. The loss per sample is

    alpha * recon(x, x_hat) + beta * T(z_t) + gamma * |z_g|^2 / 2
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from topovae.config import TERM_ARITY, ConfigError, LatentSplit
from topovae.nn import LayerSpec, MlpParams, backward, forward, init_params

LEMNISCATE_C = 0.01


@dataclass(frozen=True)
class TopologicalTerm:
    name: str
    radius: float = 1.0
    c: float = LEMNISCATE_C

    def __post_init__(self):
        if self.name not in TERM_ARITY:
            raise ConfigError(f"unknown topological term {self.name!r}")

    @property
    def arity(self) -> int:
        return TERM_ARITY[self.name]


def _term(term) -> TopologicalTerm:
    return term if isinstance(term, TopologicalTerm) else TopologicalTerm(str(term))


def topo_term(term, z_t) -> tuple:
    """Penalty value and subgradient; works on one vector or a batch of rows.

    circle/sphere: | |z|^2 - r^2 |; lemniscate: | |z|^4 - c (z1^2 - z2^2) |.
    The subgradient at the kink is zero.
    """
    term = _term(term)
    z = np.asarray(z_t, dtype=np.float64)
    if z.shape[-1] != term.arity:
        raise ConfigError(f"term {term.name!r} takes {term.arity} coordinates, got {z.shape[-1]}")
    sq = z * z
    r2 = sq.sum(axis=-1, keepdims=True)
    if term.name == "lemniscate":
        inner = r2 * r2 - term.c * (sq[..., :1] - sq[..., 1:2])
        d_inner = 4.0 * r2 * z - 2.0 * term.c * z * np.array([1.0, -1.0])
    else:
        inner = r2 - term.radius**2
        d_inner = 2.0 * z
    value = np.abs(inner[..., 0])
    grad = np.sign(inner) * d_inner
    if value.ndim == 0:
        return float(value), grad
    return value, grad


def gpv_penalty(z_g) -> tuple:
    """Negative log of N(0, I) up to a constant: |z|^2 / 2."""
    z = np.asarray(z_g, dtype=np.float64)
    value = 0.5 * (z * z).sum(axis=-1)
    if np.ndim(value) == 0:
        return float(value), z.copy()
    return value, z.copy()


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 100.0
    recon_mode: str = "squared"

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.recon_mode not in ("squared", "norm"):
            raise ConfigError("recon_mode must be 'squared' or 'norm'")


class LossTerms(NamedTuple):
    """Batch means of each loss component plus gradients of the total mean."""

    total: float
    recon: float
    topo: float
    gpv: float
    d_xhat: np.ndarray
    d_z: np.ndarray


def loss_terms(cfg: LossConfig, split: LatentSplit, x, x_hat, z) -> LossTerms:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    x_hat = np.atleast_2d(np.asarray(x_hat, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if x.shape != x_hat.shape:
        raise ConfigError(f"input {x.shape} and reconstruction {x_hat.shape} differ")
    if z.shape[-1] != split.latent_dim or z.shape[0] != x.shape[0]:
        raise ConfigError(f"latent shape {z.shape} does not match split {split}")
    n = x.shape[0]
    diff = x_hat - x
    sq = (diff * diff).sum(axis=1)
    if cfg.recon_mode == "squared":
        recon = sq
        d_rec = 2.0 * diff
    else:
        recon = np.sqrt(sq)
        safe = np.where(recon > 0, recon, 1.0)
        d_rec = np.where(recon[:, None] > 0, diff / safe[:, None], 0.0)
    zt, zg = z[:, : split.n_tpv], z[:, split.n_tpv :]
    topo, d_topo = topo_term(split.term, zt)
    gpv, d_gpv = gpv_penalty(zg)
    total = cfg.alpha * recon + cfg.beta * topo + cfg.gamma * gpv
    d_z = np.concatenate([cfg.beta * d_topo, cfg.gamma * d_gpv], axis=1) / n
    return LossTerms(
        float(total.mean()), float(recon.mean()), float(topo.mean()), float(gpv.mean()),
        cfg.alpha * d_rec / n, d_z,
    )


def vae_loss(cfg: LossConfig, split: LatentSplit, x, x_hat, z):
    """Loss and its gradients w.r.t. ``x_hat`` and ``z``.

    For 1-D inputs the value is the single-sample loss; for batches it is
    the batch mean and the gradients are those of the mean.
    """
    single = np.ndim(x) == 1
    t = loss_terms(cfg, split, x, x_hat, z)
    if single:
        return t.total, t.d_xhat[0], t.d_z[0]
    return t.total, t.d_xhat, t.d_z


class TopoVAE:
    """Encoder (tanh hidden layers) and decoder (relu hidden layers)."""

    def __init__(self, encoder: MlpParams, decoder: MlpParams, split: LatentSplit,
                 loss: LossConfig = LossConfig(), shift=None, scale=None):
        if encoder.n_out != split.latent_dim or decoder.n_in != split.latent_dim:
            raise ConfigError("encoder/decoder widths do not match the latent split")
        if encoder.n_in != decoder.n_out:
            raise ConfigError("decoder output width must equal the encoder input width")
        self.encoder = encoder
        self.decoder = decoder
        self.split = split
        self.loss = loss
        n = encoder.n_in
        self.shift = np.zeros(n) if shift is None else np.asarray(shift, dtype=np.float64).copy()
        self.scale = np.ones(n) if scale is None else np.asarray(scale, dtype=np.float64).copy()
        if self.shift.shape != (n,) or self.scale.shape != (n,) or np.any(self.scale <= 0):
            raise ConfigError("shift/scale must be length-n_obs vectors with positive scale")

    def fit_scaling(self, x) -> None:
        """Standardize inputs with the column mean and std of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        self.shift = x.mean(axis=0)
        std = x.std(axis=0)
        self.scale = np.where(std > 1e-12, std, 1.0)

    @classmethod
    def build(cls, n_obs: int, split: LatentSplit, rng: np.random.Generator,
              hidden=(20, 20), loss: LossConfig = LossConfig(), init_scale: float = 1.0) -> "TopoVAE":
        enc = init_params(LayerSpec.mlp(n_obs, hidden, split.latent_dim, "tanh"), rng, init_scale)
        dec = init_params(LayerSpec.mlp(split.latent_dim, hidden, n_obs, "relu"), rng, init_scale)
        return cls(enc, dec, split, loss)

    @property
    def n_obs(self) -> int:
        return self.encoder.n_in

    def encode(self, x) -> np.ndarray:
        return forward(self.encoder, (np.asarray(x, dtype=np.float64) - self.shift) / self.scale)

    def decode(self, z) -> np.ndarray:
        return self.shift + self.scale * forward(self.decoder, z)

    def arrays(self) -> list[np.ndarray]:
        return self.encoder.arrays() + self.decoder.arrays()

    def loss_and_grads(self, x, noise: np.ndarray | None = None):
        """Mean batch loss and gradients for every parameter array.

        ``noise`` (same shape as the latent batch) perturbs only the decoder
        input; the priors are evaluated at the encoder mean.
        """
        x = np.asarray(x, dtype=np.float64)
        z, enc_tape = forward(self.encoder, (x - self.shift) / self.scale, record=True)
        z_in = z if noise is None else z + noise
        y, dec_tape = forward(self.decoder, z_in, record=True)
        x_hat = self.shift + self.scale * y
        terms = loss_terms(self.loss, self.split, x, x_hat, z)
        d_xhat, d_z = terms.d_xhat, terms.d_z
        if np.ndim(x) == 1:
            d_xhat, d_z = d_xhat[0], d_z[0]
        dec_grads, d_zin = backward(self.decoder, dec_tape, d_xhat * self.scale)
        enc_grads, _ = backward(self.encoder, enc_tape, d_z + d_zin)
        return terms, enc_grads.arrays() + dec_grads.arrays()
