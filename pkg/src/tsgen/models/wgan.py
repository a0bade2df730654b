"""Adversarial model of the latent space, trained with a gradient penalty.

The generator is an MLP with layer normalization that maps standard
normal noise to vectors in the frozen autoencoder's latent space; the
critic is three plain affine layers (no normalization, which would
couple samples inside the per-sample gradient penalty). Synthesis runs
noise -> generator -> decoder.
"""

from __future__ import annotations

import copy

import numpy as np
import torch
from torch import nn

from ..errors import ConfigError, TrainingError
from ..instances import TimeSeriesInstance
from ..schema import Dataset, decode_length
from .autoencoder import SeriesAutoencoder, harden_groups
from .batches import PaddedBatch
from .missing import MissingSeriesAutoencoder, synthesize

LEAKY_SLOPE = 0.2


class LatentGenerator(nn.Module):
    """Noise-to-latent MLP; input and output widths equal the latent dim."""

    def __init__(self, latent_dim: int, depth: int = 3, hidden: int | None = None):
        super().__init__()
        if latent_dim < 1:
            raise ConfigError("latent dimension must be positive")
        self.latent_dim = latent_dim
        hidden = hidden or latent_dim
        blocks = []
        width = latent_dim
        for _ in range(depth):
            blocks += [
                nn.Linear(width, hidden),
                nn.LayerNorm(hidden),
                nn.LeakyReLU(LEAKY_SLOPE),
            ]
            width = hidden
        blocks.append(nn.Linear(width, latent_dim))
        self.net = nn.Sequential(*blocks)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.net(z)


class LatentCritic(nn.Module):
    """Exactly three affine maps with LeakyReLU between, scalar output."""

    def __init__(self, latent_dim: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or latent_dim
        self.net = nn.Sequential(
            nn.Linear(latent_dim, hidden),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Linear(hidden, hidden),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Linear(hidden, 1),
        )

    def forward(self, r: torch.Tensor) -> torch.Tensor:
        return self.net(r).squeeze(-1)


def sample_noise(
    batch: int,
    dim: int,
    generator: torch.Generator | None = None,
    latent_dim: int | None = None,
    dtype=torch.float32,
) -> torch.Tensor:
    """Standard normal noise rows; checks dim against the latent when given."""
    if latent_dim is not None and dim != latent_dim:
        raise ConfigError(f"noise dim {dim} does not match latent dim {latent_dim}")
    return torch.randn(batch, dim, generator=generator, dtype=dtype)


def gradient_penalty(critic, real, fake, generator=None):
    """Mean squared deviation of the critic's gradient norm from 1.

    Evaluated at per-pair uniform convex combinations of real and fake
    rows (one interpolation coefficient per pair).
    """
    alpha = torch.rand(real.shape[0], 1, generator=generator, dtype=real.dtype)
    u = (alpha * real + (1.0 - alpha) * fake).requires_grad_(True)
    scores = critic(u)
    grads = torch.autograd.grad(scores.sum(), u, create_graph=True)[0]
    return ((grads.norm(2, dim=1) - 1.0) ** 2).mean()


def critic_loss(real, fake, critic, lam: float = 10.0, generator=None):
    """Wasserstein critic objective with gradient penalty.

    Returns (loss, wasserstein_estimate). Non-finite values raise
    TrainingError immediately rather than poisoning the optimizer.
    """
    if real.shape[0] != fake.shape[0]:
        raise ConfigError("real and fake batches must match in size")
    w = critic(real).mean() - critic(fake).mean()
    loss = -w + lam * gradient_penalty(critic, real, fake, generator=generator)
    if not torch.isfinite(loss):
        raise TrainingError("critic loss is not finite")
    return loss, w


def generator_loss(noise, generator_net, critic):
    return -critic(generator_net(noise)).mean()


def train_wgan(
    autoencoder,
    dataset,
    *,
    iterations: int = 15000,
    critic_steps: int = 5,
    batch_size: int = 512,
    lr: float = 1e-4,
    lam: float = 10.0,
    depth: int = 3,
    gen_hidden: int | None = None,
    critic_hidden: int | None = None,
    seed: int = 0,
    resume: dict | None = None,
    checkpoint_every: int | None = None,
    checkpoint_cb=None,
    log_every: int = 1000,
):
    """Adversarial training against the frozen autoencoder's latents.

    Real latents are re-encoded per batch (the encoder is frozen, so
    this matches precomputation exactly). Five critic updates per
    generator update by default; RMSprop on both sides.
    """
    latent_dim = autoencoder.latent_dim
    layout_batch = PaddedBatch.from_instances(
        dataset.instances,
        dataset.schema.layout,
        with_history=getattr(autoencoder, "needs_history", False),
    )
    n = len(layout_batch)
    torch.manual_seed(seed)
    gen = LatentGenerator(latent_dim, depth=depth, hidden=gen_hidden)
    critic = LatentCritic(latent_dim, hidden=critic_hidden)
    if gen.latent_dim != latent_dim:
        raise ConfigError("generator output dim does not match the latent space")
    sampler = torch.Generator().manual_seed(seed)
    opt_g = torch.optim.RMSprop(gen.parameters(), lr=lr)
    opt_c = torch.optim.RMSprop(critic.parameters(), lr=lr)
    autoencoder.eval()
    trace: list[float] = []
    start = 0
    if resume is not None:
        gen.load_state_dict(resume["generator"])
        critic.load_state_dict(resume["critic"])
        opt_g.load_state_dict(resume["opt_g"])
        opt_c.load_state_dict(resume["opt_c"])
        sampler.set_state(resume["sampler"])
        start = resume["iteration"]
        trace = list(resume["trace"])

    def snapshot(iteration):
        return {
            "iteration": iteration,
            "generator": copy.deepcopy(gen.state_dict()),
            "critic": copy.deepcopy(critic.state_dict()),
            "opt_g": copy.deepcopy(opt_g.state_dict()),
            "opt_c": copy.deepcopy(opt_c.state_dict()),
            "sampler": sampler.get_state().clone(),
            "trace": list(trace),
        }

    def real_batch():
        idx = torch.randint(n, (min(batch_size, n),), generator=sampler)
        with torch.no_grad():
            return autoencoder.encode(layout_batch.index(idx))

    last_good = snapshot(start)
    for it in range(start, iterations):
        w_last = 0.0
        for _ in range(critic_steps):
            real = real_batch()
            z = sample_noise(real.shape[0], latent_dim, generator=sampler)
            with torch.no_grad():
                fake = gen(z)
            try:
                loss_c, w = critic_loss(real, fake, critic, lam=lam, generator=sampler)
            except TrainingError as exc:
                raise TrainingError(str(exc), checkpoint=last_good) from exc
            opt_c.zero_grad()
            loss_c.backward()
            opt_c.step()
            w_last = w.item()
        z = sample_noise(min(batch_size, n), latent_dim, generator=sampler)
        loss_g = generator_loss(z, gen, critic)
        if not torch.isfinite(loss_g):
            raise TrainingError(f"non-finite generator loss at iteration {it}", checkpoint=last_good)
        opt_g.zero_grad()
        loss_g.backward()
        opt_g.step()
        trace.append(w_last)
        if log_every and (it + 1) % log_every == 0:
            print(f"[gan] iter {it + 1}/{iterations} w-estimate {w_last:.4f}")
        if checkpoint_every and (it + 1) % checkpoint_every == 0:
            last_good = snapshot(it + 1)
            if checkpoint_cb is not None:
                checkpoint_cb(it + 1, last_good)
    return gen, critic, trace


@torch.no_grad()
def _decode_complete(autoencoder: SeriesAutoencoder, r, schema):
    layout = schema.layout
    y_act, _ = autoencoder.decode_global(r)
    y_hard = harden_groups(y_act, layout.global_groups)
    length_slice = layout.length_slice
    if length_slice is None:
        raise ConfigError("generation requires a schema with a length feature")
    steps = [decode_length(float(y_act[b, length_slice.start]), schema) for b in range(r.shape[0])]
    y_hard[:, length_slice.start] = torch.tensor(
        [st / schema.max_length for st in steps], dtype=r.dtype
    )
    values, _ = autoencoder.decode_dynamic(r, max(steps), harden=True)
    instances = []
    for b, l in enumerate(steps):
        X = values[b, :l].double().numpy()
        t = np.linspace(0.0, 1.0, l) if l > 1 else np.zeros(1)
        instances.append(
            TimeSeriesInstance(
                X,
                y_hard[b].double().numpy(),
                np.ones((l, layout.K), dtype=np.uint8),
                np.ones(layout.G, dtype=np.uint8),
                t,
            )
        )
    return instances


def generate_dataset(
    generator: LatentGenerator,
    autoencoder,
    schema,
    count: int,
    seed: int = 0,
    thresholds=None,
    batch_size: int = 512,
    max_steps: int | None = None,
) -> Dataset:
    """Sample `count` synthetic instances: noise -> latent -> decode."""
    generator.eval()
    autoencoder.eval()
    g = torch.Generator().manual_seed(seed)
    instances = []
    remaining = count
    while remaining > 0:
        b = min(batch_size, remaining)
        z = sample_noise(b, generator.latent_dim, generator=g)
        with torch.no_grad():
            r = generator(z)
        if isinstance(autoencoder, MissingSeriesAutoencoder):
            if thresholds is None:
                raise ConfigError("missing-aware decoding requires calibrated thresholds")
            instances.extend(
                synthesize(autoencoder, r, schema, thresholds, max_steps=max_steps)
            )
        else:
            instances.extend(_decode_complete(autoencoder, r, schema))
        remaining -= b
    return Dataset(schema, instances, split="synthetic")
