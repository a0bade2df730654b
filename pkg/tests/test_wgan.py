import hashlib

import numpy as np
import pytest
import torch
from torch import nn

from helpers import complete_dataset, missing_dataset
from tsgen import ConfigError, TimeSeriesInstance
from tsgen.models import (
    LatentCritic,
    LatentGenerator,
    calibrate_thresholds,
    critic_loss,
    generate_dataset,
    generator_loss,
    sample_noise,
    train_autoencoder,
    train_missing_autoencoder,
    train_wgan,
)
from tsgen.models.wgan import gradient_penalty


def test_noise_moments():
    g = torch.Generator().manual_seed(0)
    z = sample_noise(1_000_000, 2, generator=g)
    assert float(z.mean(dim=0).abs().max()) < 0.01
    assert float((z.var(dim=0) - 1.0).abs().max()) < 0.02


def test_noise_dim_guard():
    with pytest.raises(ConfigError):
        sample_noise(4, 8, latent_dim=12)
    z = sample_noise(4, 12, latent_dim=12)
    assert z.shape == (4, 12)


def test_penalty_zero_for_unit_gradient_critic():
    lin = nn.Linear(3, 1, bias=False)
    with torch.no_grad():
        w = torch.tensor([[2.0, -1.0, 2.0]])
        lin.weight.copy_(w / w.norm())
    critic = lambda x: lin(x).squeeze(-1)
    real = torch.randn(16, 3)
    fake = torch.randn(16, 3)
    gp = gradient_penalty(critic, real, fake)
    assert gp.item() == pytest.approx(0.0, abs=1e-12)


def test_wasserstein_term_cancels_on_identical_batches():
    torch.manual_seed(0)
    critic = LatentCritic(4, hidden=8)
    batch = torch.randn(32, 4)
    loss, w = critic_loss(batch, batch.clone(), critic, lam=10.0)
    assert w.item() == pytest.approx(0.0, abs=1e-7)


def test_generator_loss_constant_critic():
    torch.manual_seed(1)
    gen = LatentGenerator(3, depth=2, hidden=8)

    class Const(nn.Module):
        def forward(self, x):
            return torch.full((x.shape[0],), 2.5) + 0.0 * x.sum(dim=1)

    z = sample_noise(8, 3, generator=torch.Generator().manual_seed(2))
    loss = generator_loss(z, gen, Const())
    assert loss.item() == pytest.approx(-2.5)
    grads = torch.autograd.grad(loss, list(gen.parameters()), allow_unused=True)
    for g in grads:
        assert g is None or torch.all(g == 0)


def test_generator_loss_batch_size_invariance():
    torch.manual_seed(2)
    gen = LatentGenerator(3, depth=2, hidden=8)
    critic = LatentCritic(3, hidden=8)
    z = sample_noise(16, 3, generator=torch.Generator().manual_seed(0))
    single = generator_loss(z, gen, critic)
    double = generator_loss(torch.cat([z, z]), gen, critic)
    assert single.item() == pytest.approx(double.item(), rel=1e-6)


def test_generator_output_dim_all_batch_sizes():
    gen = LatentGenerator(10, depth=3)
    for b in (1, 3, 17):
        assert gen(torch.randn(b, 10)).shape == (b, 10)


def test_gradient_check_losses():
    torch.manual_seed(3)
    gen = LatentGenerator(2, depth=1, hidden=4).double()
    critic = LatentCritic(2, hidden=4).double()
    z = torch.randn(6, 2, dtype=torch.float64)
    real = torch.randn(6, 2, dtype=torch.float64)

    def gen_loss():
        return generator_loss(z, gen, critic)

    def cri_loss():
        g = torch.Generator().manual_seed(7)
        loss, _ = critic_loss(real, gen(z).detach(), critic, lam=10.0, generator=g)
        return loss

    eps = 1e-6
    rng = np.random.default_rng(4)
    for loss_fn, module in ((gen_loss, gen), (cri_loss, critic)):
        params = [p for p in module.parameters() if p.requires_grad]
        loss = loss_fn()
        grads = torch.autograd.grad(loss, params, allow_unused=True)
        for p, g in zip(params, grads):
            if g is None:
                continue
            flat = p.data.view(-1)
            for _ in range(3):
                i = int(rng.integers(flat.numel()))
                orig = flat[i].item()
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
                flat[i] = orig
                fd = (up - down) / (2 * eps)
                analytic = g.view(-1)[i].item()
                if abs(analytic) < 1e-10 and abs(fd) < 1e-8:
                    continue
                assert abs(fd - analytic) / max(abs(fd), abs(analytic)) < 1e-4


class _MixtureStub:
    """Fake autoencoder whose 'latents' form a 2D Gaussian mixture."""

    latent_dim = 2
    needs_history = False

    def __init__(self):
        self._means = np.array([[1.0, 1.0], [2.5, 0.5]])

    def eval(self):
        return self

    def encode(self, batch):
        # derive a deterministic mixture point from the stored label bit
        lab = batch.y[:, 0]
        comp = (lab > 0.5).long()
        base = torch.tensor(self._means, dtype=torch.float32)[comp]
        jitter_src = batch.y[:, -1:] * 1000 + batch.t[:, :1]
        jitter = torch.sin(jitter_src * torch.tensor([[12.9898, 78.233]])) * 0.2
        return base + jitter


def _mixture_dataset(n=512):
    return complete_dataset(n=n, l=4, d=1, seed=5)


def test_wgan_toy_penalty_effectiveness_and_ordering():
    ds = _mixture_dataset()
    stub = _MixtureStub()
    gen, critic, trace = train_wgan(
        stub, ds, iterations=400, critic_steps=5, batch_size=256,
        seed=0, log_every=0, gen_hidden=64, critic_hidden=64,
    )
    from tsgen.models.batches import PaddedBatch

    full = PaddedBatch.from_instances(ds.instances, ds.schema.layout)
    real = stub.encode(full)
    g = torch.Generator().manual_seed(9)
    z = sample_noise(len(real), 2, generator=g)
    fake = gen(z).detach()
    alpha = torch.rand(real.shape[0], 1, generator=g)
    u = (alpha * real + (1 - alpha) * fake).requires_grad_(True)
    grads = torch.autograd.grad(critic(u).sum(), u)[0]
    mean_norm = grads.norm(2, dim=1).mean().item()
    assert 0.8 <= mean_norm <= 1.2

    # trained critic separates real halves far less than untrained fakes
    torch.manual_seed(123)
    untrained = LatentGenerator(2, depth=3, hidden=64)
    with torch.no_grad():
        half_gap = (critic(real[::2]).mean() - critic(real[1::2]).mean()).abs().item()
        fake_gap = (critic(real).mean() - critic(untrained(z)).mean()).abs().item()
    assert half_gap < fake_gap


def test_wgan_freezes_autoencoder():
    ds = complete_dataset(n=16, l=5, d=2, seed=1)
    ae, _ = train_autoencoder(ds, epochs=3, batch_size=8, hidden=8, layers=2, seed=0, log_every=0)

    def fingerprint(module):
        h = hashlib.sha256()
        for name, p in sorted(module.state_dict().items()):
            h.update(name.encode())
            h.update(p.numpy().tobytes())
        return h.hexdigest()

    before = fingerprint(ae)
    train_wgan(ae, ds, iterations=3, critic_steps=2, batch_size=8, seed=0, log_every=0)
    assert fingerprint(ae) == before


def test_generate_complete_is_deterministic_and_valid():
    ds = complete_dataset(n=16, l=5, d=2, seed=2)
    ae, _ = train_autoencoder(ds, epochs=10, batch_size=8, hidden=8, layers=2, seed=0, log_every=0)
    gen, _, _ = train_wgan(ae, ds, iterations=10, critic_steps=2, batch_size=8, seed=0, log_every=0)
    a = generate_dataset(gen, ae, ds.schema, 9, seed=5)
    b = generate_dataset(gen, ae, ds.schema, 9, seed=5)
    for x, y in zip(a.instances, b.instances):
        assert np.array_equal(x.X, y.X) and np.array_equal(x.t, y.t)
        assert np.array_equal(x.y, y.y)
        assert isinstance(x, TimeSeriesInstance)
        assert 1 <= x.length <= ds.schema.max_length


def test_generate_missing_requires_thresholds():
    ds = missing_dataset(n=10, seed=3)
    model, _ = train_missing_autoencoder(ds, epochs=3, batch_size=5, hidden=12, seed=0, log_every=0)
    gen, _, _ = train_wgan(model, ds, iterations=3, critic_steps=2, batch_size=8, seed=0, log_every=0)
    with pytest.raises(ConfigError):
        generate_dataset(gen, model, ds.schema, 4, seed=0)
    thr = calibrate_thresholds(model, ds)
    out = generate_dataset(gen, model, ds.schema, 4, seed=0, thresholds=thr)
    assert len(out) == 4
    for inst in out.instances:
        assert np.all(np.diff(inst.t) > 0) or inst.length == 1


def test_generate_count_zero():
    ds = complete_dataset(n=8, l=4, d=1, seed=4)
    ae, _ = train_autoencoder(ds, epochs=2, batch_size=8, hidden=8, layers=2, seed=0, log_every=0)
    gen, _, _ = train_wgan(ae, ds, iterations=2, critic_steps=1, batch_size=8, seed=0, log_every=0)
    out = generate_dataset(gen, ae, ds.schema, 0, seed=1)
    assert len(out) == 0
