"""Sequence autoencoder: GRU encoder to a fixed-size code, autoregressive decoder.

The latent code is laid out as [s, h^1, ..., h^N] where s aggregates
mean/max/last pooling of the top-layer hidden states and h^n is the last
hidden state of encoder layer n. Dimension: (N + 1) * hidden. The
decoder reads its initial hidden states from the same layout, so the
generator that later imitates these codes must match it exactly.
"""

from __future__ import annotations

import copy

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from ..errors import DataError, TrainingError
from .batches import PaddedBatch
from .heads import FeatureHead, group_loss

LEAKY_SLOPE = 0.2


def harden_groups(values: torch.Tensor, groups) -> torch.Tensor:
    """Replace categorical probability blocks with argmax one-hots."""
    out = values.clone()
    for g in groups:
        if g.kind == "categorical":
            block = values[..., g.start : g.stop]
            idx = block.argmax(dim=-1, keepdim=True)
            out[..., g.start : g.stop] = torch.zeros_like(block).scatter_(-1, idx, 1.0)
    return out


class SeriesAutoencoder(nn.Module):
    """Encoder-decoder for complete (fully observed) sequences."""

    def __init__(self, layout, hidden: int, layers: int = 3):
        super().__init__()
        self.hidden = hidden
        self.layers = layers
        self.d_x = layout.d_x
        self.d_y = layout.d_y
        self.dynamic_groups = layout.dynamic_groups
        self.global_groups = layout.global_groups
        self.encoder_gru = nn.GRU(
            layout.d_x + layout.d_y, hidden, layers, batch_first=True
        )
        self.aggregate = nn.Linear(3 * hidden, hidden)
        self.decoder_gru = nn.GRU(layout.d_x + hidden, hidden, layers, batch_first=True)
        self.global_head = FeatureHead(hidden, layout.global_groups)
        self.dynamic_head = FeatureHead(hidden, layout.dynamic_groups)

    @property
    def latent_dim(self) -> int:
        return (self.layers + 1) * self.hidden

    def split_latent(self, r: torch.Tensor):
        """Latent layout -> (s, initial hidden stack (layers, B, hidden))."""
        s = r[:, : self.hidden]
        h0 = r[:, self.hidden :].reshape(-1, self.layers, self.hidden)
        return s, h0.permute(1, 0, 2).contiguous()

    def _encode_sequence(self, inputs: torch.Tensor, batch: PaddedBatch) -> torch.Tensor:
        packed = pack_padded_sequence(
            inputs, batch.lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        packed_out, h_n = self.encoder_gru(packed)
        out, _ = pad_packed_sequence(
            packed_out, batch_first=True, total_length=batch.max_len
        )
        valid = batch.step_mask.unsqueeze(-1)
        mean = (out * valid).sum(1) / batch.lengths.unsqueeze(1).to(out.dtype)
        peak = out.masked_fill(~valid, float("-inf")).amax(1)
        s = F.leaky_relu(
            self.aggregate(torch.cat([mean, peak, h_n[-1]], dim=1)), LEAKY_SLOPE
        )
        return torch.cat([s] + [h_n[n] for n in range(self.layers)], dim=1)

    def encode(self, batch: PaddedBatch) -> torch.Tensor:
        if batch.max_len < 1:
            raise DataError("cannot encode empty sequences")
        y_rows = batch.y.unsqueeze(1).expand(-1, batch.max_len, -1)
        return self._encode_sequence(torch.cat([batch.X, y_rows], dim=-1), batch)

    def decode_global(self, r: torch.Tensor):
        s, _ = self.split_latent(r)
        return self.global_head(s)

    def decode_dynamic(
        self,
        r: torch.Tensor,
        steps: int,
        teacher: torch.Tensor | None = None,
        sampling_p: float = 1.0,
        generator: torch.Generator | None = None,
        harden: bool = False,
    ):
        """Autoregressive decode for `steps` rows; returns (values, logits).

        With `teacher` given and sampling_p = 1 the whole sequence runs
        as one packed pass (inputs are known up front). sampling_p < 1
        feeds ground truth with that probability per step and sample,
        the previous prediction otherwise. Without teacher the decoder
        free-runs on its own outputs.
        """
        s, h0 = self.split_latent(r)
        if teacher is not None and teacher.shape[1] < steps:
            raise DataError(
                f"teacher inputs cover {teacher.shape[1]} steps, need {steps}"
            )
        if teacher is not None and sampling_p >= 1.0:
            prev = torch.cat(
                [torch.zeros_like(teacher[:, :1]), teacher[:, : steps - 1]], dim=1
            )
            inputs = torch.cat([prev, s.unsqueeze(1).expand(-1, steps, -1)], dim=-1)
            out, _ = self.decoder_gru(inputs, h0)
            logits = self.dynamic_head.linear(out)
            return self.dynamic_head.activate(logits), logits

        batch_size = r.shape[0]
        prev = r.new_zeros(batch_size, self.d_x)
        hidden = h0
        all_logits = []
        for i in range(steps):
            inp = torch.cat([prev, s], dim=1).unsqueeze(1)
            out, hidden = self.decoder_gru(inp, hidden)
            logits = self.dynamic_head.linear(out[:, 0])
            all_logits.append(logits)
            if i + 1 == steps:
                break
            pred = self.dynamic_head.activate(logits)
            if harden:
                pred = harden_groups(pred, self.dynamic_groups)
            if teacher is None:
                prev = pred
            else:
                coins = (
                    torch.rand(batch_size, 1, generator=generator) < sampling_p
                ).to(pred.dtype)
                prev = coins * teacher[:, i] + (1.0 - coins) * pred
        logits = torch.stack(all_logits, dim=1)
        values = self.dynamic_head.activate(logits)
        if harden:
            values = harden_groups(values, self.dynamic_groups)
        return values, logits


def reconstruction_loss(batch: PaddedBatch, y_logits, x_logits, layout):
    """Width-weighted sum of global and dynamic reconstruction losses.

    Per instance: L = d_y/(d_x+d_y) * L_y + d_x/(d_x+d_y) * L_x, where
    L_y averages per-group losses over global groups and L_x averages
    over valid steps first, then over dynamic groups. Returns the batch
    mean and the two unweighted parts.
    """
    d_x, d_y = layout.d_x, layout.d_y
    ly = group_loss(y_logits, batch.y, layout.global_groups).mean(dim=1)
    lx_terms = group_loss(x_logits, batch.X, layout.dynamic_groups)
    valid = batch.step_mask.to(lx_terms.dtype).unsqueeze(-1)
    per_feature = (lx_terms * valid).sum(dim=1) / batch.lengths.unsqueeze(1).to(
        lx_terms.dtype
    )
    lx = per_feature.mean(dim=1)
    total = (d_y * ly + d_x * lx) / (d_x + d_y)
    return total.mean(), {"global": ly.mean().item(), "dynamic": lx.mean().item()}


def train_autoencoder(
    dataset,
    *,
    epochs: int = 1000,
    batch_size: int = 512,
    lr: float = 1e-3,
    betas=(0.9, 0.999),
    hidden: int | None = None,
    layers: int = 3,
    sampling_p: float = 0.5,
    seed: int = 0,
    resume: dict | None = None,
    checkpoint_every: int | None = None,
    checkpoint_cb=None,
    log_every: int = 100,
):
    """Fit the autoencoder on an encoded dataset; returns (model, trace).

    hidden defaults to 4 * d_x. sampling_p is the per-step probability
    of feeding ground truth into the decoder (1.0 = pure teacher
    forcing). Non-finite loss raises TrainingError carrying the last
    good state.
    """
    layout = dataset.schema.layout
    if hidden is None:
        hidden = 4 * layout.d_x
    torch.manual_seed(seed)
    model = SeriesAutoencoder(layout, hidden=hidden, layers=layers)
    sampler = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr, betas=betas)
    full = PaddedBatch.from_instances(dataset.instances, layout)
    n = len(full)
    trace: list[float] = []
    start = 0
    if resume is not None:
        model.load_state_dict(resume["model"])
        opt.load_state_dict(resume["optimizer"])
        sampler.set_state(resume["sampler"])
        start = resume["epoch"]
        trace = list(resume["trace"])

    def snapshot(epoch):
        return {
            "epoch": epoch,
            "model": copy.deepcopy(model.state_dict()),
            "optimizer": copy.deepcopy(opt.state_dict()),
            "sampler": sampler.get_state().clone(),
            "trace": list(trace),
        }

    last_good = snapshot(start)
    for epoch in range(start, epochs):
        perm = torch.randperm(n, generator=sampler)
        epoch_loss, seen = 0.0, 0
        for lo in range(0, n, batch_size):
            batch = full.index(perm[lo : lo + batch_size])
            r = model.encode(batch)
            _, y_logits = model.decode_global(r)
            _, x_logits = model.decode_dynamic(
                r,
                batch.max_len,
                teacher=batch.X,
                sampling_p=sampling_p,
                generator=sampler,
            )
            loss, _ = reconstruction_loss(batch, y_logits, x_logits, layout)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}", checkpoint=last_good
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += loss.item() * len(batch)
            seen += len(batch)
        trace.append(epoch_loss / seen)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"[ae] epoch {epoch + 1}/{epochs} loss {trace[-1]:.6f}")
        if checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            last_good = snapshot(epoch + 1)
            if checkpoint_cb is not None:
                checkpoint_cb(epoch + 1, last_good)
    return model, trace
