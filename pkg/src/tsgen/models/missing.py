"""Autoencoder for sequences with informative missing values.

Encoding embeds each observation (values, last valid values, mask row,
globals) together with a learnable time representation and pools exactly
like the complete-data encoder, so the latent layout is identical.
Decoding is split in two: a decision stack first emits the next
timestamp and the observation mask, then trainable decays shrink its
hidden state according to the per-feature time lags, and a generation
stack conditioned on [decayed state, s] emits the feature values. Both
stages can be ablated (use_embedding / two_step flags).
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..errors import CalibrationWarning, ConfigError, TrainingError
from ..instances import TimeSeriesInstance
from ..schema import decode_length
from .autoencoder import LEAKY_SLOPE, harden_groups
from .batches import PaddedBatch
from .embedding import ConcatObservation, ObservationEmbedding
from .heads import FeatureHead, group_loss

MIN_TIME_INCREMENT = 1e-6


def _shift_right(v: torch.Tensor) -> torch.Tensor:
    """Prepend a zero step and drop the last: row i holds step i-1."""
    return torch.cat([torch.zeros_like(v[:, :1]), v[:, :-1]], dim=1)


def _expand_global_mask(m: torch.Tensor, groups) -> torch.Tensor:
    cols = [m[..., j : j + 1].expand(*m.shape[:-1], g.width) for j, g in enumerate(groups)]
    return torch.cat(cols, dim=-1)


class MissingSeriesAutoencoder(nn.Module):
    """Encoder plus decide-and-generate decoder for incomplete sequences."""

    needs_history = True

    def __init__(
        self,
        layout,
        hidden: int = 128,
        layers: int = 3,
        decision_layers: int = 2,
        d_emb: int | None = None,
        use_embedding: bool = True,
        two_step: bool = True,
    ):
        super().__init__()
        if two_step and not 1 <= decision_layers < layers:
            raise ConfigError(
                f"decision_layers must satisfy 1 <= {decision_layers} < {layers}"
            )
        self.hidden = hidden
        self.layers = layers
        self.decision_layers = decision_layers if two_step else layers
        self.two_step = two_step
        self.d_x = layout.d_x
        self.d_y = layout.d_y
        self.K = layout.K
        self.G = layout.G
        self.dynamic_groups = layout.dynamic_groups
        self.global_groups = layout.global_groups
        self._expand_cols = layout.expand_mask

        if use_embedding:
            self.embed = ObservationEmbedding(layout, d_emb or hidden)
        else:
            self.embed = ConcatObservation(layout)
        e_width = self.embed.width

        self.encoder_gru = nn.GRU(e_width, hidden, layers, batch_first=True)
        self.aggregate = nn.Linear(3 * hidden, hidden)
        self.bridges = nn.ModuleList(nn.Linear(hidden, hidden) for _ in range(layers))
        self.global_head = FeatureHead(hidden, layout.global_groups)
        self.global_mask_head = nn.Linear(hidden, layout.G)

        if two_step:
            self.decision_gru = nn.GRU(e_width, hidden, decision_layers, batch_first=True)
            self.generation_gru = nn.GRU(
                2 * hidden, hidden, layers - decision_layers, batch_first=True
            )
            self.decay = nn.Linear(2 * layout.K, hidden)
        else:
            self.merged_gru = nn.GRU(e_width + hidden, hidden, layers, batch_first=True)
        self.time_head = nn.Linear(hidden, 1)
        self.mask_head = nn.Linear(hidden, layout.K)
        self.dynamic_head = FeatureHead(hidden, layout.dynamic_groups)

    @property
    def latent_dim(self) -> int:
        return (self.layers + 1) * self.hidden

    # -- encoding ----------------------------------------------------------

    def _step_embeddings(self, batch: PaddedBatch, shifted: bool) -> torch.Tensor:
        """Embed each step's own observation, or (shifted) its predecessor's."""
        L = batch.max_len
        y = batch.y.unsqueeze(1).expand(-1, L, -1)
        m_y = batch.m_y.unsqueeze(1).expand(-1, L, -1)
        x, pre, mask, t = batch.X, batch.pre, batch.M, batch.t
        if shifted:
            x, pre, mask, t = map(_shift_right, (x, pre, mask, t))
        return self.embed(x, pre, mask, y, m_y, t)

    def encode(self, batch: PaddedBatch) -> torch.Tensor:
        from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

        inputs = self._step_embeddings(batch, shifted=False)
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

    def split_latent(self, r: torch.Tensor):
        s = r[:, : self.hidden]
        h = r[:, self.hidden :].reshape(-1, self.layers, self.hidden)
        return s, h.permute(1, 0, 2).contiguous()

    def _bridged_hidden(self, enc_h: torch.Tensor) -> torch.Tensor:
        return torch.stack(
            [
                F.leaky_relu(self.bridges[n](enc_h[n]), LEAKY_SLOPE)
                for n in range(self.layers)
            ]
        )

    # -- decoding ----------------------------------------------------------

    def decode_global(self, r: torch.Tensor):
        s, _ = self.split_latent(r)
        y_act, y_logits = self.global_head(s)
        gmask_logits = self.global_mask_head(s)
        return y_act, y_logits, gmask_logits

    def apply_decay(self, hidden_dec, delta_row, mask_row):
        """q = exp(-relu(W [delta, mask] + b)) * hidden, elementwise."""
        raw = self.decay(torch.cat([delta_row, mask_row], dim=-1))
        beta = torch.exp(-F.relu(raw))
        return beta * hidden_dec

    def teacher_forward(self, batch: PaddedBatch, r: torch.Tensor) -> dict:
        """Teacher-forced pass over full sequences; everything parallel.

        Decision inputs embed the true previous observations; decays use
        the true lag matrix and the true current masks.
        """
        s, enc_h = self.split_latent(r)
        h0 = self._bridged_hidden(enc_h)
        e_prev = self._step_embeddings(batch, shifted=True)
        L = batch.max_len
        s_rows = s.unsqueeze(1).expand(-1, L, -1)
        if self.two_step:
            dec_out, _ = self.decision_gru(e_prev, h0[: self.decision_layers])
            q = self.apply_decay(dec_out, batch.delta, batch.M)
            gen_out, _ = self.generation_gru(
                torch.cat([q, s_rows], dim=-1), h0[self.decision_layers :]
            )
        else:
            dec_out, _ = self.merged_gru(torch.cat([e_prev, s_rows], dim=-1), h0)
            gen_out = dec_out
        return {
            "x_logits": self.dynamic_head.linear(gen_out),
            "mask_logits": self.mask_head(dec_out),
            "time_inc": torch.sigmoid(self.time_head(dec_out)).squeeze(-1),
        }


# ---------------------------------------------------------------------------
# losses


def masked_losses(batch: PaddedBatch, outputs: dict, layout, dynamic_rates, global_rates):
    """Missing-aware reconstruction loss and its parts.

    Feature losses count observed entries only, normalized by K*l (or G
    for globals). Mask terms are binary cross-entropies whose weights
    put rho_j on observed entries and 1-rho_j on missing ones, so rarely
    observed features are not swamped. The squared time-increment error
    joins the dynamic side with weight 1/(K+1). The total combines the
    global and dynamic sides with the usual d_y/d_x width weights.
    """
    K, G = layout.K, layout.G
    d_x, d_y = layout.d_x, layout.d_y
    valid = batch.step_mask.to(batch.X.dtype)
    lengths = batch.lengths.to(batch.X.dtype)
    rho = torch.as_tensor(dynamic_rates, dtype=batch.X.dtype)
    rho_g = torch.as_tensor(global_rates, dtype=batch.X.dtype)

    lx_terms = group_loss(outputs["x_logits"], batch.X, layout.dynamic_groups)
    observed = batch.M * valid.unsqueeze(-1)
    l_feat = (lx_terms * observed).sum(dim=(1, 2)) / (K * lengths)

    mask_bce = F.binary_cross_entropy_with_logits(
        outputs["mask_logits"], batch.M, reduction="none"
    )
    w = rho * batch.M + (1.0 - rho) * (1.0 - batch.M)
    l_mask = (mask_bce * w * valid.unsqueeze(-1)).sum(dim=(1, 2)) / (K * lengths)

    true_inc = batch.t[:, 1:] - batch.t[:, :-1]
    inc_valid = valid[:, 1:]
    sq = (outputs["time_inc"][:, 1:] - true_inc) ** 2 * inc_valid
    denom = torch.clamp(lengths - 1.0, min=1.0)
    l_time = sq.sum(dim=1) / denom

    l_x = l_feat + l_mask + l_time / (K + 1)

    gy_terms = group_loss(outputs["y_logits"], batch.y, layout.global_groups)
    l_gfeat = (gy_terms * batch.m_y).sum(dim=1) / G
    gmask_bce = F.binary_cross_entropy_with_logits(
        outputs["gmask_logits"], batch.m_y, reduction="none"
    )
    w_g = rho_g * batch.m_y + (1.0 - rho_g) * (1.0 - batch.m_y)
    l_gmask = (gmask_bce * w_g).sum(dim=1) / G
    l_y = l_gfeat + l_gmask

    total = ((d_y * l_y + d_x * l_x) / (d_x + d_y)).mean()
    parts = {
        "feature": l_feat.mean().item(),
        "mask": l_mask.mean().item(),
        "time": l_time.mean().item(),
        "global_feature": l_gfeat.mean().item(),
        "global_mask": l_gmask.mean().item(),
    }
    return total, parts


# ---------------------------------------------------------------------------
# threshold calibration


@dataclass
class MaskThresholds:
    """Binarization thresholds for the dynamic and global mask heads."""

    dynamic: np.ndarray
    global_: np.ndarray

    def to_dict(self) -> dict:
        return {
            "dynamic": [float(v) for v in self.dynamic],
            "global": [float(v) for v in self.global_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MaskThresholds":
        return cls(
            np.asarray(d["dynamic"], dtype=np.float64),
            np.asarray(d["global"], dtype=np.float64),
        )


def _quantile_thresholds(probs: np.ndarray, rates: np.ndarray, what: str) -> np.ndarray:
    out = np.zeros(probs.shape[1], dtype=np.float64)
    for j in range(probs.shape[1]):
        rho = float(rates[j])
        col = probs[:, j]
        if rho <= 0.0:
            out[j] = 0.0
        elif rho >= 1.0:
            out[j] = 1.0
        elif col.max() - col.min() < 1e-9:
            warnings.warn(
                f"constant mask-head outputs for {what} feature {j}; threshold 0.5",
                CalibrationWarning,
            )
            out[j] = 0.5
        else:
            out[j] = float(np.quantile(col, rho))
    return out


@torch.no_grad()
def _freerun_mask_probs(model, dataset, thresholds, batch_size: int) -> np.ndarray:
    """Mask-head outputs from free-running decodes of the training latents."""
    layout = dataset.schema.layout
    collected = []
    instances = dataset.instances
    for lo in range(0, len(instances), batch_size):
        batch = PaddedBatch.from_instances(
            instances[lo : lo + batch_size], layout, with_history=True
        )
        r = model.encode(batch)
        _, rec = synthesize(model, r, dataset.schema, thresholds, trace=True)
        probs = torch.stack(rec["mask_probs"], dim=1).numpy()
        for b, l in enumerate(rec["steps"]):
            collected.append(probs[b, :l])
    return np.concatenate(collected, axis=0).astype(np.float64)


@torch.no_grad()
def calibrate_thresholds(
    model, dataset, batch_size: int = 256, rounds: int = 2
) -> MaskThresholds:
    """Pick per-feature thresholds matching the training missing rates.

    The first round sets threshold j to the rho_j-quantile of the
    teacher-forced mask-head outputs over the training split, so
    predicting observed when the probability exceeds tau_j reproduces
    the overall observation rate 1 - rho_j. A free-running decoder sees
    its own smoother history instead of the data, which narrows the
    output distribution and pushes thresholded rates away from the
    target, so every further round re-collects the outputs from
    free-running decodes of the training latents under the current
    thresholds and takes the quantiles again. The global mask head reads
    the latent directly and needs no refinement. rho = 0 pins a
    threshold to 0 (everything observed).
    """
    if rounds < 1:
        raise ConfigError(f"calibration rounds must be >= 1, got {rounds}")
    model.eval()
    layout = dataset.schema.layout
    dyn_probs, glob_probs = [], []
    instances = dataset.instances
    for lo in range(0, len(instances), batch_size):
        batch = PaddedBatch.from_instances(
            instances[lo : lo + batch_size], layout, with_history=True
        )
        r = model.encode(batch)
        outputs = model.teacher_forward(batch, r)
        probs = torch.sigmoid(outputs["mask_logits"])
        keep = batch.step_mask.reshape(-1)
        dyn_probs.append(probs.reshape(-1, layout.K)[keep].numpy())
        _, _, gmask_logits = model.decode_global(r)
        glob_probs.append(torch.sigmoid(gmask_logits).numpy())
    dyn = np.concatenate(dyn_probs, axis=0).astype(np.float64)
    glob = np.concatenate(glob_probs, axis=0).astype(np.float64)
    rho = dataset.dynamic_missing_rates()
    thresholds = MaskThresholds(
        dynamic=_quantile_thresholds(dyn, rho, "dynamic"),
        global_=_quantile_thresholds(glob, dataset.global_missing_rates(), "global"),
    )
    for _ in range(rounds - 1):
        dyn = _freerun_mask_probs(model, dataset, thresholds, batch_size)
        thresholds = MaskThresholds(
            dynamic=_quantile_thresholds(dyn, rho, "dynamic"),
            global_=thresholds.global_,
        )
    return thresholds


# ---------------------------------------------------------------------------
# synthesis


@torch.no_grad()
def synthesize(
    model: MissingSeriesAutoencoder,
    r: torch.Tensor,
    schema,
    thresholds: MaskThresholds,
    max_steps: int | None = None,
    binarize: str = "threshold",
    generator: torch.Generator | None = None,
    trace: bool = False,
):
    """Decode latents into instances, deciding mask and time per step.

    Per step: decide (timestamp increment, mask probabilities),
    binarize the mask, update the per-feature lag matrix from the
    decided history, decay the decision state, then generate feature
    values and keep only the decided-observed entries. Timestamp and
    lag bookkeeping runs in float64 so the emitted sequences replay the
    lag recurrence bit-exactly.

    binarize="sample" draws Bernoulli masks from the probabilities
    instead of thresholding (needs `generator`).
    """
    model.eval()
    if binarize not in ("threshold", "sample"):
        raise ConfigError(f"unknown binarize mode {binarize!r}")
    layout = schema.layout
    B = r.shape[0]
    dtype = r.dtype
    s, enc_h = model.split_latent(r)
    h0 = model._bridged_hidden(enc_h)

    y_act, _, gmask_logits = model.decode_global(r)
    gmask_probs = torch.sigmoid(gmask_logits)
    tau_g = torch.as_tensor(thresholds.global_, dtype=dtype)
    if binarize == "sample":
        gmask = (torch.rand(gmask_probs.shape, generator=generator) < gmask_probs).to(dtype)
    else:
        gmask = (gmask_probs > tau_g).to(dtype)
    y_hard = harden_groups(y_act, layout.global_groups)
    y_final = y_hard * _expand_global_mask(gmask, layout.global_groups)

    length_slice = layout.length_slice
    if length_slice is None:
        raise ConfigError("synthesis requires a schema with a length feature")
    steps = [
        decode_length(float(y_act[b, length_slice.start]), schema) for b in range(B)
    ]
    if max_steps is not None:
        steps = [min(st, max_steps) for st in steps]
    y_final[:, length_slice.start] = torch.tensor(
        [st / schema.max_length for st in steps], dtype=dtype
    )
    gmask[:, layout.length_group] = 1.0

    tau = torch.as_tensor(thresholds.dynamic, dtype=dtype)
    dec_h = h0[: model.decision_layers].contiguous()
    gen_h = (
        h0[model.decision_layers :].contiguous() if model.two_step else None
    )
    prev_x = r.new_zeros(B, model.d_x)
    prev_pre = r.new_zeros(B, model.d_x)
    prev_mask = r.new_zeros(B, model.K)
    t64 = torch.zeros(B, dtype=torch.float64)
    delta64 = torch.zeros(B, model.K, dtype=torch.float64)
    max_l = max(steps)

    rows_x = np.zeros((B, max_l, model.d_x), dtype=np.float64)
    rows_m = np.zeros((B, max_l, model.K), dtype=np.uint8)
    rows_t = np.zeros((B, max_l), dtype=np.float64)
    record = (
        {"e": [], "h_dec": [], "delta": [], "mask": [], "mask_probs": [], "q": [], "gen_in": []}
        if trace
        else None
    )

    for i in range(max_l):
        e = model.embed(prev_x, prev_pre, prev_mask, y_final, gmask, t64.to(dtype))
        if model.two_step:
            out, dec_h = model.decision_gru(e.unsqueeze(1), dec_h)
            h = out[:, 0]
        else:
            out, dec_h = model.merged_gru(
                torch.cat([e, s], dim=1).unsqueeze(1), dec_h
            )
            h = out[:, 0]
        inc = torch.sigmoid(model.time_head(h)).squeeze(-1)
        inc = torch.clamp(inc, min=MIN_TIME_INCREMENT)
        t_new = t64 + inc.double()
        dt = (t_new - t64).unsqueeze(1)
        if i == 0:
            delta64 = torch.zeros(B, model.K, dtype=torch.float64)
        else:
            delta64 = torch.where(prev_mask.double() == 1.0, dt, delta64 + dt)
        mask_probs = torch.sigmoid(model.mask_head(h))
        if binarize == "sample":
            mask = (torch.rand(mask_probs.shape, generator=generator) < mask_probs).to(dtype)
        else:
            mask = (mask_probs > tau).to(dtype)
        if model.two_step:
            q = model.apply_decay(h, delta64.to(dtype), mask)
            gen_in = torch.cat([q, s], dim=1)
            gout, gen_h = model.generation_gru(gen_in.unsqueeze(1), gen_h)
            g = gout[:, 0]
        else:
            q, gen_in, g = None, None, h
        x = model.dynamic_head.activate(model.dynamic_head.linear(g))
        x = harden_groups(x, layout.dynamic_groups) * model._expand_cols(mask)

        rows_x[:, i] = x.double().numpy()
        rows_m[:, i] = mask.numpy().astype(np.uint8)
        rows_t[:, i] = t_new.numpy()
        if trace:
            record["e"].append(e.clone())
            record["h_dec"].append(h.clone())
            record["delta"].append(delta64.clone())
            record["mask"].append(mask.clone())
            record["mask_probs"].append(mask_probs.clone())
            record["q"].append(q.clone() if q is not None else None)
            record["gen_in"].append(gen_in.clone() if gen_in is not None else None)

        prev_pre = torch.where(model._expand_cols(prev_mask) == 1.0, prev_x, prev_pre)
        prev_x = x
        prev_mask = mask
        t64 = t_new

    instances = []
    y_np = y_final.double().numpy()
    gmask_np = gmask.numpy().astype(np.uint8)
    for b in range(B):
        l = steps[b]
        instances.append(
            TimeSeriesInstance(
                rows_x[b, :l], y_np[b], rows_m[b, :l], gmask_np[b], rows_t[b, :l]
            )
        )
    if trace:
        record["s"] = s.clone()
        record["steps"] = steps
        return instances, record
    return instances


# ---------------------------------------------------------------------------
# training


def train_missing_autoencoder(
    dataset,
    *,
    epochs: int = 800,
    batch_size: int = 128,
    lr: float = 1e-3,
    betas=(0.9, 0.999),
    hidden: int = 128,
    layers: int = 3,
    decision_layers: int = 2,
    d_emb: int | None = None,
    use_embedding: bool = True,
    two_step: bool = True,
    seed: int = 0,
    resume: dict | None = None,
    checkpoint_every: int | None = None,
    checkpoint_cb=None,
    log_every: int = 100,
):
    """Teacher-forced training of the missing-aware autoencoder."""
    layout = dataset.schema.layout
    torch.manual_seed(seed)
    model = MissingSeriesAutoencoder(
        layout,
        hidden=hidden,
        layers=layers,
        decision_layers=decision_layers,
        d_emb=d_emb,
        use_embedding=use_embedding,
        two_step=two_step,
    )
    sampler = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr, betas=betas)
    full = PaddedBatch.from_instances(dataset.instances, layout, with_history=True)
    dyn_rates = dataset.dynamic_missing_rates()
    glob_rates = dataset.global_missing_rates()
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
            _, y_logits, gmask_logits = model.decode_global(r)
            outputs = model.teacher_forward(batch, r)
            outputs["y_logits"] = y_logits
            outputs["gmask_logits"] = gmask_logits
            loss, _ = masked_losses(batch, outputs, layout, dyn_rates, glob_rates)
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
            print(f"[mae] epoch {epoch + 1}/{epochs} loss {trace[-1]:.6f}")
        if checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            last_good = snapshot(epoch + 1)
            if checkpoint_cb is not None:
                checkpoint_cb(epoch + 1, last_good)
    return model, trace
