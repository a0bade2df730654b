"""Small recurrent building blocks shared by the evaluation metrics."""

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from ..errors import EvalError

_CELLS = {"gru": nn.GRU, "lstm": nn.LSTM}


def pad_stack(arrays, dtype=torch.float32):
    """Stack per-instance (l_i, d) arrays into a padded tensor plus lengths."""
    if not arrays:
        raise EvalError("cannot batch an empty collection of sequences")
    lengths = torch.tensor([a.shape[0] for a in arrays], dtype=torch.long)
    padded = np.zeros(
        (len(arrays), int(lengths.max()), arrays[0].shape[1]), dtype=np.float32
    )
    for i, a in enumerate(arrays):
        padded[i, : a.shape[0]] = a
    return torch.from_numpy(padded).to(dtype), lengths


def binary_logit_loss(logits, targets):
    """Binary cross entropy on logits for hard 0/1 targets.

    Written with explicit softplus branches so that flipping every label
    negates each per-sample gradient exactly (bitwise), which keeps
    classifier training symmetric under a label swap.
    """
    return torch.where(targets > 0.5, F.softplus(-logits), F.softplus(logits)).mean()


class SequenceClassifier(nn.Module):
    """Recurrent binary classifier: packed RNN, final hidden state, linear head."""

    def __init__(self, input_dim, hidden, *, cell="lstm", layers=2, zero_head=False):
        super().__init__()
        self.rnn = _CELLS[cell](input_dim, hidden, num_layers=layers, batch_first=True)
        self.head = nn.Linear(hidden, 1)
        if zero_head:
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)

    def forward(self, padded, lengths):
        packed = pack_padded_sequence(
            padded, lengths, batch_first=True, enforce_sorted=False
        )
        _, state = self.rnn(packed)
        h = state[0] if isinstance(state, tuple) else state
        return self.head(h[-1]).squeeze(-1)


class NextStepPredictor(nn.Module):
    """Recurrent regressor emitting one feature vector per input step."""

    def __init__(self, input_dim, hidden, out_dim, *, layers=2):
        super().__init__()
        self.rnn = nn.LSTM(input_dim, hidden, num_layers=layers, batch_first=True)
        self.head = nn.Linear(hidden, out_dim)

    def forward(self, padded, lengths):
        packed = pack_padded_sequence(
            padded, lengths, batch_first=True, enforce_sorted=False
        )
        out, _ = self.rnn(packed)
        out, _ = pad_packed_sequence(
            out, batch_first=True, total_length=padded.shape[1]
        )
        return self.head(out)


def train_classifier(model, features, labels, *, epochs, batch_size, lr, seed):
    """Fit a SequenceClassifier with Adam on a list of per-instance arrays.

    The shuffle order depends only on the seed, never on the labels, so a
    label swap replays the exact same batches.
    """
    padded, lengths = pad_stack(features)
    targets = torch.as_tensor(np.asarray(labels), dtype=torch.float32)
    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    model.train()
    for _ in range(epochs):
        perm = torch.randperm(len(features), generator=gen)
        for start in range(0, len(features), batch_size):
            idx = perm[start : start + batch_size]
            loss = binary_logit_loss(model(padded[idx], lengths[idx]), targets[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
    return model


@torch.no_grad()
def classifier_logits(model, features, batch_size=512):
    padded, lengths = pad_stack(features)
    model.eval()
    outs = [
        model(padded[s : s + batch_size], lengths[s : s + batch_size])
        for s in range(0, len(features), batch_size)
    ]
    return torch.cat(outs).numpy()
