"""Two-sample realism metrics: discriminative and predictive scores."""

import numpy as np
import torch

from ..errors import EvalError
from .nets import (
    NextStepPredictor,
    SequenceClassifier,
    classifier_logits,
    pad_stack,
    train_classifier,
)


def _score_features(dataset):
    """Per-instance input arrays for the real-vs-synthetic classifier.

    Complete data uses the scaled dynamic features alone; incomplete data
    appends the observation masks and timestamps so the classifier can see
    missing patterns and sampling times.
    """
    feats = []
    for inst in dataset.instances:
        if dataset.schema.complete:
            feats.append(inst.X)
        else:
            observed = dataset.schema.layout.expand_mask(inst.M_x)
            cols = [inst.X * observed, inst.M_x.astype(np.float64), inst.t[:, None]]
            feats.append(np.concatenate(cols, axis=1))
    return feats


def _two_sample_accuracy(
    real,
    synthetic,
    *,
    seed=0,
    hidden=16,
    epochs=30,
    batch_size=128,
    lr=1e-3,
    train_frac=0.8,
    flip_labels=False,
):
    """Held-out accuracy of a 2-layer LSTM telling the two datasets apart.

    The head starts at zero and the loss gradient is antisymmetric in the
    labels, so flip_labels=True reproduces the exact same accuracy; the
    score inherits that label-swap symmetry.
    """
    if len(real.instances) < 2 or len(synthetic.instances) < 2:
        raise EvalError("discriminative score needs at least 2 instances per side")
    if real.schema.content_hash() != synthetic.schema.content_hash():
        raise EvalError("datasets use different schemas")
    feats = _score_features(real) + _score_features(synthetic)
    labels = np.concatenate(
        [np.ones(len(real.instances)), np.zeros(len(synthetic.instances))]
    )
    if flip_labels:
        labels = 1.0 - labels
    gen = torch.Generator().manual_seed(seed)
    perm = torch.randperm(len(feats), generator=gen).numpy()
    n_train = int(len(feats) * train_frac)
    if n_train < 1 or n_train >= len(feats):
        raise EvalError("train fraction leaves an empty split")
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    torch.manual_seed(seed)
    model = SequenceClassifier(feats[0].shape[1], hidden, cell="lstm", zero_head=True)
    train_classifier(
        model,
        [feats[i] for i in train_idx],
        labels[train_idx],
        epochs=epochs,
        batch_size=batch_size,
        lr=lr,
        seed=seed + 1,
    )
    pred = (classifier_logits(model, [feats[i] for i in test_idx]) > 0).astype(float)
    return float((pred == labels[test_idx]).mean())


def discriminative_score(real, synthetic, *, seed=0, **kwargs):
    """|0.5 - accuracy| of a classifier trained to separate real from synthetic.

    0 means indistinguishable, 0.5 means perfectly separable.
    """
    return abs(0.5 - _two_sample_accuracy(real, synthetic, seed=seed, **kwargs))


def predictive_score(
    train, test, *, seed=0, hidden=16, epochs=40, batch_size=128, lr=1e-3
):
    """Next-step mean absolute error of a recurrent predictor.

    Trains a 2-layer LSTM on `train` to map steps 1..l-1 onto steps 2..l of
    the full feature vector, then reports MAE on `test`. Pass synthetic data
    as `train` and real data as `test` for the train-on-synthetic
    orientation; pass real for both to get the oracle baseline.
    """
    if train.schema.content_hash() != test.schema.content_hash():
        raise EvalError("datasets use different schemas")
    for name, ds in (("train", train), ("test", test)):
        if not ds.schema.complete:
            raise EvalError(
                f"predictive score is defined for complete data; {name} side is not"
            )
        if not ds.instances:
            raise EvalError(f"predictive score needs a non-empty {name} dataset")
        if any(inst.length < 2 for inst in ds.instances):
            raise EvalError("predictive score needs sequences of at least 2 steps")

    def split_pairs(ds):
        ins = [inst.X[:-1] for inst in ds.instances]
        outs = [inst.X[1:] for inst in ds.instances]
        padded_in, lengths = pad_stack(ins)
        padded_out, _ = pad_stack(outs)
        valid = torch.arange(padded_in.shape[1])[None, :] < lengths[:, None]
        return padded_in, padded_out, lengths, valid.unsqueeze(-1).float()

    d_x = train.schema.layout.d_x
    torch.manual_seed(seed)
    model = NextStepPredictor(d_x, hidden, d_x)
    x, y, lengths, valid = split_pairs(train)
    gen = torch.Generator().manual_seed(seed + 1)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    model.train()
    for _ in range(epochs):
        perm = torch.randperm(len(train.instances), generator=gen)
        for start in range(0, len(perm), batch_size):
            idx = perm[start : start + batch_size]
            pred = model(x[idx], lengths[idx])
            v = valid[idx]
            loss = (torch.abs(pred - y[idx]) * v).sum() / (v.sum() * d_x)
            opt.zero_grad()
            loss.backward()
            opt.step()

    model.eval()
    x, y, lengths, valid = split_pairs(test)
    total, count = 0.0, 0.0
    with torch.no_grad():
        for start in range(0, len(test.instances), 512):
            sl = slice(start, start + 512)
            pred = model(x[sl], lengths[sl])
            v = valid[sl]
            total += float((torch.abs(pred - y[sl]) * v).sum())
            count += float(v.sum() * d_x)
    return total / count
