"""Shared batch-preparation and masked-loss helpers for the training loops."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import AdamConfig, AdamState, adam_step


def pad_sequences(arrays: list, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    """Stack [N_i, D] arrays into [B, N_max, D] plus a {0,1} mask [B, N_max]."""
    n_max = max(a.shape[0] for a in arrays)
    dim = arrays[0].shape[1]
    batch = np.zeros((len(arrays), n_max, dim), dtype=dtype)
    mask = np.zeros((len(arrays), n_max), dtype=dtype)
    for i, a in enumerate(arrays):
        batch[i, :a.shape[0]] = a
        mask[i, :a.shape[0]] = 1.0
    return batch, mask


def pad_ids(id_lists: list, pad_id: int = 0,
            dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    l_max = max(len(ids) for ids in id_lists)
    out = np.full((len(id_lists), l_max), pad_id, dtype=np.int64)
    mask = np.zeros((len(id_lists), l_max), dtype=dtype)
    for i, ids in enumerate(id_lists):
        out[i, :len(ids)] = ids
        mask[i, :len(ids)] = 1.0
    return out, mask


def masked_mean_l1(pred: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean absolute error over valid frames and feature dims."""
    weighted = ad.mul(ad.abs_(ad.sub(pred, target)), mask[:, :, None])
    return ad.mul(ad.sum_(weighted), 1.0 / (mask.sum() * pred.shape[-1]))


def masked_mean_sq(pred: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    diff = ad.sub(pred, target)
    weighted = ad.mul(ad.mul(diff, diff), mask[:, :, None])
    return ad.mul(ad.sum_(weighted), 1.0 / (mask.sum() * pred.shape[-1]))


def masked_bce_with_logits(logits: Tensor, target: np.ndarray,
                           mask: np.ndarray) -> Tensor:
    """Numerically stable binary cross entropy, mean over valid positions."""
    absl = ad.abs_(logits)
    per = ad.add(ad.sub(ad.relu(logits), ad.mul(logits, target)),
                 ad.log(ad.add(ad.exp(ad.mul(absl, -1.0)), 1.0)))
    return ad.mul(ad.sum_(ad.mul(per, mask)), 1.0 / mask.sum())


def masked_cross_entropy(logits: Tensor, labels: np.ndarray,
                         mask: np.ndarray) -> Tensor:
    """Softmax cross entropy over the last axis; labels [B, T] ints."""
    n_classes = logits.shape[-1]
    shift = logits.data.max(axis=-1, keepdims=True)  # constant shift, grad-free
    shifted = ad.sub(logits, shift)
    lse = ad.add(ad.log(ad.sum_(ad.exp(shifted), axis=-1)), shift[..., 0])
    onehot = np.eye(n_classes, dtype=logits.data.dtype)[labels]
    true_logit = ad.sum_(ad.mul(logits, onehot), axis=-1)
    return ad.mul(ad.sum_(ad.mul(ad.sub(lse, true_logit), mask)), 1.0 / mask.sum())


def batch_indices(n: int, batch_size: int, seed: int):
    """Endless seeded epoch shuffles over range(n); short final batch kept;
    indices inside a batch come out sorted (canonical assembly order)."""
    epoch = 0
    while True:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 13, epoch]))
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            chunk = order[start:start + batch_size]
            if len(chunk):
                yield np.sort(chunk)
        epoch += 1


def apply_gradients(params: dict, state: AdamState, adam_cfg: AdamConfig,
                    step: int) -> None:
    """Backward must already have run; consumes and clears the grads."""
    grads = {}
    for name, tensor in params.items():
        grads[name] = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
    adam_step({name: t.data for name, t in params.items()}, grads, state,
              adam_cfg, step)
    for tensor in params.values():
        tensor.grad = None
