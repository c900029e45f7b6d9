"""Segmentation loss: equal-weight mean of soft-Dice (over classes) and
voxelwise cross-entropy, with the exact analytic logit gradient."""

from __future__ import annotations

import numpy as np

from .tensorops import LabelMap, Volume

DICE_SMOOTH = 1e-5


def loss_and_grad(logits: Volume, gt: LabelMap) -> tuple[float, Volume]:
    """loss = 0.5*(1 - mean_k softDice(p_k, onehot_k)) + 0.5*CE.

    Scalar reductions accumulate in float64 so the returned loss is stable
    enough for finite-difference checks; the gradient itself is float32.
    """
    if tuple(logits.shape) != tuple(gt.shape):
        raise ValueError(f"shape mismatch: {tuple(logits.shape)} vs {tuple(gt.shape)}")
    K = logits.channels
    if K != gt.num_labels + 1:
        raise ValueError(f"logits have {K} classes, labels declare {gt.num_labels + 1}")
    logits.require_finite("logits")

    z = logits.data
    m = z.max(axis=0, keepdims=True)
    ez = np.exp(z - m)
    sez = ez.sum(axis=0, keepdims=True)
    p = ez / sez
    logp = (z - m) - np.log(sez)

    labels = gt.labels
    n_vox = labels.size
    onehot = np.zeros_like(p)
    for k in range(K):
        onehot[k] = labels == k

    ce = -np.mean(np.take_along_axis(logp, labels[None].astype(np.intp), axis=0), dtype=np.float64)

    p64 = p.reshape(K, -1).astype(np.float64)
    g64 = onehot.reshape(K, -1).astype(np.float64)
    inter = (p64 * g64).sum(axis=1)
    totals = p64.sum(axis=1) + g64.sum(axis=1)
    dice_k = (2.0 * inter + DICE_SMOOTH) / (totals + DICE_SMOOTH)
    loss = 0.5 * (1.0 - dice_k.mean()) + 0.5 * ce

    # dL/dp from the dice term, then chain through softmax
    denom = (totals + DICE_SMOOTH).astype(np.float32).reshape(K, 1, 1, 1)
    dk = dice_k.astype(np.float32).reshape(K, 1, 1, 1)
    dldp = (-0.5 / K) * (2.0 * onehot - dk) / denom
    inner = (dldp * p).sum(axis=0, keepdims=True)
    dz_dice = p * (dldp - inner)
    dz_ce = (0.5 / n_vox) * (p - onehot)
    dlogits = Volume(logits.shape, (dz_dice + dz_ce).astype(np.float32))
    return float(loss), dlogits
