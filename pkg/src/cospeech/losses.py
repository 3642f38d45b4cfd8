"""Training losses.

Motion tensors are ``(..., T, N, 3)``. The per-frame l1 norm is the mean
absolute value over the frame's ``N * 3`` entries; frame terms are summed
over time and averaged over any leading batch axes. Forward differences
use a zero first difference (``x_0 := x_1``).
"""

import numpy as np
import torch
import torch.nn.functional as F

from .exceptions import DomainError, SameSpeaker, ShapeMismatch


def _t(x):
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def forward_difference(x):
    x = _t(x)
    d = x[..., 1:, :, :] - x[..., :-1, :, :]
    return torch.cat([torch.zeros_like(x[..., :1, :, :]), d], dim=-3)


def frame_l1(a, b):
    """Sum over frames of the per-frame mean absolute difference, batch-averaged."""
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() < 3:
        raise ShapeMismatch("expected (..., T, N, 3)")
    per_frame = (a - b).abs().mean(dim=(-2, -1))
    return per_frame.sum(dim=-1).mean()


def loss_phoneme(p_gt, p_syn):
    return frame_l1(p_gt, p_syn) + frame_l1(forward_difference(p_gt), forward_difference(p_syn))


def loss_reconstruction(F_gt, F_syn, f_gt, f_syn, P_gt, P_syn, u_gt, u_syn, weights):
    """Position terms on landmarks and joints plus weighted delta/unit and difference terms."""
    position = frame_l1(F_gt, F_syn) + frame_l1(P_gt, P_syn)
    loss = position
    if weights.lambda_vel:
        loss = loss + weights.lambda_vel * (frame_l1(f_gt, f_syn) + frame_l1(u_gt, u_syn))
    if weights.lambda_acc:
        loss = loss + weights.lambda_acc * (
            frame_l1(forward_difference(f_gt), forward_difference(f_syn))
            + frame_l1(forward_difference(u_gt), forward_difference(u_syn))
        )
    return loss


def motion_distance(a, b):
    """Per-sample sum over modalities of the mean absolute difference.

    ``a`` and ``b`` are tensors or tuples of tensors (e.g. ``(face, units)``);
    a leading batch axis is kept when the modality has ``>= 4`` dims.
    """
    if not isinstance(a, (tuple, list)):
        a, b = (a,), (b,)
    total = 0.0
    for x, y in zip(a, b):
        x, y = _t(x), _t(y)
        if x.shape != y.shape:
            raise ShapeMismatch(f"{tuple(x.shape)} vs {tuple(y.shape)}")
        diff = (x - y).abs()
        if diff.dim() >= 4:
            total = total + diff.flatten(1).mean(dim=1)
        else:
            total = total + diff.mean()
    return total


def hinge_rank(d_same, d_other, margin):
    return torch.clamp(margin + _t(d_same) - _t(d_other), min=0.0).mean()


def loss_csd(motion_same, motion_other, motion_gt, margin, same_ids=None, other_ids=None):
    """Ranking loss: the matched-speaker synthesis should be closer to ground truth."""
    if same_ids is not None and other_ids is not None:
        if np.any(np.asarray(same_ids) == np.asarray(other_ids)):
            raise SameSpeaker("negative example uses the ground-truth speaker")
    return hinge_rank(motion_distance(motion_gt, motion_same), motion_distance(motion_gt, motion_other), margin)


def _check_prob(c):
    c = _t(c)
    if not bool(((c > 0) & (c < 1)).all()):
        raise DomainError("discriminator outputs must lie strictly in (0, 1)")
    return c


def loss_adversarial_G(c_on_synthesized):
    """Non-saturating generator loss ``-E[log c_sn]``."""
    c = _check_prob(c_on_synthesized)
    return -torch.log(c).mean()


def loss_adversarial_D(c_on_gt, c_on_synthesized):
    c_gt = _check_prob(c_on_gt)
    c_sn = _check_prob(c_on_synthesized)
    return -torch.log(c_gt).mean() - torch.log1p(-c_sn).mean()


def loss_adversarial_G_logits(logit_sn):
    return F.binary_cross_entropy_with_logits(logit_sn, torch.ones_like(logit_sn))


def loss_adversarial_D_logits(logit_gt, logit_sn):
    return (
        F.binary_cross_entropy_with_logits(logit_gt, torch.ones_like(logit_gt))
        + F.binary_cross_entropy_with_logits(logit_sn, torch.zeros_like(logit_sn))
    )

