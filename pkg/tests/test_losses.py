import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from cospeech.exceptions import DomainError, SameSpeaker, ShapeMismatch
from cospeech.losses import (
    forward_difference,
    frame_l1,
    hinge_rank,
    loss_adversarial_D,
    loss_adversarial_D_logits,
    loss_adversarial_G,
    loss_adversarial_G_logits,
    loss_csd,
    loss_phoneme,
    loss_reconstruction,
    motion_distance,
)
from cospeech.training import LossWeights

TOL = 1e-9


def rand(*shape, seed=0):
    return torch.as_tensor(np.random.default_rng(seed).standard_normal(shape))


def test_forward_difference_zero_first():
    x = rand(4, 2, 3)
    d = forward_difference(x)
    assert torch.equal(d[0], torch.zeros(2, 3, dtype=x.dtype))
    assert torch.equal(d[1:], x[1:] - x[:-1])


def test_phoneme_identical_is_zero():
    x = rand(5, 3, 3)
    assert loss_phoneme(x, x).item() == 0.0


def test_phoneme_constant_offset():
    x = rand(6, 3, 3)
    c = 0.75
    assert abs(loss_phoneme(x, x + c).item() - 6 * c) < TOL
    assert frame_l1(forward_difference(x), forward_difference(x + c)).item() < TOL


def test_phoneme_two_frame_hand_case():
    gt = torch.tensor([[[0.0, 0, 0]], [[1.0, 0, 0]]], dtype=torch.double)
    syn = torch.zeros_like(gt)
    assert abs(frame_l1(gt, syn).item() - 1 / 3) < TOL
    assert abs(frame_l1(forward_difference(gt), forward_difference(syn)).item() - 1 / 3) < TOL
    assert abs(loss_phoneme(gt, syn).item() - 2 / 3) < TOL


def test_phoneme_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        loss_phoneme(rand(4, 2, 3), rand(4, 3, 3))


def _rec(weights, seed=0):
    args = [rand(2, 6, 4, 3, seed=seed + i) for i in range(8)]
    return loss_reconstruction(*args, weights=weights).item(), args


def test_reconstruction_equal_inputs():
    x = rand(2, 6, 4, 3)
    assert loss_reconstruction(x, x, x, x, x, x, x, x, LossWeights()).item() == 0.0


def test_reconstruction_position_only():
    value, a = _rec(LossWeights(lambda_vel=0, lambda_acc=0))
    expected = frame_l1(a[0], a[1]) + frame_l1(a[4], a[5])
    assert abs(value - expected.item()) < TOL


def test_reconstruction_hand_value():
    w = LossWeights(lambda_vel=0.3, lambda_acc=0.7)
    value, a = _rec(w)
    fd = forward_difference
    expected = (
        frame_l1(a[0], a[1]) + frame_l1(a[4], a[5])
        + 0.3 * (frame_l1(a[2], a[3]) + frame_l1(a[6], a[7]))
        + 0.7 * (frame_l1(fd(a[2]), fd(a[3])) + frame_l1(fd(a[6]), fd(a[7])))
    )
    assert abs(value - expected.item()) < TOL


def test_reconstruction_linear_in_acc_weight():
    base, _ = _rec(LossWeights(lambda_vel=0.1, lambda_acc=0.0))
    one, _ = _rec(LossWeights(lambda_vel=0.1, lambda_acc=0.2))
    two, _ = _rec(LossWeights(lambda_vel=0.1, lambda_acc=0.4))
    assert abs((two - base) - 2 * (one - base)) < TOL


def test_csd_saturates():
    gt = (rand(2, 5, 3, 3), rand(2, 5, 2, 3, seed=1))
    far = tuple(t + 10 for t in gt)
    assert loss_csd(gt, far, gt, margin=0.5).item() == 0.0


def test_csd_identical_motions_give_margin():
    gt = (rand(2, 5, 3, 3), rand(2, 5, 2, 3, seed=1))
    syn = tuple(t + 0.3 for t in gt)
    assert abs(loss_csd(syn, syn, gt, margin=0.5).item() - 0.5) < TOL


def test_csd_toy_hinge():
    assert abs(hinge_rank(torch.tensor(0.2, dtype=torch.double), torch.tensor(0.5, dtype=torch.double), 0.5).item()
               - 0.2) < TOL


def test_csd_distance_is_mean_l1_per_modality():
    a = (torch.zeros(1, 2, 1, 3, dtype=torch.double), torch.zeros(1, 2, 1, 3, dtype=torch.double))
    b = (torch.full((1, 2, 1, 3), 2.0, dtype=torch.double), torch.full((1, 2, 1, 3), 1.0, dtype=torch.double))
    assert torch.allclose(motion_distance(a, b), torch.tensor([3.0], dtype=torch.double))


def test_csd_same_speaker_rejected():
    x = rand(2, 5, 3, 3)
    with pytest.raises(SameSpeaker):
        loss_csd(x, x, x, 0.5, same_ids=[0, 1], other_ids=[1, 1])


def test_adversarial_values():
    half = torch.tensor([0.5], dtype=torch.double)
    assert abs(loss_adversarial_G(half).item() - math.log(2)) < TOL
    assert abs(loss_adversarial_D(half, half).item() - 2 * math.log(2)) < TOL
    eps = 1e-6
    near = loss_adversarial_D(torch.tensor([1 - eps], dtype=torch.double), torch.tensor([eps], dtype=torch.double))
    assert abs(near.item() - 2 * eps) < 1e-11
    zero = torch.zeros(1, dtype=torch.double)
    assert abs(loss_adversarial_G_logits(zero).item() - math.log(2)) < TOL
    assert abs(loss_adversarial_D_logits(zero, zero).item() - 2 * math.log(2)) < TOL


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
def test_adversarial_domain(bad):
    with pytest.raises(DomainError):
        loss_adversarial_G(torch.tensor([bad]))
    with pytest.raises(DomainError):
        loss_adversarial_D(torch.tensor([0.5]), torch.tensor([bad]))


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
def test_adversarial_positive(c_gt, c_sn):
    g = loss_adversarial_G(torch.tensor([c_sn], dtype=torch.double)).item()
    d = loss_adversarial_D(torch.tensor([c_gt], dtype=torch.double), torch.tensor([c_sn], dtype=torch.double)).item()
    assert g > 0 and d > 0
    logit = math.log(c_sn / (1 - c_sn))
    assert abs(loss_adversarial_G_logits(torch.tensor([logit], dtype=torch.double)).item() - g) < 1e-9 * max(1, g)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 2), st.floats(0, 2))
def test_losses_nonnegative(seed, lv, la):
    a, b = rand(2, 5, 3, 3, seed=seed), rand(2, 5, 3, 3, seed=seed + 1)
    assert loss_phoneme(a, b).item() > 0
    w = LossWeights(lambda_vel=lv, lambda_acc=la)
    assert loss_reconstruction(a, b, a, b, a, b, a, b, w).item() > 0
    assert loss_csd((a,), (b,), (a,), 0.5).item() >= 0
