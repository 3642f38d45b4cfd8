"""Loss weighting, optimiser settings, the adversarial train step and epoch loops."""

import copy
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch

from .exceptions import EmptyCorpus
from .losses import (
    loss_adversarial_D_logits,
    loss_adversarial_G_logits,
    loss_csd,
    loss_phoneme,
    loss_reconstruction,
)


class _Config:
    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        out = {}
        for f in fields(cls):
            if f.name in d:
                out[f.name] = type(f.default)(d[f.name])
        return cls(**out)


@dataclass(frozen=True)
class LossWeights(_Config):
    lambda_vel: float = 0.1
    lambda_acc: float = 0.1
    lambda_csd: float = 0.1
    lambda_adv: float = 1.0
    csd_margin: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                raise ValueError(f"{f.name} must be finite")
            if f.name != "csd_margin" and v < 0:
                raise ValueError(f"{f.name} must be nonnegative")


@dataclass(frozen=True)
class OptimizerConfig(_Config):
    beta1: float = 0.5
    beta2: float = 0.999
    generator_lr: float = 1e-4
    discriminator_lr: float = 5e-5
    lr_decay: float = 0.999
    batch_size: int = 256
    epochs: int = 1000
    phoneme_lr: float = 1e-3
    phoneme_batch_size: int = 1024
    phoneme_epochs: int = 500
    validate_every: int = 10


def units_to_pose_torch(units, skeleton):
    """Differentiable forward kinematics: ``(..., J-1, 3)`` units to ``(..., J, 3)`` joints."""
    units = units / units.norm(dim=-1, keepdim=True)
    joints = [torch.zeros_like(units[..., 0, :])]
    for b, length in enumerate(skeleton.bone_lengths):
        joints.append(joints[skeleton.bone_source(b)] + length * units[..., b, :])
    return torch.stack(joints, dim=-2)


@dataclass
class Batch:
    mfcc: torch.Tensor
    words: torch.Tensor
    speaker: torch.Tensor  # one-hot
    speaker_id: torch.Tensor
    face: torch.Tensor  # deltas, full window
    units: torch.Tensor
    reference: torch.Tensor  # (B, L, 3)

    def __len__(self):
        return self.face.shape[0]

    def seeds(self, seed_frames):
        return self.face[:, :seed_frames], self.units[:, :seed_frames]

    def index(self, idx):
        return Batch(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})


def generate(generator, batch, noise, speaker=None):
    f_seed, u_seed = batch.seeds(generator.plan.seed_frames)
    k = batch.speaker if speaker is None else speaker
    return generator(batch.mfcc, batch.words, k, f_seed, u_seed, noise)


def reconstruction_terms(batch, face_syn, units_syn, skeleton, face_scale, pose_scale, weights):
    """Reconstruction loss with positions rebuilt from deltas and bone units.

    Landmark quantities are divided by ``face_scale`` and joints by
    ``pose_scale`` so face and pose terms are of comparable size.
    """
    ref = batch.reference[:, None]
    F_gt = (ref + batch.face) / face_scale
    F_syn = (ref + face_syn) / face_scale
    P_gt = units_to_pose_torch(batch.units, skeleton) / pose_scale
    P_syn = units_to_pose_torch(units_syn, skeleton) / pose_scale
    return loss_reconstruction(
        F_gt, F_syn, batch.face / face_scale, face_syn / face_scale,
        P_gt, P_syn, batch.units, units_syn, weights,
    )


def other_speakers(speaker_id, speaker_count, rng):
    shift = torch.randint(1, speaker_count, speaker_id.shape, generator=rng)
    return (speaker_id + shift) % speaker_count


def train_step(batch, generator, discriminator, weights, optimizers, rng, skeleton, pose_scale,
               adversarial=True):
    """One discriminator update on detached synthesis, then one generator update.

    ``optimizers`` is ``(generator_opt, discriminator_opt)``. Returns a dict
    of scalar losses.
    """
    gen_opt, disc_opt = optimizers
    face_scale = generator.face_scale
    noise = torch.randn(len(batch), generator.plan.d_k, generator=rng, dtype=batch.face.dtype)
    face_syn, units_syn = generate(generator, batch, noise)
    out = {}
    use_disc = adversarial and discriminator is not None

    if use_disc:
        disc_opt.zero_grad(set_to_none=True)
        logit_gt = discriminator(batch.face, batch.units)
        logit_sn = discriminator(face_syn.detach(), units_syn.detach())
        loss_d = loss_adversarial_D_logits(logit_gt, logit_sn)
        loss_d.backward()
        disc_opt.step()
        out["adv_d"] = loss_d.item()

    gen_opt.zero_grad(set_to_none=True)
    rec = reconstruction_terms(batch, face_syn, units_syn, skeleton, face_scale, pose_scale, weights)
    total = rec
    out["rec"] = rec.item()
    speaker_count = batch.speaker.shape[1]
    if weights.lambda_csd > 0 and speaker_count > 1:
        other_id = other_speakers(batch.speaker_id, speaker_count, rng)
        other = torch.nn.functional.one_hot(other_id, speaker_count).to(batch.speaker.dtype)
        face_o, units_o = generate(generator, batch, noise, speaker=other)
        csd = loss_csd(
            (face_syn / face_scale, units_syn),
            (face_o / face_scale, units_o),
            (batch.face / face_scale, batch.units),
            weights.csd_margin,
        )
        total = total + weights.lambda_csd * csd
        out["csd"] = csd.item()
    if use_disc and weights.lambda_adv > 0:
        discriminator.requires_grad_(False)
        try:
            loss_g = loss_adversarial_G_logits(discriminator(face_syn, units_syn))
        finally:
            discriminator.requires_grad_(True)
        total = total + weights.lambda_adv * loss_g
        out["adv_g"] = loss_g.item()
    total.backward()
    gen_opt.step()
    out["total"] = total.item()
    return out


def make_adam(params, lr, cfg):
    return torch.optim.Adam(params, lr=lr, betas=(cfg.beta1, cfg.beta2))


def batches(n, batch_size, rng):
    order = torch.randperm(n, generator=rng)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


class SynthesisTrainer:
    """Owns optimisers, schedulers and the random stream for generator training."""

    def __init__(self, generator, discriminator, weights, cfg, skeleton, pose_scale, seed=0,
                 adversarial=True):
        self.generator = generator
        self.discriminator = discriminator
        self.weights = weights
        self.cfg = cfg
        self.skeleton = skeleton
        self.pose_scale = float(pose_scale)
        self.adversarial = adversarial and discriminator is not None
        self.gen_opt = make_adam(generator.parameters(), cfg.generator_lr, cfg)
        self.gen_sched = torch.optim.lr_scheduler.ExponentialLR(self.gen_opt, cfg.lr_decay)
        if discriminator is not None:
            self.disc_opt = make_adam(discriminator.parameters(), cfg.discriminator_lr, cfg)
            self.disc_sched = torch.optim.lr_scheduler.ExponentialLR(self.disc_opt, cfg.lr_decay)
        else:
            self.disc_opt = self.disc_sched = None
        self.rng = torch.Generator().manual_seed(int(seed))
        self.epoch = 0

    def run_epoch(self, data):
        """One pass over ``data`` (a :class:`Batch` holding the whole training set)."""
        self.generator.train()
        sums = {}
        count = 0
        for idx in batches(len(data), self.cfg.batch_size, self.rng):
            losses = train_step(
                data.index(idx), self.generator, self.discriminator, self.weights,
                (self.gen_opt, self.disc_opt), self.rng, self.skeleton, self.pose_scale,
                self.adversarial,
            )
            for k, v in losses.items():
                sums[k] = sums.get(k, 0.0) + v * len(idx)
            count += len(idx)
        self.gen_sched.step()
        if self.disc_sched is not None:
            self.disc_sched.step()
        self.epoch += 1
        out = {k: v / count for k, v in sums.items()}
        out["lr_g"] = self.gen_opt.param_groups[0]["lr"]
        out["lr_d"] = self.disc_opt.param_groups[0]["lr"] if self.disc_opt is not None else 0.0
        return out

    def state_dict(self):
        state = {
            "epoch": self.epoch,
            "gen_opt": self.gen_opt.state_dict(),
            "gen_sched": self.gen_sched.state_dict(),
            "rng": self.rng.get_state(),
        }
        if self.disc_opt is not None:
            state["disc_opt"] = self.disc_opt.state_dict()
            state["disc_sched"] = self.disc_sched.state_dict()
        return state

    def load_state_dict(self, state):
        self.epoch = int(state["epoch"])
        self.gen_opt.load_state_dict(state["gen_opt"])
        self.gen_sched.load_state_dict(state["gen_sched"])
        self.rng.set_state(state["rng"])
        if self.disc_opt is not None and "disc_opt" in state:
            self.disc_opt.load_state_dict(state["disc_opt"])
            self.disc_sched.load_state_dict(state["disc_sched"])


def train_phoneme(spec, lips, net, cfg, seed=0, spec_val=None, lips_val=None, epochs=None,
                  callback=None):
    """Fit ``net`` (a ``PhonemeNet``) to map spectrogram windows to lip deltas.

    Returns ``(net, history)``; ``net`` holds the weights with the lowest
    validation loss (training loss when no validation data is given).
    """
    spec = torch.as_tensor(np.asarray(spec), dtype=torch.float32)
    lips = torch.as_tensor(np.asarray(lips), dtype=torch.float32)
    if spec.shape[0] == 0:
        raise EmptyCorpus("no phoneme training windows")
    has_val = spec_val is not None and len(spec_val) > 0
    if has_val:
        spec_val = torch.as_tensor(np.asarray(spec_val), dtype=torch.float32)
        lips_val = torch.as_tensor(np.asarray(lips_val), dtype=torch.float32)
    epochs = cfg.phoneme_epochs if epochs is None else epochs
    rng = torch.Generator().manual_seed(int(seed))
    opt = make_adam(net.parameters(), cfg.phoneme_lr, cfg)
    scale = net.lip_scale
    best = (float("inf"), copy.deepcopy(net.state_dict()))
    history = []
    for epoch in range(epochs):
        net.train()
        total, count = 0.0, 0
        for idx in batches(spec.shape[0], cfg.phoneme_batch_size, rng):
            opt.zero_grad(set_to_none=True)
            loss = loss_phoneme(lips[idx] / scale, net(spec[idx]) / scale)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        row = {"epoch": epoch, "loss": total / count}
        with torch.no_grad():
            net.eval()
            if has_val:
                row["val_loss"] = float(loss_phoneme(lips_val / scale, net(spec_val) / scale))
            else:
                row["val_loss"] = float(loss_phoneme(lips / scale, net(spec) / scale))
        if row["val_loss"] < best[0]:
            best = (row["val_loss"], copy.deepcopy(net.state_dict()))
        history.append(row)
        if callback is not None:
            callback(row)
    net.load_state_dict(best[1])
    return net, history
