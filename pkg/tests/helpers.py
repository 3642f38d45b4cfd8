import os
import numpy as np
import torch

from cospeech.nn.networks import Discriminator, Generator, PhonemeNet

EPS = 1e-5
REL_TOL = 1e-4
# relative errors use max(|num|, |ana|, GRAD_FLOOR * max(1, |f|)) as denominator;
# the floor covers exact-zero gradients, where central differences carry only
# roundoff of order |f| * machine epsilon / eps
GRAD_FLOOR = 1e-6
VOCAB = 6
SPEAKERS = 3


def fd_max_rel_error(fn, tensors, eps=EPS, frozen=None):
    """Largest relative gap between autograd and central differences.

    ``fn`` returns a double scalar; ``tensors`` are leaf tensors it reads.
    ``frozen`` maps a tensor position to flat indices that are constant by
    construction; their analytic gradient must be exactly zero.
    """
    tensors = list(tensors)
    frozen = frozen or {}
    out = fn()
    floor = GRAD_FLOOR * max(1.0, abs(out.item()))
    grads = torch.autograd.grad(out, tensors, allow_unused=True)
    worst = 0.0
    with torch.no_grad():
        for pos, (x, g) in enumerate(zip(tensors, grads)):
            g = torch.zeros_like(x) if g is None else g
            flat = x.view(-1)
            gflat = g.reshape(-1)
            skip = set(frozen.get(pos, ()))
            if any(gflat[i].item() != 0.0 for i in skip):
                return float("inf")
            for i in range(flat.numel()):
                if i in skip:
                    continue
                orig = flat[i].item()
                flat[i] = orig + eps
                hi = fn().item()
                flat[i] = orig - eps
                lo = fn().item()
                flat[i] = orig
                num = (hi - lo) / (2 * eps)
                ana = gflat[i].item()
                rel = abs(num - ana) / max(abs(num), abs(ana), floor)
                worst = max(worst, rel)
    return worst


def readout(x, seed=0):
    """Fixed random linear functional, so every output entry matters."""
    gen = torch.Generator().manual_seed(seed)
    w = torch.randn(x.shape, generator=gen, dtype=x.dtype)
    return (x * w).sum()


def mini_nets(mini, seed=0):
    torch.manual_seed(seed)
    plan = mini["plan"]
    gen = Generator(plan, mini["face_graphs"], mini["pose_graphs"], VOCAB, SPEAKERS).double()
    disc = Discriminator(plan, mini["face_graphs"], mini["pose_graphs"]).double()
    phon = PhonemeNet(plan.n_mels, plan.phoneme_channels, len(mini["face"].lip_indices)).double()
    return gen, disc, phon


def mini_inputs(mini, batch=2, seed=0):
    gen = torch.Generator().manual_seed(seed)
    plan = mini["plan"]
    n_l = mini["face"].landmark_count
    n_b = mini["skeleton"].bone_count
    units = torch.randn(batch, plan.window, n_b, 3, generator=gen, dtype=torch.double)
    units = units / units.norm(dim=-1, keepdim=True)
    return {
        "mfcc": torch.randn(batch, plan.window, plan.n_audio_features, generator=gen, dtype=torch.double),
        "words": torch.randint(0, VOCAB, (batch, plan.window), generator=gen),
        "speaker": torch.eye(SPEAKERS, dtype=torch.double)[torch.arange(batch) % SPEAKERS],
        "face": torch.randn(batch, plan.window, n_l, 3, generator=gen, dtype=torch.double) * 3,
        "units": units,
        "spec": torch.randn(batch, plan.window, plan.n_mels, generator=gen, dtype=torch.double),
    }


def params(module):
    return [p for p in module.parameters()]


def state_hash(module):
    return tuple(np.asarray(p.detach()).tobytes() for p in module.parameters())


def gradient_cases(mini, seed=0):
    """``{name: (fn, tensors[, frozen])}`` for every network component and every loss."""
    from cospeech import losses
    from cospeech.training import LossWeights

    gen, disc, phon = mini_nets(mini, seed)
    x = mini_inputs(mini, seed=seed)
    f_seed, u_seed = x["face"][:, :4], x["units"][:, :4]
    noise = torch.randn(2, mini["plan"].d_k, generator=torch.Generator().manual_seed(seed), dtype=torch.double)
    e = torch.randn(2, 34, mini["plan"].latent_dim, generator=torch.Generator().manual_seed(seed + 1),
                    dtype=torch.double)
    mfcc = x["mfcc"].clone().requires_grad_(True)
    face = x["face"].clone().requires_grad_(True)
    cases = {
        "audio_encoder": (lambda: readout(gen.encode_audio(x["mfcc"])), params(gen.audio_encoder)),
        # the padding row of the word table is fixed (not trained)
        "text_encoder": (lambda: readout(gen.encode_text(x["words"])),
                         params(gen.word_embedding) + params(gen.text_encoder),
                         {0: range(mini["plan"].word_dim)}),
        "speaker_encoder": (lambda: readout(SpeakerSample(gen, x["speaker"], noise)),
                            params(gen.speaker_encoder)),
        "face_encoder": (lambda: readout(gen.encode_face(f_seed)), params(gen.face_encoder)),
        "pose_encoder": (lambda: readout(gen.encode_pose(u_seed)), params(gen.pose_encoder)),
        "face_decoder": (lambda: readout(gen.decode_face(e)), params(gen.face_decoder)),
        "pose_decoder": (lambda: readout(gen.decode_pose(e)), params(gen.pose_decoder)),
        "generator_audio_to_face": (
            lambda: readout(gen(mfcc, x["words"], x["speaker"], f_seed, u_seed, noise)[0]), [mfcc]),
        "discriminator": (lambda: readout(disc(x["face"], x["units"])), params(disc)),
        "discriminator_input": (lambda: -torch.log(disc.probability(face, x["units"])).sum(), [face]),
        "phoneme_predictor": (lambda: readout(phon(x["spec"])), params(phon)),
    }
    g = torch.Generator().manual_seed(seed + 2)
    r = lambda *shape: torch.randn(*shape, generator=g, dtype=torch.double)
    p_gt, p_syn = r(2, 34, 3, 3), r(2, 34, 3, 3).requires_grad_(True)
    rec_gt = [r(2, 34, 5, 3) for _ in range(4)]
    rec_syn = [r(2, 34, 5, 3).requires_grad_(True) for _ in range(4)]
    weights = LossWeights(lambda_vel=0.3, lambda_acc=0.7)
    gt = (r(2, 34, 5, 3), r(2, 34, 4, 3))
    same = tuple(t + 0.1 * r(*t.shape) for t in gt)
    other = tuple((t + 0.2 * r(*t.shape)).requires_grad_(True) for t in gt)
    same = tuple(t.requires_grad_(True) for t in same)
    c_gt = (torch.rand(5, generator=g, dtype=torch.double) * 0.8 + 0.1).requires_grad_(True)
    c_sn = (torch.rand(5, generator=g, dtype=torch.double) * 0.8 + 0.1).requires_grad_(True)
    logits = r(5).requires_grad_(True), r(5).requires_grad_(True)
    cases.update({
        "loss_phoneme": (lambda: losses.loss_phoneme(p_gt, p_syn), [p_syn]),
        "loss_reconstruction": (
            lambda: losses.loss_reconstruction(rec_gt[0], rec_syn[0], rec_gt[1], rec_syn[1],
                                               rec_gt[2], rec_syn[2], rec_gt[3], rec_syn[3], weights),
            rec_syn),
        "loss_csd": (lambda: losses.loss_csd(same, other, gt, margin=0.5), list(same) + list(other)),
        "loss_adversarial_G": (lambda: losses.loss_adversarial_G(c_sn), [c_sn]),
        "loss_adversarial_D": (lambda: losses.loss_adversarial_D(c_gt, c_sn), [c_gt, c_sn]),
        "loss_adversarial_G_logits": (lambda: losses.loss_adversarial_G_logits(logits[1]), [logits[1]]),
        "loss_adversarial_D_logits": (lambda: losses.loss_adversarial_D_logits(*logits), list(logits)),
    })
    return cases


def SpeakerSample(gen, k, noise):
    from cospeech.nn.networks import SpeakerEncoder

    mu, var = gen.encode_speaker(k)
    return SpeakerEncoder.sample(mu, var, noise)


def run_case(case):
    fn, tensors, *rest = case
    return fd_max_rel_error(fn, tensors, frozen=rest[0] if rest else None)


def expression_windows(n, seed, frames=34):
    """Face windows in mm driven by the synthetic speech envelope, speakers cycling 0..3."""
    from cospeech.synthetic import envelope, face_motion, layouts_for

    layout, _, template = layouts_for("default")
    rng = np.random.default_rng(seed)
    return np.stack([face_motion(template, layout, envelope(frames, rng), i % 4, rng, 1.0) for i in range(n)])


TINY_CONFIG = """\
[run]
seed = 3
checkpoint_every = 2
stride = 10
[synthetic]
speakers = 2
clips_per_speaker = 5
frames = 54
layout = mini
seed = 3
[plan]
d_a = 4
d_w = 4
d_k = 4
d_f = 4
d_l = 4
d_l_tilde = 4
d_u = 4
d_v = 4
d_v_tilde = 4
word_dim = 4
hash_buckets = 4
disc_hidden = 4
phoneme_channels = 4
n_mels = 8
[optim]
batch_size = 8
epochs = 4
phoneme_epochs = 3
phoneme_batch_size = 16
generator_lr = 0.001
discriminator_lr = 0.0005
validate_every = 2
[evaluate]
ae_epochs = 3
ae_d_enc = 4
ae_hidden = 8
"""


def write_tiny_config(directory):
    path = os.path.join(str(directory), "tiny.ini")
    with open(path, "w") as fh:
        fh.write(TINY_CONFIG)
    return path
