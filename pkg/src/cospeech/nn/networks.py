"""Generator, discriminator and phoneme predictor networks.

Tensors are batch-first. Motion tensors are ``(B, T, N, 3)``; per-frame
features are ``(B, T, C)``. The generator consumes face deltas in
millimetres and bone unit vectors and returns the same representations.
"""

from dataclasses import asdict, dataclass, fields

import torch
from torch import nn
import torch.nn.functional as F

from ..exceptions import ShapeMismatch
from .layers import Collate, STGraphConv, TemporalConvStack, TemporalResample, act


@dataclass(frozen=True)
class DimensionPlan:
    d_a: int = 32
    d_w: int = 32
    d_k: int = 8
    d_f: int = 8
    d_l: int = 32
    d_l_tilde: int = 32
    d_u: int = 32
    d_v: int = 32
    d_v_tilde: int = 32
    n_audio_features: int = 26
    n_mels: int = 40
    word_dim: int = 16
    hash_buckets: int = 64
    graph_blocks: int = 3
    temporal_window: int = 2
    disc_hidden: int = 32
    phoneme_channels: int = 32
    window: int = 34
    seed_frames: int = 4

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v < (0 if f.name == "temporal_window" else 1):
                raise ValueError(f"{f.name} must be a positive int, got {v!r}")
        if self.seed_frames >= self.window:
            raise ValueError("seed_frames must be shorter than the window")

    @property
    def latent_dim(self):
        return self.d_a + self.d_w + self.d_k + self.d_l_tilde + self.d_v_tilde

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: int(v) for k, v in d.items() if k in names})

    @classmethod
    def miniature(cls, **overrides):
        base = dict(d_a=4, d_w=4, d_k=4, d_f=4, d_l=4, d_l_tilde=4, d_u=4, d_v=4, d_v_tilde=4,
                    word_dim=4, hash_buckets=4, disc_hidden=4, phoneme_channels=4, n_mels=8)
        base.update(overrides)
        return cls(**base)


class GraphEncoder(nn.Module):
    """Two-level AC-graph encoder: node graph, collation, component graph, then convs.

    Maps ``(B, in_frames, N, 3)`` to ``(B, out_frames, d_out)``.
    """

    def __init__(self, graphs, d_node, d_comp, d_out, in_frames, out_frames, blocks, window):
        super().__init__()
        node_adj = graphs.nodes.normalized_adjacency()
        comp_adj = graphs.components.normalized_adjacency()
        chans = [3] + [d_node] * blocks
        self.node_blocks = nn.ModuleList(
            STGraphConv(chans[i], chans[i + 1], node_adj, window) for i in range(blocks)
        )
        self.collate = Collate(graphs.plan)
        chans = [graphs.plan.pad_to * d_node] + [d_comp] * blocks
        self.comp_blocks = nn.ModuleList(
            STGraphConv(chans[i], chans[i + 1], comp_adj, window) for i in range(blocks)
        )
        self.n_nodes = graphs.plan.node_count
        self.in_frames = in_frames
        self.conv_s = nn.Conv1d(d_comp * graphs.plan.component_count, d_out, 1)
        self.conv_t = TemporalResample(d_out, in_frames, out_frames)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1:] != (self.in_frames, self.n_nodes, 3):
            raise ShapeMismatch(f"expected (B, {self.in_frames}, {self.n_nodes}, 3), got {tuple(x.shape)}")
        h = x.permute(0, 3, 1, 2)
        for block in self.node_blocks:
            h = block(h)
        h = self.collate(h)
        for block in self.comp_blocks:
            h = block(h)
        b, c, t, n = h.shape
        h = h.permute(0, 1, 3, 2).reshape(b, c * n, t)
        h = act(self.conv_s(h))
        return self.conv_t(h).transpose(1, 2)


class SpeakerEncoder(nn.Module):
    def __init__(self, speaker_count, d_k):
        super().__init__()
        self.linear = nn.Linear(speaker_count, 2 * d_k)
        self.d_k = d_k

    def forward(self, k):
        h = self.linear(k)
        mu, raw = h[..., : self.d_k], h[..., self.d_k :]
        return mu, F.softplus(raw) + 1e-6

    @staticmethod
    def sample(mu, var, noise):
        return mu + torch.sqrt(var) * noise


class MotionDecoder(nn.Module):
    """Temporal conv, then spatial (1x1) conv, then a per-frame fully-connected layer."""

    def __init__(self, latent_dim, n_points):
        super().__init__()
        self.conv_t = nn.Conv1d(latent_dim, latent_dim, 3, padding=1, padding_mode="replicate")
        self.conv_s = nn.Conv1d(latent_dim, latent_dim, 1)
        self.fc = nn.Linear(latent_dim, 3 * n_points)
        self.n_points = n_points

    def forward(self, e):
        h = act(self.conv_t(e.transpose(1, 2)))
        h = act(self.conv_s(h)).transpose(1, 2)
        out = self.fc(h)
        return out.reshape(out.shape[0], out.shape[1], self.n_points, 3)


def normalize_bones(raw, fallback=None, eps=1e-12):
    """Unit-normalise ``(B, T, J-1, 3)`` bone vectors.

    Vectors shorter than ``eps`` take the direction of ``fallback``
    (``(B, J-1, 3)``, typically the last seed frame) when it is given.
    """
    norm = raw.norm(dim=-1, keepdim=True)
    small = norm < eps
    if fallback is not None and bool(small.any()):
        fb = fallback[:, None].expand_as(raw)
        raw = torch.where(small, fb, raw)
        norm = raw.norm(dim=-1, keepdim=True)
    return raw / norm.clamp_min(eps)


class Generator(nn.Module):
    def __init__(self, plan, face_graphs, pose_graphs, vocab_size, speaker_count):
        super().__init__()
        self.plan = plan
        p = plan
        self.audio_encoder = TemporalConvStack(p.n_audio_features, p.d_a)
        self.word_embedding = nn.Embedding(vocab_size, p.word_dim, padding_idx=0)
        self.text_encoder = TemporalConvStack(p.word_dim, p.d_w)
        self.speaker_encoder = SpeakerEncoder(speaker_count, p.d_k)
        self.face_encoder = GraphEncoder(face_graphs, p.d_f, p.d_l, p.d_l_tilde,
                                         p.seed_frames, p.window, p.graph_blocks, p.temporal_window)
        self.pose_encoder = GraphEncoder(pose_graphs, p.d_u, p.d_v, p.d_v_tilde,
                                         p.seed_frames, p.window, p.graph_blocks, p.temporal_window)
        self.face_decoder = MotionDecoder(p.latent_dim, face_graphs.plan.node_count)
        self.pose_decoder = MotionDecoder(p.latent_dim, pose_graphs.plan.node_count)
        self.speaker_count = speaker_count
        self.vocab_size = vocab_size
        self.register_buffer("audio_mean", torch.zeros(p.n_audio_features))
        self.register_buffer("audio_std", torch.ones(p.n_audio_features))
        self.register_buffer("face_scale", torch.ones(()))

    def encode_audio(self, mfcc):
        x = (mfcc - self.audio_mean) / self.audio_std
        return self.audio_encoder(x.transpose(1, 2)).transpose(1, 2)

    def encode_text(self, word_ids):
        return self.text_encoder(self.word_embedding(word_ids).transpose(1, 2)).transpose(1, 2)

    def encode_speaker(self, k):
        return self.speaker_encoder(k)

    def encode_face(self, face_seed):
        return self.face_encoder(face_seed / self.face_scale)

    def encode_pose(self, units_seed):
        return self.pose_encoder(units_seed)

    def fuse(self, a, w, k, l, v):
        t = a.shape[1]
        for name, x in (("text", w), ("face", l), ("pose", v)):
            if x.shape[1] != t:
                raise ShapeMismatch(f"{name} embedding has {x.shape[1]} frames, audio {t}")
        k_rep = k[:, None, :].expand(-1, t, -1)
        return torch.cat([a, w, k_rep, l, v], dim=-1)

    def decode_face(self, e):
        return self.face_decoder(e) * self.face_scale

    def decode_pose(self, e, fallback=None):
        return normalize_bones(self.pose_decoder(e), fallback)

    def embed(self, mfcc, word_ids, speaker, face_seed, units_seed, noise=None):
        mu, var = self.encode_speaker(speaker)
        if noise is None:
            noise = torch.zeros_like(mu)
        k = SpeakerEncoder.sample(mu, var, noise)
        return self.fuse(
            self.encode_audio(mfcc), self.encode_text(word_ids), k,
            self.encode_face(face_seed), self.encode_pose(units_seed),
        )

    def forward(self, mfcc, word_ids, speaker, face_seed, units_seed, noise=None):
        e = self.embed(mfcc, word_ids, speaker, face_seed, units_seed, noise)
        return self.decode_face(e), self.decode_pose(e, units_seed[:, -1])


class Discriminator(nn.Module):
    """Scores full-length face/pose motion; ``forward`` returns logits, one per sample."""

    def __init__(self, plan, face_graphs, pose_graphs):
        super().__init__()
        p = plan
        t = p.window
        self.face_encoder = GraphEncoder(face_graphs, p.d_f, p.d_l, p.d_l_tilde, t, t,
                                         p.graph_blocks, p.temporal_window)
        self.pose_encoder = GraphEncoder(pose_graphs, p.d_u, p.d_v, p.d_v_tilde, t, t,
                                         p.graph_blocks, p.temporal_window)
        self.hidden = nn.Linear(t * (p.d_l_tilde + p.d_v_tilde), p.disc_hidden)
        self.out = nn.Linear(p.disc_hidden, 1)
        self.register_buffer("face_scale", torch.ones(()))

    def forward(self, face, units):
        l = self.face_encoder(face / self.face_scale)
        v = self.pose_encoder(units)
        e = torch.cat([l, v], dim=-1).flatten(1)
        return self.out(act(self.hidden(e)))[:, 0]

    def probability(self, face, units):
        return torch.sigmoid(self.forward(face, units))


class PhonemeNet(nn.Module):
    """Spectrogram frames ``(B, T, n_mels)`` to lip deltas ``(B, T, L_lip, 3)``."""

    def __init__(self, n_mels, channels, lip_count):
        super().__init__()
        self.backbone = TemporalConvStack(n_mels, channels, kernel=5)
        self.fc1 = nn.Linear(channels, channels)
        self.fc2 = nn.Linear(channels, 3 * lip_count)
        self.lip_count = lip_count
        self.register_buffer("spec_mean", torch.zeros(n_mels))
        self.register_buffer("spec_std", torch.ones(n_mels))
        self.register_buffer("lip_scale", torch.ones(()))

    def forward(self, spec):
        x = (spec - self.spec_mean) / self.spec_std
        h = act(self.backbone(x.transpose(1, 2))).transpose(1, 2)
        out = self.fc2(act(self.fc1(h)))
        return out.reshape(out.shape[0], out.shape[1], self.lip_count, 3) * self.lip_scale
