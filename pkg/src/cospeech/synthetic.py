"""Procedural co-speech corpus for desk-scale experiments.

Each clip has a smooth random loudness envelope. The audio is a tone at a
speaker-specific pitch whose amplitude follows the envelope. The jaw opens
with the envelope and the lips widen by a speaker-specific amount. Each
upper arm circles on a cone around a resting axis, and its angular speed
follows the envelope. The cone
half-angle is the speaker's gesture amplitude, ``base + speaker * gap``.
Heads move rigidly and all points get iid jitter, so preprocessing has
something to undo.
"""

import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .corpus import split_counts, write_clip, write_manifest
from .exceptions import ConfigError
from .layouts import (
    default_face_layout,
    default_pose_layout,
    default_template_face,
    mini_face_layout,
    mini_pose_layout,
    mini_template_face,
)
from .motion import MotionSample
from .serialization import dump_json

WORDS = ("so", "we", "think", "that", "this", "idea", "really", "matters", "because", "people",
         "change", "when", "they", "see", "it", "work")
LAYOUT_FILE = "layout.json"


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    speakers: int = 4
    clips_per_speaker: int = 4
    frames: int = 102
    noise_mm: float = 0.1
    coupling: float = 1.0
    base_angle_deg: float = 20.0
    amplitude_gap_deg: float = 6.0
    layout: str = "default"
    sample_rate: int = 16000
    frame_rate: float = 15.0
    train_ratio: float = 0.8
    val_ratio: float = 0.1
    test_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.speakers < 2:
            raise ConfigError("need at least two speakers")
        if not 0.0 <= self.coupling <= 1.0:
            raise ConfigError("coupling must lie in [0, 1]")
        if self.clips_per_speaker < 1 or self.frames < 4:
            raise ConfigError("need at least one clip of at least four frames per speaker")
        if self.noise_mm < 0:
            raise ConfigError("noise must be nonnegative")
        if self.layout not in ("default", "mini"):
            raise ConfigError(f"unknown layout {self.layout!r}")
        if abs(self.train_ratio + self.val_ratio + self.test_ratio - 1.0) > 1e-9:
            raise ConfigError("split ratios must sum to 1")
        if self.base_angle_deg + (self.speakers - 1) * self.amplitude_gap_deg >= 90.0:
            raise ConfigError("gesture cone angles must stay below 90 degrees")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        out = {}
        for f in fields(cls):
            if f.name in d:
                out[f.name] = type(f.default)(d[f.name])
        return cls(**out)

    def gesture_angle(self, speaker):
        return np.deg2rad(self.base_angle_deg + speaker * self.amplitude_gap_deg)


def layouts_for(name):
    if name == "mini":
        return mini_face_layout(), mini_pose_layout(), mini_template_face()
    return default_face_layout(), default_pose_layout(), default_template_face()


def envelope(n_frames, rng, frame_rate=15.0):
    """Smooth loudness curve in ``[0.05, 1]``."""
    t = np.arange(n_frames) / frame_rate
    freqs = rng.uniform(0.3, 1.6, size=3)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    x = sum(np.sin(2 * np.pi * f * t + p) for f, p in zip(freqs, phases)) / 1.5
    return 0.525 + 0.475 * np.tanh(1.5 * x)


def synth_audio(env, speaker, rng, sample_rate=16000, frame_rate=15.0):
    n = int(round(env.size * sample_rate / frame_rate))
    ts = np.arange(n) / sample_rate
    centres = (np.arange(env.size) + 0.5) / frame_rate
    amp = np.interp(ts, centres, env)
    f0 = 140.0 + 45.0 * speaker
    tone = np.sin(2 * np.pi * f0 * ts) + 0.5 * np.sin(2 * np.pi * 2 * f0 * ts + 0.3)
    return 0.45 * amp * tone + 1e-3 * rng.standard_normal(n)


def _rotation(axis, angle):
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def face_motion(template, layout, env, speaker, rng, coupling, frame_rate=15.0):
    """Face landmark positions ``(T, L, 3)`` before head motion and noise."""
    n = env.size
    t = np.arange(n) / frame_rate
    slow = 0.5 + 0.5 * np.sin(2 * np.pi * 0.4 * t + rng.uniform(0, 2 * np.pi))
    drive = coupling * env + (1 - coupling) * slow
    comps = dict(layout.components)
    out = np.repeat(template[None], n, axis=0)
    lips = list(comps.get("lips", ()))
    jaw = list(comps.get("lower_jaw", ()))
    if lips:
        # the jaw hinges open: points drop in proportion to how far below the
        # mouth centre they sit, so the upper lip and the jaw angles stay put
        centre = template[lips].mean(axis=0)
        for i, reach in [(i, 12.0) for i in lips] + [(i, 25.0) for i in jaw]:
            below = np.clip((centre[1] - template[i, 1]) / reach, 0.0, 1.0)
            out[:, i, 1] -= 14.0 * drive * below
        width = np.ptp(template[lips, 0]) / 2 + 1e-9
        for i in lips:
            out[:, i, 0] += (1.5 + 0.5 * speaker) * drive * (template[i, 0] - centre[0]) / width
    brows = list(comps.get("eyes", ()))
    phase = speaker * np.pi / 2
    raise_ = (1.0 + 0.5 * speaker) * np.sin(2 * np.pi * 0.5 * t + phase)
    for i in brows:
        out[:, i, 1] += raise_
    return out


def head_motion(face, rng, frame_rate=15.0):
    n = face.shape[0]
    t = np.arange(n) / frame_rate
    yaw = np.deg2rad(6.0) * np.sin(2 * np.pi * 0.2 * t + rng.uniform(0, 2 * np.pi))
    pitch = np.deg2rad(4.0) * np.sin(2 * np.pi * 0.27 * t + rng.uniform(0, 2 * np.pi))
    shift = rng.uniform(-20, 20, size=3) + np.array([0.0, 0.0, 600.0])
    out = np.empty_like(face)
    for i in range(n):
        rot = _rotation(np.array([0.0, 1.0, 0.0]), yaw[i]) @ _rotation(np.array([1.0, 0.0, 0.0]), pitch[i])
        out[i] = face[i] @ rot.T + shift + np.array([5.0 * np.sin(0.7 * t[i]), 0.0, 0.0])
    return out


def arm_chains(pose_layout):
    """``(side, bones)`` per arm component; ``side`` is the sign of the rest x direction."""
    skel = pose_layout.skeleton
    out = []
    for name, bones in pose_layout.components:
        if name == "torso":
            continue
        side = np.sign(skel.rest_directions[bones[0], 0]) or 1.0
        out.append((side, tuple(bones)))
    return out


def cone_axis(side):
    v = np.array([0.35 * side, -1.0, 0.25])
    return v / np.linalg.norm(v)


def _perp_basis(axis):
    a = np.cross(axis, [0.0, 0.0, 1.0])
    a /= np.linalg.norm(a)
    return a, np.cross(axis, a)


def pose_motion(pose_layout, env, speaker, rng, coupling, half_angle, frame_rate=15.0):
    """Joint positions ``(T, J, 3)`` with the root at the origin, plus per-arm phases."""
    skel = pose_layout.skeleton
    n = env.size
    dirs = np.repeat(skel.rest_directions[None], n, axis=0).astype(np.float64)
    t = np.arange(n) / frame_rate
    sway = np.deg2rad(2.0) * np.sin(2 * np.pi * 0.3 * t + rng.uniform(0, 2 * np.pi))
    torso = dict(pose_layout.components).get("torso", ())
    for b in torso:
        for i in range(n):
            dirs[i, b] = _rotation(np.array([0.0, 0.0, 1.0]), sway[i]) @ dirs[i, b]
    rate = 2 * np.pi * 0.6 / frame_rate * ((1 - coupling) + coupling * 2.0 * env)
    bend = np.deg2rad(35.0 + 5.0 * speaker)
    phases = {}
    for side, bones in arm_chains(pose_layout):
        phi = speaker * np.pi / 2 + (0.0 if side > 0 else np.pi) + rng.uniform(0, 0.5) + np.cumsum(rate)
        axis = cone_axis(side)
        e1, e2 = _perp_basis(axis)
        upper = bones[1] if len(bones) == 3 else bones[0]
        upper_dir = (np.cos(half_angle) * axis[None]
                     + np.sin(half_angle) * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2))
        dirs[:, upper] = upper_dir
        rest = [b for b in bones if b not in (upper,) and b > upper]
        for b in rest:
            for i in range(n):
                hinge = np.cross(upper_dir[i], [0.0, 0.0, 1.0])
                dirs[i, b] = _rotation(hinge, -bend) @ upper_dir[i]
        phases[upper] = phi
    pos = np.zeros((n, skel.joint_count, 3))
    for b, length in enumerate(skel.bone_lengths):
        pos[:, b + 1] = pos[:, skel.bone_source(b)] + length * dirs[:, b]
    return pos, phases


def transcript_for(n_frames, rng):
    words, f = [], 0
    while f < n_frames:
        length = int(rng.integers(3, 7))
        if rng.random() < 0.85:
            words.append((WORDS[int(rng.integers(len(WORDS)))], f, min(n_frames, f + length)))
        f += length
    return words


def generate_clip(spec, speaker, index, rng, face_layout, pose_layout, template):
    env = envelope(spec.frames, rng, spec.frame_rate)
    audio = synth_audio(env, speaker, rng, spec.sample_rate, spec.frame_rate)
    face = face_motion(template, face_layout, env, speaker, rng, spec.coupling, spec.frame_rate)
    face = head_motion(face, rng, spec.frame_rate)
    pose, _ = pose_motion(pose_layout, env, speaker, rng, spec.coupling, spec.gesture_angle(speaker),
                          spec.frame_rate)
    pose = pose + rng.uniform(-50, 50, size=3) + np.array([0.0, 900.0, 2500.0])
    face = face + spec.noise_mm * rng.standard_normal(face.shape)
    pose = pose + spec.noise_mm * rng.standard_normal(pose.shape)
    return MotionSample(
        audio=audio,
        sample_rate=spec.sample_rate,
        transcript=transcript_for(spec.frames, rng),
        speaker=speaker,
        speaker_count=spec.speakers,
        face=face,
        pose=pose,
        frame_rate=spec.frame_rate,
        clip_id=f"s{speaker}_c{index:03d}",
    ), env


def generate_synthetic_corpus(spec, root):
    """Write a corpus in the raw clip layout under ``root``; returns the manifest splits."""
    face_layout, pose_layout, template = layouts_for(spec.layout)
    os.makedirs(root, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    names = []
    for k in range(spec.speakers):
        for c in range(spec.clips_per_speaker):
            sample, _ = generate_clip(spec, k, c, rng, face_layout, pose_layout, template)
            rel = os.path.join("clips", sample.clip_id)
            write_clip(os.path.join(root, rel), sample, pose_layout.skeleton)
            names.append(rel)
    order = np.random.default_rng(spec.seed + 1).permutation(len(names))
    n_train, n_val, _ = split_counts(len(names), (spec.train_ratio, spec.val_ratio, spec.test_ratio))
    shuffled = [names[i] for i in order]
    splits = {
        "train": sorted(shuffled[:n_train]),
        "val": sorted(shuffled[n_train : n_train + n_val]),
        "test": sorted(shuffled[n_train + n_val :]),
    }
    write_manifest(root, splits)
    dump_json(
        os.path.join(root, LAYOUT_FILE),
        {
            "face_layout": face_layout.to_dict(),
            "pose_layout": pose_layout.to_dict(),
            "template": template.tolist(),
            "synthetic": spec.to_dict(),
        },
    )
    return splits
