"""Motion data model and deterministic geometry preprocessing.

Array conventions (all geometry is float64, millimetres):

* face landmark sequence: ``(T, L, 3)``
* reference face: ``(L, 3)``
* face delta sequence: ``(T, L, 3)``
* pose joint sequence: ``(T, J, 3)``, root joint at the origin
* pose unit sequence: ``(T, J - 1, 3)``, one unit vector per bone
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    DegenerateConfiguration,
    DegenerateExtent,
    ShapeMismatch,
    TooShort,
    ZeroBone,
)
from .validation import check_points

WINDOW = 34
SEED_FRAMES = 4
NATIVE_RATE = 15
ANCHOR_RATE = 5
DEFAULT_STRIDE = 10


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points):
        return np.asarray(points) @ self.rotation.T + self.translation

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class Skeleton:
    """Kinematic tree with joints stored in topological order.

    Joint 0 is the root (parent ``-1``) and every other joint has a parent
    with a smaller index. Bone ``b`` ends at joint ``b + 1``.
    """

    parent_index: tuple
    bone_lengths: tuple
    rest_directions: np.ndarray = None
    joint_names: tuple = None

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parent_index)
        lengths = tuple(float(b) for b in self.bone_lengths)
        object.__setattr__(self, "parent_index", parents)
        object.__setattr__(self, "bone_lengths", lengths)
        if not parents or parents[0] != -1:
            raise ValueError("joint 0 must be the root with parent -1")
        for j, p in enumerate(parents[1:], start=1):
            if not 0 <= p < j:
                raise ValueError(f"joint {j} has parent {p}; joints must be topologically ordered")
        if len(lengths) != len(parents) - 1:
            raise ValueError("need one bone length per non-root joint")
        if any(not b > 0 for b in lengths):
            raise ValueError("bone lengths must be positive")
        if self.rest_directions is not None:
            rest = np.asarray(self.rest_directions, dtype=np.float64)
            if rest.shape != (len(lengths), 3):
                raise ShapeMismatch("rest_directions must be (J-1, 3)")
            rest = rest / np.linalg.norm(rest, axis=1, keepdims=True)
            rest.setflags(write=False)
            object.__setattr__(self, "rest_directions", rest)

    @property
    def joint_count(self):
        return len(self.parent_index)

    @property
    def bone_count(self):
        return len(self.bone_lengths)

    def bone_source(self, b):
        return self.parent_index[b + 1]

    def bone_parent(self, b):
        """Index of the bone ending at this bone's source joint, or -1."""
        return self.parent_index[b + 1] - 1

    def rest_pose(self):
        if self.rest_directions is None:
            raise ValueError("skeleton has no rest directions")
        return units_to_pose(self.rest_directions[None], self)[0]

    def to_dict(self):
        d = {"parent_index": list(self.parent_index), "bone_lengths": list(self.bone_lengths)}
        if self.rest_directions is not None:
            d["rest_directions"] = np.asarray(self.rest_directions).tolist()
        if self.joint_names is not None:
            d["joint_names"] = list(self.joint_names)
        return d

    @classmethod
    def from_dict(cls, d):
        names = d.get("joint_names")
        return cls(
            parent_index=d["parent_index"],
            bone_lengths=d["bone_lengths"],
            rest_directions=d.get("rest_directions"),
            joint_names=tuple(names) if names is not None else None,
        )


@dataclass
class MotionSample:
    """One aligned clip (or window of a clip).

    ``transcript`` is a list of ``(word, start_frame, end_frame)`` tuples with
    half-open frame spans; spans may be ``None`` when unknown.
    """

    audio: np.ndarray
    sample_rate: int
    transcript: list
    speaker: int
    speaker_count: int
    face: np.ndarray
    pose: np.ndarray
    frame_rate: float = NATIVE_RATE
    offset: int = 0
    seed_frames: int = 0
    clip_id: str = ""

    def __post_init__(self):
        if self.face.shape[0] != self.pose.shape[0]:
            raise ShapeMismatch("face and pose must share the frame count")
        if not 0 <= self.speaker < self.speaker_count:
            raise ValueError("speaker id out of range")

    @property
    def frame_count(self):
        return self.face.shape[0]

    @property
    def speaker_one_hot(self):
        k = np.zeros(self.speaker_count)
        k[self.speaker] = 1.0
        return k

    @property
    def seed_mask(self):
        mask = np.zeros(self.frame_count, dtype=bool)
        mask[: self.seed_frames] = True
        return mask


def umeyama_fit(source, target):
    """Least-squares rigid transform mapping ``source`` onto ``target``.

    Rotation plus translation, no scale. The determinant correction of the
    Umeyama construction keeps the rotation proper when the best orthogonal
    fit would be a reflection.
    """
    src = check_points(source, "source", ndim=2)
    tgt = check_points(target, "target", ndim=2)
    if src.shape != tgt.shape:
        raise ShapeMismatch(f"source {src.shape} and target {tgt.shape} differ")
    if src.shape[0] < 3:
        raise DegenerateConfiguration("need at least 3 points")
    mu_s = src.mean(axis=0)
    mu_t = tgt.mean(axis=0)
    src_c = src - mu_s
    tgt_c = tgt - mu_t
    sv = np.linalg.svd(src_c, compute_uv=False)
    if sv[0] == 0 or sv[1] <= 1e-12 * sv[0]:
        raise DegenerateConfiguration("centered source has rank < 2")
    cov = tgt_c.T @ src_c / src.shape[0]
    u, _, vt = np.linalg.svd(cov)
    s = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2] = -1.0
    rot = (u * s) @ vt
    return RigidTransform(rot, mu_t - rot @ mu_s)


def view_normalize(positions, reference_frame_index=0):
    """Rigidly align every frame of a landmark sequence onto one reference frame."""
    seq = check_points(positions, "positions", ndim=3)
    if not 0 <= reference_frame_index < seq.shape[0]:
        raise IndexError(f"reference frame {reference_frame_index} out of range")
    ref = seq[reference_frame_index]
    out = seq.copy()
    for t in range(seq.shape[0]):
        if t == reference_frame_index:
            continue
        try:
            tf = umeyama_fit(seq[t], ref)
        except DegenerateConfiguration as exc:
            raise DegenerateConfiguration(str(exc), frame_index=t) from None
        out[t] = tf.apply(seq[t])
    return out


def _catmull_rom(p0, p1, p2, p3, s):
    s = s.reshape((-1,) + (1,) * (p1.ndim - 1))
    s2 = s * s
    s3 = s2 * s
    return 0.5 * (
        2 * p1
        + (p2 - p0) * s
        + (2 * p0 - 5 * p1 + 4 * p2 - p3) * s2
        + (3 * p1 - p0 - 3 * p2 + p3) * s3
    )


def anchor_resample(seq, native_rate=NATIVE_RATE, anchor_rate=ANCHOR_RATE):
    """Replace non-anchor frames by Catmull-Rom interpolation through anchor frames.

    Anchors are every ``native_rate / anchor_rate``-th frame starting at 0.
    Ghost points beyond either end are linear extrapolations, so affine
    signals pass through unchanged; frames after the last anchor are
    evaluated on the extrapolated segment.
    """
    x = np.asarray(seq, dtype=np.float64)
    step = native_rate / anchor_rate
    if step != int(step) or step < 1:
        raise ValueError("native_rate must be an integer multiple of anchor_rate")
    step = int(step)
    n_frames = x.shape[0]
    anchors = x[::step]
    n_anchor = anchors.shape[0]
    if n_anchor < 4:
        raise TooShort(f"{n_anchor} anchor frames; need at least 4")
    padded = np.concatenate(
        [
            (2 * anchors[0] - anchors[1])[None],
            anchors,
            (2 * anchors[-1] - anchors[-2])[None],
            (3 * anchors[-1] - 2 * anchors[-2])[None],
        ]
    )
    t = np.arange(n_frames)
    seg = t // step
    s = (t - seg * step) / step
    out = _catmull_rom(padded[seg], padded[seg + 1], padded[seg + 2], padded[seg + 3], s)
    out[::step] = anchors
    return out


def chunk(sample, window=WINDOW, seed=SEED_FRAMES, stride=DEFAULT_STRIDE):
    """Cut a clip into fixed-size windows at ``offset = i * stride``.

    The trailing remainder that cannot fill a whole window is dropped.
    """
    n = sample.frame_count
    if n < window:
        raise TooShort(f"clip has {n} frames; window is {window}")
    if stride < 1:
        raise ValueError("stride must be positive")
    out = []
    for offset in range(0, n - window + 1, stride):
        out.append(_slice_sample(sample, offset, window, seed))
    return out


def window_offsets(n_frames, window=WINDOW, stride=DEFAULT_STRIDE):
    if n_frames < window:
        return []
    return list(range(0, n_frames - window + 1, stride))


def _slice_sample(sample, offset, window, seed):
    sr = sample.sample_rate
    a0 = int(round(offset * sr / sample.frame_rate))
    a1 = int(round((offset + window) * sr / sample.frame_rate))
    words = []
    for word, start, end in sample.transcript:
        if start is None or end is None:
            continue
        s, e = max(start, offset), min(end, offset + window)
        if s < e:
            words.append((word, s - offset, e - offset))
    return replace(
        sample,
        audio=sample.audio[a0:a1],
        transcript=words,
        face=sample.face[offset : offset + window],
        pose=sample.pose[offset : offset + window],
        offset=sample.offset + offset,
        seed_frames=seed,
    )


def face_to_deltas(positions, reference):
    pos = np.asarray(positions, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if pos.shape[-2:] != ref.shape:
        raise ShapeMismatch(f"landmarks {pos.shape} do not match reference {ref.shape}")
    return pos - ref


def deltas_to_face(deltas, reference):
    d = np.asarray(deltas, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if d.shape[-2:] != ref.shape:
        raise ShapeMismatch(f"deltas {d.shape} do not match reference {ref.shape}")
    return d + ref


def reference_face(frames):
    """Per-landmark temporal median over a stack of ``(..., L, 3)`` frames."""
    f = np.asarray(frames, dtype=np.float64)
    return np.median(f.reshape(-1, *f.shape[-2:]), axis=0)


def pose_to_units(positions, skeleton):
    pos = check_points(positions, "positions", ndim=3)
    if pos.shape[1] != skeleton.joint_count:
        raise ShapeMismatch(f"pose has {pos.shape[1]} joints, skeleton {skeleton.joint_count}")
    parents = np.asarray(skeleton.parent_index[1:])
    vec = pos[:, 1:] - pos[:, parents]
    norm = np.linalg.norm(vec, axis=-1, keepdims=True)
    bad = np.argwhere(norm[..., 0] <= 1e-9)
    if bad.size:
        raise ZeroBone(int(bad[0, 0]), int(bad[0, 1]))
    return vec / norm


def units_to_pose(units, skeleton):
    """Place joints from bone directions; the root sits at the origin.

    Input vectors need not be normalised: each is divided by its own norm.
    """
    u = check_points(units, "units", ndim=3)
    if u.shape[1] != skeleton.bone_count:
        raise ShapeMismatch(f"{u.shape[1]} bone vectors for {skeleton.bone_count} bones")
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    pos = np.zeros((u.shape[0], skeleton.joint_count, 3))
    for b, length in enumerate(skeleton.bone_lengths):
        pos[:, b + 1] = pos[:, skeleton.bone_source(b)] + length * u[:, b]
    return pos


def root_to_origin(positions):
    pos = np.asarray(positions, dtype=np.float64)
    return pos - pos[..., :1, :]


def unit_bbox_scale(samples, diagonal=1000.0):
    """Scale factor that maps the union bounding box to the given diagonal."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    flat = np.concatenate([np.asarray(s, dtype=np.float64).reshape(-1, 3) for s in samples])
    if flat.size == 0:
        raise DegenerateExtent("no points")
    diag = np.linalg.norm(flat.max(axis=0) - flat.min(axis=0))
    if diag == 0:
        raise DegenerateExtent("bounding box has zero diagonal")
    return diagonal / diag


def scale_to_unit_bbox(samples, diagonal=1000.0):
    samples = list(samples)
    factor = unit_bbox_scale(samples, diagonal)
    return [np.asarray(s, dtype=np.float64) * factor for s in samples], factor
