"""Landmark and skeleton layouts: component partitions, lip index sets, templates."""

from dataclasses import dataclass

import numpy as np

from .motion import Skeleton


@dataclass(frozen=True)
class FaceLayout:
    """Landmark partition plus lip sets.

    ``lip_indices`` are the landmarks driven by the phoneme predictor and
    ``lip_corner_indices`` the generator-driven corners; the two are disjoint.
    """

    landmark_count: int
    components: tuple  # ((name, (idx, ...)), ...)
    lip_indices: tuple
    lip_corner_indices: tuple

    @property
    def component_names(self):
        return tuple(name for name, _ in self.components)

    @property
    def component_of(self):
        out = np.full(self.landmark_count, -1)
        for c, (_, idx) in enumerate(self.components):
            out[list(idx)] = c
        return out

    def to_dict(self):
        return {
            "landmark_count": self.landmark_count,
            "components": [[n, list(i)] for n, i in self.components],
            "lip_indices": list(self.lip_indices),
            "lip_corner_indices": list(self.lip_corner_indices),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            landmark_count=int(d["landmark_count"]),
            components=tuple((n, tuple(int(j) for j in i)) for n, i in d["components"]),
            lip_indices=tuple(int(j) for j in d["lip_indices"]),
            lip_corner_indices=tuple(int(j) for j in d["lip_corner_indices"]),
        )


@dataclass(frozen=True)
class PoseLayout:
    skeleton: Skeleton
    components: tuple  # over bones, ordered (torso, left arm, right arm)

    @property
    def component_names(self):
        return tuple(name for name, _ in self.components)

    def to_dict(self):
        return {
            "skeleton": self.skeleton.to_dict(),
            "components": [[n, list(i)] for n, i in self.components],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            skeleton=Skeleton.from_dict(d["skeleton"]),
            components=tuple((n, tuple(int(j) for j in i)) for n, i in d["components"]),
        )


# 68-point layout: jaw 0-16, brows 17-26, nose 27-35, eyes 36-47, lips 48-67.
_JAW = tuple(range(0, 17))
_BROWS = tuple(range(17, 27))
_NOSE = tuple(range(27, 36))
_EYES = tuple(range(36, 48))
_LIPS = tuple(range(48, 68))


def default_face_layout():
    return FaceLayout(
        landmark_count=68,
        components=(
            ("eyes", _BROWS + _EYES),
            ("nose", _NOSE),
            ("lips", _LIPS),
            ("lower_jaw", _JAW),
        ),
        lip_indices=tuple(i for i in _LIPS if i not in (48, 54)),
        lip_corner_indices=(48, 54),
    )


def default_template_face():
    """A neutral 68-landmark face in millimetres, looking along +z."""
    pts = np.zeros((68, 3))
    phi = np.pi + np.pi * np.arange(17) / 16
    pts[0:17] = np.stack([70 * np.cos(phi), 20 + 75 * np.sin(phi), -40 - 40 * np.sin(phi)], axis=1)
    for start, x0 in ((17, -55), (22, 15)):
        x = x0 + np.linspace(0, 40, 5)
        y = 45 + 5 * np.sin(np.linspace(0, np.pi, 5))
        pts[start : start + 5] = np.stack([x, y, np.full(5, 5.0)], axis=1)
    pts[27:31] = np.stack([np.zeros(4), np.linspace(35, 5, 4), np.linspace(10, 30, 4)], axis=1)
    pts[31:36] = np.stack([np.linspace(-15, 15, 5), np.full(5, -5.0), [15, 18, 20, 18, 15]], axis=1)
    ang6 = np.pi - 2 * np.pi * np.arange(6) / 6
    for start, cx in ((36, -32), (42, 32)):
        pts[start : start + 6] = np.stack(
            [cx + 12 * np.cos(ang6), 30 + 5 * np.sin(ang6), np.zeros(6)], axis=1
        )
    ang12 = np.pi - 2 * np.pi * np.arange(12) / 12
    pts[48:60] = np.stack([25 * np.cos(ang12), -30 + 12 * np.sin(ang12), np.full(12, 20.0)], axis=1)
    ang8 = np.pi - 2 * np.pi * np.arange(8) / 8
    pts[60:68] = np.stack([15 * np.cos(ang8), -30 + 5 * np.sin(ang8), np.full(8, 18.0)], axis=1)
    return pts


JOINT_NAMES = (
    "pelvis", "spine", "neck", "head",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_shoulder", "left_elbow", "left_wrist",
)


def default_skeleton():
    return Skeleton(
        parent_index=(-1, 0, 1, 2, 2, 4, 5, 2, 7, 8),
        bone_lengths=(250.0, 250.0, 200.0, 180.0, 290.0, 250.0, 180.0, 290.0, 250.0),
        rest_directions=np.array(
            [
                [0, 1, 0], [0, 1, 0], [0, 1, 0],
                [-1, 0, 0], [-1, 0, 0], [-1, 0, 0],
                [1, 0, 0], [1, 0, 0], [1, 0, 0],
            ],
            dtype=float,
        ),
        joint_names=JOINT_NAMES,
    )


def default_pose_layout():
    return PoseLayout(
        skeleton=default_skeleton(),
        components=(("torso", (0, 1, 2)), ("left_arm", (6, 7, 8)), ("right_arm", (3, 4, 5))),
    )


def mini_face_layout():
    """8 landmarks in 4 components of 2, for fast tests."""
    return FaceLayout(
        landmark_count=8,
        components=(("eyes", (0, 1)), ("nose", (2, 3)), ("lips", (4, 5)), ("lower_jaw", (6, 7))),
        lip_indices=(5,),
        lip_corner_indices=(4,),
    )


def mini_template_face():
    return np.array(
        [
            [-30, 30, 0], [30, 30, 0],
            [0, 10, 20], [0, -5, 22],
            [-20, -30, 15], [20, -30, 15],
            [-60, -20, -30], [60, -20, -30],
        ],
        dtype=float,
    )


def mini_pose_layout():
    """5 joints: pelvis, neck, left elbow, left wrist, right wrist."""
    skel = Skeleton(
        parent_index=(-1, 0, 1, 2, 1),
        bone_lengths=(500.0, 300.0, 250.0, 500.0),
        rest_directions=np.array([[0, 1, 0], [1, 0, 0], [1, 0, 0], [-1, 0, 0]], dtype=float),
    )
    return PoseLayout(skeleton=skel, components=(("torso", (0,)), ("left_arm", (1, 2)), ("right_arm", (3,))))
