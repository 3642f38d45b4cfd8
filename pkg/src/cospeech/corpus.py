"""Raw corpus layout on disk and the processed window set.

Raw layout, one directory per clip::

    audio.wav        16-bit PCM mono
    transcript.tsv   word <TAB> start_frame <TAB> end_frame   (half-open spans)
    face.f32         row-major T x L x 3 little-endian float32 (mm)
    pose.f32         row-major T x J x 3 little-endian float32 (mm)
    meta.json        frame_rate, speaker, L, J, bone_lengths, parent_indices

plus ``manifest.json`` at the corpus root listing clip directories per split.
"""

import json
import os
from dataclasses import dataclass, fields

import numpy as np

from .audio import read_wav, write_wav
from .layouts import FaceLayout, PoseLayout
from .motion import MotionSample, Skeleton
from .serialization import dump_json, load_archive, save_archive

SPLITS = ("train", "val", "test")
MANIFEST = "manifest.json"


def write_transcript(path, transcript):
    with open(path, "w") as fh:
        fh.write("word\tstart_frame\tend_frame\n")
        for word, start, end in transcript:
            s = "" if start is None else str(int(start))
            e = "" if end is None else str(int(end))
            fh.write(f"{word}\t{s}\t{e}\n")


def read_transcript(path):
    out = []
    if not os.path.exists(path):
        return out
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line or (i == 0 and line.startswith("word\t")):
                continue
            parts = line.split("\t") + ["", ""]
            word, s, e = parts[0], parts[1], parts[2]
            out.append((word, int(s) if s else None, int(e) if e else None))
    return out


def write_clip(path, sample, skeleton):
    os.makedirs(path, exist_ok=True)
    write_wav(os.path.join(path, "audio.wav"), sample.audio, sample.sample_rate)
    write_transcript(os.path.join(path, "transcript.tsv"), sample.transcript)
    sample.face.astype("<f4").tofile(os.path.join(path, "face.f32"))
    sample.pose.astype("<f4").tofile(os.path.join(path, "pose.f32"))
    dump_json(
        os.path.join(path, "meta.json"),
        {
            "frame_rate": sample.frame_rate,
            "speaker": int(sample.speaker),
            "speaker_count": int(sample.speaker_count),
            "frames": int(sample.frame_count),
            "L": int(sample.face.shape[1]),
            "J": int(sample.pose.shape[1]),
            "bone_lengths": list(skeleton.bone_lengths),
            "parent_indices": list(skeleton.parent_index),
        },
    )


def read_clip(path):
    """Load one clip; returns ``(MotionSample, Skeleton)``."""
    with open(os.path.join(path, "meta.json")) as fh:
        meta = json.load(fh)
    n_l, n_j = int(meta["L"]), int(meta["J"])
    face = np.fromfile(os.path.join(path, "face.f32"), dtype="<f4").astype(np.float64)
    pose = np.fromfile(os.path.join(path, "pose.f32"), dtype="<f4").astype(np.float64)
    face = face.reshape(-1, n_l, 3)
    pose = pose.reshape(-1, n_j, 3)
    audio, sr = read_wav(os.path.join(path, "audio.wav"))
    skel = Skeleton(meta["parent_indices"], meta["bone_lengths"])
    speaker = int(meta["speaker"])
    sample = MotionSample(
        audio=audio,
        sample_rate=sr,
        transcript=read_transcript(os.path.join(path, "transcript.tsv")),
        speaker=speaker,
        speaker_count=int(meta.get("speaker_count", speaker + 1)),
        face=face,
        pose=pose,
        frame_rate=float(meta["frame_rate"]),
        clip_id=os.path.basename(os.path.normpath(path)),
    )
    return sample, skel


def write_manifest(root, splits):
    dump_json(os.path.join(root, MANIFEST), {k: list(splits.get(k, [])) for k in SPLITS})


def read_manifest(root):
    path = os.path.join(root, MANIFEST)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        data = json.load(fh)
    return {k: list(data.get(k, [])) for k in SPLITS}


def split_counts(n, ratios=(0.8, 0.1, 0.1)):
    """Clip counts per split; rounding keeps each within one clip of its ratio."""
    n_val = int(round(n * ratios[1]))
    n_test = int(round(n * ratios[2]))
    return n - n_val - n_test, n_val, n_test


@dataclass
class WindowSet:
    """Processed fixed-length windows, ready for training.

    ``face`` holds landmark deltas from the speaker's reference face and
    ``units`` bone unit vectors; both span the whole window including seed
    frames.
    """

    face: np.ndarray  # (N, T, L, 3)
    units: np.ndarray  # (N, T, J-1, 3)
    mfcc: np.ndarray  # (N, T, M)
    spec: np.ndarray  # (N, T, n_mels)
    words: np.ndarray  # (N, T) str
    speaker: np.ndarray  # (N,)
    clip: np.ndarray  # (N,) str
    offset: np.ndarray  # (N,)

    def __len__(self):
        return int(self.face.shape[0])

    def subset(self, idx):
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.int64)
        return WindowSet(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})

    @classmethod
    def concatenate(cls, sets):
        sets = list(sets)
        return cls(**{f.name: np.concatenate([getattr(s, f.name) for s in sets]) for f in fields(cls)})

    def to_arrays(self, prefix=""):
        return {prefix + f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_arrays(cls, arrays, prefix=""):
        return cls(**{f.name: arrays[prefix + f.name] for f in fields(cls)})


@dataclass
class ProcessedCorpus:
    splits: dict
    references: np.ndarray  # (K, L, 3)
    face_layout: FaceLayout
    pose_layout: PoseLayout
    canonical: np.ndarray = None  # (L, 3) frame every face is rigidly aligned to
    template: np.ndarray = None  # (L, 3) neutral face used to build the landmark graph
    frame_rate: float = 15.0

    @property
    def speaker_count(self):
        return int(self.references.shape[0])

    @property
    def skeleton(self):
        return self.pose_layout.skeleton

    def save(self, path):
        arrays = {"references": self.references, "canonical": self.canonical, "template": self.template}
        for name, ws in self.splits.items():
            arrays.update(ws.to_arrays(prefix=f"{name}."))
        meta = {
            "splits": sorted(self.splits),
            "face_layout": self.face_layout.to_dict(),
            "pose_layout": self.pose_layout.to_dict(),
            "frame_rate": self.frame_rate,
        }
        save_archive(path, arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_archive(path)
        splits = {name: WindowSet.from_arrays(arrays, prefix=f"{name}.") for name in meta["splits"]}
        return cls(
            splits=splits,
            references=arrays["references"],
            face_layout=FaceLayout.from_dict(meta["face_layout"]),
            pose_layout=PoseLayout.from_dict(meta["pose_layout"]),
            canonical=arrays["canonical"],
            template=arrays["template"],
            frame_rate=float(meta["frame_rate"]),
        )
