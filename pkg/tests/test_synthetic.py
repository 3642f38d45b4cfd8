import os

import numpy as np
import pytest

from cospeech.corpus import read_clip, read_manifest
from cospeech.exceptions import ConfigError
from cospeech.motion import chunk
from cospeech.synthetic import (
    LAYOUT_FILE,
    SyntheticCorpusSpec,
    cone_axis,
    generate_clip,
    generate_synthetic_corpus,
    layouts_for,
)

MIN_CORRELATION = 0.5
GAP_TOL_DEG = 0.5


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("synth"))
    spec = SyntheticCorpusSpec(speakers=2, clips_per_speaker=4, frames=102, seed=3)
    splits = generate_synthetic_corpus(spec, root)
    return root, spec, splits


def test_layout_of_small_corpus(small_corpus):
    root, spec, splits = small_corpus
    dirs = sorted(os.listdir(os.path.join(root, "clips")))
    assert len(dirs) == 8
    assert os.path.isfile(os.path.join(root, LAYOUT_FILE))
    assert read_manifest(root) == splits
    assert sorted(sum(splits.values(), [])) == [os.path.join("clips", d) for d in dirs]
    for d in dirs:
        sample, _ = read_clip(os.path.join(root, "clips", d))
        assert sample.frame_count == 102
        assert len(chunk(sample, stride=34)) == 3


def test_generation_is_seeded(tmp_path):
    spec = SyntheticCorpusSpec(speakers=2, clips_per_speaker=1, frames=40, seed=9, layout="mini")
    for name in ("a", "b"):
        generate_synthetic_corpus(spec, str(tmp_path / name))
    for f in ("face.f32", "pose.f32", "audio.wav"):
        a = (tmp_path / "a" / "clips" / "s1_c000" / f).read_bytes()
        b = (tmp_path / "b" / "clips" / "s1_c000" / f).read_bytes()
        assert a == b


def test_envelope_drives_wrist_speed():
    spec = SyntheticCorpusSpec(coupling=1.0)
    face_layout, pose_layout, template = layouts_for("default")
    rng = np.random.default_rng(0)
    for k in range(spec.speakers):
        sample, env = generate_clip(spec, k, 0, rng, face_layout, pose_layout, template)
        for wrist in (6, 9):
            speed = np.linalg.norm(np.diff(sample.pose[:, wrist], axis=0), axis=1)
            r = np.corrcoef(speed, 0.5 * (env[1:] + env[:-1]))[0, 1]
            assert r > MIN_CORRELATION, (k, wrist, r)


def test_speaker_amplitude_gap(small_corpus):
    root, spec, splits = small_corpus
    per_speaker = {}
    for rel in sum(splits.values(), []):
        sample, _ = read_clip(os.path.join(root, rel))
        # upper arms: right shoulder -> elbow and left shoulder -> elbow
        for side, (a, b) in ((-1.0, (4, 5)), (1.0, (7, 8))):
            d = sample.pose[:, b] - sample.pose[:, a]
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            ang = np.degrees(np.arccos(np.clip(d @ cone_axis(side), -1, 1)))
            per_speaker.setdefault(sample.speaker, []).append(ang.mean())
    means = [np.mean(per_speaker[k]) for k in range(spec.speakers)]
    assert abs((means[1] - means[0]) - spec.amplitude_gap_deg) < GAP_TOL_DEG


@pytest.mark.parametrize(
    "kwargs",
    [
        {"speakers": 1},
        {"coupling": 1.5},
        {"coupling": -0.1},
        {"frames": 3},
        {"noise_mm": -1.0},
        {"layout": "huge"},
        {"train_ratio": 0.5},
        {"base_angle_deg": 80.0},
    ],
)
def test_invalid_spec(kwargs):
    with pytest.raises(ConfigError):
        SyntheticCorpusSpec(**kwargs)


def test_spec_dict_round_trip():
    spec = SyntheticCorpusSpec(speakers=3, coupling=0.5, layout="mini")
    assert SyntheticCorpusSpec.from_dict(spec.to_dict()) == spec
