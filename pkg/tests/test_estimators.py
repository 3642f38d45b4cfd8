import numpy as np
import pytest
from sklearn.base import clone

from cospeech import pipeline
from cospeech.config import load_config
from cospeech.estimators import (
    AnchorResampler,
    BoneUnitEncoder,
    CoSpeechSynthesizer,
    FaceDeltaEncoder,
    PhonemePredictor,
    ViewNormalizer,
    lip_windows,
)
from cospeech.exceptions import CheckpointMismatch, EmptyCorpus, ShapeMismatch
from cospeech.layouts import default_skeleton
from cospeech.motion import units_to_pose
from cospeech.nn.networks import DimensionPlan
from conftest import random_rotation
from helpers import write_tiny_config


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    d = tmp_path_factory.mktemp("est")
    cfg = load_config(write_tiny_config(d))
    pipeline.cmd_gen_synthetic(cfg, str(d / "raw"))
    pipeline.cmd_preprocess(cfg, str(d / "raw"), str(d / "proc"))
    return cfg, pipeline.load_processed(str(d / "proc"))


def make_synth(cfg, corpus, **kw):
    params = dict(face_layout=corpus.face_layout, pose_layout=corpus.pose_layout, template=corpus.template,
                  plan=cfg.plan, weights=cfg.loss, optim=cfg.optim, epochs=2, seed=0)
    params.update(kw)
    return CoSpeechSynthesizer(**params)


def test_view_normalizer_removes_rigid_motion(rng):
    face = rng.standard_normal((12, 3))
    seq = np.stack([face @ random_rotation(rng).T + rng.standard_normal(3) for _ in range(5)])
    out = ViewNormalizer().fit([seq]).transform([seq])[0]
    assert np.allclose(out, seq[0], atol=1e-9)
    with pytest.raises(ShapeMismatch):
        ViewNormalizer().fit([seq]).transform([seq[:, :5]])


def test_anchor_resampler_keeps_anchor_frames(rng):
    seq = rng.standard_normal((16, 4, 3))
    out = AnchorResampler().fit().transform([seq])[0]
    assert out.shape == seq.shape
    assert np.allclose(out[::3], seq[::3], atol=1e-12)


def test_face_delta_encoder_round_trip(rng):
    seqs = [rng.standard_normal((6, 5, 3)) for _ in range(3)]
    speakers = [0, 1, 0]
    enc = FaceDeltaEncoder(speaker_count=3).fit(seqs, speakers)
    assert enc.references_.shape == (3, 5, 3)
    back = enc.inverse_transform(enc.transform(seqs, speakers), speakers)
    for a, b in zip(seqs, back):
        assert np.allclose(a, b, atol=1e-12)
    with pytest.raises(EmptyCorpus):
        FaceDeltaEncoder().fit([], [])


def test_bone_unit_encoder_round_trip(rng):
    skel = default_skeleton()
    pose = units_to_pose(rng.standard_normal((4, skel.bone_count, 3)), skel)
    enc = BoneUnitEncoder(skel).fit()
    assert np.allclose(enc.inverse_transform(enc.transform([pose]))[0], pose, atol=1e-9)


def test_get_params_and_clone(tiny):
    cfg, corpus = tiny
    est = make_synth(cfg, corpus, seed=4)
    params = est.get_params()
    assert params["seed"] == 4 and params["plan"] == cfg.plan
    twin = clone(est)
    assert twin.get_params()["seed"] == 4
    assert not hasattr(twin, "generator_")
    p = PhonemePredictor(n_mels=8, channels=4, lip_indices=(5,))
    assert clone(p).set_params(seed=2).seed == 2


def test_synthesizer_fit_predict(tiny):
    cfg, corpus = tiny
    train, val = corpus.splits["train"], corpus.splits["val"]
    est = make_synth(cfg, corpus).fit(train, corpus.references, val)
    assert len(est.history_) == 2
    face, units = est.predict(train)
    assert face.shape == train.face.shape and units.shape == train.units.shape
    assert np.allclose(np.linalg.norm(units, axis=-1), 1.0, atol=1e-5)
    noisy, _ = est.predict(train, noise=np.ones((len(train), cfg.plan.d_k)))
    assert not np.allclose(noisy, face)
    faces, poses = est.predict_positions(val)
    gt_f, gt_p = est.ground_truth_positions(val)
    assert faces.shape == gt_f.shape and poses.shape == gt_p.shape


def test_synthesizer_is_seeded(tiny):
    cfg, corpus = tiny
    train = corpus.splits["train"]
    a = make_synth(cfg, corpus).fit(train, corpus.references).predict(train)[0]
    b = make_synth(cfg, corpus).fit(train, corpus.references).predict(train)[0]
    assert np.array_equal(a, b)


def test_synthesizer_save_load(tiny, tmp_path):
    cfg, corpus = tiny
    train = corpus.splits["train"]
    est = make_synth(cfg, corpus).fit(train, corpus.references)
    path = str(tmp_path / "m.ckpt")
    est.save(path)
    back = CoSpeechSynthesizer.load(path, plan=cfg.plan)
    assert np.array_equal(est.predict(train)[0], back.predict(train)[0])
    with pytest.raises(CheckpointMismatch):
        CoSpeechSynthesizer.load(path, plan=DimensionPlan())


def test_synthesizer_rejects_bad_windows(tiny):
    cfg, corpus = tiny
    train = corpus.splits["train"]
    with pytest.raises(EmptyCorpus):
        make_synth(cfg, corpus).initialize(train.subset([]), corpus.references)
    with pytest.raises(ShapeMismatch):
        make_synth(cfg, corpus, plan=DimensionPlan.miniature(window=20)).initialize(train, corpus.references)


def test_phoneme_predictor(tiny, tmp_path):
    cfg, corpus = tiny
    lips_idx = corpus.face_layout.lip_indices
    spec, lips = lip_windows(corpus.splits["train"], lips_idx)
    est = PhonemePredictor(n_mels=cfg.plan.n_mels, channels=4, lip_indices=lips_idx, optim=cfg.optim,
                           epochs=2, seed=0).fit(spec, lips)
    out = est.predict(spec[0])
    assert out.shape == (34, len(lips_idx), 3)
    path = str(tmp_path / "p.ckpt")
    est.save(path)
    assert np.array_equal(PhonemePredictor.load(path).predict(spec[:3]), est.predict(spec[:3]))
    with pytest.raises(CheckpointMismatch):
        CoSpeechSynthesizer.load(path)
    with pytest.raises(ShapeMismatch):
        est.fit(spec, lips[:, :10])
    with pytest.raises(EmptyCorpus):
        est.fit(spec[:0], lips[:0])
