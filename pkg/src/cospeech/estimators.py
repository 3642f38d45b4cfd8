"""Estimator-style wrappers: preprocessing transformers, the motion synthesizer, the lip predictor."""

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import WindowSet
from .exceptions import CheckpointMismatch, EmptyCorpus, EmptySplit, ShapeMismatch
from .graphs import face_graphs, pose_graphs
from .layouts import FaceLayout, PoseLayout
from .metrics import maje, male
from .motion import (
    anchor_resample,
    deltas_to_face,
    face_to_deltas,
    pose_to_units,
    reference_face,
    units_to_pose,
    view_normalize,
)
from .nn import DimensionPlan, Discriminator, Generator, PhonemeNet
from .retarget import chain_reach
from .serialization import flatten_state, load_archive, save_archive, unflatten_state
from .text import Vocabulary
from .training import (
    Batch,
    LossWeights,
    OptimizerConfig,
    SynthesisTrainer,
    generate,
    train_phoneme,
)


def _sequences(X):
    if isinstance(X, np.ndarray) and X.ndim == 3:
        return [X]
    return list(X)


class ViewNormalizer(TransformerMixin, BaseEstimator):
    """Rigidly aligns every frame of every sequence onto one canonical frame.

    The canonical frame is frame ``reference_frame_index`` of the first
    sequence seen by ``fit`` (or ``canonical`` when given).
    """

    def __init__(self, reference_frame_index=0, canonical=None):
        self.reference_frame_index = reference_frame_index
        self.canonical = canonical

    def fit(self, X=None, y=None):
        if self.canonical is not None:
            self.canonical_ = np.asarray(self.canonical, dtype=np.float64)
        else:
            seqs = _sequences(X)
            if not seqs:
                raise EmptyCorpus("no sequences")
            self.canonical_ = np.asarray(seqs[0][self.reference_frame_index], dtype=np.float64)
        return self

    def transform(self, X):
        check_is_fitted(self, "canonical_")
        out = []
        for seq in _sequences(X):
            seq = np.asarray(seq, dtype=np.float64)
            if seq.shape[1:] != self.canonical_.shape:
                raise ShapeMismatch(f"sequence frames {seq.shape[1:]} vs canonical {self.canonical_.shape}")
            out.append(view_normalize(np.concatenate([self.canonical_[None], seq]), 0)[1:])
        return out


class AnchorResampler(TransformerMixin, BaseEstimator):
    def __init__(self, native_rate=15, anchor_rate=5):
        self.native_rate = native_rate
        self.anchor_rate = anchor_rate

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return [anchor_resample(s, self.native_rate, self.anchor_rate) for s in _sequences(X)]


class FaceDeltaEncoder(TransformerMixin, BaseEstimator):
    """Per-speaker median reference faces; ``y`` holds each sequence's speaker id."""

    def __init__(self, speaker_count=None):
        self.speaker_count = speaker_count

    def fit(self, X, y):
        seqs = _sequences(X)
        y = np.asarray(y, dtype=int).reshape(-1)
        if not seqs:
            raise EmptyCorpus("no sequences")
        k = int(self.speaker_count or y.max() + 1)
        pooled = reference_face(np.concatenate(seqs))
        refs = np.empty((k,) + pooled.shape)
        for s in range(k):
            mine = [q for q, sid in zip(seqs, y) if sid == s]
            refs[s] = reference_face(np.concatenate(mine)) if mine else pooled
        self.references_ = refs
        return self

    def transform(self, X, y):
        check_is_fitted(self, "references_")
        y = np.asarray(y, dtype=int).reshape(-1)
        return [face_to_deltas(s, self.references_[k]) for s, k in zip(_sequences(X), y)]

    def inverse_transform(self, X, y):
        y = np.asarray(y, dtype=int).reshape(-1)
        return [deltas_to_face(s, self.references_[k]) for s, k in zip(_sequences(X), y)]


class BoneUnitEncoder(TransformerMixin, BaseEstimator):
    def __init__(self, skeleton):
        self.skeleton = skeleton

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return [pose_to_units(p, self.skeleton) for p in _sequences(X)]

    def inverse_transform(self, X):
        return [units_to_pose(u, self.skeleton) for u in _sequences(X)]


def _module_state(module):
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


class CoSpeechSynthesizer(BaseEstimator):
    """Generator plus discriminator trained on processed windows.

    ``fit`` consumes a :class:`WindowSet` and the per-speaker reference faces.
    ``predict`` returns face deltas and bone unit vectors for each window,
    seeded from the window's first ``seed_frames`` ground-truth frames.
    """

    def __init__(self, face_layout=None, pose_layout=None, template=None, plan=None, weights=None,
                 optim=None, epochs=None, adversarial=True, seed=0):
        self.face_layout = face_layout
        self.pose_layout = pose_layout
        self.template = template
        self.plan = plan
        self.weights = weights
        self.optim = optim
        self.epochs = epochs
        self.adversarial = adversarial
        self.seed = seed

    # setup ------------------------------------------------------------------

    @property
    def skeleton(self):
        return self.pose_layout.skeleton

    def _plan(self):
        return self.plan if self.plan is not None else DimensionPlan()

    def _build(self, vocab, speaker_count):
        plan = self._plan()
        torch.manual_seed(int(self.seed))
        fg = face_graphs(self.face_layout, np.asarray(self.template), plan.temporal_window)
        pg = pose_graphs(self.pose_layout, plan.temporal_window)
        self.vocab_ = vocab
        self.generator_ = Generator(plan, fg, pg, vocab.size, speaker_count)
        self.discriminator_ = Discriminator(plan, fg, pg) if self.adversarial else None
        self.speaker_count_ = speaker_count
        self.pose_scale_ = max(chain_reach(self.skeleton, j) for j in range(self.skeleton.joint_count))
        self.trainer_ = SynthesisTrainer(
            self.generator_, self.discriminator_, self.weights or LossWeights(),
            self.optim or OptimizerConfig(), self.skeleton, self.pose_scale_, self.seed, self.adversarial,
        )

    def initialize(self, X, references):
        """Build the networks and set their normalisation statistics from ``X``."""
        if len(X) == 0:
            raise EmptyCorpus("no training windows")
        plan = self._plan()
        if X.face.shape[1] != plan.window:
            raise ShapeMismatch(f"windows have {X.face.shape[1]} frames, plan expects {plan.window}")
        self.references_ = np.asarray(references, dtype=np.float64)
        self._build(Vocabulary(np.unique(X.words), plan.hash_buckets), self.references_.shape[0])
        with torch.no_grad():
            mfcc = X.mfcc.reshape(-1, X.mfcc.shape[-1])
            self.generator_.audio_mean.copy_(torch.as_tensor(mfcc.mean(axis=0)))
            self.generator_.audio_std.copy_(torch.as_tensor(mfcc.std(axis=0) + 1e-6))
            scale = torch.tensor(float(X.face.std()) + 1e-6)
            self.generator_.face_scale.copy_(scale)
            if self.discriminator_ is not None:
                self.discriminator_.face_scale.copy_(scale)
        self.best_score_ = float("inf")
        self.best_state_ = _module_state(self.generator_)
        self.history_ = []
        return self

    def to_batch(self, X):
        k = self.speaker_count_
        sid = torch.as_tensor(np.asarray(X.speaker, dtype=np.int64))
        return Batch(
            mfcc=torch.as_tensor(X.mfcc, dtype=torch.float32),
            words=torch.as_tensor(self.vocab_.encode(X.words)),
            speaker=torch.nn.functional.one_hot(sid, k).float(),
            speaker_id=sid,
            face=torch.as_tensor(X.face, dtype=torch.float32),
            units=torch.as_tensor(X.units, dtype=torch.float32),
            reference=torch.as_tensor(self.references_[np.asarray(X.speaker, dtype=int)], dtype=torch.float32),
        )

    # training ---------------------------------------------------------------

    def run_epoch(self, batch):
        return self.trainer_.run_epoch(batch)

    def validation_score(self, X):
        """MALE + MAJE in millimetres, the checkpoint selection score."""
        faces, poses = self.predict_positions(X)
        gt_f, gt_p = self.ground_truth_positions(X)
        return male(gt_f, faces), maje(gt_p, poses)

    def consider_best(self, score):
        if score < self.best_score_:
            self.best_score_ = float(score)
            self.best_state_ = _module_state(self.generator_)
            return True
        return False

    def fit(self, X, references, X_val=None, callback=None):
        self.initialize(X, references)
        cfg = self.optim or OptimizerConfig()
        epochs = cfg.epochs if self.epochs is None else self.epochs
        batch = self.to_batch(X)
        for _ in range(epochs):
            row = {"epoch": self.trainer_.epoch, **self.run_epoch(batch)}
            if X_val is not None and len(X_val) and self.trainer_.epoch % cfg.validate_every == 0:
                row["val_male"], row["val_maje"] = self.validation_score(X_val)
                self.consider_best(row["val_male"] + row["val_maje"])
            self.history_.append(row)
            if callback is not None:
                callback(row)
        if X_val is None or not len(X_val):
            self.best_state_ = _module_state(self.generator_)
        return self

    def use_best(self):
        self.generator_.load_state_dict(self.best_state_)
        return self

    # inference --------------------------------------------------------------

    def predict(self, X, noise=None):
        """Face deltas ``(N, T, L, 3)`` and bone units ``(N, T, J-1, 3)``.

        ``noise`` is the speaker-sampling noise ``(N, d_k)``; zero by default,
        which yields each speaker's mean style.
        """
        check_is_fitted(self, "generator_")
        if len(X) == 0:
            raise EmptySplit("no windows to predict")
        batch = self.to_batch(X)
        if noise is not None:
            noise = torch.as_tensor(np.asarray(noise), dtype=torch.float32)
        self.generator_.eval()
        with torch.no_grad():
            face, units = generate(self.generator_, batch, noise)
        return face.double().numpy(), units.double().numpy()

    def predict_positions(self, X, noise=None):
        face, units = self.predict(X, noise)
        refs = self.references_[np.asarray(X.speaker, dtype=int)][:, None]
        poses = units_to_pose(units.reshape(-1, *units.shape[2:]), self.skeleton)
        return face + refs, poses.reshape(units.shape[0], units.shape[1], -1, 3)

    def ground_truth_positions(self, X):
        refs = self.references_[np.asarray(X.speaker, dtype=int)][:, None]
        units = X.units
        poses = units_to_pose(units.reshape(-1, *units.shape[2:]), self.skeleton)
        return X.face + refs, poses.reshape(units.shape[0], units.shape[1], -1, 3)

    def generate_sequence(self, mfcc, words, speaker, face_seed, units_seed, noise_rng=None):
        """Synthesize an arbitrarily long sequence by chaining windows.

        Each window after the first is seeded with the last ``seed_frames``
        synthesized frames of the previous one. Features shorter than a
        window are edge-padded; the output is cut to ``len(mfcc)`` frames.
        Returns ``(face deltas, units, offsets)``.
        """
        plan = self._plan()
        win, seed = plan.window, plan.seed_frames
        n = mfcc.shape[0]
        step = win - seed
        offsets = [0]
        while offsets[-1] + win < n:
            offsets.append(offsets[-1] + step)
        total = offsets[-1] + win
        pad = total - n
        mfcc = np.pad(mfcc, ((0, pad), (0, 0)), mode="edge")
        ids = np.pad(self.vocab_.encode(words), (0, pad))
        k = torch.nn.functional.one_hot(torch.tensor([int(speaker)]), self.speaker_count_).float()
        f_seed = torch.as_tensor(np.asarray(face_seed)[None, :seed], dtype=torch.float32)
        u_seed = torch.as_tensor(np.asarray(units_seed)[None, :seed], dtype=torch.float32)
        face_out, unit_out = [], []
        self.generator_.eval()
        with torch.no_grad():
            for i, off in enumerate(offsets):
                noise = None
                if noise_rng is not None:
                    noise = torch.randn(1, plan.d_k, generator=noise_rng)
                face, units = self.generator_(
                    torch.as_tensor(mfcc[None, off : off + win], dtype=torch.float32),
                    torch.as_tensor(ids[None, off : off + win]),
                    k, f_seed, u_seed, noise,
                )
                keep = slice(0, win) if i == 0 else slice(seed, win)
                face_out.append(face[0, keep])
                unit_out.append(units[0, keep])
                f_seed, u_seed = face[:, -seed:], units[:, -seed:]
        face = torch.cat(face_out)[:n].double().numpy()
        units = torch.cat(unit_out)[:n].double().numpy()
        return face, units, offsets

    # persistence ------------------------------------------------------------

    def save(self, path, extra_meta=None, extra_arrays=None):
        check_is_fitted(self, "generator_")
        arrays = {"references": self.references_, "template": np.asarray(self.template)}
        meta = {
            "kind": "synthesizer",
            "face_layout": self.face_layout.to_dict(),
            "pose_layout": self.pose_layout.to_dict(),
            "plan": self._plan().to_dict(),
            "weights": (self.weights or LossWeights()).to_dict(),
            "optim": (self.optim or OptimizerConfig()).to_dict(),
            "epochs": self.epochs,
            "adversarial": bool(self.adversarial),
            "seed": int(self.seed),
            "vocab": self.vocab_.to_dict(),
            "speaker_count": int(self.speaker_count_),
            "best_score": self.best_score_,
            "generator": flatten_state(self.generator_.state_dict(), arrays, "gen"),
            "best": flatten_state(self.best_state_, arrays, "best"),
            "trainer": flatten_state(self.trainer_.state_dict(), arrays, "trainer"),
            "history": self.history_,
        }
        if self.discriminator_ is not None:
            meta["discriminator"] = flatten_state(self.discriminator_.state_dict(), arrays, "disc")
        meta.update(extra_meta or {})
        arrays.update(extra_arrays or {})
        save_archive(path, arrays, meta)

    @classmethod
    def load(cls, path, plan=None):
        arrays, meta = load_archive(path)
        if meta.get("kind") != "synthesizer":
            raise CheckpointMismatch(f"{path} is not a synthesizer checkpoint")
        saved_plan = DimensionPlan.from_dict(meta["plan"])
        if plan is not None and plan != saved_plan:
            raise CheckpointMismatch("checkpoint dimension plan differs from the configured plan")
        est = cls(
            face_layout=FaceLayout.from_dict(meta["face_layout"]),
            pose_layout=PoseLayout.from_dict(meta["pose_layout"]),
            template=arrays["template"],
            plan=saved_plan,
            weights=LossWeights.from_dict(meta["weights"]),
            optim=OptimizerConfig.from_dict(meta["optim"]),
            epochs=meta["epochs"],
            adversarial=meta["adversarial"],
            seed=meta["seed"],
        )
        est.references_ = arrays["references"]
        est._build(Vocabulary.from_dict(meta["vocab"]), int(meta["speaker_count"]))
        try:
            est.generator_.load_state_dict(unflatten_state(meta["generator"], arrays))
            if est.discriminator_ is not None:
                est.discriminator_.load_state_dict(unflatten_state(meta["discriminator"], arrays))
        except RuntimeError as exc:
            raise CheckpointMismatch(str(exc)) from None
        est.trainer_.load_state_dict(unflatten_state(meta["trainer"], arrays))
        est.best_state_ = unflatten_state(meta["best"], arrays)
        est.best_score_ = float(meta["best_score"])
        est.history_ = list(meta["history"])
        est.meta_ = meta
        est.arrays_ = arrays
        return est


class PhonemePredictor(BaseEstimator):
    """Spectrogram windows ``(N, T, n_mels)`` to lip-landmark deltas ``(N, T, L_lip, 3)``."""

    def __init__(self, n_mels=40, channels=32, lip_indices=(), optim=None, epochs=None, seed=0):
        self.n_mels = n_mels
        self.channels = channels
        self.lip_indices = lip_indices
        self.optim = optim
        self.epochs = epochs
        self.seed = seed

    def _build(self):
        torch.manual_seed(int(self.seed))
        self.net_ = PhonemeNet(self.n_mels, self.channels, len(self.lip_indices))

    def fit(self, spec, lips, spec_val=None, lips_val=None, callback=None):
        spec = np.asarray(spec, dtype=np.float64)
        lips = np.asarray(lips, dtype=np.float64)
        if spec.shape[0] == 0:
            raise EmptyCorpus("no phoneme training windows")
        if lips.shape[:2] != spec.shape[:2] or lips.shape[2:] != (len(self.lip_indices), 3):
            raise ShapeMismatch(f"lips {lips.shape} do not match spectrogram {spec.shape}")
        self._build()
        flat = spec.reshape(-1, spec.shape[-1])
        with torch.no_grad():
            self.net_.spec_mean.copy_(torch.as_tensor(flat.mean(axis=0)))
            self.net_.spec_std.copy_(torch.as_tensor(flat.std(axis=0) + 1e-6))
            self.net_.lip_scale.copy_(torch.tensor(float(lips.std()) + 1e-6))
        self.net_, self.history_ = train_phoneme(
            spec, lips, self.net_, self.optim or OptimizerConfig(), self.seed,
            spec_val, lips_val, self.epochs, callback,
        )
        return self

    def predict(self, spec):
        check_is_fitted(self, "net_")
        x = torch.as_tensor(np.asarray(spec), dtype=torch.float32)
        single = x.dim() == 2
        if single:
            x = x[None]
        self.net_.eval()
        with torch.no_grad():
            out = self.net_(x).double().numpy()
        return out[0] if single else out

    def save(self, path):
        check_is_fitted(self, "net_")
        arrays = {}
        meta = {
            "kind": "phoneme",
            "n_mels": int(self.n_mels),
            "channels": int(self.channels),
            "lip_indices": [int(i) for i in self.lip_indices],
            "optim": (self.optim or OptimizerConfig()).to_dict(),
            "epochs": self.epochs,
            "seed": int(self.seed),
            "net": flatten_state(self.net_.state_dict(), arrays, "net"),
            "history": self.history_,
        }
        save_archive(path, arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_archive(path)
        if meta.get("kind") != "phoneme":
            raise CheckpointMismatch(f"{path} is not a phoneme predictor checkpoint")
        est = cls(meta["n_mels"], meta["channels"], tuple(meta["lip_indices"]),
                  OptimizerConfig.from_dict(meta["optim"]), meta["epochs"], meta["seed"])
        est._build()
        est.net_.load_state_dict(unflatten_state(meta["net"], arrays))
        est.history_ = meta["history"]
        return est


def lip_windows(X, lip_indices):
    """Phoneme-predictor training pairs from a window set."""
    return X.spec, X.face[:, :, list(lip_indices)]


__all__ = [
    "AnchorResampler",
    "BoneUnitEncoder",
    "CoSpeechSynthesizer",
    "FaceDeltaEncoder",
    "PhonemePredictor",
    "ViewNormalizer",
    "WindowSet",
    "lip_windows",
]

