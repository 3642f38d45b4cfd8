"""Command implementations shared by the CLI and the tests.

Every command takes a :class:`RunConfig` plus explicit paths and writes
its outputs into an output directory. Under a fixed seed, with one
worker, every output file is byte-identical across reruns.
"""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import torch

from .audio import compute_mfcc, frame_count, log_mel_spectrogram, read_wav
from .corpus import ProcessedCorpus, WindowSet, read_clip, read_manifest, read_transcript, split_counts
from .estimators import (
    AnchorResampler,
    BoneUnitEncoder,
    CoSpeechSynthesizer,
    FaceDeltaEncoder,
    PhonemePredictor,
    ViewNormalizer,
    lip_windows,
)
from .exceptions import CheckpointMismatch, CoSpeechError, EmptySplit, TooShort
from .layouts import (
    FaceLayout,
    PoseLayout,
    default_face_layout,
    default_pose_layout,
    mini_face_layout,
    mini_pose_layout,
)
from .metrics import MetricReport, fgd, fld, mace, maje, male, train_landmark_autoencoder
from .motion import (
    WINDOW,
    Skeleton,
    pose_to_units,
    reference_face,
    root_to_origin,
    unit_bbox_scale,
    units_to_pose,
    window_offsets,
)
from .retarget import (
    export_animation,
    positions_to_rotations,
    retarget_positions,
    superpose_lips,
    write_landmark_map,
)
from .serialization import dump_json
from .synthetic import LAYOUT_FILE, generate_synthetic_corpus
from .text import frame_words

log = logging.getLogger("cospeech")

PROCESSED_FILE = "processed.zip"
STATS_FILE = "stats.json"
TRAIN_LOG = "train_log.csv"
PHONEME_LOG = "phoneme_log.csv"
LATEST = "latest.ckpt"
BEST = "best.ckpt"
PHONEME_CKPT = "phoneme.ckpt"
ANIMATION_FILE = "animation.json"
LANDMARK_MAP = "landmark_map.json"
TRAIN_COLUMNS = ("epoch", "rec", "csd", "adv_g", "adv_d", "total", "lr_g", "lr_d", "val_male", "val_maje")
MAX_SKIPPED = 0.1


class PreprocessFailure(CoSpeechError, ValueError):
    pass


class TrainingFailure(CoSpeechError, RuntimeError):
    def __init__(self, epoch, cause):
        super().__init__(f"training failed at epoch {epoch}: {cause}")
        self.epoch = epoch


def _require(path, kind="file"):
    ok = os.path.isdir(path) if kind == "dir" else os.path.isfile(path)
    if not ok:
        raise FileNotFoundError(f"{kind} not found: {path}")


# gen-synthetic -----------------------------------------------------------------

def cmd_gen_synthetic(cfg, out):
    splits = generate_synthetic_corpus(cfg.synthetic, out)
    log.info("wrote %d clips to %s", sum(len(v) for v in splits.values()), out)
    return splits


# preprocess --------------------------------------------------------------------

def corpus_layouts(root, n_landmarks, n_joints, skeleton):
    path = os.path.join(root, LAYOUT_FILE)
    if os.path.exists(path):
        with open(path) as fh:
            d = json.load(fh)
        return FaceLayout.from_dict(d["face_layout"]), PoseLayout.from_dict(d["pose_layout"])
    for face, pose in ((default_face_layout(), default_pose_layout()), (mini_face_layout(), mini_pose_layout())):
        if face.landmark_count == n_landmarks and pose.skeleton.joint_count == n_joints:
            if pose.skeleton.parent_index == skeleton.parent_index:
                skel = Skeleton(skeleton.parent_index, skeleton.bone_lengths,
                                pose.skeleton.rest_directions, pose.skeleton.joint_names)
                return face, PoseLayout(skel, pose.components)
    raise PreprocessFailure(f"no layout.json and no built-in layout for L={n_landmarks}, J={n_joints}")


def discover_splits(root, ratios, seed):
    manifest = read_manifest(root)
    if manifest is not None:
        return manifest
    clips = []
    for dirpath, _, files in os.walk(root):
        if "meta.json" in files:
            clips.append(os.path.relpath(dirpath, root))
    clips.sort()
    order = np.random.default_rng(seed).permutation(len(clips))
    n_train, n_val, _ = split_counts(len(clips), ratios)
    shuffled = [clips[i] for i in order]
    return {
        "train": sorted(shuffled[:n_train]),
        "val": sorted(shuffled[n_train : n_train + n_val]),
        "test": sorted(shuffled[n_train + n_val :]),
    }


def process_clip(path, canonical, skeleton, n_mels, stride, window=WINDOW):
    """Aligned faces, bone units, audio features and window offsets for one clip."""
    sample, _ = read_clip(path)
    n = sample.frame_count
    if n < window:
        raise TooShort(f"{n} frames, window is {window}")
    face = ViewNormalizer(canonical=canonical).fit().transform([sample.face])[0]
    pose = root_to_origin(sample.pose)
    face, pose = AnchorResampler().transform([face, pose])
    units = BoneUnitEncoder(skeleton).transform([pose])[0]
    sr = sample.sample_rate
    return {
        "face": face,
        "units": units,
        "mfcc": compute_mfcc(sample.audio, sr, sample.frame_rate, n),
        "spec": log_mel_spectrogram(sample.audio, sr, sample.frame_rate, n, n_mels),
        "words": frame_words(sample.transcript, n),
        "speaker": sample.speaker,
        "speaker_count": sample.speaker_count,
        "offsets": window_offsets(n, window, stride),
        "clip": sample.clip_id,
    }


def _process_job(args):
    path, canonical, skeleton, n_mels, stride = args
    try:
        return process_clip(path, canonical, skeleton, n_mels, stride), None
    except (CoSpeechError, OSError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def windows_from_clips(clips, encoder, window=WINDOW):
    parts = {k: [] for k in ("face", "units", "mfcc", "spec", "words", "speaker", "clip", "offset")}
    for c in clips:
        deltas = encoder.transform([c["face"]], [c["speaker"]])[0]
        for off in c["offsets"]:
            sl = slice(off, off + window)
            parts["face"].append(deltas[sl])
            parts["units"].append(c["units"][sl])
            parts["mfcc"].append(c["mfcc"][sl])
            parts["spec"].append(c["spec"][sl])
            parts["words"].append(c["words"][sl])
            parts["speaker"].append(c["speaker"])
            parts["clip"].append(c["clip"])
            parts["offset"].append(off)
    if not parts["face"]:
        n_l = encoder.references_.shape[1]
        return WindowSet(
            face=np.zeros((0, window, n_l, 3)), units=np.zeros((0, window, 0, 3)),
            mfcc=np.zeros((0, window, 0)), spec=np.zeros((0, window, 0)),
            words=np.zeros((0, window), dtype=str), speaker=np.zeros(0, dtype=np.int64),
            clip=np.zeros(0, dtype=str), offset=np.zeros(0, dtype=np.int64),
        )
    return WindowSet(
        face=np.stack(parts["face"]).astype(np.float32),
        units=np.stack(parts["units"]).astype(np.float32),
        mfcc=np.stack(parts["mfcc"]).astype(np.float32),
        spec=np.stack(parts["spec"]).astype(np.float32),
        words=np.stack(parts["words"]).astype(str),
        speaker=np.asarray(parts["speaker"], dtype=np.int64),
        clip=np.asarray(parts["clip"], dtype=str),
        offset=np.asarray(parts["offset"], dtype=np.int64),
    )


def cmd_preprocess(cfg, corpus, out):
    """Raw clips to ``processed.zip`` plus ``stats.json``; returns the stats dict."""
    _require(corpus, "dir")
    os.makedirs(out, exist_ok=True)
    splits = discover_splits(corpus, cfg.split.as_tuple(), cfg.run.seed)
    if not splits["train"]:
        raise EmptySplit("the training split has no clips")
    first, skeleton = read_clip(os.path.join(corpus, splits["train"][0]))
    face_layout, pose_layout = corpus_layouts(corpus, first.face.shape[1], first.pose.shape[1], skeleton)
    skeleton = pose_layout.skeleton
    canonical = ViewNormalizer().fit([first.face]).canonical_
    jobs, owners = [], []
    for name in ("train", "val", "test"):
        for rel in splits[name]:
            jobs.append((os.path.join(corpus, rel), canonical, skeleton, cfg.plan.n_mels, cfg.run.stride))
            owners.append((name, rel))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_process_job, jobs))
    else:
        results = [_process_job(j) for j in jobs]
    processed = {"train": [], "val": [], "test": []}
    skipped = []
    for (name, rel), (clip, err) in zip(owners, results):
        if err is not None:
            log.warning("skipping %s: %s", rel, err)
            skipped.append({"clip": rel, "split": name, "error": err})
        else:
            processed[name].append(clip)
    if not processed["train"]:
        raise EmptySplit("every training clip was skipped")
    speaker_count = max(c["speaker_count"] for cs in processed.values() for c in cs)
    train = processed["train"]
    encoder = FaceDeltaEncoder(speaker_count).fit([c["face"] for c in train], [c["speaker"] for c in train])
    template = reference_face(np.concatenate([c["face"] for c in train]))
    windows = {name: windows_from_clips(cs, encoder) for name, cs in processed.items()}
    result = ProcessedCorpus(
        splits=windows,
        references=encoder.references_,
        face_layout=face_layout,
        pose_layout=pose_layout,
        canonical=canonical,
        template=template,
        frame_rate=float(first.frame_rate),
    )
    result.save(os.path.join(out, PROCESSED_FILE))
    stats = {
        "clips": {k: len(v) for k, v in processed.items()},
        "windows": {k: len(v) for k, v in windows.items()},
        "windows_per_clip": {c["clip"]: len(c["offsets"]) for cs in processed.values() for c in cs},
        "speakers": int(speaker_count),
        "skipped": skipped,
        "stride": cfg.run.stride,
        "window": WINDOW,
    }
    dump_json(os.path.join(out, STATS_FILE), stats)
    total = len(jobs)
    if total and len(skipped) > MAX_SKIPPED * total:
        raise PreprocessFailure(f"{len(skipped)} of {total} clips skipped")
    return stats


# train -------------------------------------------------------------------------

def _fmt(v):
    if v is None or v == "":
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_log(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def _append_log(path, columns, row):
    with open(path, "a", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow([_fmt(row.get(c)) for c in columns])


def read_log(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_processed(path):
    if os.path.isdir(path):
        path = os.path.join(path, PROCESSED_FILE)
    _require(path)
    return ProcessedCorpus.load(path)


def _train_extras(corpus):
    return {"canonical": corpus.canonical}


def cmd_train(cfg, data, out, resume=False, epochs=None):
    """Adversarial training with CSV logging, periodic checkpoints and best-validation selection."""
    corpus = load_processed(data)
    train, val = corpus.splits["train"], corpus.splits.get("val")
    if len(train) == 0:
        raise EmptySplit("the training split is empty")
    os.makedirs(os.path.join(out, "checkpoints"), exist_ok=True)
    log_path = os.path.join(out, TRAIN_LOG)
    latest = os.path.join(out, LATEST)
    best = os.path.join(out, BEST)
    total = cfg.optim.epochs if epochs is None else int(epochs)
    if resume and os.path.exists(latest):
        est = CoSpeechSynthesizer.load(latest, plan=cfg.plan)
        _write_log(log_path, TRAIN_COLUMNS, est.history_)
    else:
        est = CoSpeechSynthesizer(
            face_layout=corpus.face_layout, pose_layout=corpus.pose_layout, template=corpus.template,
            plan=cfg.plan, weights=cfg.loss, optim=cfg.optim, epochs=total,
            adversarial=cfg.run.adversarial, seed=cfg.run.seed,
        ).initialize(train, corpus.references)
        _write_log(log_path, TRAIN_COLUMNS, [])
    extras = _train_extras(corpus)
    batch = est.to_batch(train)
    has_val = val is not None and len(val) > 0
    every = max(1, cfg.optim.validate_every)
    while est.trainer_.epoch < total:
        epoch = est.trainer_.epoch
        try:
            row = {"epoch": epoch, **est.run_epoch(batch)}
            done = est.trainer_.epoch
            if has_val and (done % every == 0 or done == total):
                row["val_male"], row["val_maje"] = est.validation_score(val)
                improved = est.consider_best(row["val_male"] + row["val_maje"])
            else:
                improved = not has_val and done == total
            est.history_.append(row)
            _append_log(log_path, TRAIN_COLUMNS, row)
            if improved:
                est.save(best, extra_arrays=extras)
            if done % max(1, cfg.run.checkpoint_every) == 0 or done == total:
                est.save(latest, extra_arrays=extras)
                est.save(os.path.join(out, "checkpoints", f"epoch_{done:04d}.ckpt"), extra_arrays=extras)
        except CoSpeechError:
            raise
        except Exception as exc:
            raise TrainingFailure(epoch, exc) from exc
    if not os.path.exists(best):
        est.save(best, extra_arrays=extras)
    return est


def cmd_train_phoneme(cfg, data, out, epochs=None):
    corpus = load_processed(data)
    lips_idx = corpus.face_layout.lip_indices
    spec, lips = lip_windows(corpus.splits["train"], lips_idx)
    val = corpus.splits.get("val")
    spec_val, lips_val = lip_windows(val, lips_idx) if val is not None and len(val) else (None, None)
    os.makedirs(out, exist_ok=True)
    rows = []
    est = PhonemePredictor(
        n_mels=cfg.plan.n_mels, channels=cfg.plan.phoneme_channels, lip_indices=lips_idx,
        optim=cfg.optim, epochs=epochs, seed=cfg.run.seed,
    ).fit(spec, lips, spec_val, lips_val, callback=rows.append)
    _write_log(os.path.join(out, PHONEME_LOG), ("epoch", "loss", "val_loss"), rows)
    est.save(os.path.join(out, PHONEME_CKPT))
    return est


# synthesize --------------------------------------------------------------------

def seed_motion_from_clip(path, est, canonical, speaker):
    """Seed face deltas and bone units from the first frames of a raw clip."""
    sample, _ = read_clip(path)
    seed = est._plan().seed_frames
    if sample.frame_count < seed:
        raise TooShort(f"seed clip has {sample.frame_count} frames, need {seed}")
    face = ViewNormalizer(canonical=canonical).fit().transform([sample.face[:seed]])[0]
    units = pose_to_units(sample.pose[:seed], est.skeleton)
    return face - est.references_[speaker], units


def neutral_seed(est):
    seed = est._plan().seed_frames
    n_l = est.references_.shape[1]
    rest = est.skeleton.rest_directions
    return np.zeros((seed, n_l, 3)), np.repeat(rest[None], seed, axis=0)


def cmd_synthesize(cfg, checkpoint, audio, out, transcript=None, speaker=0, seed_motion=None,
                   phoneme=None, seed=0, check_plan=False):
    """Audio (+ transcript) to an animation file; returns the written path."""
    _require(checkpoint)
    _require(audio)
    est = CoSpeechSynthesizer.load(checkpoint, plan=cfg.plan if check_plan else None)
    plan = est._plan()
    speaker = int(speaker)
    if not 0 <= speaker < est.speaker_count_:
        raise CheckpointMismatch(f"speaker {speaker} not in [0, {est.speaker_count_})")
    phon = None
    if phoneme is not None:
        _require(phoneme)
        phon = PhonemePredictor.load(phoneme)
        if tuple(phon.lip_indices) != tuple(est.face_layout.lip_indices) or phon.n_mels != plan.n_mels:
            raise CheckpointMismatch("phoneme predictor does not match the synthesizer checkpoint")
    wav, sr = read_wav(audio)
    n = frame_count(wav.size, sr)
    if n < 1:
        raise TooShort("audio shorter than one frame")
    mfcc = compute_mfcc(wav, sr, 15, n)
    words = frame_words(read_transcript(transcript) if transcript else [], n)
    if seed_motion is not None:
        face_seed, units_seed = seed_motion_from_clip(seed_motion, est, est.arrays_["canonical"], speaker)
    else:
        face_seed, units_seed = neutral_seed(est)
    rng = torch.Generator().manual_seed(int(seed))
    deltas, units, offsets = est.generate_sequence(mfcc, words, speaker, face_seed, units_seed, rng)
    ref = est.references_[speaker]
    face = deltas + ref
    layout = est.face_layout
    if phon is not None:
        spec = log_mel_spectrogram(wav, sr, 15, n, plan.n_mels)
        lips = phon.predict(spec) + ref[list(layout.lip_indices)]
        face = superpose_lips(face, lips, ref, layout)
    pose = units_to_pose(units, est.skeleton)
    rotations = positions_to_rotations(retarget_positions(pose, est.skeleton, est.skeleton), est.skeleton)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, ANIMATION_FILE)
    export_animation(path, rotations, face, est.skeleton, 15.0, windows=(plan.window, offsets))
    write_landmark_map(os.path.join(out, LANDMARK_MAP), layout)
    return path


# evaluate ----------------------------------------------------------------------

def scaled_pair(gt, syn):
    """Scale both corpora by the factor that maps the ground truth to a 1 m bounding box."""
    factor = unit_bbox_scale([gt])
    return gt * factor, syn * factor, factor


def evaluate_positions(gt_faces, syn_faces, gt_poses, syn_poses, face_encoder, pose_encoder, frame_rate=15.0):
    gf, sf, _ = scaled_pair(gt_faces, syn_faces)
    gp, sp, _ = scaled_pair(gt_poses, syn_poses)
    return MetricReport(
        male_mm=male(gf, sf),
        maje_mm=maje(gp, sp),
        mace_lm=mace(gf, sf, frame_rate),
        mace_p=mace(gp, sp, frame_rate),
        fld=fld(gf, sf, face_encoder),
        fgd=fgd(gp, sp, pose_encoder),
        sample_count=int(gt_faces.shape[0]),
    )


def fit_feature_encoders(corpus, est, settings, seed):
    """Autoencoders for FLD and FGD, fitted on scaled ground-truth training windows."""
    train = corpus.splits["train"]
    faces, poses = est.ground_truth_positions(train)
    params = dict(d_enc=settings.ae_d_enc, hidden=settings.ae_hidden, epochs=settings.ae_epochs,
                  lr=settings.ae_lr, seed=seed)
    face_enc = train_landmark_autoencoder(faces * unit_bbox_scale([faces]), **params)
    pose_enc = train_landmark_autoencoder(poses * unit_bbox_scale([poses]), **params)
    return face_enc, pose_enc


def cmd_evaluate(cfg, checkpoint, data, out, split="test", identity=False):
    _require(checkpoint)
    corpus = load_processed(data)
    ws = corpus.splits.get(split)
    if ws is None or len(ws) == 0:
        raise EmptySplit(f"split {split!r} is empty")
    est = CoSpeechSynthesizer.load(checkpoint)
    if est.references_.shape != corpus.references.shape:
        raise CheckpointMismatch("checkpoint and processed corpus disagree on speakers or landmarks")
    gt_f, gt_p = est.ground_truth_positions(ws)
    if identity:
        syn_f, syn_p = gt_f, gt_p
    else:
        syn_f, syn_p = est.predict_positions(ws)
    face_enc, pose_enc = fit_feature_encoders(corpus, est, cfg.evaluate, cfg.run.seed)
    report = evaluate_positions(gt_f, syn_f, gt_p, syn_p, face_enc, pose_enc, corpus.frame_rate)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(out, "metrics.csv"), "w") as fh:
        fh.write(report.to_csv())
    return report
