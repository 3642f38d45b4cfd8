"""Frame-aligned audio features and 16-bit PCM wav IO.

Feature frames are centred on the motion frames: frame ``t`` covers the
interval ``[t / fps, (t + 1) / fps)`` and its analysis window is centred on
the middle of that interval, so features line up 1:1 with 15 fps motion.
"""

import numpy as np
from scipy.fft import dct, rfft
from scipy.io import wavfile

from .exceptions import TooShortAudio

SAMPLE_RATE = 16000
FPS = 15
N_MFCC = 13
N_MELS_MFCC = 26
N_MELS_SPEC = 40
WINDOW_SECONDS = 0.025
LOG_FLOOR = 1e-10


def frame_count(n_samples, sample_rate=SAMPLE_RATE, fps=FPS):
    return int(round(n_samples * fps / sample_rate))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_mels, n_fft, sample_rate, fmin=0.0, fmax=None):
    fmax = sample_rate / 2 if fmax is None else fmax
    mels = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz = mel_to_hz(mels)
    bins = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    fb = np.zeros((n_mels, bins.size))
    for m in range(n_mels):
        lo, mid, hi = hz[m], hz[m + 1], hz[m + 2]
        up = (bins - lo) / (mid - lo)
        down = (hi - bins) / (hi - mid)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def _frames(audio, sample_rate, fps, n_frames, window_seconds):
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim != 1:
        raise ValueError("audio must be mono")
    available = frame_count(audio.size, sample_rate, fps)
    if n_frames is None:
        n_frames = available
    if n_frames < 1 or n_frames > available:
        raise TooShortAudio(f"audio covers {available} frames, {n_frames} requested")
    win = int(round(window_seconds * sample_rate))
    half = win // 2
    centers = np.round((np.arange(n_frames) + 0.5) * sample_rate / fps).astype(int)
    padded = np.pad(audio, (half, half + win))
    idx = centers[:, None] + np.arange(win)[None, :]
    frames = padded[idx]
    emph = frames.copy()
    emph[:, 1:] -= 0.97 * frames[:, :-1]
    return emph * np.hamming(win)


def power_spectrum(frames):
    n_fft = 1 << int(np.ceil(np.log2(frames.shape[1])))
    spec = np.abs(rfft(frames, n=n_fft, axis=1)) ** 2 / n_fft
    return spec, n_fft


def log_mel_spectrogram(audio, sample_rate=SAMPLE_RATE, fps=FPS, n_frames=None,
                        n_mels=N_MELS_SPEC, window_seconds=WINDOW_SECONDS):
    """``(T, n_mels)`` log mel energies, one row per motion frame."""
    frames = _frames(audio, sample_rate, fps, n_frames, window_seconds)
    spec, n_fft = power_spectrum(frames)
    mel = spec @ mel_filterbank(n_mels, n_fft, sample_rate).T
    return np.log(np.maximum(mel, LOG_FLOOR))


def deltas(features, width=2):
    x = np.asarray(features)
    padded = np.pad(x, ((width, width), (0, 0)), mode="edge")
    n = x.shape[0]
    num = sum(k * (padded[width + k : width + k + n] - padded[width - k : width - k + n])
              for k in range(1, width + 1))
    return num / (2 * sum(k * k for k in range(1, width + 1)))


def compute_mfcc(audio, sample_rate=SAMPLE_RATE, fps=FPS, n_frames=None, n_mfcc=N_MFCC):
    """MFCCs plus their deltas, ``(T, 2 * n_mfcc)``, aligned to the motion frames."""
    logmel = log_mel_spectrogram(audio, sample_rate, fps, n_frames, N_MELS_MFCC)
    cep = dct(logmel, type=2, axis=1, norm="ortho")[:, :n_mfcc]
    return np.concatenate([cep, deltas(cep)], axis=1)


def read_wav(path):
    sr, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    else:
        data = data.astype(np.float64)
    if data.ndim == 2:
        data = data.mean(axis=1)
    return data, int(sr)


def write_wav(path, audio, sample_rate=SAMPLE_RATE):
    pcm = np.clip(np.round(np.asarray(audio) * 32767.0), -32768, 32767).astype("<i2")
    wavfile.write(path, sample_rate, pcm)
