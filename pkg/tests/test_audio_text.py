import numpy as np
import pytest

from cospeech.audio import (
    SAMPLE_RATE,
    compute_mfcc,
    deltas,
    frame_count,
    log_mel_spectrogram,
    mel_filterbank,
    read_wav,
    write_wav,
)
from cospeech.exceptions import TooShortAudio
from cospeech.text import PAD, Vocabulary, frame_words

CLIP = int(round(34 / 15 * SAMPLE_RATE))


def tone(freq, n=CLIP, amp=0.3):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / SAMPLE_RATE)


def test_clip_length_gives_34_frames():
    assert frame_count(CLIP) == 34
    assert compute_mfcc(tone(440)).shape == (34, 26)
    assert log_mel_spectrogram(tone(440)).shape == (34, 40)


def test_silence_is_constant():
    m = compute_mfcc(np.zeros(CLIP))
    assert np.array_equal(m, np.broadcast_to(m[0], m.shape))
    # the log floor fills every mel band, so only the 0th cepstral term survives
    assert abs(m[0, 0]) > 10 * np.abs(m[0, 1:]).max() + 1.0


def test_tones_are_distinguishable():
    a = compute_mfcc(tone(440))
    b = compute_mfcc(tone(880))
    assert np.linalg.norm(a[5] - b[5]) > 1.0


def test_too_short_audio():
    with pytest.raises(TooShortAudio):
        compute_mfcc(tone(440, n=CLIP // 2), n_frames=34)
    with pytest.raises(TooShortAudio):
        compute_mfcc(np.zeros(10))


def test_requested_frames_subset():
    full = compute_mfcc(tone(300))
    part = compute_mfcc(tone(300), n_frames=20)
    # cepstra match exactly; deltas differ only where the edge padding kicks in
    assert np.array_equal(part[:, :13], full[:20, :13])
    assert np.array_equal(part[:18], full[:18])


def test_filterbank_rows_are_triangles():
    fb = mel_filterbank(26, 512, SAMPLE_RATE)
    assert fb.shape == (26, 257)
    assert np.all(fb >= 0) and np.all(fb.max(axis=1) <= 1.0)
    peaks = fb.argmax(axis=1)
    assert np.all(np.diff(peaks) > 0)


def test_deltas_of_ramp():
    x = np.arange(10.0)[:, None] * np.array([[1.0, -2.0]])
    d = deltas(x)
    assert np.allclose(d[2:-2], [1.0, -2.0])


def test_wav_round_trip(tmp_path):
    x = tone(440, n=1600)
    write_wav(tmp_path / "a.wav", x)
    y, sr = read_wav(tmp_path / "a.wav")
    assert sr == SAMPLE_RATE
    assert np.max(np.abs(x - y)) < 1 / 32767


def test_frame_words_spans():
    out = frame_words([("Hello", 0, 3), ("world", 5, 7)], 8)
    assert out.tolist() == ["hello"] * 3 + [PAD] * 2 + ["world"] * 2 + [PAD]


def test_frame_words_even_split_and_clipping():
    assert frame_words([("a", None, None), ("b", None, None)], 4).tolist() == ["a", "a", "b", "b"]
    assert frame_words([("a", -2, 2), ("b", 3, 99)], 5).tolist() == ["a", "a", PAD, "b", "b"]
    assert frame_words([], 3).tolist() == [PAD] * 3


def test_vocabulary_lookup():
    v = Vocabulary(["we", "so", "so", PAD], hash_buckets=4)
    assert v.size == 1 + 2 + 4
    assert v.lookup(PAD) == 0
    assert v.lookup("so") == 1 and v.lookup("we") == 2
    unk = v.lookup("zebra")
    assert 3 <= unk < v.size
    assert unk == Vocabulary(["we", "so"], hash_buckets=4).lookup("zebra")
    enc = v.encode(np.array([["so", PAD], ["we", "zebra"]]))
    assert enc.tolist() == [[1, 0], [2, unk]]
    assert Vocabulary.from_dict(v.to_dict()).encode(["so", "zebra"]).tolist() == [1, unk]
