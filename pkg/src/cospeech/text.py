"""Word-to-frame alignment and the word vocabulary used by the text encoder."""

import zlib

import numpy as np

PAD = ""


def frame_words(transcript, n_frames):
    """Per-frame word strings (``""`` for silence).

    ``transcript`` holds ``(word, start, end)`` with half-open frame spans.
    When no word carries a span the frames are divided evenly among words.
    """
    out = np.full(n_frames, PAD, dtype=object)
    if not transcript:
        return out.astype(str)
    spans = [(w, s, e) for w, s, e in transcript]
    if all(s is None or e is None for _, s, e in spans):
        words = [w for w, _, _ in spans]
        bounds = np.linspace(0, n_frames, len(words) + 1).round().astype(int)
        spans = [(w, bounds[i], bounds[i + 1]) for i, w in enumerate(words)]
    for w, s, e in spans:
        if s is None or e is None:
            continue
        s, e = max(0, int(s)), min(n_frames, int(e))
        if s < e:
            out[s:e] = w.lower()
    return out.astype(str)


class Vocabulary:
    """Index 0 is padding, then known words, then hash buckets for unknown words."""

    def __init__(self, words=(), hash_buckets=64):
        self.words = tuple(sorted({w for w in words if w != PAD}))
        self.hash_buckets = int(hash_buckets)
        self._index = {w: i + 1 for i, w in enumerate(self.words)}

    @property
    def size(self):
        return 1 + len(self.words) + self.hash_buckets

    def lookup(self, word):
        if word == PAD:
            return 0
        idx = self._index.get(word)
        if idx is not None:
            return idx
        return 1 + len(self.words) + zlib.crc32(word.encode("utf8")) % self.hash_buckets

    def encode(self, frame_words_array):
        arr = np.asarray(frame_words_array)
        flat = [self.lookup(w) for w in arr.reshape(-1)]
        return np.asarray(flat, dtype=np.int64).reshape(arr.shape)

    def to_dict(self):
        return {"words": list(self.words), "hash_buckets": self.hash_buckets}

    @classmethod
    def from_dict(cls, d):
        return cls(d["words"], d["hash_buckets"])
