"""Reconstruction and plausibility metrics.

MALE/MAJE are mean per-point Euclidean errors; MAcE compares second
differences scaled to mm/s^2. FLD and FGD are Fréchet distances between
Gaussians fitted to autoencoder features of two corpora.
"""

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.covariance import LedoitWolf
from sklearn.utils.validation import check_is_fitted
from torch import nn

from .exceptions import EmptyCorpus, NonPsd, ShapeMismatch, SingularCovarianceWarning, TooShort
from .nn.layers import act

TABLE_COLUMNS = ("MALE", "MAJE", "MAcE-LM", "MAcE-P", "FLD", "FGD")


def _pair(gt, syn):
    gt = np.asarray(gt, dtype=np.float64)
    syn = np.asarray(syn, dtype=np.float64)
    if gt.shape != syn.shape:
        raise ShapeMismatch(f"ground truth {gt.shape} vs synthesized {syn.shape}")
    if gt.ndim < 2 or gt.shape[-1] != 3:
        raise ShapeMismatch("expected (..., 3) point arrays")
    return gt, syn


def mean_point_error(gt, syn):
    gt, syn = _pair(gt, syn)
    return float(np.linalg.norm(gt - syn, axis=-1).mean())


def male(gt_faces, syn_faces):
    """Mean absolute landmark error, in the units of the (pre-scaled) input."""
    return mean_point_error(gt_faces, syn_faces)


def maje(gt_poses, syn_poses):
    """Mean absolute joint error."""
    return mean_point_error(gt_poses, syn_poses)


def acceleration(x, frame_rate=15.0):
    """Second differences along the time axis ``-3``, scaled by ``frame_rate**2``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-3] < 3:
        raise TooShort("acceleration needs at least 3 frames")
    return (x[..., 2:, :, :] - 2 * x[..., 1:-1, :, :] + x[..., :-2, :, :]) * frame_rate**2


def mace(gt, syn, frame_rate=15.0):
    gt, syn = _pair(gt, syn)
    if gt.ndim < 3:
        raise ShapeMismatch("expected (..., T, N, 3)")
    return float(np.linalg.norm(acceleration(gt, frame_rate) - acceleration(syn, frame_rate), axis=-1).mean())


@dataclass(frozen=True)
class FeatureGaussian:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def dim(self):
        return self.mean.shape[0]


def fit_gaussian(features):
    """Mean and unbiased covariance; Ledoit-Wolf shrinkage when ``N < D + 1``."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise EmptyCorpus("need at least two feature vectors")
    n, d = x.shape
    mu = x.mean(axis=0)
    if n < d + 1:
        warnings.warn(
            f"{n} samples for {d}-dim features; using Ledoit-Wolf shrinkage",
            SingularCovarianceWarning,
            stacklevel=2,
        )
        cov = LedoitWolf().fit(x).covariance_
    else:
        cov = np.cov(x, rowvar=False).reshape(d, d)
    return FeatureGaussian(mu, 0.5 * (cov + cov.T))


def _psd_eigh(m, name, tol):
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.size and w.min() < -tol * scale:
        raise NonPsd(f"{name} has eigenvalue {w.min():.3g}")
    return np.clip(w, 0.0, None), v


def frechet_gaussian_distance(g1, g2, tol=1e-6):
    """``|mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))``.

    The trace of the square root is taken from the symmetric product
    ``S1^(1/2) S2 S1^(1/2)``, which has the same eigenvalues as ``S1 S2``.
    """
    if g1.mean.shape != g2.mean.shape:
        raise ShapeMismatch(f"feature dims {g1.mean.shape} vs {g2.mean.shape}")
    s1 = np.atleast_2d(g1.covariance)
    s2 = np.atleast_2d(g2.covariance)
    w1, v1 = _psd_eigh(s1, "covariance 1", tol)
    root1 = (v1 * np.sqrt(w1)) @ v1.T
    wm, _ = _psd_eigh(root1 @ s2 @ root1, "covariance product", tol)
    diff = g1.mean - g2.mean
    value = diff @ diff + np.trace(s1) + np.trace(s2) - 2.0 * np.sqrt(wm).sum()
    return float(max(value, 0.0))


class _AutoencoderNet(nn.Module):
    def __init__(self, channels, frames, hidden, d_enc):
        super().__init__()
        self.enc_conv = nn.Conv1d(channels, hidden, 3, padding=1, padding_mode="replicate")
        self.enc_fc = nn.Linear(hidden * frames, d_enc)
        self.dec_fc = nn.Linear(d_enc, hidden * frames)
        self.dec_conv = nn.Conv1d(hidden, channels, 3, padding=1, padding_mode="replicate")
        self.hidden = hidden
        self.frames = frames

    def encode(self, x):
        return self.enc_fc(act(self.enc_conv(x.transpose(1, 2))).flatten(1))

    def decode(self, z):
        h = act(self.dec_fc(z)).reshape(z.shape[0], self.hidden, self.frames)
        return self.dec_conv(h).transpose(1, 2)

    def forward(self, x):
        return self.decode(self.encode(x))


class LandmarkAutoencoder(TransformerMixin, BaseEstimator):
    """Temporal-convolutional autoencoder over whole motion windows.

    ``fit`` takes ``(N, T, P, 3)`` windows; ``transform`` returns ``(N, d_enc)``
    features.
    """

    def __init__(self, d_enc=32, hidden=64, epochs=300, lr=1e-3, batch_size=64, seed=0):
        self.d_enc = d_enc
        self.hidden = hidden
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed

    def _flat(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 4 or X.shape[-1] != 3:
            raise ShapeMismatch(f"expected (N, T, P, 3) windows, got {X.shape}")
        return X.reshape(X.shape[0], X.shape[1], X.shape[2] * 3)

    def fit(self, X, y=None):
        x = self._flat(X)
        if x.shape[0] == 0:
            raise EmptyCorpus("no windows to fit the autoencoder on")
        self.mean_ = x.mean(axis=(0, 1))
        # one scale for every channel: static landmarks must not blow up small noise
        self.scale_ = float(np.sqrt(np.mean((x - self.mean_) ** 2))) + 1e-9
        self.frames_ = x.shape[1]
        self.channels_ = x.shape[2]
        xt = torch.as_tensor((x - self.mean_) / self.scale_, dtype=torch.float32)
        torch.manual_seed(self.seed)
        rng = torch.Generator().manual_seed(self.seed)
        self.net_ = _AutoencoderNet(self.channels_, self.frames_, self.hidden, self.d_enc)
        opt = torch.optim.Adam(self.net_.parameters(), lr=self.lr)
        self.loss_curve_ = []
        for _ in range(self.epochs):
            order = torch.randperm(xt.shape[0], generator=rng)
            total = 0.0
            for i in range(0, xt.shape[0], self.batch_size):
                xb = xt[order[i : i + self.batch_size]]
                opt.zero_grad(set_to_none=True)
                loss = (self.net_(xb) - xb).abs().mean()
                loss.backward()
                opt.step()
                total += loss.item() * xb.shape[0]
            self.loss_curve_.append(total / xt.shape[0])
        self.net_.eval()
        return self

    def _standardized(self, X):
        check_is_fitted(self, "net_")
        x = self._flat(X)
        if x.shape[1:] != (self.frames_, self.channels_):
            raise ShapeMismatch(f"windows {x.shape[1:]} do not match fitted {(self.frames_, self.channels_)}")
        return torch.as_tensor((x - self.mean_) / self.scale_, dtype=torch.float32)

    def transform(self, X):
        with torch.no_grad():
            return self.net_.encode(self._standardized(X)).double().numpy()

    def reconstruct(self, X):
        with torch.no_grad():
            out = self.net_(self._standardized(X)).double().numpy()
        x = out * self.scale_ + self.mean_
        return x.reshape(np.shape(X))

    def reconstruction_error(self, X):
        """Mean absolute reconstruction error in input units."""
        return float(np.abs(self.reconstruct(X) - np.asarray(X)).mean())


def train_landmark_autoencoder(train_windows, **params):
    return LandmarkAutoencoder(**params).fit(train_windows)


def frechet_feature_distance(gt, syn, encoder):
    gt = np.asarray(gt)
    syn = np.asarray(syn)
    if gt.shape[0] == 0 or syn.shape[0] == 0:
        raise EmptyCorpus("both corpora must be nonempty")
    return frechet_gaussian_distance(fit_gaussian(encoder.transform(gt)), fit_gaussian(encoder.transform(syn)))


def fld(gt_faces, syn_faces, encoder):
    """Fréchet Landmark Distance between two corpora of face windows."""
    return frechet_feature_distance(gt_faces, syn_faces, encoder)


def fgd(gt_poses, syn_poses, encoder):
    """Fréchet Gesture Distance between two corpora of pose windows."""
    return frechet_feature_distance(gt_poses, syn_poses, encoder)


@dataclass
class MetricReport:
    male_mm: float
    maje_mm: float
    mace_lm: float
    mace_p: float
    fld: float
    fgd: float
    sample_count: int

    def __post_init__(self):
        for name in ("male_mm", "maje_mm", "mace_lm", "mace_p", "fld", "fgd"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    def row(self):
        return [self.male_mm, self.maje_mm, self.mace_lm, self.mace_p, self.fld, self.fgd]

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        writer.writerow([repr(float(v)) for v in self.row()])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d):
        return cls(**d)
