"""Co-speech 3D face-landmark and upper-body gesture synthesis."""

from .config import RunConfig, load_config
from .corpus import ProcessedCorpus, WindowSet
from .estimators import (
    AnchorResampler,
    BoneUnitEncoder,
    CoSpeechSynthesizer,
    FaceDeltaEncoder,
    PhonemePredictor,
    ViewNormalizer,
)
from .metrics import MetricReport
from .motion import MotionSample, RigidTransform, Skeleton
from .nn import DimensionPlan
from .synthetic import SyntheticCorpusSpec, generate_synthetic_corpus
from .training import LossWeights, OptimizerConfig

__version__ = "0.1.0"

__all__ = [
    "AnchorResampler",
    "BoneUnitEncoder",
    "CoSpeechSynthesizer",
    "DimensionPlan",
    "FaceDeltaEncoder",
    "LossWeights",
    "MetricReport",
    "MotionSample",
    "OptimizerConfig",
    "PhonemePredictor",
    "ProcessedCorpus",
    "RigidTransform",
    "RunConfig",
    "Skeleton",
    "SyntheticCorpusSpec",
    "ViewNormalizer",
    "WindowSet",
    "generate_synthetic_corpus",
    "load_config",
]
