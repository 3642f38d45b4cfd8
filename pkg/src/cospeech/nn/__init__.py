from .networks import (
    DimensionPlan,
    Discriminator,
    Generator,
    GraphEncoder,
    MotionDecoder,
    PhonemeNet,
    SpeakerEncoder,
    normalize_bones,
)

__all__ = [
    "DimensionPlan",
    "Discriminator",
    "Generator",
    "GraphEncoder",
    "MotionDecoder",
    "PhonemeNet",
    "SpeakerEncoder",
    "normalize_bones",
]
