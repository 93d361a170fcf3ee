"""Adversarial patch optimization with potential-field masks and
global/local feature-alignment losses."""

from .core import (
    AttackConfig,
    PotentialField,
    clip_budget,
    compose_adversarial,
    load_image,
    mask_area,
    save_image,
)
from .encoders import EncoderSpec, FeatureBundle, connect_bridge_encoder, make_toy_encoder
from .engine import AttackResult, run_attack
from .eot import EotConfig
from .field import MorphologyConfig
from .regions import Region, RegionSet, centroid, load_regions, select_region

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackResult",
    "EncoderSpec",
    "EotConfig",
    "FeatureBundle",
    "MorphologyConfig",
    "PotentialField",
    "Region",
    "RegionSet",
    "centroid",
    "clip_budget",
    "compose_adversarial",
    "connect_bridge_encoder",
    "load_image",
    "load_regions",
    "make_toy_encoder",
    "mask_area",
    "run_attack",
    "save_image",
    "select_region",
]
