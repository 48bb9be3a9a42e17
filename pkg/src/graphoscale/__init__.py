"""Handwriting-difficulty rating from digitised pen recordings."""

from .catalog import FeatureConfig, FeatureKey, FeatureVector, extract_all, parse_feature_key
from .ink import InkRecording, SubjectMeta, TaskKind, parse_recording, read_recording
from .scoring import NormTable, Profile, assemble_profile, display_transform, hdc

__version__ = "0.1.0"

__all__ = [
    "FeatureConfig", "FeatureKey", "FeatureVector", "extract_all", "parse_feature_key",
    "InkRecording", "SubjectMeta", "TaskKind", "parse_recording", "read_recording",
    "NormTable", "Profile", "assemble_profile", "display_transform", "hdc", "__version__",
]
