"""Spliced-audio forgery construction, frame-level localization, and evaluation."""

from .audio import FrameFeatures, FrameGridSpec, Waveform, extract_clip, features, n_frames, read_wav, write_wav
from .config import PipelineConfig
from .errors import ConfigError, DataError, SpliceLocError
from .forge import (
    Corpus,
    FrameLabels,
    ManifestEntry,
    Region,
    SpliceRecipe,
    StrategyMix,
    augment,
    boundary_labels,
    forge_corpus,
    read_manifest,
    sample_training_clip,
    splice,
    spoof_labels,
    write_manifest,
)
from .fusion import FusionConfig, UtteranceVerdict, classify_frames, fake_ratio, fuse
from .inference import Boundary, WindowPlan, detect_boundaries, merge_scores, plan_windows, segment
from .metrics import FrameConfusion, ScoredTrial, add_score, eer, f1, sentence_accuracy
from .scorer import FrameScores, ScorerModel, gradient_check, read_scores, score_clip, train, write_scores
from .vae import PcaTransform, VaeModel, fit_pca, pca_project, reconstruction_probability, rescore, train_vae

__version__ = "0.1.0"
