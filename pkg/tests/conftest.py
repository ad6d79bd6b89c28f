import numpy as np
import pytest

from spliceloc.config import (
    ForgeSettings,
    PipelineConfig,
    ScorerTrainSettings,
    VaeSettings,
)
from spliceloc.inference import DetectConfig


def tiny_config(seed=911, jobs=1):
    """Small, fast settings for CLI plumbing tests (quality irrelevant)."""
    return PipelineConfig(
        forge=ForgeSettings(n_genuine=6, n_fake=5, n_partial=6,
                            min_duration_s=2.0, max_duration_s=3.2),
        train=ScorerTrainSettings(lr=3e-3, epochs=6, clips=150),
        vae=VaeSettings(epochs=5),
        detect=DetectConfig(threshold=0.25, min_gap_frames=8),
        seed=seed,
        jobs=jobs,
    )


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """Forged tiny corpus with trained models, shared across CLI tests."""
    from spliceloc import pipeline
    from spliceloc import config as cfgmod

    root = tmp_path_factory.mktemp("tiny")
    cfg = tiny_config()
    corpus_dir = root / "corpus"
    models_dir = root / "models"
    pipeline.run_forge(cfg, corpus_dir)
    manifest = corpus_dir / "manifest.txt"
    pipeline.run_train_scorer(cfg, "boundary", manifest, models_dir)
    pipeline.run_train_scorer(cfg, "spoof", manifest, models_dir)
    pipeline.run_train_vae(cfg, manifest, models_dir)
    cfg_path = root / "run.cfg"
    cfgmod.dump(cfg, cfg_path)
    return {"root": root, "cfg": cfg, "cfg_path": cfg_path,
            "manifest": manifest, "models": models_dir}
