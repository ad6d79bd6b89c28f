"""Score-file exporter built on pretrained self-supervised speech backbones."""

from .backbone import BackboneError, available_backbones, load_backbone
from .bridge import BridgeConfig, export_scores, load_config
from .head import FrameHead, frame_probs

__version__ = "0.1.0"
