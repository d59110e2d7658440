"""Point-cloud classifier: Transformer group encoder, importance-ordered selective-scan mixer."""

from ._kernels import BACKEND
from .data_io import Dataset, SyntheticSpec, generate_synthetic, parse_cloud
from .geometry import PointCloud, fps, group_cloud, normalize_cloud
from .pipeline.checkpoint import load_checkpoint, save_checkpoint
from .pipeline.config import ModelConfig
from .pipeline.model import forward, init_params, total_loss
from .pipeline.train import evaluate, load_trained, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Dataset", "ModelConfig", "PointCloud", "SyntheticSpec", "evaluate", "forward", "fps",
    "generate_synthetic", "group_cloud", "init_params", "load_checkpoint", "load_trained",
    "normalize_cloud", "parse_cloud", "save_checkpoint", "total_loss", "train",
]
