"""Two-person motion forecasting with cross-query attention, a learnable proxy and
DCT-domain decoding, on a small float64 autograd engine."""
from .config import PGformerConfig
from .data import SyntheticConfig, load_scene_file, make_windows, save_scene_file, synth_coupled
from .metrics import MetricReport, ame, jme, mpjpe, procrustes_align
from .model import PGformer
from .pose import EXPI_SKELETON, Scene, Skeleton, leader_normalize, synthetic_skeleton
from .training import TrainConfig, total_loss, train

__all__ = ["EXPI_SKELETON", "MetricReport", "PGformer", "PGformerConfig", "Scene", "Skeleton",
           "SyntheticConfig", "TrainConfig", "ame", "jme", "leader_normalize", "load_scene_file",
           "make_windows", "mpjpe", "procrustes_align", "save_scene_file", "synth_coupled",
           "synthetic_skeleton", "total_loss", "train"]
