"""Learned predictive exposure control for feature-based visual odometry.

A simulated camera looks at a textured scene whose illumination changes
(typically a tunnel drive). Training data comes from a second camera whose
parameters are perturbed around a reference controller; the best-performing
parameters, judged by feature count or feature-matching quality a few frames
ahead, become regression targets for a small CNN that predicts the next
gain and exposure from the last three frames.
"""

from .params import CameraParams
from .scene_sim import CameraModel, Frame, RadianceScene, TunnelConfig, make_tunnel_scene, render_frame
from .features import detect_features, match_features
from .controllers import FixedController, GradientMetricReactive, LearnedController, ReactiveAEAG, make_controller
from .sampler import collect_episode, iterative_collection
from .labeler import build_training_set
from .model import ExposureNet, NetworkConfig, TrainConfig, load_checkpoint, save_checkpoint, train
from .evaluation import compare_controllers, run_episode
from .config import ExperimentConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "CameraParams", "CameraModel", "Frame", "RadianceScene", "TunnelConfig", "make_tunnel_scene",
    "render_frame", "detect_features", "match_features", "FixedController", "GradientMetricReactive",
    "LearnedController", "ReactiveAEAG", "make_controller", "collect_episode", "iterative_collection",
    "build_training_set", "ExposureNet", "NetworkConfig", "TrainConfig", "load_checkpoint",
    "save_checkpoint", "train", "compare_controllers", "run_episode", "ExperimentConfig", "load_config",
]
