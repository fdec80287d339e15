"""Desk-scale laboratory for two-stage interactive trajectory prediction.

Library layout:

  autodiff    float64 tensors with reverse-mode differentiation
  nn          layers: linear/MLP/layer norm/attention/LSTM
  checkpoint  binary parameter persistence
  geometry    local frames, origin encodings, rigid transforms
  scenes      synthetic interactive scene generation
  scene_io    dataset file format
  taxonomy    behavior categories and k-means endpoint anchors
  model       query-centric encoders + two-stage decoder
  objective   best-mode Gaussian mixture likelihood
  metrics     joint minADE/minFDE/miss rate/(soft) mAP
  config      run configuration and INI persistence
  training    train / evaluate / compare harness
  report      CSV tables and SVG plots
"""

from .config import RunConfig, desk_config, full_config, micro_config
from .model import JamModel, JointPrediction, Proposal, prep_scenes
from .scenes import Dataset, DatasetSpec, GenProfile, SceneSample, generate_dataset, generate_scene
from .scene_io import read_dataset, write_dataset
from .training import compare_frameworks, evaluate, train

__all__ = [
    "RunConfig", "desk_config", "full_config", "micro_config",
    "JamModel", "JointPrediction", "Proposal", "prep_scenes",
    "Dataset", "DatasetSpec", "GenProfile", "SceneSample",
    "generate_dataset", "generate_scene", "read_dataset", "write_dataset",
    "compare_frameworks", "evaluate", "train",
]
