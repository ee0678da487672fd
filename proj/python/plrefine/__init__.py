"""Pseudo-label refinery for LiDAR 3D detection (C++ core)."""

import json

from ._core import (
    Box3D,
    CapacityError,
    FormatError,
    PreconditionViolation,
    augment_proposals,
    average_precision_r40,
    classify_pseudo_box,
    closed_gap,
    default_config_json,
    iou_3d,
    iou_bev,
    nms,
    normalize_heading,
    points_in_box,
    refine_labels,
    replace_probability,
    triplet_loss,
)
from ._core import self_train as _self_train


def self_train(config=None):
    """Run the synthetic self-training loop; `config` is a dict of overrides."""
    return _self_train(json.dumps(config) if config else "")


def default_config():
    return json.loads(default_config_json())
