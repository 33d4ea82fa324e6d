"""Dynamic keypoint suppression for RGB-D SLAM front ends.

Instance masks remove keypoints on detected movers; a depth band around each
object's dominant depth removes nearby keypoints in its bounding box. The
package also ships a synthetic RGB-D world, a 3D-3D odometry harness and
TUM-style trajectory metrics to measure the effect.
"""

from ._kernels import BACKEND
from .dyn_filter import (DepthBand, DepthBandParams, Keypoint, KeypointClassification,
                         classify_keypoints, depth_band, detect_corners, object_depth_range,
                         roi_depth_range)
from .errors import DynbandError
from .geom import (PinholeIntrinsics, Pose, backproject, pose_apply, pose_compose, pose_inverse,
                   umeyama_align)
from .masks import DynamicClassPolicy, InstanceMask, dilate_mask, load_instance_masks, select_dynamic
from .metrics import AteReport, ErrorStats, RpeReport, ate, compute_stats, rpe
from .synth import SceneConfig, SyntheticFrame, export_tum, generate_sequence
from .tum import DepthFrame, TimedPath, Trajectory, associate, load_depth, parse_image_index, parse_trajectory
from .vo import RansacConfig, estimate_relative_pose, run_odometry

__version__ = "0.1.0"
