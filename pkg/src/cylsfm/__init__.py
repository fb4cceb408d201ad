"""Unsupervised depth and ego-motion estimation on cylindrical panoramic video."""

from .camera import (CylCamera, CylCoord, PinholeCamera, cyl_project,
                     cyl_to_pix, cyl_unproject, pinhole_project,
                     pinhole_unproject, pix_to_cyl)
from .datasets import (CubeFaceSet, SequenceManifest, crop_fov, equirect_to_cyl,
                       filter_static, load_manifest, make_sequences,
                       save_manifest, stitch_cubemap)
from .direct import DirectResult, OptimConfig, direct_optimize
from .errors import (BadFov, BadPad, CoverageGap, CylSfmError, DegenerateRay,
                     Diverged, EmptyMask, EyeInsideGeometry, LengthMismatch,
                     NonPositiveDepth, ShapeMismatch, TooFewFrames)
from .losses import (LossConfig, explainability_loss, mask_weights,
                     photometric_loss, smooth_loss_image_aware,
                     smooth_loss_second_order, total_loss)
from .metrics import AteReport, DepthMetrics, ate, depth_metrics, snippet_ate
from .nets import NetSpec, depth_forward, init_depth_params, init_pose_params, \
    pose_mask_forward
from .ops import (Kernel, bilinear_sample_wrap, conv2d_wrap, downsample_half,
                  dxx_wrap, dxy_wrap, dyy, grad_x_wrap, grad_y,
                  upsample_double, wrap_pad)
from .render import Mesh, StereoPair, anaglyph, build_mesh, render_ods, \
    render_view
from .snippet import Snippet
from .synthesis import DepthState, Pose6, SynthResult, pose_to_transform, \
    synthesize_view
from .train import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, \
    train

__version__ = "0.1.0"
