from .dkr import (
    Keypoints2D,
    RegionSystem,
    SolveDiagnostics,
    assemble_system,
    confidence_regularizer,
    confidence_regularizer_vjp,
    dkr_forward,
    dkr_vjp,
    softplus_weights,
    solve_keypoint,
    solve_keypoint_vjp,
)
from .errors import GuidedPoseError, ShapeError, ValidationError
from .guided_ops import (
    SegPyramid,
    build_pyramid,
    guidance_mask,
    guidance_masks,
    object_aware_conv,
    object_aware_conv_vjp,
    object_aware_upsample,
    object_aware_upsample_vjp,
)
from .inference_pipeline import (
    ComponentLabeling,
    PipelineConfig,
    VotingParams,
    connected_components,
    decoder_channel_count,
    infer_poses,
    largest_component_per_class,
    ransac_voting,
    select_regions,
    split_decoder_output,
)
from .losses import (
    LossParts,
    LossWeights,
    keypoint_loss,
    proxy_voting_loss,
    seg_loss,
    supervision_mask,
    total_loss,
    vector_loss,
)
from .pose_geometry import (
    CameraIntrinsics,
    KeypointModel,
    PoseEstimate,
    RansacParams,
    add_metric,
    epnp,
    fps_keypoints,
    projection_metric,
    ransac_pnp,
    recall_report,
)
from .semantic_norm import (
    ModulationTable,
    SoftSegmentation,
    clade_forward,
    clade_normalize,
    clade_vjp,
    guided_sample,
    temperature_softmax,
)
from .synthgen import NoiseSpec, default_scene, generate_scene, gt_vector_fields, perturb_fields, rasterize_masks
from .tensor_io import SceneDescription, SceneObject, read_scene, read_tensor, write_tensor

__all__ = [
    "CameraIntrinsics",
    "ComponentLabeling",
    "GuidedPoseError",
    "KeypointModel",
    "Keypoints2D",
    "LossParts",
    "LossWeights",
    "ModulationTable",
    "NoiseSpec",
    "PipelineConfig",
    "PoseEstimate",
    "RansacParams",
    "RegionSystem",
    "SceneDescription",
    "SceneObject",
    "SegPyramid",
    "ShapeError",
    "SoftSegmentation",
    "SolveDiagnostics",
    "ValidationError",
    "VotingParams",
    "add_metric",
    "assemble_system",
    "build_pyramid",
    "clade_forward",
    "clade_normalize",
    "clade_vjp",
    "confidence_regularizer",
    "confidence_regularizer_vjp",
    "connected_components",
    "decoder_channel_count",
    "default_scene",
    "dkr_forward",
    "dkr_vjp",
    "epnp",
    "fps_keypoints",
    "generate_scene",
    "gt_vector_fields",
    "guidance_mask",
    "guidance_masks",
    "guided_sample",
    "infer_poses",
    "keypoint_loss",
    "largest_component_per_class",
    "object_aware_conv",
    "object_aware_conv_vjp",
    "object_aware_upsample",
    "object_aware_upsample_vjp",
    "perturb_fields",
    "projection_metric",
    "proxy_voting_loss",
    "ransac_pnp",
    "ransac_voting",
    "rasterize_masks",
    "read_scene",
    "read_tensor",
    "recall_report",
    "seg_loss",
    "select_regions",
    "softplus_weights",
    "solve_keypoint",
    "solve_keypoint_vjp",
    "split_decoder_output",
    "supervision_mask",
    "temperature_softmax",
    "total_loss",
    "vector_loss",
    "write_tensor",
]
