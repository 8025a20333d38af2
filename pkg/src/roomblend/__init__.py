"""roomblend: blend photographs of distinct rooms into one unified 3D mesh.

The pipeline lifts each photo to a textured submesh via depth estimation
and backprojection, aligns everything to a common floor plane, arranges
the submeshes on a circle, derives a convex-hull room shell as a geometric
prior, and iteratively inpaints and fuses the space between them along
planned camera trajectories. Deterministic synthetic backends make every
stage testable offline.
"""

from .core import (
    CameraView,
    MISSING_DEPTH,
    PipelineError,
    RigidTransform,
    StageError,
    TriangleMesh,
    append_mesh,
    apply_rigid_transform,
    camera_at,
)
from .ingest import PreparedImage, preprocess_input, remove_people
from .lift3d import (
    AlignedDepth,
    Submesh,
    align_depth,
    estimate_and_backproject,
    fuse_view,
    transform_submesh,
)
from .floor_align import (
    FloorPlane,
    align_submesh_to_floor,
    extract_floor_vertices,
    find_floor,
    fit_floor_plane,
    generate_floor,
)
from .layout import PlacedLayout, Placement, layout_submeshes, plan_intermediate_slots
from .prior import PriorImageSet, PriorMesh, build_geometric_prior, render_prior_images
from .render import RenderedView, render_view
from .prompts import (
    RegionPrompt,
    caption_image,
    infer_floor_prompt,
    infer_region_prompts,
    select_prompt_for_view,
)
from .trajectory import (
    StepPurpose,
    TrajectoryStep,
    blending_viewpoints,
    completion_trajectories,
    export_trajectory_json,
)
from .blend import (
    BlendPlan,
    BlendState,
    blend_iteration,
    generate_intermediate_submesh,
    run_pipeline,
)
from .backends import BackendSet, make_synthetic_backends, synthetic_scene_oracle
from .config import PipelineConfig
from .meshio import load_ply, save_mesh, save_obj, save_ply

__version__ = "0.1.0"
