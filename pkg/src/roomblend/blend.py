"""Iterative space blending: the stage-two orchestrator.

Each iteration renders the growing mesh and the prior from one camera,
inpaints the missing region under the nearest region prompt with the
conditioning images, segments the result, copies wall/floor/ceiling depth
verbatim from the prior render (the structural copy that keeps rooms
navigable), completes the remaining depth, aligns it, and fuses. The
driver runs stage one, synthesizes intermediate submeshes for sparse
inputs, then walks the blend and completion trajectories in order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import ade20k, imgio
from .backends import BackendSet
from .core import (
    BackendError,
    CameraView,
    RigidTransform,
    StageError,
    TriangleMesh,
    append_mesh,
    circular_diff_deg,
)
from .config import PipelineConfig
from .floor_align import align_submesh_to_floor, find_floor, generate_floor
from .ingest import PreparedImage, preprocess_input, remove_people
from .layout import PlacedLayout, Placement, layout_submeshes, make_placement
from .lift3d import Submesh, align_depth, estimate_and_backproject, fuse_view, transform_submesh
from .prior import PriorMesh, build_geometric_prior, render_prior_images
from .prompts import RegionPrompt, caption_image, infer_region_prompts, select_prompt_for_view
from .render import render_view, save_depth_raw
from .trajectory import (
    StepPurpose,
    TrajectoryStep,
    blending_viewpoints,
    completion_trajectories,
    midpoint_yaws,
)

logger = logging.getLogger(__name__)

STRUCTURAL_LABELS = (ade20k.WALL, ade20k.FLOOR, ade20k.CEILING)
MIN_FUSE_DEPTH_M = 0.05


@dataclass(frozen=True)
class BlendPlan:
    """Stage-one outputs consumed by stage two."""

    layout: PlacedLayout
    region_prompts: list[RegionPrompt]
    steps: list[TrajectoryStep]

    def __post_init__(self):
        yaws = [p.yaw_deg % 360.0 for p in self.region_prompts]
        for step in self.steps:
            if step.purpose != StepPurpose.BLEND or step.prompt_hint is None:
                continue
            if not any(circular_diff_deg(step.prompt_hint, y) < 1e-6 for y in yaws):
                raise ValueError(
                    f"blend step hint {step.prompt_hint:g} has no region prompt"
                )


@dataclass(frozen=True)
class BlendState:
    mesh: TriangleMesh
    prior: PriorMesh
    plan: BlendPlan
    iteration: int = 0
    conditioning_weights: tuple[float, float, float] = (0.6, 0.3, 0.0)
    rng_seed: int = 0

    def __post_init__(self):
        if any(not (0.0 <= w <= 1.0) for w in self.conditioning_weights):
            raise ValueError("conditioning weights must be in [0, 1]")


def _iteration_seed(base: int, iteration: int) -> int:
    return int((base * 1000003 + iteration) % (2**31 - 1))


def blend_iteration(
    state: BlendState,
    step: TrajectoryStep,
    backends: BackendSet,
    step_index: Optional[int] = None,
    debug_dir=None,
) -> BlendState:
    """Run one inpaint-and-fuse iteration; a view with nothing missing is a no-op."""
    tag = f"step {step_index}" if step_index is not None else "step"
    cam = step.cam
    rv = render_view(state.mesh, cam)
    if not rv.missing.any():
        return state

    try:
        priors = render_prior_images(state.prior, cam)
        prompt = select_prompt_for_view(cam, state.plan.region_prompts)
        conditioning = {
            "layout": priors.layout_edges,
            "depth": priors.depth,
            "semantic": priors.semantic,
        }
        inpainted = backends.inpaint.inpaint(
            rv.color, rv.missing, prompt,
            conditioning=conditioning,
            weights=state.conditioning_weights,
            seed=_iteration_seed(state.rng_seed, state.iteration),
        )
        inpainted = inpainted.copy()
        inpainted[~rv.missing] = rv.color[~rv.missing]
        labels = backends.seg.segment(inpainted)

        structural = rv.missing & np.isin(labels, STRUCTURAL_LABELS)
        known_depth = rv.depth.copy()
        known_depth[structural] = priors.metric_depth[structural]
        known_mask = ~rv.missing | structural

        predicted = backends.depth.predict(
            inpainted, known_depth=known_depth, known_mask=known_mask, cam=cam
        )
        leftover = rv.missing & ~structural
        if leftover.any() and (
            not np.all(np.isfinite(predicted[leftover])) or np.any(predicted[leftover] <= 0)
        ):
            raise BackendError("blend", f"{tag}: depth completion returned invalid values")

        final_depth = align_depth(predicted, rv.depth, ~rv.missing).depth
        final_depth[leftover] = np.clip(final_depth[leftover], MIN_FUSE_DEPTH_M, None)
        final_depth[structural] = priors.metric_depth[structural]
        final_depth[~rv.missing] = rv.depth[~rv.missing]

        new_mesh = fuse_view(
            state.mesh, cam, inpainted, final_depth, rv.missing,
            labels=labels, rendered=rv,
        )
    except StageError:
        raise
    except Exception as e:
        raise BackendError("blend", f"{tag}: {e}") from e

    if debug_dir is not None:
        _dump_iteration(debug_dir, state.iteration, rv, priors, inpainted, final_depth)
    return replace(state, mesh=new_mesh, iteration=state.iteration + 1)


def _dump_iteration(debug_dir, iteration, rv, priors, inpainted, fused_depth):
    d = Path(debug_dir)
    d.mkdir(parents=True, exist_ok=True)
    p = f"{iteration:04d}"
    imgio.save_color(d / f"{p}_rendered.png", rv.color)
    imgio.save_mask(d / f"{p}_missing.png", rv.missing)
    imgio.save_color(d / f"{p}_inpainted.png", inpainted)
    imgio.save_mask(d / f"{p}_prior_layout.png", priors.layout_edges)
    imgio.save_color(d / f"{p}_prior_semantic.png", priors.semantic)
    save_depth_raw(d / f"{p}_prior_depth.raw", priors.metric_depth)
    save_depth_raw(d / f"{p}_fused_depth.raw", fused_depth)


def _nearest_prompt(yaw: float, prompts: Sequence[RegionPrompt]) -> RegionPrompt:
    return min(
        prompts,
        key=lambda p: (circular_diff_deg(yaw, p.yaw_deg % 360.0), p.yaw_deg % 360.0),
    )


def generate_intermediate_submesh(
    slot: tuple[float, RigidTransform],
    prompts: Sequence[RegionPrompt],
    backends: BackendSet,
    rng_seed: int = 0,
) -> Submesh:
    """Generate, lift, and floor-align a submesh for an intermediate slot.

    The image comes from the region prompt nearest the slot yaw through the
    inpainting backend with a fully masked frame. A failed floor alignment
    leaves the submesh unaligned with a warning rather than aborting.
    """
    yaw, nominal = slot
    prompt = _nearest_prompt(yaw % 360.0, prompts)
    size = 512
    blank = np.zeros((size, size, 3))
    full = np.ones((size, size), dtype=bool)
    color = backends.inpaint.inpaint(blank, full, prompt.description, seed=rng_seed)
    img = PreparedImage(color, source_id=f"intermediate@{yaw:g}", caption=prompt.description)
    cam = CameraView(RigidTransform.identity())
    sub = estimate_and_backproject(img, cam, backends.depth, backends.seg)
    plane = find_floor(sub, rng_seed)
    if plane is None:
        logger.warning("intermediate submesh at yaw %g: no admissible floor; left unaligned", yaw)
        return sub
    aligned, _ = align_submesh_to_floor(sub, plane)
    return aligned


def _hull_extent(prior: PriorMesh) -> tuple[float, float, float]:
    poly = prior.hull_polygon
    return (
        float(poly[:, 0].max() - poly[:, 0].min()),
        prior.height_m,
        float(poly[:, 1].max() - poly[:, 1].min()),
    )


def _initial_mesh(placements: Sequence[Placement], subs: Sequence[Submesh]) -> TriangleMesh:
    mesh = TriangleMesh.empty(with_labels=True)
    for placement in placements:
        placed = transform_submesh(subs[placement.submesh_id], placement.transform)
        mesh = append_mesh(mesh, placed.mesh)
    return mesh


def prepare_stage1(config: PipelineConfig, backends: BackendSet):
    """Stage one: ingest, lift, align, lay out, hull, and describe.

    Returns (submeshes, layout, prior, region prompts, captions).
    """
    if not config.input_paths:
        raise StageError("pipeline", "no input images")
    rng = np.random.default_rng(config.seed)
    stage_seeds = rng.integers(0, 2**31 - 1, size=len(config.input_paths))

    subs: list[Submesh] = []
    captions: list[str] = []
    for i, path in enumerate(config.input_paths):
        raw = imgio.load_color(path)
        img = preprocess_input(raw, source_id=str(path))
        img = remove_people(img, backends.seg, backends.inpaint, backends.vlm)
        caption = caption_image(img, backends.vlm)
        img = replace(img, caption=caption)
        sub = estimate_and_backproject(
            img, CameraView(RigidTransform.identity()), backends.depth, backends.seg
        )
        plane = find_floor(sub, int(stage_seeds[i]), config.floor_label_ids)
        if plane is None:
            sub = generate_floor(sub, backends, int(stage_seeds[i]))
            if not sub.floor_found:
                logger.warning("input %s: floor synthesis failed; placing unaligned", path)
        else:
            sub, _ = align_submesh_to_floor(sub, plane)
        subs.append(sub)
        captions.append(caption)

    layout = layout_submeshes(subs, config.diameter_m)
    prior = build_geometric_prior(layout, subs)

    slot_yaws = [y for y, _ in layout.intermediate_slots]
    unknown = sorted(set(slot_yaws) | set(midpoint_yaws(layout.occupied_yaws())))
    known = [(p.yaw_deg, captions[p.submesh_id]) for p in layout.placements]
    region_prompts = infer_region_prompts(
        known, unknown, _hull_extent(prior), backends.llm, theme=config.theme
    )
    return subs, layout, prior, region_prompts, captions


def run_pipeline(config: PipelineConfig, backends: BackendSet) -> TriangleMesh:
    """Full two-stage run; returns the unified mesh.

    Stage one runs once; stage two synthesizes intermediate submeshes when
    inputs are sparse, then executes blend steps followed by completion
    steps. Deterministic for a fixed seed with the synthetic backends.
    """
    config.validate()
    subs, layout, prior, region_prompts, _ = prepare_stage1(config, backends)

    placements = list(layout.placements)
    all_subs = list(subs)
    if layout.intermediate_slots:
        for k, slot in enumerate(layout.intermediate_slots):
            sub = generate_intermediate_submesh(
                slot, region_prompts, backends,
                rng_seed=_iteration_seed(config.seed, 7919 + k),
            )
            placements.append(
                make_placement(sub, len(all_subs), slot[0], config.diameter_m)
            )
            all_subs.append(sub)
        placements.sort(key=lambda p: p.yaw_deg)
        layout = PlacedLayout(placements, config.diameter_m, [])
        # the hull must contain the intermediates for structural copy to hold
        prior = build_geometric_prior(layout, all_subs)

    steps = blending_viewpoints(layout) + completion_trajectories(layout, config.seed)
    plan = BlendPlan(layout, region_prompts, steps)
    state = BlendState(
        mesh=_initial_mesh(placements, all_subs),
        prior=prior,
        plan=plan,
        conditioning_weights=config.weights,
        rng_seed=config.seed,
    )
    debug_dir = config.debug_dir if config.debug_dump else None
    for idx, step in enumerate(plan.steps):
        state = blend_iteration(state, step, backends, step_index=idx, debug_dir=debug_dir)
    return state.mesh
