"""Physically based lens blur toolkit.

Linear-light images are float64 arrays of shape (H, W, 3) with values in
[0, 1].  Disparity maps are float64 arrays of shape (H, W) holding reciprocal
depth normalized to [DELTA, 1 - DELTA]; larger disparity means nearer.
Positions are (x, y) pairs in pixel units, x along columns.
"""

from .imgio import (
    DELTA,
    load_disparity,
    load_image,
    load_rgba,
    save_disparity,
    save_image,
    srgb_decode,
    srgb_encode,
)
from .lens import (
    LensParams,
    SoftEdgeSchedule,
    coc_radius,
    defocus_map,
    focus_from_region,
    soft_edge,
)
from .attention import (
    AttentionBatch,
    GeometryContext,
    OcclusionConfig,
    coc_mask,
    expected_visibility,
    lens_attention,
    masked_softmax_query,
    one_step_estimate,
    sample_point,
    similarity,
    softmax_key,
    softmax_query,
    visibility,
)
from .render import (
    Layer,
    LayeredScene,
    Plane,
    RenderConfig,
    all_in_focus,
    focal_stack,
    layer_disparity,
    render,
    render_from_disparity,
    scene_disparity,
    set_threads,
    splat_layer,
)
from .synth import (
    SampleRecord,
    SynthConfig,
    assemble_scene,
    generate_dataset,
    generate_sample,
    load_manifest,
)
from .metrics import (
    DegradationSpec,
    MetricReport,
    degrade_disparity,
    edge_loss,
    evaluate_pairs,
    exposure_align,
    mse,
    psnr,
    robustness_sweep,
    ssim,
)

__version__ = "0.1.0"
