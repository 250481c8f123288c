"""Rule-based relevance attribution: rules, composites, canonizers,
attributors, and heatmap rendering."""

from .attributors import (
    AttributionResult,
    Gradient,
    IntegratedGradients,
    Occlusion,
    SmoothGrad,
    attribute_gradient,
    attribute_integrated_gradients,
    attribute_occlusion,
    attribute_smoothgrad,
    relevance_backward,
)
from .composites import (
    COMPOSITE_NAMES,
    Composite,
    MergeBatchNorm,
    RuleAssignment,
    canonize_merge_batchnorm,
    composite_epsilon_gamma_box,
    composite_guided_backprop,
    composite_uniform,
    make_composite,
    register,
    remove,
)
from .image import (
    COLORMAPS,
    MODES,
    encode_png_palette,
    encode_png_rgb,
    heatmap_indices,
    palette,
    render_heatmap,
    render_input_image,
)
from .rules import RuleSpec, rule_backward

__all__ = [
    "AttributionResult",
    "COLORMAPS",
    "COMPOSITE_NAMES",
    "Composite",
    "Gradient",
    "IntegratedGradients",
    "MODES",
    "MergeBatchNorm",
    "Occlusion",
    "RuleAssignment",
    "RuleSpec",
    "SmoothGrad",
    "attribute_gradient",
    "attribute_integrated_gradients",
    "attribute_occlusion",
    "attribute_smoothgrad",
    "canonize_merge_batchnorm",
    "composite_epsilon_gamma_box",
    "composite_guided_backprop",
    "composite_uniform",
    "encode_png_palette",
    "encode_png_rgb",
    "heatmap_indices",
    "make_composite",
    "palette",
    "register",
    "relevance_backward",
    "remove",
    "render_heatmap",
    "render_input_image",
    "rule_backward",
]
