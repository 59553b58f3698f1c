"""Desk-scale vision-language projector: builds a detail-injected feature
pyramid from patch-encoder features and compresses it into a fixed grid of
visual tokens via hierarchical window attention."""

from .autodiff import NumericalError, Tensor
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoder import EncoderSpec, FeatureMap, encode, load_features, save_features
from .formats import DataFormatError
from .image_io import (
    Image,
    ImagePyramid,
    PpmDepthError,
    PpmError,
    build_image_pyramid,
    load_ppm,
    resize_image,
    resize_to_patch_multiple,
    save_ppm,
    synth_corpus,
)
from .numerics import AdamState, adam_step, bilinear_resize, grad_check, pca_rgb, softmax
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    baseline_mlp,
    baseline_resampler,
    init_mlp_weight,
    project_tokens,
    run_pipeline,
)
from .slicing import SliceLayout, compute_slice_layout, extract_slices
from .token_org import (
    AssembledTokens,
    TokenSequence,
    assemble,
    flatten,
    load_tokens,
    save_index,
    save_tokens,
)
from .vdim import (
    DownsamplerParams,
    FeaturePyramid,
    TrainResult,
    VdimParams,
    attention_downsample,
    build_isp,
    jbu_kernel_weights,
    jbu_upsample,
    mlr_loss,
    mlr_objective,
    pretrain_vdim,
)
from .window_attn import (
    AttnParams,
    HiwinConfig,
    TokenMap,
    WindowSet,
    assemble_kv,
    compress,
    cross_attention,
    generate_windows,
    position_embedding_2d,
    roi_align,
    select_grid,
)

__version__ = "0.1.0"
