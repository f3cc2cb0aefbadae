"""Training-free open-vocabulary segmentation engine.

Region rasters constrain self-attention in the final vision-encoder
layers, multiple checkpoints are fused by margin-weighted parameter
averaging, and dense predictions come from tiled cosine-similarity
scoring against class text embeddings.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoder import EncoderConfig, encode
from .errors import ResegError
from .merge import build_report, merge_checkpoints, merge_weights, separation_score
from .metrics import ConfusionMatrix, accumulate, iou
from .regions import (
    RegionLabelImage,
    build_attention_mask,
    build_hierarchy,
    combine_masks,
    patch_region_index,
)
from .segment import (
    SlidingWindowConfig,
    similarity_map,
    sliding_window_segment,
    upsample_and_label,
)
from .text import HashingTextEncoder, PromptGrammar, encode_prompts, generate_variants

__version__ = "0.1.0"
