"""Ghost-free multi-exposure fusion with superpixel-guided flow correction."""
from .flow import FlowField, FlowParams, compute_flow, warp
from .fusion import exposure_fusion, fuse
from .imgio import ExposureStack, load_image, load_stack, save_image
from .metrics import q_s, q_s_stack
from .pipeline import PipelineConfig, PipelineError, align_stack, process, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "ExposureStack", "FlowField", "FlowParams", "PipelineConfig", "PipelineError",
    "align_stack", "compute_flow", "exposure_fusion", "fuse", "load_image", "load_stack",
    "process", "q_s", "q_s_stack", "run_pipeline", "save_image", "warp",
]
