"""Case-based reasoning synthesis of facial sketches in a personal style."""
from .cases import Case, CaseLibrary, build_case, ingest_dataset, load_library, save_library
from .config import PipelineConfig, load_config
from .geometry import RegionMap, default_region_map
from .synthesis import synthesize_portrait

__version__ = "0.1.0"

__all__ = [
    "Case", "CaseLibrary", "build_case", "ingest_dataset", "load_library", "save_library",
    "PipelineConfig", "load_config", "RegionMap", "default_region_map", "synthesize_portrait",
]
