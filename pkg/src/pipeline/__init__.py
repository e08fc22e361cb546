"""Head Pose Tracker - Pipeline Layer

Configuration, stream files, the offline filter run and the CLI
"""

__version__ = "1.0.0"

from .config import RunConfig, load_config
from .runner import SessionFactory, compare_variants, run_filter_pipeline
from .streams import read_stream, write_stream

__all__ = [
    "RunConfig",
    "SessionFactory",
    "compare_variants",
    "load_config",
    "read_stream",
    "run_filter_pipeline",
    "write_stream",
]
