"""Thumbnail selection for videos: quality filtering, clustering and attractiveness scoring."""
__version__ = "0.1.0"

from .config import RunConfig
from .frame_io import Frame, load_video
from .selection import SelectionConfig, SelectionResult, ThumbnailCandidate, select_thumbnails

__all__ = ["Frame", "RunConfig", "SelectionConfig", "SelectionResult", "ThumbnailCandidate",
           "load_video", "select_thumbnails", "__version__"]
