"""Reference model server for the crop-vqa wire protocol."""

__version__ = "0.1.0"

from .app import create_app
from .config import ServerConfig

__all__ = ["ServerConfig", "create_app", "__version__"]
