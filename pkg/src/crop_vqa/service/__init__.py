"""FastAPI service exposing the cropping engine and the evaluation harness."""

from .app import create_app

__all__ = ["create_app"]
