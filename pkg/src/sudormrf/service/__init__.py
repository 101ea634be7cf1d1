"""HTTP service wrapping the separation engine."""

from .app import create_app

__all__ = ["create_app"]
