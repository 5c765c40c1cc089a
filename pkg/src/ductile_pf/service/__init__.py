"""HTTP service around the simulation core."""

from .app import create_app

__all__ = ["create_app"]
