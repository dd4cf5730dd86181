"""Initialize the src package."""
from .config import settings

__all__ = ["settings"]
