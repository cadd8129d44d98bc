"""CanvasX: planning-tree orchestration for image generation and editing."""

from . import agent
