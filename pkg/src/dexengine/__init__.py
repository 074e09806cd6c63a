"""Surgical training analytics from hand-pose and tool detections."""

__version__ = "0.1.0"
