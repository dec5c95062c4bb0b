"""Video salient object detection with adjacent-frame memory, on a numpy autodiff engine."""

__version__ = "0.1.0"
