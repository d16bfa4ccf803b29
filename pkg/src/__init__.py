"""Camera-LiDAR fusion multi-object tracker."""

__version__ = "0.1.0"
