"""Extended SEIR epidemic model with ensemble transform Kalman filter assimilation."""

__version__ = "0.1.0"
