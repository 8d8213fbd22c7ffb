"""getup2d: two-stage RL for planar-biped getting-up and rolling-over."""

__version__ = "0.1.0"
