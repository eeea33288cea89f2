"""Per-sample estimation of the vector from an IMU to a joint's centre of rotation.

Modules
-------
core       rotations, cross products, the IMU stream container
sim        simulated spherical pendulum with optional sensor slip
attitude   tilt tracking and gravity removal
mrvs       least-squares baseline (batch and sliding window)
arved      adaptive extended Kalman filter
metrics    error measures and agreement statistics
"""
from .arved import ArvedConfig, ArvedEstimator, run
from .core import ImuSample, ImuStream
from .sim import NoiseSpec, PendulumConfig, StaConfig, generate

__all__ = ["ArvedConfig", "ArvedEstimator", "ImuSample", "ImuStream", "NoiseSpec",
           "PendulumConfig", "StaConfig", "generate", "run"]
__version__ = "0.1.0"
