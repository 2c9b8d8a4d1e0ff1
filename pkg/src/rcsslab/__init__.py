"""RoboCup 2D log toolkit: rcg/rcl parsing, event analytics, Kalman localization, WMV conversion."""

__version__ = "0.1.0"
