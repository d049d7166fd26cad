"""Planar cable casting: kinematics, a segmented cable simulator, simulator
tuning, forward models and the experiment pipeline that ties them together."""

__version__ = "0.1.0"
