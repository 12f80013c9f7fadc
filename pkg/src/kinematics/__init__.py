"""Linkage kinematics, trajectories and target curves."""
