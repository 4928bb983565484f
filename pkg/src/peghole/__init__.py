"""Desk-scale peg-in-hole insertion: simulator, adversarial imitation training,
demonstration tooling, and a teleoperation bridge."""

__version__ = "0.1.0"
