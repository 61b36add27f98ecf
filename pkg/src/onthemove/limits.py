from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class RobotLimits:
    """Velocity and acceleration bounds of the differential-drive base."""

    v_max: float = 1.0  # m/s
    omega_max: float = 1.5  # rad/s
    a_max: float = 1.0  # m/s^2
    alpha_max: float = 3.0  # rad/s^2

    def __post_init__(self) -> None:
        for name in ("v_max", "omega_max", "a_max", "alpha_max"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


DEFAULT_LIMITS = RobotLimits()
