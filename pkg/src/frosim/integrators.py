"""Discretization coefficients for one- and two-derivative integrators.

Every integrator is written in the common implicit form

    x_t = x_{t-h} + b0*xd_t + b_m1*xd_{t-h} + c0*xdd_t + c_m1*xdd_{t-h}

so that all of them plug into the same Newton residual.  Integrators A and B
are exact for sinusoids at ``omega_select`` (and for constants); C and D are
tuned for slowly varying states.  B, D and backward Euler are single-step and
are used right after discontinuities, when the derivative history is stale.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

OMEGA_60HZ = 2.0 * math.pi * 60.0

# Below this omega*h the cotangent form of Integrator A loses digits to
# cancellation; a truncated series of theta*cot(theta) is used instead.
_SERIES_THRESHOLD = 1e-3


class IntegratorKind(enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    TRAPEZOIDAL = "Trapezoidal"
    BACKWARD_EULER = "BackwardEuler"

    @property
    def uses_omega(self) -> bool:
        return self in (IntegratorKind.A, IntegratorKind.B)

    @property
    def single_step(self) -> bool:
        return self in (IntegratorKind.B, IntegratorKind.D, IntegratorKind.BACKWARD_EULER)

    @property
    def second_order(self) -> bool:
        """True when the integrator consumes second derivatives."""
        return self not in (IntegratorKind.TRAPEZOIDAL, IntegratorKind.BACKWARD_EULER)


@dataclass(frozen=True)
class Coefficients4:
    b0: float
    b_m1: float
    c0: float
    c_m1: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.b0, self.b_m1, self.c0, self.c_m1)


@dataclass(frozen=True)
class SolverConfig:
    """Step size, tuning frequency and Newton settings for one run."""

    h: float
    omega_select: float = OMEGA_60HZ
    newton_tol: float = 1e-8
    max_iter: int = 50

    def __post_init__(self):
        if not self.h > 0.0:
            raise ValueError(f"step size must be positive, got {self.h}")
        if not self.omega_select > 0.0:
            raise ValueError(f"omega_select must be positive, got {self.omega_select}")
        if not self.omega_select * self.h < math.pi:
            raise ValueError(
                f"omega_select*h = {self.omega_select * self.h:.4g} must stay below pi"
            )
        if not self.newton_tol > 0.0:
            raise ValueError("newton_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def _theta_cot_theta_minus_one(theta: float) -> float:
    if theta < 0.5 * _SERIES_THRESHOLD:
        t2 = theta * theta
        return -t2 * (1.0 / 3.0 + t2 * (1.0 / 45.0 + t2 * (2.0 / 945.0 + t2 / 4725.0)))
    return theta / math.tan(theta) - 1.0


@functools.lru_cache(maxsize=256)
def coefficients(kind: IntegratorKind, h: float, omega_select: float = OMEGA_60HZ) -> Coefficients4:
    """Return the four coefficients of ``kind`` for step ``h``.

    Raises ValueError when ``h <= 0`` or, for A and B, when
    ``omega_select*h`` falls outside (0, pi).
    """
    if not h > 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    kind = IntegratorKind(kind)
    if kind.uses_omega:
        wh = omega_select * h
        if not (omega_select > 0.0 and wh < math.pi):
            raise ValueError(
                f"integrator {kind.value} needs omega_select*h in (0, pi), got {wh:.6g}"
            )

    if kind is IntegratorKind.A:
        w = omega_select
        # c0 = -1/w^2 + h/(2w) cot(wh/2) = (theta*cot(theta) - 1)/w^2, theta = wh/2
        c0 = _theta_cot_theta_minus_one(0.5 * w * h) / (w * w)
        return Coefficients4(0.5 * h, 0.5 * h, c0, -c0)
    if kind is IntegratorKind.B:
        w = omega_select
        # cos(wh) - 1 = -2 sin^2(wh/2) avoids cancellation for small wh
        s = math.sin(0.5 * w * h)
        return Coefficients4(math.sin(w * h) / w, 0.0, -2.0 * s * s / (w * w), 0.0)
    if kind is IntegratorKind.C:
        return Coefficients4(0.5 * h, 0.5 * h, -h * h / 12.0, h * h / 12.0)
    if kind is IntegratorKind.D:
        return Coefficients4(h, 0.0, -0.5 * h * h, 0.0)
    if kind is IntegratorKind.TRAPEZOIDAL:
        return Coefficients4(0.5 * h, 0.5 * h, 0.0, 0.0)
    return Coefficients4(h, 0.0, 0.0, 0.0)


def residual(coeffs: Coefficients4, x_t, x_prev, xd_t, xd_prev, xdd_t=0.0, xdd_prev=0.0):
    """Discretization residual; zero when the integrator equation holds.

    Works elementwise on floats or arrays.
    """
    b0, b_m1, c0, c_m1 = coeffs.as_tuple()
    return x_t - x_prev - b0 * xd_t - b_m1 * xd_prev - c0 * xdd_t - c_m1 * xdd_prev
