"""Problem definitions: the time-dependent Fokker-Planck case and the stationary
manufactured-solution case, together with their data functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

TIME_DEPENDENT = "time_dependent"
STATIONARY = "stationary"

#: Total initial mass int_{Omega_x} int_{S^1} g(0, x) dphi dx, from the radial integral.
INITIAL_MASS = 2.0 * np.pi * (128.0 / 5.0 * 4.0**-5 - 12.0 * 4.0**-4 + 1.0 / 32.0)


@dataclass(frozen=True)
class ProblemSpec:
    """Problem family plus mesh resolutions.

    ``kind`` is either ``"time_dependent"`` (transport with velocity diffusion
    ``q_inv * d^2/dphi^2`` on ``(0, T) x (0,1)^2 x S^1``, discretized after the
    exponential time transformation) or ``"stationary"`` (reaction ``c`` and
    velocity diffusion ``d`` on ``(0,1)^2 x S^1`` with a manufactured source).
    """

    kind: Literal["time_dependent", "stationary"]
    n_x: int
    n_v: int
    n_t: int | None = None
    q_inv: float = 0.8
    T: float = 0.75
    c: float = 0.1
    d: float = 0.1
    #: Optional scalar prefactor d(t, x) of the separable velocity form.
    d_coeff: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in (TIME_DEPENDENT, STATIONARY):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.n_x < 1:
            raise ValueError("n_x must be >= 1")
        if self.n_v < 3:
            raise ValueError("n_v must be >= 3 for periodic P1 elements")
        if self.kind == TIME_DEPENDENT:
            if self.n_t is None or self.n_t < 1:
                raise ValueError("time-dependent problems need n_t >= 1")
            if not self.q_inv > 0:
                raise ValueError("q_inv must be positive")
            if not self.T > 0:
                raise ValueError("T must be positive")
        else:
            if not (self.c > 0 and self.d > 0):
                raise ValueError("c and d must be positive")

    @classmethod
    def time_dependent(cls, q_inv: float, n: int, n_v: int | None = None, n_t: int | None = None,
                       T: float = 0.75) -> "ProblemSpec":
        return cls(TIME_DEPENDENT, n_x=n, n_v=n if n_v is None else n_v,
                   n_t=n if n_t is None else n_t, q_inv=q_inv, T=T)

    @classmethod
    def stationary(cls, c: float, d: float, n_x: int, n_v: int | None = None) -> "ProblemSpec":
        return cls(STATIONARY, n_x=n_x, n_v=n_x if n_v is None else n_v, c=c, d=d)

    @property
    def is_time_dependent(self) -> bool:
        return self.kind == TIME_DEPENDENT

    @property
    def lambda_a(self) -> float:
        """Shift of the time transformation (zero for the stationary problem)."""
        return self.q_inv if self.is_time_dependent else 0.0

    @property
    def alpha_a(self) -> float:
        return self.q_inv if self.is_time_dependent else min(self.c, self.d)

    @property
    def c_a(self) -> float:
        return self.q_inv if self.is_time_dependent else max(self.c, self.d)

    @property
    def tag(self) -> str:
        if self.is_time_dependent:
            return f"td_qinv{self.q_inv:g}"
        return f"st_c{self.c:g}_d{self.d:g}"

    @property
    def mesh_tag(self) -> str:
        if self.is_time_dependent:
            return f"nt{self.n_t}_nx{self.n_x}_nv{self.n_v}"
        return f"nx{self.n_x}_nv{self.n_v}"


def initial_condition(x) -> np.ndarray:
    """Initial density g(0, x), independent of the direction angle.

    ``x`` has shape (..., 2).
    """
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0] - 0.5, x[..., 1] - 0.5)
    val = (128.0 * r**3 - 48.0 * r**2 + 1.0) / (2.0 * np.pi)
    return np.where(r < 0.25, val, 0.0)


def manufactured_pair(c: float, d: float):
    """Exact solution ``u(x1, x2, phi)`` and source ``f0`` of the stationary case.

    ``f0 = cos(phi) du/dx1 + sin(phi) du/dx2 + c u - d d^2u/dphi^2``. Both
    callables broadcast over their three arguments.
    """

    def u(x1, x2, phi):
        return np.sin(np.pi * x1) ** 2 * np.sin(np.pi * x2) ** 2 * np.sin(phi) ** 2

    def f0(x1, x2, phi):
        s1, s2 = np.sin(np.pi * x1) ** 2, np.sin(np.pi * x2) ** 2
        sp2 = np.sin(phi) ** 2
        transport = np.pi * sp2 * (np.cos(phi) * np.sin(2 * np.pi * x1) * s2
                                   + np.sin(phi) * s1 * np.sin(2 * np.pi * x2))
        return transport + c * s1 * s2 * sp2 - 2.0 * d * s1 * s2 * np.cos(2 * phi)

    return u, f0


def manufactured_dphi(x1, x2, phi):
    """Angular derivative of the manufactured solution."""
    return np.sin(np.pi * x1) ** 2 * np.sin(np.pi * x2) ** 2 * np.sin(2 * phi)


def temporal_transform(values, t_nodes, lambda_a: float, direction: str = "inverse") -> np.ndarray:
    """Apply the exponential time weight to nodal values.

    ``values`` has the time axis first (shape ``(len(t_nodes), ...)``). The
    forward map multiplies by ``exp(-lambda_a t)``, the inverse map by
    ``exp(lambda_a t)``.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    t = np.asarray(t_nodes, dtype=float)
    sign = 1.0 if direction == "inverse" else -1.0
    factor = np.exp(sign * lambda_a * t)
    values = np.asarray(values, dtype=float)
    return values * factor.reshape((-1,) + (1,) * (values.ndim - 1))
