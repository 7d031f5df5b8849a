"""
ODE systems, RK45 integration and the moment forward map.

The forward map sends a parameter to the time averages of the first and
second order moments of the trajectory over a fixed window:

    (z1, z2, z3, z1^2, z2^2, z3^2, z1 z2, z1 z3, z2 z3)
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp, trapezoid

from . import config
from .errors import IntegrationError
from .kernels import as_point

logger = logging.getLogger(__name__)

MOMENT_NAMES = ('z1', 'z2', 'z3', 'z1^2', 'z2^2', 'z3^2', 'z1*z2', 'z1*z3', 'z2*z3')
N_MOMENTS = len(MOMENT_NAMES)

ROSSLER_A = 0.2
ROSSLER_B = 0.2
DEFAULT_Z0 = (1.0, 0.0, 1.0)


class SystemKind(str, Enum):
    ROSSLER = 'rossler'
    LORENZ63 = 'lorenz63'
    DECAY = 'decay'  # dz/dt = -rate * z, scalar validation system

    @property
    def n_params(self) -> int:
        return {SystemKind.ROSSLER: 1, SystemKind.LORENZ63: 3, SystemKind.DECAY: 1}[self]


@dataclass(frozen=True)
class ODESystem:
    """
    Attributes:
        kind (SystemKind): Which equations
        params (tuple): Rossler (x,), Lorenz-63 (x1, x2, x3) or decay (rate,)
        z0 (tuple): Initial state
    """
    kind: SystemKind
    params: Tuple[float, ...]
    z0: Tuple[float, ...] = DEFAULT_Z0

    def __post_init__(self):
        object.__setattr__(self, 'kind', SystemKind(self.kind))
        params = tuple(float(p) for p in np.atleast_1d(self.params))
        if len(params) != self.kind.n_params:
            raise ValueError(f"{self.kind.value} takes {self.kind.n_params} parameters, got {len(params)}")
        object.__setattr__(self, 'params', params)
        object.__setattr__(self, 'z0', tuple(float(v) for v in np.atleast_1d(self.z0)))

    @classmethod
    def rossler(cls, x: float, z0=DEFAULT_Z0) -> 'ODESystem':
        return cls(SystemKind.ROSSLER, (x,), z0)

    @classmethod
    def lorenz63(cls, x1: float, x2: float, x3: float, z0=DEFAULT_Z0) -> 'ODESystem':
        return cls(SystemKind.LORENZ63, (x1, x2, x3), z0)

    @classmethod
    def decay(cls, rate: float = 1.0, z0: float = 1.0) -> 'ODESystem':
        return cls(SystemKind.DECAY, (rate,), (z0,))

    @property
    def state_dim(self) -> int:
        return len(self.z0)


def rhs(system: ODESystem, z) -> np.ndarray:
    """
    Right-hand side F(z, x) of dz/dt = F(z, x).

    Raises:
        ValueError: Non-finite state or wrong state dimension
    """
    return vector_field(system)(0.0, as_point(z, dim=system.state_dim))


def vector_field(system: ODESystem) -> Callable[[float, np.ndarray], np.ndarray]:
    """Unchecked ``(t, z) -> F(z, x)`` for the integrator."""
    if system.kind is SystemKind.ROSSLER:
        (x,) = system.params

        def rossler(_t, z):
            return np.array([
                -z[1] - z[2],
                z[0] + ROSSLER_A * z[1],
                ROSSLER_B + z[2] * (z[0] - x),
            ])
        return rossler

    if system.kind is SystemKind.LORENZ63:
        x1, x2, x3 = system.params

        def lorenz63(_t, z):
            return np.array([
                x1 * (z[1] - z[0]),
                x2 * z[0] - z[1] - z[0] * z[2],
                z[0] * z[1] - x3 * z[2],
            ])
        return lorenz63

    (rate,) = system.params
    return lambda _t, z: -rate * z


@dataclass(frozen=True)
class IntegratorConfig:
    """
    Attributes:
        rtol (float): Relative tolerance of the RK45 step control
        atol (float): Absolute tolerance
        output_dt (float): Spacing of the uniform output grid
        max_step (float): Largest step the integrator may take
    """
    rtol: float = config.RTOL
    atol: float = config.ATOL
    output_dt: float = config.OUTPUT_DT
    max_step: float = np.inf

    def __post_init__(self):
        if min(self.rtol, self.atol, self.output_dt, self.max_step) <= 0:
            raise ValueError(f"Integrator settings must be positive: {self}")

    def tightened(self, factor: float = 10.0) -> 'IntegratorConfig':
        """Same grid, tolerances divided by ``factor``."""
        return replace(self, rtol=self.rtol / factor, atol=self.atol / factor)

    def to_dict(self) -> dict:
        return {'rtol': self.rtol, 'atol': self.atol, 'output_dt': self.output_dt,
                'max_step': None if np.isinf(self.max_step) else self.max_step}


@dataclass(frozen=True)
class Trajectory:
    """States sampled on a strictly increasing time grid."""
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.shape[0] != times.shape[0]:
            raise ValueError(f"{times.shape[0]} times but {states.shape[0]} states")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("Trajectory times must be strictly increasing")
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'states', states)


def uniform_grid(start: float, stop: float, dt: float) -> np.ndarray:
    n = int(round((stop - start) / dt)) + 1
    return np.linspace(start, stop, max(n, 2))


def integrate(system: ODESystem, t_span: Tuple[float, float],
              integrator: Optional[IntegratorConfig] = None,
              sample_start: Optional[float] = None) -> Trajectory:
    """
    Integrate from z0 at t_span[0] with RK45 and sample on a uniform grid.

    Args:
        system (ODESystem): Equations and initial state
        t_span (tuple): (T0, T1) with T0 < T1
        integrator (IntegratorConfig, optional): Tolerances and output spacing
        sample_start (float, optional): First output time; defaults to T0

    Returns:
        Trajectory: States on sample_start, sample_start + dt, ..., T1

    Raises:
        ValueError: Empty span or grid coarser than a hundredth of the span
        IntegrationError: Solver failure or non-finite states
    """
    integrator = integrator or IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t0 < t1:
        raise ValueError(f"Empty integration span ({t0}, {t1})")
    start = t0 if sample_start is None else float(sample_start)
    if not t0 <= start < t1:
        raise ValueError(f"sample_start {start} outside ({t0}, {t1})")
    if integrator.output_dt > (t1 - start) / 100.0:
        raise ValueError(f"output_dt {integrator.output_dt} too coarse for span ({start}, {t1})")

    solution = solve_ivp(
        vector_field(system),
        (t0, t1),
        np.array(system.z0),
        method='RK45',
        t_eval=uniform_grid(start, t1, integrator.output_dt),
        rtol=integrator.rtol,
        atol=integrator.atol,
        max_step=integrator.max_step,
    )
    if not solution.success:
        logger.error("Integration of %s%s failed: %s", system.kind.value, system.params, solution.message)
        raise IntegrationError(f"{system.kind.value} integration failed: {solution.message}")
    if not np.all(np.isfinite(solution.y)):
        logger.error("Integration of %s%s produced non-finite states", system.kind.value, system.params)
        raise IntegrationError(f"{system.kind.value} trajectory became non-finite")
    return Trajectory(solution.t, solution.y.T)


def moment_integrands(states: np.ndarray) -> np.ndarray:
    """Per-time-step integrands of the nine moments, in the fixed component order."""
    z = np.asarray(states, dtype=float)
    if z.ndim != 2 or z.shape[1] != 3:
        raise ValueError(f"Moments need three state components, got shape {z.shape}")
    z1, z2, z3 = z[:, 0], z[:, 1], z[:, 2]
    return np.column_stack([z1, z2, z3, z1 ** 2, z2 ** 2, z3 ** 2, z1 * z2, z1 * z3, z2 * z3])


def _window_slice(traj: Trajectory, window: Tuple[float, float]) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"Empty averaging window ({lo}, {hi})")
    eps = 1e-9 * max(1.0, abs(hi))
    if traj.times[0] > lo + eps or traj.times[-1] < hi - eps:
        raise ValueError(f"Window ({lo}, {hi}) not covered by trajectory "
                         f"({traj.times[0]}, {traj.times[-1]})")
    inside = (traj.times >= lo - eps) & (traj.times <= hi + eps)
    return traj.times[inside], traj.states[inside]


def averaging_operator(traj: Trajectory, window: Tuple[float, float]) -> np.ndarray:
    """
    Time averages of the moment integrands over the window (trapezoidal rule).

    Returns:
        np.ndarray: The 9-vector of moments

    Raises:
        ValueError: Window not covered by the trajectory
    """
    times, states = _window_slice(traj, window)
    return trapezoid(moment_integrands(states), times, axis=0) / (float(window[1]) - float(window[0]))


def integrand_variances(traj: Trajectory, window: Tuple[float, float]) -> np.ndarray:
    """Sample variances of the moment integrands over the window grid."""
    _, states = _window_slice(traj, window)
    return np.var(moment_integrands(states), axis=0, ddof=1)


@dataclass(frozen=True)
class ForwardMapSpec:
    """
    System family, averaging window and integrator settings of G.

    Attributes:
        family (SystemKind): Rossler or Lorenz-63
        window (tuple): Averaging window (T0, T1); integration always starts at t = 0
        integrator (IntegratorConfig): RK45 settings
        z0 (tuple): Initial state
    """
    family: SystemKind
    window: Tuple[float, float]
    integrator: IntegratorConfig = IntegratorConfig()
    z0: Tuple[float, ...] = DEFAULT_Z0

    def __post_init__(self):
        object.__setattr__(self, 'family', SystemKind(self.family))
        if self.family is SystemKind.DECAY:
            raise ValueError("The moment forward map needs a three-dimensional system")
        window = (float(self.window[0]), float(self.window[1]))
        if not 0 <= window[0] < window[1]:
            raise ValueError(f"Invalid averaging window {window}")
        object.__setattr__(self, 'window', window)
        object.__setattr__(self, 'z0', tuple(float(v) for v in self.z0))

    @classmethod
    def rossler(cls, integrator: Optional[IntegratorConfig] = None) -> 'ForwardMapSpec':
        return cls(SystemKind.ROSSLER, (20.0, 50.0), integrator or IntegratorConfig())

    @classmethod
    def lorenz63(cls, integrator: Optional[IntegratorConfig] = None) -> 'ForwardMapSpec':
        return cls(SystemKind.LORENZ63, (10.0, 200.0), integrator or IntegratorConfig())

    @property
    def n_params(self) -> int:
        return self.family.n_params

    def system(self, x) -> ODESystem:
        return ODESystem(self.family, tuple(as_point(x, dim=self.n_params)), self.z0)

    def trajectory(self, x, window: Optional[Tuple[float, float]] = None) -> Trajectory:
        """Trajectory from t = 0 sampled over ``window`` (the averaging window by default)."""
        lo, hi = window or self.window
        return integrate(self.system(x), (0.0, hi), self.integrator, sample_start=lo)

    def to_dict(self) -> dict:
        return {'family': self.family.value, 'window': list(self.window),
                'integrator': self.integrator.to_dict(), 'z0': list(self.z0)}


@lru_cache(maxsize=65536)
def _cached_forward_map(spec: ForwardMapSpec, x: Tuple[float, ...]) -> np.ndarray:
    moments = averaging_operator(spec.trajectory(x), spec.window)
    moments.flags.writeable = False
    return moments


def forward_map(x, spec: ForwardMapSpec) -> np.ndarray:
    """
    G(x): moments of the trajectory at parameter x over the averaging window.

    Results are cached per process on (spec, x).

    Raises:
        IntegrationError: Propagated from the integrator
    """
    key = tuple(float(v) for v in as_point(x, dim=spec.n_params))
    return np.array(_cached_forward_map(spec, key))


def clear_forward_cache():
    _cached_forward_map.cache_clear()


def estimate_gamma(spec: ForwardMapSpec, x_star, long_window: Tuple[float, float], scale: float = 1.0) -> np.ndarray:
    """
    Diagonal noise covariance from the integrand variances over a long window.

    Args:
        spec (ForwardMapSpec): Forward map; its window must lie inside long_window
        x_star: True parameter
        long_window (tuple): Window the variances are taken over
        scale (float): Multiplier applied to every variance

    Returns:
        np.ndarray: 9 x 9 diagonal covariance

    Raises:
        ValueError: Window not nested, non-positive scale, or a zero variance
    """
    lo, hi = float(long_window[0]), float(long_window[1])
    if lo > spec.window[0] or hi < spec.window[1]:
        raise ValueError(f"Long window {long_window} must contain the averaging window {spec.window}")
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    variances = scale * integrand_variances(spec.trajectory(x_star, (lo, hi)), (lo, hi))
    degenerate = [MOMENT_NAMES[i] for i in np.flatnonzero(variances <= 0)]
    if degenerate:
        raise ValueError(f"Zero variance in moment components {', '.join(degenerate)}")
    return np.diag(variances)


def make_data(spec: ForwardMapSpec, x_star, gamma, rng: np.random.Generator) -> np.ndarray:
    """
    Synthetic data D = G(x*) + eta with eta ~ N(0, gamma).

    Args:
        gamma: Diagonal covariance, as a 9 x 9 matrix or its diagonal
    """
    variances = np.diag(gamma) if np.ndim(gamma) == 2 else np.asarray(gamma, dtype=float)
    if variances.shape != (N_MOMENTS,) or np.any(variances < 0):
        raise ValueError("gamma must be a non-negative diagonal of length 9")
    return forward_map(x_star, spec) + np.sqrt(variances) * rng.standard_normal(N_MOMENTS)
