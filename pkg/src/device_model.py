# src/device_model.py
"""
Behavioral model of an analog RRAM synapse.

The conductance G of a device follows two saturating curves indexed by the
cumulative number of pulses: a concave potentiation curve G_P(n_p) and a
convex depression curve G_D(n_d), both running from g_min (n = 0) to g_max
(n = n_max). A pulse update inverts the curve selected by the sign of the
update, moves along it by delta_n pulses and reads the new conductance back,
so only the current conductance is ever stored.

All curve functions accept scalars or numpy arrays and return the same kind.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import least_squares

from .errors import ConfigError, DeviceModelError

ArrayLike = Union[float, np.ndarray]


def n_max_for_bits(weight_bits: int) -> int:
    """Maximum pulse count for a weight precision of `weight_bits` bits."""
    if weight_bits < 1:
        raise DeviceModelError(f"weight_bits must be >= 1, got {weight_bits}")
    return max(2 ** weight_bits - 1, 2)


@dataclass(frozen=True)
class DeviceParams:
    """
    Parameters of one synapse device.

    `linear` selects the ideal device whose conductance changes by a fixed
    (g_max - g_min) / n_max per pulse. `symmetric` keeps the nonlinear
    potentiation curve but lets depression pulses retrace it, which removes
    the asymmetry (ANL = 0) while the step size stays state dependent.
    """
    g_min: float = 0.0
    g_max: float = 1.0
    n_max: int = 255
    k: float = math.inf
    linear: bool = False
    symmetric: bool = False

    def __post_init__(self):
        if not self.g_max > self.g_min:
            raise DeviceModelError(f"g_max ({self.g_max}) must exceed g_min ({self.g_min})")
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise DeviceModelError(f"n_max must be an integer >= 2, got {self.n_max}")
        if not self.linear and not math.isfinite(self.k):
            raise DeviceModelError("a nonlinear device needs a finite k; use linear=True for the ideal device")

    @property
    def span(self) -> float:
        return self.g_max - self.g_min

    @property
    def g_ref(self) -> float:
        """Reference conductance of the dummy column."""
        return (self.g_max + self.g_min) / 2

    @property
    def step(self) -> float:
        """Conductance change per pulse of the ideal-linear device."""
        return self.span / self.n_max

    @cached_property
    def e_k(self) -> float:
        return math.inf if self.linear else math.exp(self.k)

    @cached_property
    def a(self) -> float:
        return math.inf if self.linear else self.span * (1 + self.e_k / self.n_max)

    @cached_property
    def anl(self) -> float:
        if self.linear or self.symmetric:
            return 0.0
        half = self.n_max / 2
        return half / (half + self.e_k)

    def to_config(self) -> Dict[str, Any]:
        return {
            'g_min': self.g_min,
            'g_max': self.g_max,
            'k': None if self.linear else self.k,
            'anl': self.anl,
            'linear': self.linear,
            'symmetric': self.symmetric,
        }


@dataclass(frozen=True)
class SynapseState:
    """Conductance of a single device."""
    g: float

    def pulse(self, params: DeviceParams, delta_n: int) -> 'SynapseState':
        return SynapseState(float(apply_pulses(params, self.g, delta_n)))


def params_from_anl(g_min: float, g_max: float, n_max: int, anl: float, symmetric: bool = False) -> DeviceParams:
    """Solves ANL = (N/2) / (N/2 + e^k) for k."""
    if not 0 < anl < 1:
        raise DeviceModelError(f"anl must lie strictly inside (0, 1), got {anl}; use the linear device for anl = 0")
    e_k = (n_max / 2) * (1 - anl) / anl
    return DeviceParams(g_min=g_min, g_max=g_max, n_max=n_max, k=math.log(e_k), symmetric=symmetric)


def device_from_config(config: Dict[str, Any]) -> DeviceParams:
    """Builds the device from the flat `device.*` keys."""
    anl = config.get('device.anl')
    k = config.get('device.k')
    symmetric = bool(config.get('device.symmetric', False))
    try:
        n_max = n_max_for_bits(int(config['device.weight_bits']))
        g_min = float(config['device.g_min'])
        g_max = float(config['device.g_max'])
        if config.get('device.linear') or (k is None and anl is not None and float(anl) == 0.0):
            return DeviceParams(g_min=g_min, g_max=g_max, n_max=n_max, linear=True)
        if k is not None:
            return DeviceParams(g_min=g_min, g_max=g_max, n_max=n_max, k=float(k), symmetric=symmetric)
        if anl is None:
            raise ConfigError("either device.anl, device.k or device.linear must be set")
        return params_from_anl(g_min, g_max, n_max, float(anl), symmetric=symmetric)
    except DeviceModelError as e:
        raise ConfigError(f"invalid device section: {e}") from e


def _check_range(values: np.ndarray, lo: float, hi: float, name: str):
    if np.any(np.isnan(values)) or np.any(values < lo) or np.any(values > hi):
        raise DeviceModelError(f"{name} must lie in [{lo}, {hi}]")


def _like(result: np.ndarray) -> ArrayLike:
    return float(result) if np.ndim(result) == 0 else result


def g_potentiation(p: DeviceParams, n_p: ArrayLike) -> ArrayLike:
    n = np.asarray(n_p, dtype=np.float64)
    _check_range(n, 0, p.n_max, "n_p")
    if p.linear:
        g = p.g_min + p.span * n / p.n_max
    else:
        g = p.g_min + p.a * n / (n + p.e_k)
    # endpoints are exact
    g = np.where(n <= 0, p.g_min, np.where(n >= p.n_max, p.g_max, np.clip(g, p.g_min, p.g_max)))
    return _like(g)


def g_depression(p: DeviceParams, n_d: ArrayLike) -> ArrayLike:
    if p.linear or p.symmetric:
        return g_potentiation(p, n_d)
    n = np.asarray(n_d, dtype=np.float64)
    _check_range(n, 0, p.n_max, "n_d")
    m = p.n_max - n
    g = p.g_max - p.a * m / (m + p.e_k)
    g = np.where(n <= 0, p.g_min, np.where(n >= p.n_max, p.g_max, np.clip(g, p.g_min, p.g_max)))
    return _like(g)


def invert_potentiation(p: DeviceParams, g: ArrayLike) -> ArrayLike:
    """Equivalent cumulative number of P-pulses that reaches conductance g."""
    values = np.asarray(g, dtype=np.float64)
    _check_range(values, p.g_min, p.g_max, "g")
    d = values - p.g_min
    if p.linear:
        n = p.n_max * d / p.span
    else:
        n = p.e_k * d / (p.a - d)
    return _like(np.clip(n, 0, p.n_max))


def invert_depression(p: DeviceParams, g: ArrayLike) -> ArrayLike:
    """Equivalent position on the depression curve for conductance g."""
    if p.linear or p.symmetric:
        return invert_potentiation(p, g)
    values = np.asarray(g, dtype=np.float64)
    _check_range(values, p.g_min, p.g_max, "g")
    d = p.g_max - values
    n = p.n_max - p.e_k * d / (p.a - d)
    return _like(np.clip(n, 0, p.n_max))


def apply_pulses(p: DeviceParams, s: Union[SynapseState, ArrayLike], delta_n: Union[int, np.ndarray]):
    """
    State-dependent update: G_P(n_p_old + dn) for dn > 0, G_D(n_d_old + dn)
    for dn < 0, with the pulse position clamped to [0, n_max].

    Accepts a SynapseState, a scalar conductance or a conductance grid; the
    result has the same kind. The input is never modified.
    """
    if isinstance(s, SynapseState):
        return SynapseState(float(apply_pulses(p, s.g, delta_n)))

    g = np.asarray(s, dtype=np.float64)
    _check_range(g, p.g_min, p.g_max, "g")
    dn = np.asarray(delta_n)
    g, dn = np.broadcast_arrays(g, dn)

    if p.linear:
        out = np.clip(g + dn * p.step, p.g_min, p.g_max)
        return _like(out)

    shape = g.shape
    g = g.reshape(-1)
    dn = dn.reshape(-1)
    out = g.copy()
    pos = dn > 0
    if np.any(pos):
        n_p = invert_potentiation(p, g[pos]) + dn[pos]
        out[pos] = g_potentiation(p, np.clip(n_p, 0, p.n_max))
    neg = dn < 0
    if np.any(neg):
        n_d = invert_depression(p, g[neg]) + dn[neg]
        out[neg] = g_depression(p, np.clip(n_d, 0, p.n_max))
    return _like(out.reshape(shape))


@dataclass
class FitResult:
    """Outcome of fit_device. `g_min`, `g_max`, `k` hold the best iterate even when the fit failed."""
    g_min: float
    g_max: float
    k: float
    n_max: int
    residual_rms: float
    converged: bool
    degenerate: bool = False
    iterations: int = 0
    message: str = ""

    @property
    def params(self) -> Optional[DeviceParams]:
        if self.degenerate or not self.g_max > self.g_min or not math.isfinite(self.k):
            return None
        return DeviceParams(g_min=self.g_min, g_max=self.g_max, n_max=self.n_max, k=self.k)

    @property
    def anl(self) -> Optional[float]:
        params = self.params
        return params.anl if params is not None else None


def split_sweeps(measurements: Sequence[Tuple[float, float]], n_max: int):
    """
    Splits one measured P-then-D cycle into its two sweeps.

    Pulse indices 0..n_max belong to potentiation (n_p = index); indices
    n_max+1..2*n_max belong to depression (n_d = 2*n_max - index).
    """
    data = np.asarray(measurements, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != 2:
        raise DeviceModelError("measurements must be a sequence of (pulse_index, g) pairs")
    pulse, g = data[:, 0], data[:, 1]
    pot = (pulse >= 0) & (pulse <= n_max)
    dep = (pulse > n_max) & (pulse <= 2 * n_max)
    if pot.sum() < 3 or dep.sum() < 3:
        raise DeviceModelError(
            f"need at least 3 potentiation and 3 depression points, got {int(pot.sum())} and {int(dep.sum())}"
        )
    return pulse[pot], g[pot], 2 * n_max - pulse[dep], g[dep]


def fit_device(measurements: Sequence[Tuple[float, float]], n_max: int, max_iterations: int = 200) -> FitResult:
    """
    Least-squares fit of (g_min, g_max, k) to a measured P/D cycle, with the
    prefactor A tied to the other parameters. Non-convergence and constant
    data are reported through the result, never raised.
    """
    n_p, g_p, n_d, g_d = split_sweeps(measurements, n_max)
    all_g = np.concatenate([g_p, g_d])

    if np.ptp(all_g) == 0:
        level = float(all_g[0])
        return FitResult(level, level, math.nan, n_max, 0.0, converged=False, degenerate=True,
                         message="constant measurements: conductance range is zero")

    def residuals(x):
        g_lo, g_hi, k = x
        e_k = np.exp(np.clip(k, -50.0, 50.0))
        a = (g_hi - g_lo) * (1 + e_k / n_max)
        pred_p = g_lo + a * n_p / (n_p + e_k)
        m = n_max - n_d
        pred_d = g_hi - a * m / (m + e_k)
        return np.concatenate([pred_p - g_p, pred_d - g_d])

    x0 = np.array([all_g.min(), all_g.max(), math.log(n_max / 2)])
    result = least_squares(residuals, x0, method='lm', max_nfev=max_iterations * (len(x0) + 1),
                           xtol=1e-14, ftol=1e-14, gtol=1e-14)

    g_lo, g_hi, k = (float(v) for v in result.x)
    rms = float(np.sqrt(np.mean(result.fun ** 2)))
    degenerate = not g_hi > g_lo
    converged = bool(result.success) and result.status > 0 and not degenerate
    fit = FitResult(g_lo, g_hi, k, n_max, rms, converged=converged, degenerate=degenerate,
                    iterations=int(result.nfev), message=str(result.message))
    if converged:
        logging.info(f"Device fit converged: g_min={g_lo:.6g}, g_max={g_hi:.6g}, k={k:.6g}, rms={rms:.3g}")
    else:
        logging.warning(f"Device fit did not converge: {result.message}")
    return fit
