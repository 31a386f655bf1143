# src/perceptron.py
"""
Two-layer perceptron mapped onto RRAM crossbars.

Weights are conductance differences W = G - G_r against the dummy column.
Every forward and backward value passes through a finite-precision neuron
quantizer, and weight updates are integer pulse counts formed as an outer
product of pre-neuron and post-neuron values (optionally cut by a threshold).

Batch arrays are row-major: one sample per row.
"""
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import yaml
from scipy.special import expit

from .device_model import DeviceParams, apply_pulses, device_from_config
from .errors import ConfigError, DataFormatError, ShapeError

SNAPSHOT_FORMAT_VERSION = 1
ACTIVATION_KINDS = ('sigmoid', 'relu')


def round_half_away(x):
    """Round to nearest, ties away from zero."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class ActivationSpec:
    kind: str = 'sigmoid'
    shift: float = 0.0
    upper_bound: float = 1.0

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ConfigError(f"unknown activation '{self.kind}', expected one of {ACTIVATION_KINDS}")
        if self.kind == 'relu' and not self.upper_bound > 0:
            raise ConfigError(f"relu upper_bound must be positive, got {self.upper_bound}")

    @property
    def output_range(self) -> Tuple[float, float]:
        return (0.0, 1.0) if self.kind == 'sigmoid' else (0.0, float(self.upper_bound))


@dataclass(frozen=True)
class QuantSpec:
    neuron_bits: int = 8
    forward_range: Tuple[float, float] = (0.0, 1.0)
    backprop_bound: float = 1.0
    enabled: bool = True

    def __post_init__(self):
        if self.neuron_bits < 1:
            raise ConfigError(f"neuron_bits must be >= 1, got {self.neuron_bits}")
        lo, hi = self.forward_range
        if not hi > lo:
            raise ConfigError(f"forward quantizer range must satisfy hi > lo, got {self.forward_range}")
        if not self.backprop_bound > 0:
            raise ConfigError(f"backprop_bound must be positive, got {self.backprop_bound}")

    @property
    def levels(self) -> int:
        return 2 ** self.neuron_bits


@dataclass
class SynapseArray:
    """Conductance grid of one fully connected layer; rows are pre-neurons."""
    g: np.ndarray
    device: DeviceParams

    @property
    def rows(self) -> int:
        return self.g.shape[0]

    @property
    def cols(self) -> int:
        return self.g.shape[1]

    @property
    def g_ref(self) -> float:
        return self.device.g_ref

    def weights(self) -> np.ndarray:
        return self.g - self.g_ref


@dataclass(frozen=True)
class NetworkConfig:
    device: DeviceParams
    activation: ActivationSpec
    quant: QuantSpec
    learning_rate: float
    threshold: float = 0.0
    n_input: int = 784
    n_hidden: int = 300
    n_output: int = 10

    def __post_init__(self):
        if min(self.n_input, self.n_hidden, self.n_output) < 1:
            raise ConfigError(
                f"invalid network dimensions {self.n_input}x{self.n_hidden}x{self.n_output}"
            )
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning rate must be non-negative, got {self.learning_rate}")
        if not self.threshold >= 0:
            raise ConfigError(f"threshold must be non-negative, got {self.threshold}")

    def with_bounds(self, upper_bound: Optional[float] = None, backprop_bound: Optional[float] = None) -> 'NetworkConfig':
        """Copy with calibrated quantizer bounds; None keeps the current value."""
        activation = self.activation
        if upper_bound is not None:
            activation = replace(activation, upper_bound=float(upper_bound))
        quant = replace(
            self.quant,
            forward_range=activation.output_range,
            backprop_bound=float(backprop_bound) if backprop_bound is not None else self.quant.backprop_bound,
        )
        return replace(self, activation=activation, quant=quant)


@dataclass
class Network:
    layer1: SynapseArray
    layer2: SynapseArray
    activation: ActivationSpec
    quant: QuantSpec
    learning_rate: float
    threshold: float = 0.0
    seed: int = 0
    step: int = 0

    @property
    def device(self) -> DeviceParams:
        return self.layer1.device


@dataclass
class ForwardTrace:
    x: np.ndarray
    s_h: np.ndarray
    h: np.ndarray
    s_o: np.ndarray
    o: np.ndarray


def network_config_from(config: Dict[str, Any], n_input: int = 784, n_output: int = 10) -> NetworkConfig:
    """
    Builds the network settings from the flat config. Quantizer bounds left as
    None in the config get a placeholder of 1.0 until calibration fills them.
    """
    device = device_from_config(config)
    upper_bound = config.get('net.upper_bound')
    backprop_bound = config.get('quant.backprop_bound')
    try:
        activation = ActivationSpec(
            kind=str(config['net.activation']),
            shift=float(config['net.s']),
            upper_bound=float(upper_bound) if upper_bound is not None else 1.0,
        )
        quant = QuantSpec(
            neuron_bits=int(config['quant.neuron_bits']),
            forward_range=activation.output_range,
            backprop_bound=float(backprop_bound) if backprop_bound is not None else 1.0,
            enabled=bool(config['quant.enabled']),
        )
        return NetworkConfig(
            device=device,
            activation=activation,
            quant=quant,
            learning_rate=float(config['net.eta']),
            threshold=float(config['net.th']),
            n_input=int(n_input),
            n_hidden=int(config['net.hidden']),
            n_output=int(n_output),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid network setting: {e}") from e


def weight(arr: SynapseArray, i: int, j: int) -> float:
    if not (0 <= i < arr.rows and 0 <= j < arr.cols):
        raise IndexError(f"synapse ({i}, {j}) outside a {arr.rows}x{arr.cols} array")
    return float(arr.g[i, j] - arr.g_ref)


def activate(a: ActivationSpec, x):
    x = np.asarray(x, dtype=np.float64)
    if a.kind == 'sigmoid':
        out = expit(x - a.shift)
    else:
        out = np.clip(x - a.shift, 0.0, a.upper_bound)
    return float(out) if out.ndim == 0 else out


def activate_derivative(a: ActivationSpec, x):
    x = np.asarray(x, dtype=np.float64)
    if a.kind == 'sigmoid':
        f = expit(x - a.shift)
        out = f * (1 - f)
    else:
        # zero in the rectified and in the clipped region
        out = ((x > a.shift) & (x < a.shift + a.upper_bound)).astype(np.float64)
    return float(out) if out.ndim == 0 else out


def quantize(q: QuantSpec, x, kind: str = 'forward'):
    """
    Forward values snap to 2^b endpoint-inclusive levels over forward_range.
    Backprop values snap to a zero-centred grid of 2^b - 1 levels over
    [-B, B], so that an exact zero survives.
    """
    if not q.enabled:
        return x
    values = np.asarray(x, dtype=np.float64)
    if kind == 'forward':
        lo, hi = q.forward_range
        top = q.levels - 1
        index = round_half_away((np.clip(values, lo, hi) - lo) * top / (hi - lo))
        out = lo + index * (hi - lo) / top
    elif kind == 'backprop':
        bound = q.backprop_bound
        half = max(2 ** (q.neuron_bits - 1) - 1, 1)
        index = np.clip(round_half_away(np.clip(values, -bound, bound) * half / bound), -half, half)
        out = index * bound / half
    else:
        raise ValueError(f"unknown quantizer range '{kind}'")
    return float(out) if out.ndim == 0 else out


def apply_threshold(th: float, x):
    """f_th(x) = x if |x| >= th else 0."""
    values = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(values) >= th, values, 0.0)
    return float(out) if out.ndim == 0 else out


def _as_batch(x: np.ndarray, width: int, name: str) -> np.ndarray:
    batch = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if batch.ndim != 2 or batch.shape[1] != width:
        raise ShapeError(f"{name} must have {width} columns, got shape {np.shape(x)}")
    return batch


def forward(net: Network, x: np.ndarray) -> ForwardTrace:
    x = _as_batch(x, net.layer1.rows, "input")
    s_h = x @ net.layer1.weights()
    h = quantize(net.quant, activate(net.activation, s_h))
    s_o = h @ net.layer2.weights()
    o = quantize(net.quant, activate(net.activation, s_o))
    return ForwardTrace(x=x, s_h=s_h, h=np.atleast_2d(h), s_o=s_o, o=np.atleast_2d(o))


def backward(net: Network, trace: ForwardTrace, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    target = _as_batch(target, net.layer2.cols, "target")
    if target.shape[0] != trace.o.shape[0]:
        raise ShapeError(f"target batch of {target.shape[0]} does not match trace batch of {trace.o.shape[0]}")
    o_bp = quantize(net.quant, (target - trace.o) * activate_derivative(net.activation, trace.s_o), 'backprop')
    o_bp = np.atleast_2d(o_bp)
    h_bp = quantize(net.quant, (o_bp @ net.layer2.weights().T) * activate_derivative(net.activation, trace.s_h), 'backprop')
    return o_bp, np.atleast_2d(h_bp)


def compute_pulse_updates(net: Network, trace: ForwardTrace, o_bp: np.ndarray, h_bp: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integer pulse counts for both layers. Thresholding acts per sample on each
    factor; the per-sample products are summed over the batch before rounding.
    """
    if h_bp.shape != trace.h.shape or o_bp.shape != trace.o.shape:
        raise ShapeError("backprop values do not match the forward trace")
    th, eta = net.threshold, net.learning_rate
    pre1 = apply_threshold(th, trace.x)
    post1 = apply_threshold(th, eta * h_bp)
    pre2 = apply_threshold(th, trace.h)
    post2 = apply_threshold(th, eta * o_bp)
    dn1 = round_half_away(pre1.T @ post1).astype(np.int64)
    dn2 = round_half_away(pre2.T @ post2).astype(np.int64)
    return dn1, dn2


def update_weights(net: Network, dn1: np.ndarray, dn2: np.ndarray):
    """Applies the pulse grids to every synapse at once."""
    if dn1.shape != net.layer1.g.shape or dn2.shape != net.layer2.g.shape:
        raise ShapeError(
            f"pulse grids {dn1.shape}, {dn2.shape} do not match layers {net.layer1.g.shape}, {net.layer2.g.shape}"
        )
    if np.any(dn1):
        net.layer1.g = apply_pulses(net.device, net.layer1.g, dn1)
    if np.any(dn2):
        net.layer2.g = apply_pulses(net.device, net.layer2.g, dn2)
    net.step += 1


def init_network(config: NetworkConfig, rng_seed: int) -> Network:
    """Conductances drawn i.i.d. uniform on [g_min, g_max] from a seeded generator."""
    device = config.device
    rng = np.random.default_rng(rng_seed)
    g1 = rng.uniform(device.g_min, device.g_max, size=(config.n_input, config.n_hidden))
    g2 = rng.uniform(device.g_min, device.g_max, size=(config.n_hidden, config.n_output))
    return Network(
        layer1=SynapseArray(g1, device),
        layer2=SynapseArray(g2, device),
        activation=config.activation,
        quant=config.quant,
        learning_rate=config.learning_rate,
        threshold=config.threshold,
        seed=int(rng_seed),
    )


def apply_config(net: Network, config: NetworkConfig):
    """Swaps in new activation/quantizer settings, e.g. after calibration."""
    net.activation = config.activation
    net.quant = config.quant
    net.learning_rate = config.learning_rate
    net.threshold = config.threshold


def save_snapshot(net: Network, path: Path, config_echo: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        np.savez_compressed(
            f,
            format_version=np.int64(SNAPSHOT_FORMAT_VERSION),
            config=np.array(yaml.safe_dump(config_echo, sort_keys=True)),
            g1=np.ascontiguousarray(net.layer1.g),
            g2=np.ascontiguousarray(net.layer2.g),
            seed=np.int64(net.seed),
            step=np.int64(net.step),
        )
    logging.info(f"Network snapshot saved to {path}")
    return path


def load_snapshot(path: Path) -> Tuple[Network, Dict[str, Any]]:
    """Returns the network and the flat config it was trained with."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Snapshot not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        version = int(data['format_version'])
        if version != SNAPSHOT_FORMAT_VERSION:
            raise DataFormatError(f"Unsupported snapshot format version {version} in {path}")
        config = yaml.safe_load(str(data['config']))
        g1, g2 = data['g1'], data['g2']
        seed, step = int(data['seed']), int(data['step'])

    net_config = network_config_from(config, n_input=g1.shape[0], n_output=g2.shape[1])
    if net_config.n_hidden != g1.shape[1] or g2.shape[0] != g1.shape[1]:
        raise ShapeError(f"snapshot grids {g1.shape}, {g2.shape} disagree with net.hidden={net_config.n_hidden}")
    net = Network(
        layer1=SynapseArray(np.array(g1), net_config.device),
        layer2=SynapseArray(np.array(g2), net_config.device),
        activation=net_config.activation,
        quant=net_config.quant,
        learning_rate=net_config.learning_rate,
        threshold=net_config.threshold,
        seed=seed,
        step=step,
    )
    return net, config
