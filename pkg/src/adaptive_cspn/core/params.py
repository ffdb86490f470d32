"""Configuration value types and the sigmoid-normalised assembly weights.

``PropagationConfig`` fixes the kernel sizes and the iteration checkpoints
shared by every propagation variant; ``ObjectiveConfig`` carries the training
objective weights; ``AssemblyWeights`` holds the per-pixel logits over kernels
(alpha) and over iteration checkpoints per kernel (lambda).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from adaptive_cspn.core.errors import ConfigurationError, DimensionError

Pixel = Tuple[int, int]


@dataclass(frozen=True)
class PropagationConfig:
    """Kernel sizes, iteration checkpoints and channel count of a propagation."""

    kernel_sizes: Tuple[int, ...] = (3, 5, 7)
    iteration_checkpoints: Tuple[int, ...] = (3, 6, 9, 12)
    channels: int = 1
    minimum_configuration: Tuple[int, int] = (3, 3)

    def __post_init__(self) -> None:
        kernels = tuple(int(k) for k in self.kernel_sizes)
        checkpoints = tuple(int(t) for t in self.iteration_checkpoints)
        object.__setattr__(self, "kernel_sizes", kernels)
        object.__setattr__(self, "iteration_checkpoints", checkpoints)
        object.__setattr__(
            self, "minimum_configuration", tuple(int(v) for v in self.minimum_configuration)
        )
        if not kernels:
            raise ConfigurationError("kernel_sizes must not be empty")
        for k in kernels:
            if k < 3 or k % 2 == 0:
                raise ConfigurationError(f"kernel size must be odd and >= 3, got {k}")
        if any(b <= a for a, b in zip(kernels, kernels[1:])):
            raise ConfigurationError(f"kernel_sizes must be strictly increasing: {kernels}")
        if not checkpoints:
            raise ConfigurationError("iteration_checkpoints must not be empty")
        if checkpoints[0] < 1:
            raise ConfigurationError("iteration checkpoints must be positive")
        if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
            raise ConfigurationError(
                f"iteration_checkpoints must be strictly increasing: {checkpoints}"
            )
        if int(self.channels) < 1:
            raise ConfigurationError(f"channels must be positive, got {self.channels}")
        if len(self.minimum_configuration) != 2:
            raise ConfigurationError("minimum_configuration must be a (kernel, iterations) pair")

    @property
    def k_max(self) -> int:
        return self.kernel_sizes[-1]

    @property
    def n_steps(self) -> int:
        return self.iteration_checkpoints[-1]

    @property
    def num_kernels(self) -> int:
        return len(self.kernel_sizes)

    @property
    def num_checkpoints(self) -> int:
        return len(self.iteration_checkpoints)

    @property
    def cost_normalizer(self) -> int:
        """N * k_max^2, the cost of the largest configuration."""
        return self.n_steps * self.k_max * self.k_max

    def kernel_index(self, kernel_size: int) -> int:
        try:
            return self.kernel_sizes.index(int(kernel_size))
        except ValueError:
            raise ConfigurationError(
                f"kernel size {kernel_size} is not one of {self.kernel_sizes}"
            ) from None

    def checkpoint_index(self, step: int) -> Optional[int]:
        """Index of ``step`` in the checkpoint list, ``None`` for other steps."""
        try:
            return self.iteration_checkpoints.index(int(step))
        except ValueError:
            return None

    def floor_configuration(self) -> Tuple[int, int]:
        """Smallest configured (kernel, iterations) not below the minimum."""
        min_k, min_t = self.minimum_configuration
        k_floor = next((k for k in self.kernel_sizes if k >= min_k), self.k_max)
        t_floor = next((t for t in self.iteration_checkpoints if t >= min_t), self.n_steps)
        return k_floor, t_floor


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights of the training objective and optional normalised budgets."""

    eta1: float = 0.0005
    eta2: float = 0.1
    eta2_prime: float = 1.0
    eta3: float = 1.0
    latency_budget: Optional[float] = None
    memory_budget: Optional[float] = None
    depth_scale: float = 1e-3

    def __post_init__(self) -> None:
        for name in ("eta1", "eta2", "eta2_prime", "eta3"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise ConfigurationError(f"{name} must be a finite non-negative number")
        for name in ("latency_budget", "memory_budget"):
            value = getattr(self, name)
            if value is not None and not (0.0 < float(value) <= 1.0):
                raise ConfigurationError(f"{name} must lie in (0, 1], got {value}")
        if not float(self.depth_scale) > 0:
            raise ConfigurationError("depth_scale must be positive")


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function without overflow for large negative inputs."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_sigmoid(z: np.ndarray) -> np.ndarray:
    """log sigma(z) = -log(1 + e^-z), finite for every finite z."""
    return -np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def normalize_logits(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """sigma(l) / sum(sigma(l)) along ``axis``.

    在对数域计算：所有 sigma 同时下溢为 0 时结果仍有定义，例如
    全部 logit 为 -800 时得到均匀权重。
    """
    ls = log_sigmoid(logits)
    ls = ls - ls.max(axis=axis, keepdims=True)
    e = np.exp(ls)
    return e / e.sum(axis=axis, keepdims=True)


def normalize_logits_backward(
    logits: np.ndarray, grad_normalized: np.ndarray, axis: int = -1
) -> np.ndarray:
    """Pull a gradient on the normalised weights back onto the logits.

    d w_i / d l_j = (delta_ij w_i - w_i w_j) (1 - sigma(l_j)), written with the
    normalised weights so it never divides by a vanishing sum.
    """
    weights = normalize_logits(logits, axis=axis)
    inner = (grad_normalized * weights).sum(axis=axis, keepdims=True)
    return (grad_normalized - inner) * weights * sigmoid(-np.asarray(logits, dtype=np.float64))


@dataclass
class AssemblyWeights:
    """Per-pixel kernel logits (H, W, K) and checkpoint logits (H, W, K, T)."""

    alpha_logits: np.ndarray
    lambda_logits: np.ndarray

    def __post_init__(self) -> None:
        self.alpha_logits = np.array(self.alpha_logits, dtype=np.float64)
        self.lambda_logits = np.array(self.lambda_logits, dtype=np.float64)
        if self.alpha_logits.ndim != 3 or self.lambda_logits.ndim != 4:
            raise DimensionError("alpha logits must be (H, W, K) and lambda logits (H, W, K, T)")
        if self.lambda_logits.shape[:3] != self.alpha_logits.shape:
            raise DimensionError(
                f"lambda logits {self.lambda_logits.shape} do not match alpha {self.alpha_logits.shape}"
            )
        if not (np.isfinite(self.alpha_logits).all() and np.isfinite(self.lambda_logits).all()):
            raise DimensionError("assembly logits must be finite")

    @classmethod
    def uniform(cls, height: int, width: int, config: PropagationConfig) -> "AssemblyWeights":
        k, t = config.num_kernels, config.num_checkpoints
        return cls(np.zeros((height, width, k)), np.zeros((height, width, k, t)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.alpha_logits.shape[0], self.alpha_logits.shape[1]

    def alpha(self) -> np.ndarray:
        return normalize_logits(self.alpha_logits, axis=-1)

    def lambdas(self) -> np.ndarray:
        return normalize_logits(self.lambda_logits, axis=-1)

    def check_config(self, config: PropagationConfig) -> None:
        if self.alpha_logits.shape[2] != config.num_kernels:
            raise DimensionError(
                f"weights carry {self.alpha_logits.shape[2]} kernels, config has {config.num_kernels}"
            )
        if self.lambda_logits.shape[3] != config.num_checkpoints:
            raise DimensionError(
                f"weights carry {self.lambda_logits.shape[3]} checkpoints, "
                f"config has {config.num_checkpoints}"
            )


def normalized_alpha(weights: AssemblyWeights, x: Pixel) -> np.ndarray:
    """Kernel mixture alpha_x(k) at one pixel."""
    y, col = x
    return normalize_logits(weights.alpha_logits[y, col])


def normalized_lambda(weights: AssemblyWeights, x: Pixel, k: int) -> np.ndarray:
    """Checkpoint mixture lambda_x(k, t) at one pixel for kernel index ``k``."""
    y, col = x
    return normalize_logits(weights.lambda_logits[y, col, k])


__all__: List[str] = [
    "AssemblyWeights",
    "ObjectiveConfig",
    "PropagationConfig",
    "log_sigmoid",
    "normalize_logits",
    "normalize_logits_backward",
    "normalized_alpha",
    "normalized_lambda",
    "sigmoid",
]

