"""Parameter initialization and Adadelta updates.

Adadelta here is the learning-rate-scaled form: the canonical accumulator
ratio is multiplied by an explicit lr (default 0.001) before being applied.
"""

import numpy as np

from .cell import GradientSet
from .numerics import NumericalError


def xavier_init(params, rng):
    """Fill every weight matrix uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).

    Biases start at zero except the erase-gate bias b_f, which starts at 1 so
    fresh cells barely erase. The standard variant keeps its surprisal
    weights V_* at zero. Draw order follows PARAM_KEYS, so equal seeds give
    bit-identical parameters.
    """
    for name, block in params.blocks():
        if name == "b_f":
            block.fill(1.0)
        elif block.ndim == 1:
            block.fill(0.0)
        else:
            fan_out, fan_in = block.shape
            a = np.sqrt(6.0 / (fan_in + fan_out))
            draw = rng.uniform(block.shape) * (2.0 * a) - a
            if name.startswith("V_") and params.variant == "standard":
                # burn the draw anyway: equal seeds then give every variant
                # identical W/U/b/W_y, which keeps ablations comparable
                block.fill(0.0)
            else:
                block[...] = draw.astype(block.dtype)
    return params


class AdadeltaState:
    """Running E[g^2] and E[dx^2] accumulators, one block per trainable block."""

    def __init__(self, params, rho=0.95, eps=1e-6, lr=0.001):
        self.rho = float(rho)
        self.eps = float(eps)
        self.lr = float(lr)
        self.eg2 = GradientSet.zeros_like(params)
        self.edx2 = GradientSet.zeros_like(params)


def adadelta_step(params, grads, state):
    """One Adadelta update in place; returns params.

    The E[dx^2] accumulator tracks the unscaled accumulator-ratio step and lr
    only scales the applied update, the same convention the major frameworks
    use; lr=1 recovers the canonical method. Non-finite gradients abort with
    the offending block named rather than poisoning the accumulators.
    """
    rho, eps, lr = state.rho, state.eps, state.lr
    for name in params.trainable_keys():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in block {name}")
        eg2 = state.eg2[name]
        edx2 = state.edx2[name]
        eg2 *= rho
        eg2 += (1.0 - rho) * g * g
        delta = np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * g
        edx2 *= rho
        edx2 += (1.0 - rho) * delta * delta
        getattr(params, name)[...] -= lr * delta
    return params


def clip_gradients(grads, max_norm):
    """Rescale all blocks together if the global L2 norm exceeds max_norm."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = grads.global_norm()
    if norm > max_norm:
        grads.scale_(max_norm / norm)
    return grads
