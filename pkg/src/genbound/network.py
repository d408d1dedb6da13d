"""Homogeneous ReLU networks with manual forward and backward passes.

The model family is a chain of 1-D convolution blocks (valid convolution,
ReLU, average pooling with window equal to the kernel size) followed by
fully-connected ReLU layers and a linear readout scaled by 1/m**p, where
m is the width of the last hidden layer.  No layer carries a bias, so the
output is positively homogeneous of degree one in each layer's parameter
block.  That structural fact is what the norm-dynamics and bound modules
build on, and it is checked numerically in `checks`.

Conventions:
  - widths[l] is the post-pooling width m_l of layer l, widths[0] = d;
  - a conv layer with kernel size s maps width m_in = m_out*s + s - 1
    to m_out (conv produces m_out*s valid positions, pooling averages
    disjoint windows of s);
  - ReLU derivative at exactly zero is taken to be zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NetworkSpec",
    "Parameters",
    "ForwardTrace",
    "init_gaussian",
    "forward",
    "batch_outputs",
    "grad_f",
    "loss_and_grad",
    "layer_norms",
]

# Inputs are expected inside the unit ball; slightly larger norms only warn
# because downstream bounds stay valid with the norm factored in.
_NORM_WARN_TOL = 1e-9


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description.

    input_dim: d, length of the input vector.
    conv_kernels: kernel sizes (s_1, ..., s_LC) of the conv blocks.
    fc_widths: widths of the fully-connected hidden layers after the convs.
    output_width: m, width of the last hidden layer feeding the readout.
    norm_exponent: p in the output scaling 1/m**p.
    """

    input_dim: int
    conv_kernels: tuple[int, ...] = ()
    fc_widths: tuple[int, ...] = ()
    output_width: int = 1
    norm_exponent: float = 0.0
    widths: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "conv_kernels", tuple(int(s) for s in self.conv_kernels))
        object.__setattr__(self, "fc_widths", tuple(int(w) for w in self.fc_widths))
        if self.input_dim < 1:
            raise ValueError("input_dim must be a positive integer")
        if self.norm_exponent < 0:
            raise ValueError("norm_exponent must be nonnegative")
        widths = [self.input_dim]
        for i, s in enumerate(self.conv_kernels):
            if s < 1:
                raise ValueError("conv kernel sizes must be positive")
            m_in = widths[-1]
            # valid positions m_in - s + 1 must fill m_out pooling windows
            # of size s exactly: m_in = m_out*s + s - 1.
            if (m_in - s + 1) % s != 0 or (m_in - s + 1) // s < 1:
                raise ValueError(
                    f"conv layer {i + 1}: width {m_in} does not chain with "
                    f"kernel {s} (need m_in = m_out*{s} + {s - 1})"
                )
            widths.append((m_in - s + 1) // s)
        for i, w in enumerate(self.fc_widths):
            if w < 1:
                raise ValueError(f"fc layer {i + 1}: width must be positive")
            widths.append(w)
        if len(widths) < 2:
            raise ValueError("at least one hidden layer is required")
        if widths[-1] != self.output_width:
            raise ValueError(
                f"output_width {self.output_width} must equal the last "
                f"hidden width {widths[-1]}"
            )
        # receptive-field budget: pooled width times all kernels fits in d.
        span = widths[len(self.conv_kernels)]
        for s in self.conv_kernels:
            span *= s
        if self.conv_kernels and span > self.input_dim:
            raise ValueError("conv stack exceeds the input length")
        object.__setattr__(self, "widths", tuple(widths))

    @property
    def n_conv(self) -> int:
        return len(self.conv_kernels)

    @property
    def n_hidden(self) -> int:
        """L, the number of hidden layers (conv blocks plus fc layers)."""
        return len(self.widths) - 1

    @property
    def n_layers(self) -> int:
        """L + 1, hidden layers plus the readout layer."""
        return self.n_hidden + 1

    @property
    def kind(self) -> str:
        return "CNN" if self.conv_kernels else "FNN"

    @property
    def out_scale(self) -> float:
        """1/m**p applied to the readout."""
        return float(self.output_width) ** (-self.norm_exponent)

    def layer_shapes(self) -> list[tuple[int, ...]]:
        shapes: list[tuple[int, ...]] = []
        for l in range(1, self.n_hidden + 1):
            if l <= self.n_conv:
                shapes.append((self.conv_kernels[l - 1],))
            else:
                shapes.append((self.widths[l - 1], self.widths[l]))
        shapes.append((self.output_width,))
        return shapes

    def layer_sizes(self) -> list[int]:
        """q(l), the parameter count of each layer."""
        return [int(np.prod(s)) for s in self.layer_shapes()]


@dataclass
class Parameters:
    """Per-layer parameter arrays in their natural shapes.

    Conv layers hold the kernel (s,), fc layers the matrix (m_in, m_out)
    applied as z_out = relu(z_in @ A), the readout holds the vector (m,).
    """

    spec: NetworkSpec
    layers: list[np.ndarray]

    def __post_init__(self):
        shapes = self.spec.layer_shapes()
        if len(self.layers) != len(shapes):
            raise ValueError(f"expected {len(shapes)} layers, got {len(self.layers)}")
        for i, (arr, shape) in enumerate(zip(self.layers, shapes)):
            if arr.shape != shape:
                raise ValueError(f"layer {i + 1}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"layer {i + 1}: non-finite entries")

    def copy(self) -> "Parameters":
        return Parameters(self.spec, [arr.copy() for arr in self.layers])

    def add_scaled(self, deltas: list[np.ndarray], c: float) -> "Parameters":
        """New parameters `self + c*deltas`, leaving self untouched."""
        return Parameters(self.spec, [arr + c * d for arr, d in zip(self.layers, deltas)])

    def scale_layer(self, index: int, c: float) -> "Parameters":
        out = [arr.copy() for arr in self.layers]
        out[index] = out[index] * c
        return Parameters(self.spec, out)

    def norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(arr.ravel()) for arr in self.layers])

    def sq_norms(self) -> np.ndarray:
        return np.array([float(np.sum(arr * arr)) for arr in self.layers])

    def concat(self) -> np.ndarray:
        return np.concatenate([arr.ravel() for arr in self.layers])


@dataclass
class ForwardTrace:
    """Intermediates of one forward pass on a single input.

    z[l] is the post-layer activation (z[0] is the input), pre[l-1] the
    pre-activation of hidden layer l (for conv layers: all conv positions
    before pooling), conv_y[l-1] the ReLU output before pooling (None for
    fc layers), f the scalar output.
    """

    z: list[np.ndarray]
    pre: list[np.ndarray]
    conv_y: list[np.ndarray | None]
    f: float

    def kink_margin(self) -> float:
        """Smallest |pre-activation| across all hidden units."""
        return min(float(np.min(np.abs(p))) for p in self.pre)


def init_gaussian(spec: NetworkSpec, kappa: float, seed: int) -> Parameters:
    """Draw each layer from N(0, kappa^2/q(l) I) so E||layer||^2 = kappa^2."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    rng = np.random.default_rng(seed)
    layers = []
    for shape in spec.layer_shapes():
        q = int(np.prod(shape))
        layers.append(rng.normal(0.0, kappa / np.sqrt(q), size=shape))
    return Parameters(spec, layers)


def _check_inputs(spec: NetworkSpec, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"expected inputs of shape (n, {spec.input_dim}), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    max_norm = float(np.max(np.linalg.norm(X, axis=1)))
    if max_norm > 1.0 + _NORM_WARN_TOL:
        warnings.warn(f"input norm {max_norm:.6g} exceeds 1; bounds assume unit-ball inputs")
    return X


def _forward_batch(params: Parameters, X: np.ndarray):
    """Batched forward pass. Returns (outputs, activations, pre-activations)."""
    spec = params.spec
    Z = X
    zs = [Z]
    pres = []
    for l, W in enumerate(params.layers[:-1]):
        if l < spec.n_conv:
            s = spec.conv_kernels[l]
            m_out = spec.widths[l + 1]
            K = m_out * s
            pre = W[0] * Z[:, 0:K]
            for j in range(1, s):
                pre = pre + W[j] * Z[:, j : j + K]
            y = np.maximum(pre, 0.0)
            Z = y.reshape(Z.shape[0], m_out, s).mean(axis=2)
        else:
            pre = Z @ W
            Z = np.maximum(pre, 0.0)
        pres.append(pre)
        zs.append(Z)
    f = (Z @ params.layers[-1]) * spec.out_scale
    return f, zs, pres


def _backward_batch(params: Parameters, zs, pres, coef: np.ndarray):
    """Gradient of sum_i coef_i * f(x_i) with respect to every layer."""
    spec = params.spec
    grads: list[np.ndarray] = [np.empty(0)] * len(params.layers)
    grads[-1] = spec.out_scale * (zs[-1].T @ coef)
    G = spec.out_scale * np.outer(coef, params.layers[-1])
    for l in range(len(params.layers) - 2, -1, -1):
        W = params.layers[l]
        pre = pres[l]
        Zin = zs[l]
        if l < spec.n_conv:
            s = spec.conv_kernels[l]
            K = spec.widths[l + 1] * s
            D = np.repeat(G, s, axis=1) / s
            D[pre <= 0.0] = 0.0
            gw = np.empty(s)
            for j in range(s):
                gw[j] = np.sum(D * Zin[:, j : j + K])
            grads[l] = gw
            if l > 0:
                G = np.zeros_like(Zin)
                for j in range(s):
                    G[:, j : j + K] += W[j] * D
        else:
            D = np.where(pre > 0.0, G, 0.0)
            grads[l] = Zin.T @ D
            if l > 0:
                G = D @ W.T
    return grads


def forward(params: Parameters, x: np.ndarray) -> ForwardTrace:
    """Single-input forward pass that keeps all intermediates."""
    spec = params.spec
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.input_dim,):
        raise ValueError(f"expected input of shape ({spec.input_dim},), got {x.shape}")
    f, zs, pres = _forward_batch(params, _check_inputs(spec, x[None, :]))
    conv_y = []
    for l, pre in enumerate(pres):
        conv_y.append(np.maximum(pre[0], 0.0) if l < spec.n_conv else None)
    return ForwardTrace(
        z=[row[0] for row in zs],
        pre=[p[0] for p in pres],
        conv_y=conv_y,
        f=float(f[0]),
    )


def batch_outputs(params: Parameters, X: np.ndarray) -> np.ndarray:
    """Network outputs for a batch of inputs, shape (n,)."""
    X = _check_inputs(params.spec, X)
    f, _, _ = _forward_batch(params, X)
    return f


def grad_f(params: Parameters, x: np.ndarray) -> list[np.ndarray]:
    """Gradient of the scalar output with respect to each layer."""
    spec = params.spec
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.input_dim,):
        raise ValueError(f"expected input of shape ({spec.input_dim},), got {x.shape}")
    X = _check_inputs(spec, x[None, :])
    _, zs, pres = _forward_batch(params, X)
    return _backward_batch(params, zs, pres, np.ones(1))


def _loss_grad_outputs(params: Parameters, X: np.ndarray, y: np.ndarray, loss_power: int):
    """Empirical loss, its per-layer gradient, and the raw outputs."""
    X = _check_inputs(params.spec, X)
    y = np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise ValueError(f"expected targets of shape ({X.shape[0]},), got {y.shape}")
    if loss_power < 2 or int(loss_power) != loss_power:
        raise ValueError("loss_power must be an integer >= 2")
    n = X.shape[0]
    f, zs, pres = _forward_batch(params, X)
    res = f - y
    if loss_power == 2:
        loss = 0.5 * float(res @ res) / n
        coef = res / n
    else:
        a = int(loss_power)
        loss = float(np.sum(np.abs(res) ** a)) / (a * n)
        coef = np.sign(res) * np.abs(res) ** (a - 1) / n
    grads = _backward_batch(params, zs, pres, coef)
    return loss, grads, f


def loss_and_grad(params: Parameters, X: np.ndarray, y: np.ndarray, loss_power: int = 2):
    """Mean power loss (1/n) sum |f - y|^a / a and its layer gradients."""
    loss, grads, _ = _loss_grad_outputs(params, X, y, loss_power)
    return loss, grads


def layer_norms(params: Parameters) -> np.ndarray:
    """Euclidean norm of each layer's parameter block."""
    return params.norms()
