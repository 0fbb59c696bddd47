"""
Feed-forward network machinery with hand-written forward/backward passes.

One ``EncoderState`` type holds any small dense network: the denoising
autoencoder (encoder layer + softmax decoder layer) and the downstream
perceptron classifier both use it. The first ``encoder_depth`` layers form
the encoder whose output is the embedding.

Checkpoint format (``save_checkpoint``/``load_checkpoint``), a joblib dump of
a dict::

    {
        "format": "carol-encoder",
        "version": 1,
        "layers": [{"in_dim": int, "out_dim": int, "activation": str}, ...],
        "encoder_depth": int,
        "weights": [C-contiguous float64 array (out_dim, in_dim), ...],
        "biases": [float64 array (out_dim,), ...],
        "step_count": int,
    }

Optimizer moment buffers are not stored; a loaded state resumes with fresh
moments.
"""

import logging
import os
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import joblib
import numpy as np

from src.errors import (
    CacheMismatchError, ConfigError, DataError, DimensionMismatchError, DivergenceError, error_handler,
)

logger = logging.getLogger(__name__)

ACTIVATIONS = ('tanh', 'relu', 'softmax', 'identity')
CHECKPOINT_FORMAT = 'carol-encoder'
CHECKPOINT_VERSION = 1

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = 'tanh'

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ConfigError(f"Layer dimensions must be > 0, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"Unknown activation '{self.activation}' (expected one of {ACTIVATIONS})")


@dataclass
class EncoderState:
    """Parameters, Adam moment buffers and step counter of a network."""
    layers: List[LayerSpec]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    m_weights: List[np.ndarray]
    v_weights: List[np.ndarray]
    m_biases: List[np.ndarray]
    v_biases: List[np.ndarray]
    step_count: int = 0
    encoder_depth: int = 1

    def __post_init__(self):
        for i, spec in enumerate(self.layers):
            if spec.activation == 'softmax' and i != len(self.layers) - 1:
                raise ConfigError("softmax is only allowed as the final layer activation")
            if i > 0 and self.layers[i - 1].out_dim != spec.in_dim:
                raise ConfigError(f"Layer {i} expects {spec.in_dim} inputs but layer {i - 1} "
                                  f"produces {self.layers[i - 1].out_dim}")
            shapes = [(spec.out_dim, spec.in_dim)] * 3 + [(spec.out_dim,)] * 3
            arrays = [self.weights[i], self.m_weights[i], self.v_weights[i],
                      self.biases[i], self.m_biases[i], self.v_biases[i]]
            for shape, array in zip(shapes, arrays):
                if array.shape != shape:
                    raise ConfigError(f"Layer {i} parameter shape {array.shape} != {shape}")
        if not 1 <= self.encoder_depth <= len(self.layers):
            raise ConfigError(f"encoder_depth {self.encoder_depth} out of range")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def embedding_dim(self) -> int:
        return self.layers[self.encoder_depth - 1].out_dim

    def copy(self) -> 'EncoderState':
        return EncoderState(
            layers=list(self.layers),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            m_weights=[m.copy() for m in self.m_weights],
            v_weights=[v.copy() for v in self.v_weights],
            m_biases=[m.copy() for m in self.m_biases],
            v_biases=[v.copy() for v in self.v_biases],
            step_count=self.step_count,
            encoder_depth=self.encoder_depth,
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.weights + self.biases)


@dataclass
class ForwardCache:
    """Layer inputs and outputs recorded by :func:`forward`."""
    inputs: List[np.ndarray]
    outputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    n_layers: int
    step_count: int
    state_id: int
    batched: bool


@dataclass
class Gradients:
    """Per-parameter gradients plus the gradient w.r.t. the network input."""
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    input: Optional[np.ndarray] = None

    def scaled(self, factor: float) -> 'Gradients':
        return Gradients(
            weights=[factor * w for w in self.weights],
            biases=[factor * b for b in self.biases],
            input=None if self.input is None else factor * self.input,
        )

    def __add__(self, other: 'Gradients') -> 'Gradients':
        return Gradients(
            weights=[a + b for a, b in zip(self.weights, other.weights)],
            biases=[a + b for a, b in zip(self.biases, other.biases)],
            input=None,
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.weights + self.biases)


# ----------------------
# Activations
# ----------------------

def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == 'tanh':
        return np.tanh(z)
    if kind == 'relu':
        return np.maximum(z, 0.0)
    if kind == 'softmax':
        shifted = np.exp(z - z.max(axis=1, keepdims=True))
        return shifted / shifted.sum(axis=1, keepdims=True)
    return z


def _activation_backward(kind: str, z: np.ndarray, a: np.ndarray, grad_a: np.ndarray) -> np.ndarray:
    if kind == 'tanh':
        return grad_a * (1.0 - a * a)
    if kind == 'relu':
        return grad_a * (z > 0)
    if kind == 'softmax':
        return a * (grad_a - np.sum(grad_a * a, axis=1, keepdims=True))
    return grad_a


# ----------------------
# Forward / backward
# ----------------------

def forward(state: EncoderState, inputs: np.ndarray,
            n_layers: Optional[int] = None) -> Tuple[np.ndarray, ForwardCache]:
    """
    Run the network (or its first ``n_layers`` layers) on one vector or a batch.

    Args:
        state: Network state
        inputs: Vector (in_dim,) or batch (batch, in_dim)
        n_layers: Number of leading layers to run (default: all)

    Returns:
        (output, cache) where output has the same batching as ``inputs``

    Raises:
        DimensionMismatchError: If the input width differs from the first layer
    """
    x = np.asarray(inputs, dtype=float)
    batched = x.ndim == 2
    x = np.atleast_2d(x)
    if x.shape[1] != state.in_dim:
        raise DimensionMismatchError(f"Input has {x.shape[1]} features, network expects {state.in_dim}")

    depth = len(state.layers) if n_layers is None else n_layers
    if not 1 <= depth <= len(state.layers):
        raise ConfigError(f"n_layers must lie in [1, {len(state.layers)}], got {depth}")

    cache = ForwardCache(inputs=[], outputs=[], pre_activations=[], n_layers=depth,
                         step_count=state.step_count, state_id=id(state), batched=batched)
    activation = x
    for spec, W, b in zip(state.layers[:depth], state.weights, state.biases):
        cache.inputs.append(activation)
        z = activation @ W.T + b
        activation = _activate(spec.activation, z)
        cache.pre_activations.append(z)
        cache.outputs.append(activation)

    return (activation if batched else activation[0]), cache


def encode(state: EncoderState, inputs: np.ndarray) -> np.ndarray:
    """Embedding: output of the first ``encoder_depth`` layers."""
    output, _ = forward(state, inputs, n_layers=state.encoder_depth)
    return output


def backward(state: EncoderState, cache: ForwardCache, output_grad: np.ndarray) -> Gradients:
    """
    Backpropagate ``output_grad`` through the layers recorded in ``cache``.

    Gradients of layers beyond the cached depth are zero. For a batch,
    parameter gradients are summed over rows.

    Args:
        state: The state used for the matching forward call
        cache: Cache returned by :func:`forward`
        output_grad: Gradient w.r.t. the forward output, same shape

    Returns:
        Gradients for every parameter and for the input

    Raises:
        CacheMismatchError: If the cache belongs to another state or step
    """
    if cache.state_id != id(state) or cache.step_count != state.step_count:
        raise CacheMismatchError("Activation cache does not belong to this network state")

    grad = np.atleast_2d(np.asarray(output_grad, dtype=float))
    if grad.shape != cache.outputs[-1].shape:
        raise CacheMismatchError(f"Output gradient shape {grad.shape} does not match "
                                 f"cached output {cache.outputs[-1].shape}")

    grad_w = [np.zeros_like(W) for W in state.weights]
    grad_b = [np.zeros_like(b) for b in state.biases]

    for i in reversed(range(cache.n_layers)):
        spec = state.layers[i]
        dz = _activation_backward(spec.activation, cache.pre_activations[i], cache.outputs[i], grad)
        grad_w[i] = dz.T @ cache.inputs[i]
        grad_b[i] = dz.sum(axis=0)
        grad = dz @ state.weights[i]

    return Gradients(weights=grad_w, biases=grad_b, input=grad if cache.batched else grad[0])


def zero_gradients(state: EncoderState) -> Gradients:
    return Gradients(weights=[np.zeros_like(W) for W in state.weights],
                     biases=[np.zeros_like(b) for b in state.biases])


# ----------------------
# Optimizer
# ----------------------

def _adam(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
          lr: float, t: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    m = BETA1 * m + (1.0 - BETA1) * grad
    v = BETA2 * v + (1.0 - BETA2) * grad * grad
    m_hat = m / (1.0 - BETA1 ** t)
    v_hat = v / (1.0 - BETA2 ** t)
    return param - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS), m, v


def opt_step(state: EncoderState, grads: Gradients, lr: float,
             component: str = 'total') -> EncoderState:
    """
    One bias-corrected adaptive-moment update (0.9 / 0.999 / 1e-8).

    Args:
        state: Current state (left untouched)
        grads: Gradients shape-congruent with the parameters
        lr: Learning rate > 0
        component: Loss component name reported if gradients are non-finite

    Returns:
        New state with step_count incremented

    Raises:
        DivergenceError: If any gradient or updated parameter is non-finite
    """
    if lr <= 0:
        raise ConfigError(f"Learning rate must be > 0, got {lr}")
    if len(grads.weights) != len(state.weights) or any(
            g.shape != p.shape for g, p in zip(grads.weights + grads.biases, state.weights + state.biases)):
        raise DimensionMismatchError("Gradients are not shape-congruent with the parameters")
    if not grads.is_finite():
        raise DivergenceError(f"Non-finite gradients from the {component} loss at step {state.step_count}",
                              component=component)

    t = state.step_count + 1
    new = state.copy()
    new.step_count = t
    for i in range(len(state.layers)):
        new.weights[i], new.m_weights[i], new.v_weights[i] = _adam(
            state.weights[i], grads.weights[i], state.m_weights[i], state.v_weights[i], lr, t)
        new.biases[i], new.m_biases[i], new.v_biases[i] = _adam(
            state.biases[i], grads.biases[i], state.m_biases[i], state.v_biases[i], lr, t)

    if not new.is_finite():
        raise DivergenceError(f"Parameters became non-finite at step {t}", component=component)
    return new


# ----------------------
# Construction and checkpoints
# ----------------------

def init_network(seed: int, layers: Sequence[LayerSpec], encoder_depth: Optional[int] = None) -> EncoderState:
    """
    Glorot-uniform weights in +-sqrt(6/(in+out)), zero biases, zero moments.

    Args:
        seed: Generator seed
        layers: Layer specifications
        encoder_depth: Number of leading layers forming the encoder (default: all)

    Returns:
        Fresh EncoderState
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in layers:
        bound = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        weights.append(rng.uniform(-bound, bound, size=(spec.out_dim, spec.in_dim)))
        biases.append(np.zeros(spec.out_dim))

    return EncoderState(
        layers=list(layers),
        weights=weights,
        biases=biases,
        m_weights=[np.zeros_like(w) for w in weights],
        v_weights=[np.zeros_like(w) for w in weights],
        m_biases=[np.zeros_like(b) for b in biases],
        v_biases=[np.zeros_like(b) for b in biases],
        step_count=0,
        encoder_depth=len(layers) if encoder_depth is None else encoder_depth,
    )


def init_encoder(seed: int, feat_dim: int, emb_dim: int) -> EncoderState:
    """
    Denoising autoencoder: [feat_dim -> emb_dim, tanh] + [emb_dim -> feat_dim, softmax].

    Args:
        seed: Generator seed
        feat_dim: Hashed feature dimension
        emb_dim: Embedding dimension

    Returns:
        Fresh EncoderState with encoder_depth 1
    """
    layers = [LayerSpec(feat_dim, emb_dim, 'tanh'), LayerSpec(emb_dim, feat_dim, 'softmax')]
    return init_network(seed, layers, encoder_depth=1)


@error_handler('save_checkpoint')
def save_checkpoint(state: EncoderState, path: str) -> str:
    """
    Write the versioned checkpoint described in the module docstring.

    Args:
        state: State to save
        path: Destination file

    Returns:
        The path written
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    payload = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'layers': [asdict(spec) for spec in state.layers],
        'encoder_depth': state.encoder_depth,
        'weights': [np.ascontiguousarray(w) for w in state.weights],
        'biases': [np.ascontiguousarray(b) for b in state.biases],
        'step_count': state.step_count,
    }
    joblib.dump(payload, path)
    logger.info(f"Saved encoder checkpoint to {path}")
    return path


@error_handler('load_checkpoint')
def load_checkpoint(path: str) -> EncoderState:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        DataError: If the file is not a checkpoint of a supported version
    """
    if not os.path.exists(path):
        raise DataError(f"Checkpoint not found: {path}")
    payload = joblib.load(path)
    if not isinstance(payload, dict) or payload.get('format') != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not an encoder checkpoint")
    if payload.get('version') != CHECKPOINT_VERSION:
        raise DataError(f"Unsupported checkpoint version {payload.get('version')} in {path}")

    weights = [np.asarray(w, dtype=float) for w in payload['weights']]
    biases = [np.asarray(b, dtype=float) for b in payload['biases']]
    state = EncoderState(
        layers=[LayerSpec(**spec) for spec in payload['layers']],
        weights=weights,
        biases=biases,
        m_weights=[np.zeros_like(w) for w in weights],
        v_weights=[np.zeros_like(w) for w in weights],
        m_biases=[np.zeros_like(b) for b in biases],
        v_biases=[np.zeros_like(b) for b in biases],
        step_count=int(payload['step_count']),
        encoder_depth=int(payload['encoder_depth']),
    )
    logger.info(f"Loaded encoder checkpoint from {path}")
    return state
