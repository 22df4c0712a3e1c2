"""Sequential network with an explicit tape for exact backpropagation."""

import copy

import numpy as np

from ..errors import DimensionError
from .layers import layer_from_spec


class Tape:
    """Record of one forward pass: per-layer caches and tapped activations."""

    def __init__(self, train, input_shape):
        self.train = train
        self.input_shape = input_shape
        self.caches = []
        self.activations = {}
        self.output_shape = None


class Network:
    """A fixed sequential stack of layers.

    Parameters live inside the layers; ``parameters()`` yields them in
    declaration order, which is also the checkpoint order.
    """

    def __init__(self, layers, dtype=np.float32):
        self.layers = list(layers)
        self.dtype = np.dtype(dtype)
        for i, layer in enumerate(self.layers):
            layer.name = f"layer {i} ({layer.kind})"

    @classmethod
    def from_specs(cls, specs, rng, dtype=np.float32):
        net = cls([layer_from_spec(s) for s in specs], dtype)
        for layer in net.layers:
            layer.init(rng, net.dtype)
        return net

    def specs(self):
        return [layer.spec() for layer in self.layers]

    def parameters(self):
        """List of (name, array) in declaration order."""
        out = []
        for i, layer in enumerate(self.layers):
            for key, arr in layer.params.items():
                out.append((f"{i}.{layer.kind}.{key}", arr))
        return out

    def buffers(self):
        out = []
        for i, layer in enumerate(self.layers):
            for key, arr in layer.buffers.items():
                out.append((f"{i}.{layer.kind}.{key}", arr))
        return out

    def param_arrays(self):
        return [arr for _, arr in self.parameters()]

    def n_parameters(self):
        return sum(arr.size for arr in self.param_arrays())

    def state_dict(self):
        return {name: arr.copy() for name, arr in self.parameters() + self.buffers()}

    def load_state_dict(self, state):
        for name, arr in self.parameters() + self.buffers():
            if state[name].shape != arr.shape:
                raise DimensionError(f"{name}: shape {state[name].shape} != {arr.shape}")
            arr[...] = state[name]

    def astype(self, dtype):
        """Deep copy with every parameter and buffer cast to ``dtype``."""
        net = copy.deepcopy(self)
        net.dtype = np.dtype(dtype)
        for layer in net.layers:
            for store in (layer.params, layer.buffers):
                for key in store:
                    store[key] = store[key].astype(dtype)
        return net

    def forward(self, x, train=False, rng=None, taps=()):
        """Run the stack; returns ``(output, tape)``.

        ``taps`` lists layer indices whose outputs are kept in
        ``tape.activations``.
        """
        x = np.asarray(x, dtype=self.dtype)
        tape = Tape(train, x.shape)
        for i, layer in enumerate(self.layers):
            x, cache = layer.forward(x, train, rng)
            tape.caches.append(cache)
            if i in taps:
                tape.activations[i] = x
        tape.output_shape = x.shape
        return x, tape

    def backward(self, tape, grad_output, inject=None):
        """Gradients of the recorded computation.

        ``inject`` maps a layer index to an extra gradient arriving at that
        layer's output (used for losses attached to intermediate outputs).
        Returns ``(param_grads, input_grad)``; ``param_grads`` follows
        ``parameters()`` order.
        """
        g = np.asarray(grad_output, dtype=self.dtype)
        if g.shape != tape.output_shape:
            raise DimensionError(
                f"output gradient shape {g.shape} != network output {tape.output_shape}")
        inject = inject or {}
        per_layer = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            if i in inject:
                extra = np.asarray(inject[i], dtype=self.dtype)
                if extra.shape != g.shape:
                    raise DimensionError(
                        f"{self.layers[i].name}: injected gradient {extra.shape} != {g.shape}")
                g = g + extra
            g, grads = self.layers[i].backward(tape.caches[i], g)
            per_layer[i] = grads
        flat = []
        for layer, grads in zip(self.layers, per_layer):
            for key in layer.params:
                flat.append(grads[key].astype(self.dtype, copy=False))
        return flat, g

    def kink_signatures(self, tape):
        return [layer.kink_signature(c) for layer, c in zip(self.layers, tape.caches)]
