"""
MLP Service
Small numpy multilayer perceptron with hand-written backpropagation and an Adam optimizer.
"""

from typing import Any, Dict, List, Sequence, Tuple

import numpy as np


class MLP:
    """
    Fully connected network: tanh hidden layers, linear output.

    Parameters are kept as a flat list [W0, b0, W1, b1, ...] so optimizers
    and gradient checks can walk them uniformly.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, output_gain: float = 1.0):
        """
        Initialize weights.

        Args:
            sizes: Layer widths from input to output
            rng: Generator for the initial weights
            output_gain: Multiplier on the last layer's initial weights
        """
        if len(sizes) < 2:
            raise ValueError("MLP needs at least an input and an output size")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for index, (fan_in, fan_out) in enumerate(zip(self.sizes, self.sizes[1:])):
            gain = output_gain if index == len(self.sizes) - 2 else 1.0
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * gain / np.sqrt(fan_in))
            self.biases.append(np.zeros(fan_out))

    def params(self) -> List[np.ndarray]:
        flat = []
        for weight, bias in zip(self.weights, self.biases):
            flat.extend((weight, bias))
        return flat

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        Evaluate the network on a batch.

        Returns:
            (outputs, cache) where cache holds each layer's input for backward()
        """
        h = np.atleast_2d(np.asarray(x, dtype=float))
        cache = []
        last = len(self.weights) - 1
        for index, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            cache.append(h)
            h = h @ weight + bias
            if index < last:
                h = np.tanh(h)
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: List[np.ndarray], grad_out: np.ndarray) -> List[np.ndarray]:
        """
        Backpropagate d(loss)/d(outputs) to every parameter.

        Returns:
            Gradients aligned with params()
        """
        grads: List[np.ndarray] = []
        delta = np.atleast_2d(grad_out)
        for index in reversed(range(len(self.weights))):
            layer_input = cache[index]
            grads.append(delta.sum(axis=0))
            grads.append(layer_input.T @ delta)
            if index > 0:
                # layer_input is the tanh output of the previous layer
                delta = (delta @ self.weights[index].T) * (1.0 - layer_input ** 2)
        grads.reverse()
        return grads

    def copy(self) -> 'MLP':
        clone = MLP.__new__(MLP)
        clone.sizes = self.sizes
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def to_dict(self) -> Dict[str, Any]:
        """JSON weight dump with shape metadata"""
        return {
            'sizes': list(self.sizes),
            'layers': [
                {'shape': list(w.shape), 'weight': w.ravel().tolist(), 'bias': b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MLP':
        model = cls.__new__(cls)
        model.sizes = tuple(data['sizes'])
        model.weights = [np.array(layer['weight'], dtype=float).reshape(layer['shape']) for layer in data['layers']]
        model.biases = [np.array(layer['bias'], dtype=float) for layer in data['layers']]
        return model


class Adam:
    """Adam optimizer updating parameter arrays in place"""

    def __init__(self, params: List[np.ndarray], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: List[np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for param, grad, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def clip_grad_norm(grads: List[np.ndarray], max_norm: float) -> Tuple[List[np.ndarray], float]:
    """Scale gradients so their global L2 norm is at most max_norm"""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        return [g * scale for g in grads], total
    return grads, total
