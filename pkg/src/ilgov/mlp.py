"""Small fully-connected networks trained from scratch.

Two hidden ReLU layers feed a linear output layer; classification heads put
softmax cross-entropy on top, the Q-value variant regresses one selected
output with squared error. Everything is numpy with explicit seeds, and the
backward pass is written to be verifiable against finite differences.
"""
from __future__ import annotations

import numpy as np


class MLP:
    def __init__(self, in_dim: int, hidden: tuple[int, ...], out_dim: int,
                 seed: int):
        self.dims = (in_dim, *hidden, out_dim)
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for a, b in zip(self.dims[:-1], self.dims[1:]):
            limit = np.sqrt(6.0 / a)  # fan-in scaled uniform, ReLU friendly
            self.weights.append(rng.uniform(-limit, limit, size=(a, b)))
            self.biases.append(np.zeros(b))

    def copy(self) -> "MLP":
        other = MLP.__new__(MLP)
        other.dims = self.dims
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w + b, 0.0)
        return x @ self.weights[-1] + self.biases[-1]

    def forward_cached(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [x]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w + b, 0.0)
            acts.append(x)
        return x @ self.weights[-1] + self.biases[-1], acts

    def backward(self, acts: list[np.ndarray], dout: np.ndarray):
        """Gradients of a scalar loss given d(loss)/d(logits)."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = dout
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = acts[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (acts[layer] > 0)
        return grads_w, grads_b

    # flat parameter views for optimizers, checkpoints, finite differences
    def get_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases)
                               for a in pair])

    def set_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for i in range(len(self.weights)):
            for arr in (self.weights[i], self.biases[i]):
                n = arr.size
                arr[...] = flat[pos:pos + n].reshape(arr.shape)
                pos += n
        if pos != flat.size:
            raise ValueError("flat parameter size mismatch")


class Adam:
    def __init__(self, n_params: int, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_loss_grad(net: MLP, x: np.ndarray, labels: np.ndarray,
                            smoothing: float = 0.0):
    """Mean softmax cross-entropy and flat parameter gradient.

    smoothing spreads that fraction of each target over all classes, which
    bounds the loss-optimal logit gap at log((1-s)K/s): confidence saturates
    instead of growing with training length, keeping a long-trained network
    revisable by a short retraining budget at the same learning rate.
    """
    logits, acts = net.forward_cached(x)
    probs = softmax(logits)
    n, k = logits.shape
    target = np.full_like(probs, smoothing / k)
    target[np.arange(n), labels] += 1.0 - smoothing
    loss = -(target * np.log(probs + 1e-300)).sum(axis=1).mean()
    dlogits = (probs - target) / n
    gw, gb = net.backward(acts, dlogits)
    flat = np.concatenate([a.ravel() for pair in zip(gw, gb) for a in pair])
    return loss, flat


def q_loss_grad(net: MLP, x: np.ndarray, actions: np.ndarray,
                targets: np.ndarray):
    """Mean squared error on the selected outputs and flat gradient."""
    q, acts = net.forward_cached(x)
    n = q.shape[0]
    picked = q[np.arange(n), actions]
    err = picked - targets
    loss = 0.5 * float(err @ err) / n
    dq = np.zeros_like(q)
    dq[np.arange(n), actions] = err / n
    gw, gb = net.backward(acts, dq)
    flat = np.concatenate([a.ravel() for pair in zip(gw, gb) for a in pair])
    return loss, flat


def train_classifier(net: MLP, x: np.ndarray, labels: np.ndarray, *,
                     epochs: int, batch_size: int, lr: float, seed: int,
                     smoothing: float = 0.0, opt: Adam | None = None) -> MLP:
    """In-place minibatch Adam training; returns the same network."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(seed)
    opt = opt or Adam(net.get_flat().size, lr=lr)
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            _, grad = cross_entropy_loss_grad(net, x[idx], labels[idx],
                                              smoothing)
            net.set_flat(opt.step(net.get_flat(), grad))
    return net


def finite_diff_flat(loss_fn, net: MLP, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of loss_fn(net) over flat parameters."""
    base = net.get_flat().copy()
    grad = np.empty_like(base)
    for i in range(base.size):
        for sign in (1.0, -1.0):
            probe = base.copy()
            probe[i] += sign * h
            net.set_flat(probe)
            if sign > 0:
                up = loss_fn(net)
            else:
                down = loss_fn(net)
        grad[i] = (up - down) / (2 * h)
    net.set_flat(base)
    return grad
