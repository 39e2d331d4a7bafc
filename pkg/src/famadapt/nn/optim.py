"""Adam, global-norm clipping, learning-rate schedules and the gradient entry point."""

from __future__ import annotations

import math

import numpy as np


class NonFiniteLossError(FloatingPointError):
    def __init__(self, value, context=""):
        self.value = value
        self.context = context
        super().__init__(f"non-finite loss {value!r}" + (f" ({context})" if context else ""))


def gradient(params, loss_fn, context=""):
    """Gradients of the scalar ``loss_fn()`` with respect to every tensor in ``params``.

    ``params`` maps names to Tensors. Returns ``(loss_value, {name: grad})``;
    a parameter the loss does not depend on gets an all-zero gradient.
    """
    for t in params.values():
        t.grad = None
    loss = loss_fn()
    value = float(loss.data)
    if not math.isfinite(value):
        raise NonFiniteLossError(value, context)
    loss.backward()
    grads = {}
    for name, t in params.items():
        grads[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        t.grad = None
    return value, grads


def clip_grad_norm(grads, max_norm):
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


def linear_lr(step, base_lr, total_steps):
    return base_lr * (1.0 - step / total_steps)


def constant_lr(step, base_lr, total_steps=None):
    return base_lr


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(t.data) for n, t in params.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in params.items()}
        self.t = {n: 0 for n in params}

    def step(self, grads, lr, names=None):
        """Update the named parameters only; others keep data and moments untouched."""
        b1, b2 = self.beta1, self.beta2
        for name in names if names is not None else grads:
            g = grads[name]
            self.t[name] += 1
            t = self.t[name]
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1**t)
            vhat = v / (1 - b2**t)
            p = self.params[name]
            p.data = p.data - (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)

    def state(self):
        return {
            "m": {n: a.copy() for n, a in self.m.items()},
            "v": {n: a.copy() for n, a in self.v.items()},
            "t": dict(self.t),
        }

    def load_state(self, state):
        for n in self.params:
            self.m[n] = np.array(state["m"][n], dtype=self.params[n].data.dtype)
            self.v[n] = np.array(state["v"][n], dtype=self.params[n].data.dtype)
            self.t[n] = int(state["t"][n])
