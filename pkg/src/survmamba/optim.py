"""Rectified Adam with decoupled weight decay.

Moment estimates follow Adam. The variance-rectification length
rho_t = rho_inf - 2 t beta2^t / (1 - beta2^t), with
rho_inf = 2 / (1 - beta2) - 1, gates the update: while rho_t <= 4 the
step is plain bias-corrected momentum SGD; once rho_t > 4 the adaptive
step is scaled by the rectification factor. Weight decay is decoupled:
parameters shrink by (1 - lr * wd) each step, gradients untouched, so
zero gradients give pure geometric decay.
"""

from __future__ import annotations

import math

import numpy as np


def rho_inf(beta2: float) -> float:
    return 2.0 / (1.0 - beta2) - 1.0


def rho_t(beta2: float, t: int) -> float:
    b2t = beta2**t
    return rho_inf(beta2) - 2.0 * t * b2t / (1.0 - b2t)


def rectification(beta2: float, t: int) -> float:
    """Step-size multiplier of the rectified adaptive branch."""
    ri = rho_inf(beta2)
    rt = rho_t(beta2, t)
    return math.sqrt(((rt - 4.0) * (rt - 2.0) * ri) / ((ri - 4.0) * (ri - 2.0) * rt))


def radam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
               t: int, lr: float, weight_decay: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place update of a single parameter array (t counts from 1)."""
    param *= 1.0 - lr * weight_decay
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    if rho_t(beta2, t) > 4.0:
        v_hat = np.sqrt(v / (1.0 - beta2**t))
        param -= lr * rectification(beta2, t) * m_hat / (v_hat + eps)
    else:
        param -= lr * m_hat


class RAdam:
    """Optimizer over a list of (name, Tensor) parameters.

    Parameter data is repacked into one flat vector (each Tensor's
    ``data`` becomes a view into it), so a step is a handful of
    vectorized ops regardless of how many parameter tensors exist.
    The update math is radam_step applied to the flat vector.
    """

    def __init__(self, params, lr: float = 2e-4, weight_decay: float = 5e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        total = sum(p.data.size for _, p in self.params)
        self.flat = np.empty(total)
        self._slices = []
        off = 0
        for _, p in self.params:
            size = p.data.size
            sl = slice(off, off + size)
            self.flat[sl] = p.data.reshape(-1)
            p.data = self.flat[sl].reshape(p.data.shape)
            self._slices.append(sl)
            off += size
        self.gflat = np.zeros(total)
        self.m = np.zeros(total)
        self.v = np.zeros(total)
        self._s1 = np.empty(total)
        self._s2 = np.empty(total)

    def _gather_grads(self):
        for (_, p), sl in zip(self.params, self._slices):
            if p.grad is None:
                self.gflat[sl] = 0.0
            else:
                self.gflat[sl] = p.grad.reshape(-1)

    def step(self):
        self.t += 1
        self._gather_grads()
        # same math as radam_step, on preallocated scratch
        t, g, m, v, s1, s2 = self.t, self.gflat, self.m, self.v, self._s1, self._s2
        self.flat *= 1.0 - self.lr * self.weight_decay
        m *= self.beta1
        np.multiply(g, 1.0 - self.beta1, out=s1)
        m += s1
        v *= self.beta2
        np.multiply(g, g, out=s1)
        s1 *= 1.0 - self.beta2
        v += s1
        if rho_t(self.beta2, t) > 4.0:
            np.multiply(v, 1.0 / (1.0 - self.beta2**t), out=s1)
            np.sqrt(s1, out=s1)
            s1 += self.eps
            scale = self.lr * rectification(self.beta2, t) / (1.0 - self.beta1**t)
            np.multiply(m, scale, out=s2)
            s2 /= s1
            self.flat -= s2
        else:
            np.multiply(m, self.lr / (1.0 - self.beta1**t), out=s2)
            self.flat -= s2

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()
