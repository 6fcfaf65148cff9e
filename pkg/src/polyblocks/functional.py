"""Backend-agnostic op layer.

Block forward passes are written once against these functions; each call
dispatches on the operand type, running on the raw numpy kernels for plain
arrays and on the tape for :class:`~polyblocks.autodiff.Var` operands.
Mixing is allowed: if any operand is a Var the whole op joins the tape.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .autodiff import Var, lift


def _tracing(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


def matmul(a, b):
    if _tracing(a, b):
        return lift(a) @ lift(b)
    return T.matmul(a, b)


def add(a, b):
    if _tracing(a, b):
        return lift(a) + lift(b)
    return np.asarray(a) + np.asarray(b)


def sub(a, b):
    if _tracing(a, b):
        return lift(a) - lift(b)
    return np.asarray(a) - np.asarray(b)


def hadamard(a, b):
    if _tracing(a, b):
        return lift(a) * lift(b)
    return T.hadamard(a, b)


def mul(a, b):
    """Elementwise product with broadcasting (hadamard is the strict form)."""
    if _tracing(a, b):
        return lift(a) * lift(b)
    return np.asarray(a) * np.asarray(b)


def scale(a, s: float):
    if _tracing(a):
        return a.scale(s)
    return np.asarray(a) * s


def transpose(a, perm=None):
    if _tracing(a):
        return a.transpose(perm)
    return T.transpose(a, perm)


def reshape(a, shape):
    if _tracing(a):
        return a.reshape(shape)
    return T.reshape(a, shape)


def softmax_rows(a):
    if _tracing(a):
        return a.softmax_rows()
    return T.softmax_rows(a)


def global_avg_pool(a):
    if _tracing(a):
        return a.global_avg_pool()
    return T.global_avg_pool(a)


def replicate_rows(a, m: int):
    if _tracing(a):
        return a.replicate_rows(m)
    return T.replicate_rows(a, m)


def conv2d(x, kern, stride: int = 1, pad: int = 0):
    if _tracing(x, kern):
        return lift(x).conv2d(lift(kern), stride=stride, pad=pad)
    return T.conv2d(x, kern, stride=stride, pad=pad)


def maxpool2d(x, k: int, stride=None, pad: int = 0):
    if _tracing(x):
        return x.maxpool2d(k, stride=stride, pad=pad)
    return T.maxpool2d(x, k, stride=stride, pad=pad)


def batchnorm(x, gamma, beta, eps: float = 1e-5):
    if _tracing(x, gamma, beta):
        return lift(x).batchnorm(lift(gamma), lift(beta), eps=eps)
    return T.batchnorm(x, gamma, beta, eps=eps)


def data_of(a) -> np.ndarray:
    """The underlying array, whichever backend produced it."""
    return a.data if isinstance(a, Var) else np.asarray(a)
