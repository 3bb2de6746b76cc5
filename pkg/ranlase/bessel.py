"""Modified Bessel functions K of half-integer order, evaluated in log space."""

import math

import numpy as np
from scipy.special import gammaln, logsumexp

from ranlase.errors import DomainError


def log_kv_half(m: int, z: float) -> float:
    """
    log K_{m+1/2}(z) for integer m >= 0 from the terminating series

        K_{m+1/2}(z) = sqrt(pi/2z) e^{-z} sum_{k=0}^{m} (m+k)! / (k! (m-k)! (2z)^k).
    """
    if m < 0:
        raise DomainError(f"order index m must be >= 0, got {m}")
    if not z > 0.0:
        raise DomainError(f"K_(m+1/2)(z) needs z > 0, got {z}")
    k = np.arange(m + 1)
    terms = gammaln(m + k + 1.0) - gammaln(k + 1.0) - gammaln(m - k + 1.0) - k * math.log(2.0 * z)
    return 0.5 * math.log(math.pi / (2.0 * z)) - z + float(logsumexp(terms))


def log_kv_half_orders(m_max: int, z: float) -> np.ndarray:
    """log K_{m+1/2}(z) for m = 0 .. m_max by the closed-form sum."""
    return np.array([log_kv_half(m, z) for m in range(m_max + 1)])


def log_kv_half_recurrence(m_max: int, z: float) -> np.ndarray:
    """
    log K_{m+1/2}(z) for m = 0 .. m_max by the upward recurrence
    K_{v+1} = K_{v-1} + (2v/z) K_v, carried as the ratio K_{v+1}/K_v.
    Upward recurrence is stable for K.
    """
    if m_max < 0:
        raise DomainError(f"m_max must be >= 0, got {m_max}")
    if not z > 0.0:
        raise DomainError(f"K_(m+1/2)(z) needs z > 0, got {z}")
    out = np.empty(m_max + 1)
    out[0] = 0.5 * math.log(math.pi / (2.0 * z)) - z
    # K_{-1/2} = K_{1/2}, so the first ratio K_{3/2}/K_{1/2} = 1 + 1/z
    ratio = 1.0
    for m in range(1, m_max + 1):
        order = m - 0.5
        ratio = 1.0 / ratio + 2.0 * order / z
        out[m] = out[m - 1] + math.log(ratio)
    return out


def log_kv_half_signed(n: np.ndarray, z: float) -> np.ndarray:
    """log K_{n-1/2}(z) for integer n >= 0, using K_{-1/2} = K_{1/2}."""
    n = np.asarray(n, dtype=int)
    m_max = int(n.max()) if n.size else 0
    table = log_kv_half_orders(max(m_max - 1, 0), z)
    return table[np.maximum(n - 1, 0)]
