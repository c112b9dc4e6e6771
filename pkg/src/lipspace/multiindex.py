"""Small multi-index toolkit (tuples of non-negative ints)."""

from functools import lru_cache
from itertools import product
from math import factorial, prod

import numpy as np


@lru_cache(maxsize=None)
def of_order(n, k):
    """All multi-indices in ``n`` variables with length exactly ``k``, sorted."""
    if k < 0:
        return ()
    return tuple(sorted((a for a in product(range(k + 1), repeat=n) if sum(a) == k), reverse=True))


@lru_cache(maxsize=None)
def up_to(n, k):
    """All multi-indices of length ``<= k``, ordered by length."""
    return tuple(a for j in range(k + 1) for a in of_order(n, j))


def fact(alpha):
    return prod(factorial(a) for a in alpha)


def add(alpha, beta):
    return tuple(a + b for a, b in zip(alpha, beta))


def sub(alpha, beta):
    return tuple(a - b for a, b in zip(alpha, beta))


def unit(n, j):
    e = [0] * n
    e[j] = 1
    return tuple(e)


def leq(beta, alpha):
    return all(b <= a for b, a in zip(beta, alpha))


def splittings(alpha):
    """Yield ``(beta, gamma)`` with ``beta + gamma == alpha``."""
    for beta in product(*(range(a + 1) for a in alpha)):
        yield beta, sub(alpha, beta)


def binom(alpha, beta):
    return fact(alpha) // (fact(beta) * fact(sub(alpha, beta)))


def power(x, alpha):
    """``x**alpha`` for points ``x`` of shape ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    out = np.ones(x.shape[:-1])
    for j, a in enumerate(alpha):
        if a:
            out = out * x[..., j] ** a
    return out


def key(alpha):
    """String form used in JSON documents, e.g. ``(1, 0) -> "1,0"``."""
    return ",".join(str(a) for a in alpha)


def parse(text):
    return tuple(int(t) for t in text.split(","))
