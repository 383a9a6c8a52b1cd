"""Registry of manufactured solutions with analytically derived data.

Each entry supplies the exact solution, its gradient and the right-hand side
``f = -alpha * laplace(u)`` for a constant coefficient alpha. All callables
take an ``(n, 2)`` array of physical points.
"""

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class Manufactured:
    name: str
    u: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    laplacian: Callable[[np.ndarray], np.ndarray]

    def rhs(self, alpha: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
        return lambda x: -alpha * self.laplacian(x)

    def flux(self, alpha: float = 1.0) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        """Neumann data ``alpha * grad(u) . n``."""
        return lambda x, n: alpha * np.sum(self.grad(x) * n, axis=1)


def _sinsin():
    def u(x):
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def grad(x):
        return np.pi * np.stack([
            np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
            np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]),
        ], axis=1)

    def laplacian(x):
        return -2.0 * np.pi ** 2 * u(x)

    return Manufactured("sinsin", u, grad, laplacian)


def _linear_x():
    return Manufactured(
        "linear-x",
        lambda x: x[:, 0].copy(),
        lambda x: np.stack([np.ones(len(x)), np.zeros(len(x))], axis=1),
        lambda x: np.zeros(len(x)),
    )


def _zero():
    return Manufactured(
        "zero",
        lambda x: np.zeros(len(x)),
        lambda x: np.zeros((len(x), 2)),
        lambda x: np.zeros(len(x)),
    )


SOLUTIONS: Dict[str, Manufactured] = {m.name: m for m in (_sinsin(), _linear_x(), _zero())}


def get_solution(name: str) -> Manufactured:
    try:
        return SOLUTIONS[name]
    except KeyError:
        raise ConfigurationError(f"Unknown manufactured solution '{name}', available: {sorted(SOLUTIONS)}")
