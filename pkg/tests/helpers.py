"""Shared generators for randomised field tests."""
import numpy as np

from flatt.connection import TensorField


def random_component(rng, n):
    a = np.round(rng.uniform(-1, 1, 6), 3)
    i, j = rng.integers(1, n + 1, size=2)
    b = np.round(rng.uniform(0.3, 1.5, 2), 3)
    return (f"{a[0]} + {a[1]}*x{i} + {a[2]}*sin({b[0]}*x{j} + {b[1]}*x{i})"
            f" + {a[3]}*x{i}*x{j} + {a[4]}*exp({a[5]}*x{j})")


def random_field(rng, p, q, n=2):
    return TensorField.from_strings(p, q, n, [random_component(rng, n) for _ in range(n ** (p + q))])


def random_vector_texts(rng, n=2):
    return [random_component(rng, n) for _ in range(n)]


# filled by test_acceptance.py, printed by the terminal-summary hook
ACCEPTANCE_LINES = []
