"""Fixed per-class coherence-matrix means for the synthetic generator.

Each entry is a 3x3 Hermitian positive-semidefinite matrix with a distinct
dominant channel mix, so synthetic classes are separable without being
trivial. Values are versioned here; changing them invalidates frozen
expectations in the test suite.
"""

import numpy as np

_J = 1j

CLASS_COVARIANCES = [
    np.array([[4.0, 0.4 + 0.2 * _J, 0.1],
              [0.4 - 0.2 * _J, 0.6, 0.05 * _J],
              [0.1, -0.05 * _J, 0.3]]),
    np.array([[0.5, 0.3 - 0.1 * _J, 0.0],
              [0.3 + 0.1 * _J, 3.5, 0.2],
              [0.0, 0.2, 0.4]]),
    np.array([[0.4, 0.0, 0.1 + 0.1 * _J],
              [0.0, 0.5, 0.15],
              [0.1 - 0.1 * _J, 0.15, 3.0]]),
    np.array([[2.0, 0.8 + 0.5 * _J, 0.2],
              [0.8 - 0.5 * _J, 1.8, 0.1 - 0.1 * _J],
              [0.2, 0.1 + 0.1 * _J, 0.5]]),
    np.array([[1.0, -0.4 + 0.3 * _J, 0.3 * _J],
              [-0.4 - 0.3 * _J, 1.0, 0.3],
              [-0.3 * _J, 0.3, 1.2]]),
    np.array([[2.5, 0.1, 0.9 + 0.4 * _J],
              [0.1, 0.4, 0.1 * _J],
              [0.9 - 0.4 * _J, -0.1 * _J, 2.0]]),
    np.array([[0.6, 0.2 + 0.2 * _J, -0.2],
              [0.2 - 0.2 * _J, 2.2, 0.7 + 0.3 * _J],
              [-0.2, 0.7 - 0.3 * _J, 1.6]]),
    np.array([[1.4, -0.6 * _J, 0.5],
              [0.6 * _J, 1.2, -0.4],
              [0.5, -0.4, 0.9]]),
]


def class_covariance(class_id):
    """Covariance for a 1-based class id; beyond the fixture the base set
    repeats with a deterministic scale so any class count stays valid."""
    base = CLASS_COVARIANCES[(class_id - 1) % len(CLASS_COVARIANCES)]
    scale = 1.0 + 0.5 * ((class_id - 1) // len(CLASS_COVARIANCES))
    return base * scale
