"""Discrete-time linear systems: zero-order-hold discretization, simulation and model factories."""

# Licensed under the MIT license.

import numpy as np
import scipy.linalg

from saferrt.derived_component import InvalidModelError
from saferrt.models import ContinuousModel, LtiModel


def _check_finite(name: str, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise InvalidModelError(f"{name} has non-finite entries")


def discretize_zoh(model: ContinuousModel, Ts: float) -> LtiModel:
    """Discretize a continuous-time model under a zero-order hold.

    A and B are read off the exponential of the augmented matrix [[Ac, Bc], [0, 0]] * Ts.

    :param model: The continuous-time model
    :param Ts: The sampling period in seconds

    :returns: The discrete-time model

    :raises InvalidModelError: If Ts is not positive, the matrices are inconsistent or not finite
    """

    if not Ts > 0:
        raise InvalidModelError(f"Sampling period must be positive, got {Ts}")

    n = model.Ac.shape[0]

    if model.Ac.shape != (n, n):
        raise InvalidModelError(f"Ac must be square, got {model.Ac.shape}")

    if model.Bc.ndim != 2 or model.Bc.shape[0] != n:
        raise InvalidModelError(f"Bc must have {n} rows, got {model.Bc.shape}")

    if model.C.ndim != 2 or model.C.shape[1] != n:
        raise InvalidModelError(f"C must have {n} columns, got {model.C.shape}")

    for name, value in (("Ac", model.Ac), ("Bc", model.Bc), ("C", model.C)):
        _check_finite(name, value)

    m = model.Bc.shape[1]
    augmented = np.zeros((n + m, n + m))
    augmented[:n, :n] = model.Ac
    augmented[:n, n:] = model.Bc

    exponential = scipy.linalg.expm(augmented * Ts)
    _check_finite("exp([[Ac, Bc], [0, 0]] Ts)", exponential)

    return LtiModel(exponential[:n, :n], exponential[:n, n:], model.C.copy(), Ts)


def step(model: LtiModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Advance the model by one sample.

    :param model: The discrete-time model
    :param x: The current state
    :param u: The applied input

    :returns: A x + B u

    :raises InvalidModelError: On a dimension mismatch
    """

    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)

    if x.shape != (model.n,):
        raise InvalidModelError(f"State must have shape ({model.n},), got {x.shape}")

    if u.shape != (model.m,):
        raise InvalidModelError(f"Input must have shape ({model.m},), got {u.shape}")

    return model.A @ x + model.B @ u


def cw_inplane_model(r: float) -> ContinuousModel:
    """In-plane Clohessy-Wiltshire relative motion with positions as outputs.

    State is (z1, z2, dz1, dz2), inputs are accelerations along z1 and z2.

    :param r: The mean motion of the reference orbit in 1/s

    :returns: The continuous-time model

    :raises InvalidModelError: If r is not positive
    """

    if not r > 0:
        raise InvalidModelError(f"Mean motion must be positive, got {r}")

    return _inplane_model(r)


def double_integrator_model() -> ContinuousModel:
    """Two decoupled double integrators, the zero mean motion limit of the in-plane model.

    :returns: The continuous-time model
    """
    return _inplane_model(0.0)


def _inplane_model(r: float) -> ContinuousModel:
    Ac = np.array(
        [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [3.0 * r**2, 0.0, 0.0, 2.0 * r],
            [0.0, 0.0, -2.0 * r, 0.0],
        ]
    )
    Bc = np.vstack([np.zeros((2, 2)), np.eye(2)])
    C = np.hstack([np.eye(2), np.zeros((2, 2))])
    return ContinuousModel(Ac, Bc, C)
