#!/usr/bin/env python3

"""Tests for the Riccati solver and the LQR comparison runs."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
import saferrt
from saferrt import lti
from saferrt.baseline import (
    _iterate,
    dare_solve,
    default_weights,
    lqr_gain,
    riccati_residual,
)
from saferrt.models import Cell, Certificate, CertifiedPath, ExecParams, LqrWeights, Polytope

# pylint: disable=redefined-outer-name

SCALAR = (np.array([[0.5]]), np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]))


def spectral_radius(A: np.ndarray, B: np.ndarray, K: np.ndarray) -> float:
    """Largest closed-loop eigenvalue magnitude."""
    return float(np.max(np.abs(np.linalg.eigvals(A + B @ K))))


@pytest.fixture(scope="session")
def client() -> saferrt.SafeRRTClient:
    """Get the client.

    :returns: A default client
    """
    return saferrt.SafeRRTClient()


def test_scalar_riccati():
    """The scalar solution is the positive root of p^2 - p/4 - 1."""
    P = dare_solve(*SCALAR)
    assert P[0, 0] == pytest.approx((0.25 + np.sqrt(4.0625)) / 2, rel=1e-9)
    assert P[0, 0] == pytest.approx(1.1328, abs=1e-4)
    assert riccati_residual(*SCALAR, P) < 1e-10


def test_scalar_gain():
    """The scalar gain is -p a / (r + p)."""
    K = lqr_gain(*SCALAR)
    assert K[0, 0] == pytest.approx(-0.2656, abs=1e-4)


def test_recursion_matches_schur():
    """The fixed-point recursion agrees with scipy."""
    model = lti.discretize_zoh(lti.cw_inplane_model(0.11), 30.0)
    weights = default_weights()
    schur = dare_solve(model.A, model.B, weights.Q, weights.R)
    recursion = _iterate(model.A, model.B, weights.Q, weights.R)
    assert np.allclose(schur, recursion, rtol=1e-6, atol=1e-8)
    assert np.allclose(schur, schur.T)
    assert np.all(np.linalg.eigvalsh(schur) >= -1e-9)


def test_zero_cost():
    """With nothing to penalize the cost-to-go vanishes."""
    P = dare_solve(0.5 * np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2))
    assert np.allclose(P, 0.0, atol=1e-10)


def test_input_weight_must_be_definite():
    """A singular input weight is refused."""
    with pytest.raises(saferrt.InvalidModelError):
        dare_solve(*SCALAR[:3], np.array([[0.0]]))


def test_recursion_diverges():
    """An unstabilizable pair never reaches a fixed point."""
    with np.errstate(all="ignore"), pytest.raises(saferrt.RiccatiError) as error:
        _iterate(np.array([[2.0]]), np.array([[0.0]]), np.array([[1.0]]), np.array([[1.0]]))
    assert error.value.iterations == 10_000


def test_cw_gain_stabilizes():
    """The default weights stabilize the spacecraft."""
    model = lti.discretize_zoh(lti.cw_inplane_model(0.11), 30.0)
    weights = default_weights()
    K = lqr_gain(model.A, model.B, weights.Q, weights.R)
    assert K.shape == (2, 4)
    assert spectral_radius(model.A, model.B, K) < 1.0


def test_heavier_state_weight_is_faster():
    """Scaling Q up shrinks the closed-loop spectral radius."""
    A, B, Q, R = SCALAR
    radii = [spectral_radius(A, B, lqr_gain(A, B, scale * Q, R)) for scale in (1.0, 10.0, 100.0)]
    assert radii[0] > radii[1] > radii[2]


def test_default_weights():
    """Position weight 1, velocity weight 0.1 and input weight 10."""
    weights = default_weights()
    assert np.array_equal(np.diag(weights.Q), [1.0, 1.0, 0.1, 0.1])
    assert np.array_equal(weights.R, 10.0 * np.eye(2))


def test_data_gain_matches_model(client):
    """The gain computed from data equals the gain of the hidden model."""
    model = lti.discretize_zoh(lti.cw_inplane_model(0.11), 30.0)
    rec = client.data.collect_trajectory(
        model, x0=np.zeros(4), N=20, rng=np.random.default_rng(2), amplitude=0.01
    )
    weights = default_weights()
    assert np.allclose(
        client.baseline.data_gain(rec, weights),
        lqr_gain(model.A, model.B, weights.Q, weights.R),
        rtol=1e-5,
        atol=1e-8,
    )


def test_baseline_follows_the_same_path(client):
    """Only the gain changes between certified and baseline execution."""
    model = lti.discretize_zoh(lti.double_integrator_model(), 1.0)
    rec = client.data.collect_trajectory(
        model, x0=np.zeros(4), N=20, rng=np.random.default_rng(4), amplitude=1.0
    )
    T_hat = client.data.steady_state_map(rec)
    waypoints = [np.array([5.0, 5.0]), np.array([15.0, 5.0])]

    def ball(center: np.ndarray) -> Certificate:
        return Certificate(
            P=1e4 * np.eye(4),
            S=np.zeros((20, 4)),
            K=np.zeros((2, 4)),
            G2=np.zeros((20, 2)),
            contraction=0.94,
            center_state=client.data.steady_state(T_hat, center).x_bar,
            center_output=center,
            polytope=Polytope(np.eye(4), np.ones(4)),
        )

    path = CertifiedPath(
        cells=[Cell(0, 0), Cell(0, 1)],
        waypoints=waypoints,
        edge_certs=[ball(np.array([10.0, 5.0]))],
        root_cert=ball(waypoints[0]),
    )
    x0 = client.data.steady_state(T_hat, waypoints[0]).x_bar
    weights = LqrWeights(np.eye(4), np.eye(2))

    run = client.baseline.execute_lqr_baseline(
        [model],
        [path],
        [T_hat],
        [x0],
        ExecParams(r_f=1.0, max_steps=500),
        recs=[rec],
        weights=weights,
    )

    assert len(run.gains) == 1
    assert spectral_radius(model.A, model.B, run.gains[0]) < 1.0
    trace = run.fleet.traces[0]
    assert trace.outcome == saferrt.ExecutionOutcome.FINISHED
    assert np.linalg.norm(trace.outputs[-1] - waypoints[-1]) <= 1.0
    assert run.stats[0].total_segments == 2
    assert run.stats[0].violating_segments == 0
