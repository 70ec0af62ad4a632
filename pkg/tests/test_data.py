#!/usr/bin/env python3

"""Tests for data collection and the data-driven factorization."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
import saferrt
from saferrt import lti
from saferrt.data import realization, split_g
from saferrt.models import DataRecord, LtiModel

# pylint: disable=redefined-outer-name


@pytest.fixture(scope="session")
def client() -> saferrt.SafeRRTClient:
    """Get the client.

    :returns: A default client
    """
    return saferrt.SafeRRTClient()


@pytest.fixture(scope="session")
def cw_model() -> LtiModel:
    """Get the discretized spacecraft model.

    :returns: The hidden ground truth
    """
    return lti.discretize_zoh(lti.cw_inplane_model(0.11), 30.0)


@pytest.fixture(scope="session")
def cw_record(client, cw_model) -> DataRecord:
    """Get a record from the spacecraft model.

    :returns: A persistently exciting record
    """
    return client.data.collect_trajectory(
        cw_model, x0=np.zeros(4), N=20, rng=np.random.default_rng(7), amplitude=1.0
    )


def relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    """Frobenius error relative to the expected value.

    :param actual: The computed matrix
    :param expected: The reference matrix

    :returns: The relative error
    """
    return float(np.linalg.norm(actual - expected) / max(1.0, np.linalg.norm(expected)))


def test_collect_shapes(cw_record):
    """The record holds consistent matrices."""
    assert cw_record.U0.shape == (2, 20)
    assert cw_record.X0.shape == (4, 20)
    assert cw_record.X1.shape == (4, 20)
    assert cw_record.Y0.shape == (2, 20)
    assert np.array_equal(cw_record.X1[:, :-1], cw_record.X0[:, 1:])
    assert np.all(np.abs(cw_record.U0) <= 1.0)


def test_collect_successors(cw_record, cw_model):
    """Each X1 column is the successor of the X0 column."""
    predicted = cw_model.A @ cw_record.X0 + cw_model.B @ cw_record.U0
    assert np.allclose(predicted, cw_record.X1)
    assert np.allclose(cw_model.C @ cw_record.X0, cw_record.Y0)


def test_collect_too_few_samples(client, cw_model):
    """Fewer than m + n samples is refused."""
    with pytest.raises(saferrt.InsufficientDataError) as error:
        client.data.collect_trajectory(
            cw_model, x0=np.zeros(4), N=5, rng=np.random.default_rng(0), amplitude=1.0
        )
    assert error.value.required == 6
    assert error.value.provided == 5


def test_zero_excitation(client, cw_model):
    """Zero inputs from rest carry no information."""
    rec = client.data.collect_trajectory(
        cw_model, x0=np.zeros(4), N=10, rng=np.random.default_rng(0), amplitude=0.0
    )
    assert client.data.excitation_rank(rec) == (0, False)
    with pytest.raises(saferrt.ExcitationError):
        client.data.right_inverse_g(rec, np.zeros((2, 4)))


def test_rank_identity_padding(client):
    """An identity block padded with zeros is full row rank."""
    stacked = np.hstack([np.eye(6), np.zeros((6, 2))])
    rec = DataRecord(stacked[:2], stacked[2:], np.zeros((4, 8)), np.zeros((2, 8)))
    assert client.data.excitation_rank(rec) == (6, True)


def test_rank_cw(client, cw_record):
    """The spacecraft record is persistently exciting."""
    assert client.data.excitation_rank(cw_record) == (6, True)


def test_right_inverse_identities(client, cw_record):
    """The blocks of [U0; X0] G are the requested ones."""
    K = np.array([[0.01, 0.0, -0.2, 0.0], [0.0, -0.01, 0.0, 0.3]])
    G1, G2 = split_g(client.data.right_inverse_g(cw_record, K), 4)
    assert np.allclose(cw_record.X0 @ G1, np.eye(4), atol=1e-10)
    assert np.allclose(cw_record.U0 @ G1, K, atol=1e-10)
    assert np.allclose(cw_record.X0 @ G2, np.zeros((4, 2)), atol=1e-10)
    assert np.allclose(cw_record.U0 @ G2, np.eye(2), atol=1e-10)


def test_factorization_oracle(client, cw_model):
    """Twenty experiments reproduce A + BK, B and C from data."""
    rng = np.random.default_rng(2024)
    for _ in range(20):
        rec = client.data.collect_trajectory(
            cw_model, x0=np.zeros(4), N=20, rng=rng, amplitude=0.01
        )
        K = rng.normal(scale=0.01, size=(2, 4))
        G1, G2 = split_g(client.data.right_inverse_g(rec, K), 4)
        assert relative_error(rec.X1 @ G1, cw_model.A + cw_model.B @ K) <= 1e-8
        assert relative_error(rec.X1 @ G2, cw_model.B) <= 1e-8
        assert relative_error(rec.Y0 @ G1, cw_model.C) <= 1e-8


def test_realization(cw_record, cw_model):
    """The reconstructed open loop equals the hidden model."""
    A, B, C = realization(cw_record)
    assert relative_error(A, cw_model.A) <= 1e-8
    assert relative_error(B, cw_model.B) <= 1e-8
    assert relative_error(C, cw_model.C) <= 1e-8


def test_steady_state_map(client, cw_record, cw_model):
    """T_hat equals [[A - I, B], [C, 0]]."""
    T_hat = client.data.steady_state_map(cw_record)
    truth = np.block(
        [[cw_model.A - np.eye(4), cw_model.B], [cw_model.C, np.zeros((2, 2))]]
    )
    assert T_hat.shape == (6, 6)
    assert relative_error(T_hat, truth) <= 1e-8
    assert np.isfinite(np.linalg.cond(T_hat))


def test_steady_state_double_integrator(client):
    """Integrator chains rest at the reference with zero input."""
    model = lti.discretize_zoh(lti.double_integrator_model(), 30.0)
    rec = client.data.collect_trajectory(
        model, x0=np.zeros(4), N=20, rng=np.random.default_rng(1), amplitude=0.01
    )
    T_hat = client.data.steady_state_map(rec)
    pair = client.data.steady_state(T_hat, np.array([5.0, -3.0]))
    assert np.allclose(pair.x_bar, [5.0, -3.0, 0.0, 0.0], atol=1e-8)
    assert np.allclose(pair.u_bar, [0.0, 0.0], atol=1e-8)

    origin = client.data.steady_state(T_hat, np.zeros(2))
    assert np.allclose(origin.x_bar, 0.0)
    assert np.allclose(origin.u_bar, 0.0)


def test_steady_state_cw(client, cw_record, cw_model):
    """The input cancels the radial gravity-gradient term."""
    T_hat = client.data.steady_state_map(cw_record)
    pair = client.data.steady_state(T_hat, np.array([45.0, 45.0]))
    assert np.allclose(pair.x_bar, [45.0, 45.0, 0.0, 0.0], atol=1e-5)
    assert np.allclose(pair.u_bar, [-3.0 * 0.11**2 * 45.0, 0.0], atol=1e-5)
    residual = (cw_model.A - np.eye(4)) @ pair.x_bar + cw_model.B @ pair.u_bar
    assert np.allclose(residual, 0.0, atol=1e-5)


def test_steady_state_recovers_references(client, cw_record):
    """Random references come back through the output block."""
    T_hat = client.data.steady_state_map(cw_record)
    rng = np.random.default_rng(5)
    for _ in range(10):
        r = rng.uniform(-50.0, 50.0, size=2)
        pair = client.data.steady_state(T_hat, r)
        assert np.linalg.norm(T_hat[4:, :4] @ pair.x_bar - r) <= 1e-8 * max(1.0, np.linalg.norm(r))
        again = client.data.steady_state(T_hat, T_hat[4:, :4] @ pair.x_bar)
        assert np.allclose(again.x_bar, pair.x_bar, atol=1e-8)
        assert np.allclose(again.u_bar, pair.u_bar, atol=1e-8)


def test_singular_map(client):
    """A singular map is refused."""
    with pytest.raises(saferrt.SingularSteadyStateError):
        client.data.steady_state(np.zeros((6, 6)), np.array([1.0, 1.0]))


def test_record_bundle(client, cw_record, tmp_path):
    """Records survive the CSV bundle bit for bit."""
    client.data.save_record(cw_record, str(tmp_path))
    assert sorted(os.listdir(tmp_path)) == ["U0.csv", "X0.csv", "X1.csv", "Y0.csv"]
    loaded = client.data.load_record(str(tmp_path))
    for name in ("U0", "X0", "X1", "Y0"):
        assert np.array_equal(getattr(loaded, name), getattr(cw_record, name))

    os.remove(tmp_path / "Y0.csv")
    with pytest.raises(saferrt.ArtifactError):
        client.data.load_record(str(tmp_path))
