"""Tests for the training losses and the Adam optimizer."""

import numpy as np
import pytest

from malproc_monitor.exceptions import InvalidInputError
from malproc_monitor.models.losses import (
    LossFunction,
    modified_loss,
    modified_loss_grad,
    mse_loss,
    mse_loss_grad,
)
from malproc_monitor.models.optim import AdamState, adam_step


def test_mse_values():
    """Test MSE on hand-computed batches."""
    assert mse_loss([1, 0], [0, 1]) == pytest.approx(1.0)
    assert mse_loss([0.5], [1]) == pytest.approx(0.25)
    np.testing.assert_allclose(mse_loss_grad([0.5], [1]), [-1.0])


# (p, y, t, loss) with loss = (p - y)^2 + round(p)(1 - t) + y / (t + 1)
DEFAULT_TRIPLES = [
    (0.0, 0, 0.5, 0.0),
    (1.0, 1, 1.0, 0.5),
    (0.6, 0, 0.25, 0.36 + 0.75),
    (0.5, 0, 0.0, 0.25),
    (0.9, 1, 0.0, 0.01 + 1.0 + 1.0),
    (0.2, 1, 1.0, 0.64 + 0.5),
    (0.8, 0, 1.0, 0.64),
    (0.3, 0, 0.0, 0.09),
    (0.7, 1, 0.5, 0.09 + 0.5 + 2.0 / 3.0),
    (0.1, 1, 0.25, 0.81 + 0.8),
    (0.95, 0, 0.6, 0.9025 + 0.4),
    (0.4, 1, 0.0, 0.36 + 1.0),
]


@pytest.mark.parametrize("p, y, t, expected", DEFAULT_TRIPLES)
def test_modified_loss_values(p, y, t, expected):
    """Test the default kill-aware loss on hand-computed samples."""
    assert modified_loss([p], [y], [t]) == pytest.approx(expected)


def test_other_variants_differ_from_default():
    """Test literal and prose each disagree with the default somewhere on the table."""
    for variant in ("literal", "prose"):
        assert any(
            modified_loss([p], [y], [t], variant) != pytest.approx(expected)
            for p, y, t, expected in DEFAULT_TRIPLES
        )


def test_modified_loss_batch_mean():
    """Test per-sample losses are averaged."""
    value = modified_loss([0.0, 1.0, 0.6], [0, 1, 0], [0.5, 1.0, 0.25])
    assert value == pytest.approx((0.0 + 0.5 + 1.11) / 3)


def test_variants_differ():
    """Test the three variants give different values on the same batch."""
    p, y, t = [0.7, 0.2], [0, 1], [0.3, 0.6]
    values = {variant: modified_loss(p, y, t, variant) for variant in ("default", "literal", "prose")}
    assert len({round(v, 9) for v in values.values()}) == 3

    # prose: (0.7)^2 + 1 * 1 + (0.8)^2 + 0, averaged
    assert values["prose"] == pytest.approx((0.49 + 1.0 + 0.64) / 2)


def test_rounding_at_half_is_benign():
    """Test round(0.5) counts as a benign decision."""
    assert modified_loss([0.5], [0], [0.0]) == pytest.approx(0.25)


def test_straight_through_gradient_matches_identity_surrogate():
    """Test the straight-through gradient equals the identity-rounding gradient."""
    rng = np.random.default_rng(0)
    for variant in ("default", "literal", "prose"):
        p, y, t = rng.uniform(0.01, 0.99, 8), rng.integers(0, 2, 8), rng.uniform(0, 1, 8)
        np.testing.assert_allclose(
            modified_loss_grad(p, y, t, variant, "straight_through"),
            modified_loss_grad(p, y, t, variant, "identity"),
        )


@pytest.mark.parametrize("variant", ["default", "literal", "prose"])
@pytest.mark.parametrize("rounding", ["identity", "sigmoid"])
def test_modified_loss_gradient_finite_differences(variant, rounding):
    """Test analytic dL/dp against central differences of the smooth surrogates."""
    rng = np.random.default_rng(1)
    p, y, t = rng.uniform(0.05, 0.95, 6), rng.integers(0, 2, 6), rng.uniform(0, 1, 6)
    h = 1e-6
    analytic = modified_loss_grad(p, y, t, variant, rounding, sharpness=5.0)
    numeric = np.zeros_like(p)
    for i in range(len(p)):
        up, down = p.copy(), p.copy()
        up[i] += h
        down[i] -= h
        numeric[i] = (
            modified_loss(up, y, t, variant, rounding, sharpness=5.0)
            - modified_loss(down, y, t, variant, rounding, sharpness=5.0)
        ) / (2 * h)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


def test_loss_input_errors():
    """Test empty, mismatched and out-of-range inputs."""
    with pytest.raises(InvalidInputError):
        mse_loss([], [])
    with pytest.raises(InvalidInputError):
        mse_loss([0.1, 0.2], [1])
    with pytest.raises(InvalidInputError):
        modified_loss([0.1], [1], [1.5])
    with pytest.raises(InvalidInputError):
        modified_loss([0.1], [1], [0.5], variant="other")


def test_loss_function_dispatch():
    """Test LossFunction picks MSE or the modified loss."""
    mse = LossFunction("mse")
    assert mse.value([1, 0], [0, 1], [0.5, 0.5]) == pytest.approx(1.0)

    modified = LossFunction("modified")
    assert modified.value([0.6], [0], [0.25]) == pytest.approx(1.11)

    with pytest.raises(InvalidInputError):
        LossFunction("hinge")


def test_adam_first_step():
    """Test the first bias-corrected step moves each weight by about lr."""
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.array([0.5, -3.0])}
    state = AdamState.for_params(params)

    adam_step(params, grads, state, lr=0.1)

    assert state.step == 1
    np.testing.assert_allclose(params["w"], [0.9, -1.9], atol=1e-6)


def test_adam_zero_gradient_keeps_params():
    """Test a zero gradient leaves the weights alone but still counts the step."""
    params = {"w": np.array([1.0, -2.0]), "b": np.array([0.5])}
    grads = {name: np.zeros_like(value) for name, value in params.items()}
    state = AdamState.for_params(params)

    adam_step(params, grads, state, lr=0.1)

    assert state.step == 1
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])
    np.testing.assert_array_equal(params["b"], [0.5])


def test_adam_two_step_trace():
    """Test two updates against the unrolled bias-corrected recurrences."""
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    g1, g2 = 0.5, -1.0

    m1, v1 = (1 - b1) * g1, (1 - b2) * g1 ** 2
    w1 = 1.0 - lr * (m1 / (1 - b1)) / (np.sqrt(v1 / (1 - b2)) + eps)
    m2, v2 = b1 * m1 + (1 - b1) * g2, b2 * v1 + (1 - b2) * g2 ** 2
    w2 = w1 - lr * (m2 / (1 - b1 ** 2)) / (np.sqrt(v2 / (1 - b2 ** 2)) + eps)

    params = {"w": np.array([1.0])}
    state = AdamState.for_params(params)
    adam_step(params, {"w": np.array([g1])}, state, lr=lr)
    assert params["w"][0] == pytest.approx(w1)
    adam_step(params, {"w": np.array([g2])}, state, lr=lr)

    assert state.step == 2
    assert params["w"][0] == pytest.approx(w2)
    assert params["w"][0] == pytest.approx(0.93661, abs=1e-5)


def test_adam_minimizes_quadratic():
    """Test Adam drives a quadratic towards its minimum."""
    params = {"w": np.array([5.0, -3.0])}
    state = AdamState.for_params(params)
    for _ in range(2000):
        adam_step(params, {"w": 2 * params["w"]}, state, lr=0.05)
    np.testing.assert_allclose(params["w"], [0.0, 0.0], atol=0.05)
