import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tmppi.sgolay import savgol_kernel, savgol_smooth


def test_interior_kernel_matches_independent_least_squares():
    # Independent oracle: solve the 5-point quadratic normal equations by hand
    # for each unit-impulse input; the value at offset 0 gives the kernel.
    offsets = np.arange(-2, 3, dtype=float)
    a = np.vander(offsets, N=3, increasing=True)
    kernel_oracle = np.array(
        [np.linalg.solve(a.T @ a, a.T @ np.eye(5)[i])[0] for i in range(5)]
    )
    assert np.allclose(savgol_kernel(5, 2), kernel_oracle, atol=1e-13)
    assert np.allclose(savgol_kernel(5, 2), np.array([-3, 12, 17, 12, -3]) / 35.0, atol=1e-12)


def test_constant_sequence_unchanged():
    y = np.full(9, 3.7)
    assert np.allclose(savgol_smooth(y, 5, 0), y, atol=1e-13)


def test_linear_ramp_reproduced():
    y = 0.5 + 1.25 * np.arange(10)
    assert np.allclose(savgol_smooth(y, 5, 1), y, atol=1e-12)


def test_quadratic_reproduced_including_boundaries():
    x = np.arange(12, dtype=float)
    y = 1.0 - 0.3 * x + 0.02 * x**2
    assert np.allclose(savgol_smooth(y, 5, 2), y, atol=1e-12)


def test_window_validation():
    with pytest.raises(ValueError):
        savgol_smooth(np.zeros(9), 4, 2)  # even window
    with pytest.raises(ValueError):
        savgol_smooth(np.zeros(9), 5, 5)  # order >= window
    with pytest.raises(ValueError):
        savgol_smooth(np.zeros(2), 5, 2)  # window > 2H - 1


def test_multichannel_matches_per_channel():
    rng = np.random.default_rng(3)
    y = rng.normal(size=(11, 2))
    smoothed = savgol_smooth(y, 5, 3)
    for c in range(2):
        assert np.array_equal(smoothed[:, c], savgol_smooth(y[:, c], 5, 3))


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=0, max_value=3),
    st.lists(st.floats(min_value=-3, max_value=3), min_size=4, max_size=4),
)
def test_polynomials_of_degree_at_most_order_are_fixed_points(order, coeffs):
    # degree <= order polynomials pass through untouched (interior and edges,
    # since the truncated fits still contain them exactly).
    window = 7
    x = np.arange(15, dtype=float)
    y = sum(c * x**p for p, c in enumerate(coeffs[: order + 1]))
    y = np.asarray(y, dtype=float)
    assert np.allclose(savgol_smooth(y, window, max(order, 1)), y, atol=1e-9 * max(1.0, np.abs(y).max()))
