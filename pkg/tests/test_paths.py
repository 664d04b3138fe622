import numpy as np
import pytest

from abdsde.errors import ShapeMismatch
from abdsde.grids import make_grid
from abdsde.paths import backward_integral, forward_integral, PathProcess, sample_paths


GRID = make_grid(1.0, 0.0, 0.125)


def test_seed_determinism_bitwise():
    a = sample_paths(GRID, 2, 1, 500, seed=7)
    b = sample_paths(GRID, 2, 1, 500, seed=7)
    assert np.array_equal(a.dW, b.dW) and np.array_equal(a.dB, b.dB)
    c = sample_paths(GRID, 2, 1, 500, seed=8)
    assert not np.array_equal(a.dW, c.dW)


def test_path_streams_independent_of_path_count():
    big = sample_paths(GRID, 1, 2, 400, seed=3)
    small = sample_paths(GRID, 1, 2, 100, seed=3)
    assert np.array_equal(big.dW[:100], small.dW)
    assert np.array_equal(big.dB[:100], small.dB)


def test_increment_moments_within_five_standard_errors():
    paths = sample_paths(GRID, 1, 1, 10**5, seed=7)
    h = GRID.h
    n = paths.dW.size
    se_mean = np.sqrt(h / n)
    se_var = h * np.sqrt(2.0 / (n - 1))
    for inc in (paths.dW, paths.dB):
        assert abs(inc.mean()) < 5 * se_mean
        assert abs(inc.var() - h) < 5 * se_var


def test_drivers_uncorrelated():
    paths = sample_paths(GRID, 1, 1, 10**5, seed=7)
    corr = np.corrcoef(paths.dW.ravel(), paths.dB.ravel())[0, 1]
    assert abs(corr) < 5 / np.sqrt(paths.dW.size)


def _wrap(vals):
    return PathProcess(grid=GRID, values=vals)


def test_forward_integral_zero_and_constant():
    paths = sample_paths(GRID, 1, 1, 200, seed=1)
    P, n = 200, GRID.n_nodes
    zero = np.zeros((P, n, 1, 1))
    assert np.all(forward_integral(_wrap(zero), paths, 0, GRID.n_end) == 0.0)
    const = np.full((P, n, 1, 1), 1.7)
    w_total = paths.w_at(GRID.n_end) - paths.w_at(2)
    got = forward_integral(_wrap(const), paths, 2, GRID.n_end)
    assert np.allclose(got, 1.7 * w_total, atol=1e-12)


def test_backward_integral_constant_matches_forward():
    paths = sample_paths(GRID, 1, 1, 200, seed=2)
    const = np.full((200, GRID.n_nodes, 1, 1), -0.3)
    f = forward_integral(_wrap(const), paths, 1, 7)
    # with the same constant integrand both rules telescope identically
    b = backward_integral(_wrap(const), paths, 1, 7)
    b_direct = -0.3 * (paths.b_at(7) - paths.b_at(1))
    assert np.allclose(b, b_direct, atol=1e-12)
    f_direct = -0.3 * (paths.w_at(7) - paths.w_at(1))
    assert np.allclose(f, f_direct, atol=1e-12)


def test_backward_minus_forward_is_quadratic_variation():
    paths = sample_paths(GRID, 1, 1, 300, seed=3)
    B = np.concatenate(
        [np.zeros((300, 1, 1)), np.cumsum(paths.dB, axis=1)], axis=1)
    G = B[:, :, :, None]
    # forward rule against dB for the same integrand, for the comparison
    fwd = np.einsum("pkml,pkl->pm", G[:, :-1], paths.dB)
    bwd = backward_integral(G, paths, 0, GRID.n_end)
    qv = (paths.dB ** 2).sum(axis=(1, 2))
    assert np.allclose(bwd[:, 0] - fwd[:, 0], qv, atol=1e-12)


@pytest.mark.parametrize("which", ["forward", "backward"])
def test_integral_closed_form_convergence(which):
    # Z_k = W_k: forward -> (W_T^2 - T)/2; G_k = B_k: backward -> (B_T^2 + T)/2
    rms = []
    means = []
    for exp in (4, 5, 6, 7, 8):
        grid = make_grid(1.0, 0.0, 2.0 ** -exp)
        paths = sample_paths(grid, 1, 1, 4000, seed=9)
        if which == "forward":
            W = np.concatenate(
                [np.zeros((4000, 1, 1)), np.cumsum(paths.dW, axis=1)], axis=1)
            val = forward_integral(W[:, :, :, None], paths, 0, grid.n_end)[:, 0]
            closed = 0.5 * (W[:, -1, 0] ** 2 - 1.0)
        else:
            B = np.concatenate(
                [np.zeros((4000, 1, 1)), np.cumsum(paths.dB, axis=1)], axis=1)
            val = backward_integral(B[:, :, :, None], paths, 0, grid.n_end)[:, 0]
            closed = 0.5 * (B[:, -1, 0] ** 2 + 1.0)
        err = val - closed
        rms.append(np.sqrt(np.mean(err ** 2)))
        means.append(abs(err.mean()))
    assert all(a > b for a, b in zip(rms, rms[1:])), rms
    # per-path error is +-(QV - T)/2, mean 0 with stderr sqrt(h/2P)
    assert means[-1] < 5 * np.sqrt(2.0 ** -8 / (2 * 4000))


def test_integral_shape_mismatch():
    paths = sample_paths(GRID, 2, 1, 50, seed=1)
    bad = np.zeros((50, GRID.n_nodes, 1, 1))  # d should be 2
    with pytest.raises(ShapeMismatch):
        forward_integral(bad, paths, 0, 4)
    badb = np.zeros((50, GRID.n_nodes, 1, 3))
    with pytest.raises(ShapeMismatch):
        backward_integral(badb, paths, 0, 4)


def test_coarsen_preserves_brownian_path():
    paths = sample_paths(make_grid(1.0, 0.5, 0.125), 1, 1, 64, seed=5)
    coarse = paths.coarsen(2)
    assert coarse.grid.h == 0.25 and coarse.grid.n_T == 4
    assert np.allclose(coarse.dW.sum(axis=1), paths.dW.sum(axis=1), atol=1e-14)
    assert np.allclose(coarse.b_at(2), paths.b_at(4), atol=1e-14)
    with pytest.raises(ValueError):
        paths.coarsen(5)
