import math
import tracemalloc

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisypower.dense import random_orthonormal_basis, spectral_norm
from noisypower.errors import (
    CalibrationFailed,
    ConfigInvalid,
    DimensionMismatch,
    StreamExhausted,
)
from noisypower.npm import NpmConfig, SamplingNoise, npm_run
from noisypower.streaming import (
    ArrayStream,
    FileStream,
    FunctionStream,
    SpikedCovarianceModel,
    SpikedStream,
    SpmConfig,
    calibrate_scale,
    empirical_covariance,
    matrix_chernoff_probe,
    measure_error_terms,
    sample_generic_scaled,
    sample_spiked,
    spiked_roundness,
    spm_run,
    split_blocks,
    sweep_samples,
    truncate_sample,
    truncation_mask,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _model(d, lambdas, sigma, seed=0):
    return SpikedCovarianceModel.random(d, lambdas, sigma, np.random.default_rng(seed))


# -- spiked model --------------------------------------------------------------

def test_spiked_without_noise_stays_on_the_spike():
    m = _model(8, [1.0], 0.0)
    z = sample_spiked(m, np.random.default_rng(1))
    u = m.U[:, 0]
    assert np.linalg.norm(z - (z @ u) * u) <= 1e-15


def test_spiked_covariance_and_normalisation():
    m = _model(10, [1.0, 0.7], 0.3)
    Z = m.sample(np.random.default_rng(2), 100_000)
    assert spectral_norm(empirical_covariance(Z) - m.covariance()) <= 0.05
    assert np.mean(np.sum(Z * Z, axis=1)) == pytest.approx(1.0, rel=0.03)
    assert np.trace(m.covariance()) == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(m.covariance()))[::-1],
                               m.eigenvalues(), atol=1e-12)


def test_spiked_model_validation():
    U = np.eye(4)[:, :2]
    with pytest.raises(DimensionMismatch):
        SpikedCovarianceModel(U, [1.0], 0.1)
    with pytest.raises(ValueError):
        SpikedCovarianceModel(U, [0.5, 1.0], 0.1)
    with pytest.raises(ValueError):
        SpikedCovarianceModel(U, [1.0, 0.5], -0.1)


def test_roundness_examples():
    r = spiked_roundness(_model(100, [1.0], 1.0))
    assert r.B == pytest.approx(2 / (1 / 100 + 1), rel=1e-14)
    assert r.p == 1
    d, k = 40, 3
    assert spiked_roundness(_model(d, [2.0] * k, 0.0)).B == pytest.approx(d / k, rel=1e-14)
    assert spiked_roundness(_model(20, [1.0], 1e8)).B == pytest.approx(1.0, rel=1e-12)


# -- streams --------------------------------------------------------------------

def test_array_stream_replays_then_ends():
    s = ArrayStream(np.arange(6.0).reshape(3, 2))
    np.testing.assert_array_equal(s.take(2), [[0, 1], [2, 3]])
    np.testing.assert_array_equal(s.take(5), [[4, 5]])
    assert s.take(1).shape == (0, 2)


def test_file_stream(tmp_path):
    path = tmp_path / "z.txt"
    path.write_text("1 0 0\n# comment\n0 1 0\n\n0 0 1\n")
    s = FileStream(path)
    assert s.dim == 3
    np.testing.assert_array_equal(np.vstack(list(s)), np.eye(3))
    s.close()
    path.write_text("1 0\n1 0 0\n")
    with pytest.raises(DimensionMismatch):
        FileStream(path).take(2)


def test_function_stream_and_generic_scaling():
    e1 = np.eye(3)[0]
    s = FunctionStream(lambda rng: e1, np.random.default_rng(0), 3, scale=0.3)
    np.testing.assert_array_equal(s.take(2), [0.3 * e1, 0.3 * e1])
    z = sample_generic_scaled(lambda rng: e1, np.random.default_rng(0), 0.3)
    # ||z|| = 0.3 < 1, so P(||z|| > t) = 0 for every t >= 1
    assert np.linalg.norm(z) == pytest.approx(0.3)


def test_calibration_bounded_and_gaussian():
    e1 = np.eye(3)[0]
    s = calibrate_scale(lambda rng: e1, np.random.default_rng(0), pilot=100)
    assert s >= 1.0
    d = 20
    s = calibrate_scale(lambda rng: rng.standard_normal(d) / math.sqrt(d),
                        np.random.default_rng(1), pilot=10_000)
    assert 0.5 < s < 1.5
    norms = np.linalg.norm(np.random.default_rng(2).standard_normal((10_000, d)), axis=1) / math.sqrt(d)
    for t in (1.0, 2.0, 4.0):
        assert np.mean(s * norms > t) <= math.exp(-t) + 0.02


def test_calibration_failure():
    with pytest.raises(CalibrationFailed):
        calibrate_scale(lambda rng: np.array([1e12]), np.random.default_rng(0), pilot=10)


def test_calibration_heavy_tails_shrinks():
    d = 10
    raw = lambda rng: rng.standard_t(3, d) / math.sqrt(d)  # noqa: E731
    s = calibrate_scale(raw, np.random.default_rng(0), pilot=5000)
    assert s < 1.0


# -- spm_run -----------------------------------------------------------------

def test_spm_single_direction_stream():
    d = 5
    stream = ArrayStream(np.tile(np.eye(d)[0], (40, 1)))
    X, trace = spm_run(stream, SpmConfig(n=40, L=4, p=1, k=1), reference=np.diag([1.0, 0, 0, 0, 0]),
                       rng=np.random.default_rng(0))
    assert abs(abs(X[0, 0]) - 1) <= 1e-15
    assert trace[0].residual == pytest.approx(0.0, abs=1e-15)


def test_spm_matches_npm_replay():
    m = _model(30, [1.0, 0.8], 0.4)
    Z = m.sample(np.random.default_rng(5), 6000)
    cfg = SpmConfig(n=6000, L=6, p=3, k=2)
    X0 = random_orthonormal_basis(30, 3, np.random.default_rng(6))
    Xs, ts = spm_run(ArrayStream(Z), cfg, reference=m.covariance(), X0=X0)
    A = m.covariance()
    Xn, tn = npm_run(A, NpmConfig(L=6, p=3, k=2), SamplingNoise(A, split_blocks(Z, 6)), X0)
    assert np.max(np.abs(Xs - Xn)) <= 1e-10
    np.testing.assert_allclose(ts.column("tan_theta"), tn.column("tan_theta"), rtol=1e-8)
    np.testing.assert_allclose(ts.column("noise_norm"), tn.column("noise_norm"), rtol=1e-8)


def test_spm_chunk_size_does_not_matter():
    m = _model(12, [1.0], 0.5)
    Z = m.sample(np.random.default_rng(1), 900)
    X0 = random_orthonormal_basis(12, 2, np.random.default_rng(2))
    a, _ = spm_run(ArrayStream(Z), SpmConfig(n=900, L=3, p=2, k=1, chunk=1), X0=X0)
    b, _ = spm_run(ArrayStream(Z), SpmConfig(n=900, L=3, p=2, k=1, chunk=300), X0=X0)
    assert np.max(np.abs(a - b)) <= 1e-12


def test_spm_consumes_exactly_L_T_samples():
    stream = ArrayStream(np.random.default_rng(0).standard_normal((107, 4)))
    _, trace = spm_run(stream, SpmConfig(n=107, L=5, p=2, k=1), rng=np.random.default_rng(0))
    assert stream.pos == 105
    assert trace.meta["T"] == 21
    assert math.isnan(trace.final.tan_theta)


def test_spm_stream_exhausted():
    with pytest.raises(StreamExhausted):
        spm_run(ArrayStream(np.ones((10, 3))), SpmConfig(n=20, L=2, p=1, k=1))


def test_spm_config_validation():
    with pytest.raises(ValueError):
        SpmConfig(n=3, L=5, p=1, k=1).validate(4)
    with pytest.raises(DimensionMismatch):
        SpmConfig(n=30, L=5, p=5, k=1).validate(4)


def test_spm_memory_stays_linear_in_d():
    d, p = 2000, 5
    m = _model(d, [1.0, 0.8], 0.5)
    stream = SpikedStream(m, np.random.default_rng(0))
    cfg = SpmConfig(n=4000, L=4, p=p, k=2)
    tracemalloc.start()
    try:
        spm_run(stream, cfg, reference=m, rng=np.random.default_rng(1))
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    numbers = peak / 8
    # the stream's chunk buffers are a few multiples of 8 p d; a d x d matrix would be 400 p d
    assert numbers <= 40 * p * d, numbers / (p * d)


# -- error terms and truncation ------------------------------------------------------

def test_error_terms_vanish_for_exact_samples():
    A = np.diag([2.0, 0.5])
    Z = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    g, gu = measure_error_terms(A, np.eye(2)[:, :1], np.eye(2), Z)
    assert g == 0.0 and gu == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_projected_error_below_full_error(seed):
    rng = np.random.default_rng(seed)
    m = _model(15, [1.0, 0.5], 0.3, seed)
    X = random_orthonormal_basis(15, 3, rng)
    g, gu = measure_error_terms(m, m.U, X, m.sample(rng, 200))
    assert gu <= g + 1e-12


def test_error_terms_shrink_like_inverse_sqrt_n():
    m = _model(50, [1.0, 0.9], 0.5)
    rng = np.random.default_rng(3)
    X = random_orthonormal_basis(50, 4, rng)
    ns = np.array([1000, 10_000, 100_000])
    g = [np.median([measure_error_terms(m, m.U, X, m.sample(rng, n))[0] for _ in range(5)]) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(g), 1)[0]
    assert -0.65 <= slope <= -0.35


def test_truncation_examples():
    d, n = 10, 1000
    U = np.eye(d)[:, :1]
    X = np.eye(d)[:, :2]
    np.testing.assert_array_equal(truncate_sample(np.zeros(d), X, U, 1.0, 1, n), np.zeros(d))
    z = np.zeros(d)
    z[5] = 2 * 8 * math.log(n)
    np.testing.assert_array_equal(truncate_sample(z, X, U, 1.0, 1, n), np.zeros(d))
    z = np.full(d, 0.1)
    np.testing.assert_array_equal(truncate_sample(z, X, U, 1.0, 1, n), z)


def test_truncation_never_fires_on_spiked_samples():
    d, n = 50, 10_000
    m = _model(d, [1.0, 0.9], 0.5)
    B = spiked_roundness(m).B
    rng = np.random.default_rng(4)
    X = random_orthonormal_basis(d, 4, rng)
    zeroed = 0
    for _ in range(10):
        zeroed += int(np.sum(truncation_mask(m.sample(rng, 100_000), X, m.U, B, m.k, n)))
    assert zeroed == 0


# -- matrix Chernoff probe -------------------------------------------------------------

def test_matrix_chernoff_probe():
    d = 10

    def sampler(rng, n):
        v = rng.standard_normal((n, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return d * v[:, :, None] * v[:, None, :]

    out = matrix_chernoff_probe(sampler, np.eye(d), R=d, n_values=[1, 2, 4, 8], t=0.5,
                                trials=10_000, rng=np.random.default_rng(0))
    assert out["fractions"][0] == 1.0
    assert out["c"] > 0
    for n, f in zip(out["n"], out["fractions"]):
        assert f <= d * math.exp(-out["c"] * n * 0.25) + 1e-12
    assert out["fractions"] == sorted(out["fractions"], reverse=True)


# -- sample sweeps ---------------------------------------------------------------------------

def test_sweep_validation():
    m = _model(10, [1.0], 0.5)
    with pytest.raises(ConfigInvalid) as e:
        sweep_samples(m, [1000], range(5), p=1, L=2)
    assert e.value.field == "n_grid"
    with pytest.raises(ConfigInvalid):
        sweep_samples(m, [1000, 500], range(5), p=1, L=2)
    with pytest.raises(ConfigInvalid) as e:
        sweep_samples(m, [100, 1000], range(4), p=1, L=2)
    assert e.value.field == "seeds"


def test_sweep_without_noise_recovers_exactly():
    d, L = 20, 5
    m = _model(d, [1.0, 0.9], 0.0)
    rows = sweep_samples(m, [d * L, 10 * d * L], range(5), p=2, L=L)
    assert rows[0][1] <= 1e-6
    assert all(r <= 1e-6 for _, _, res in rows for r in res)


def test_sweep_is_deterministic():
    m = _model(15, [1.0], 0.5)
    a = sweep_samples(m, [200, 2000], range(5), p=2, L=4)
    b = sweep_samples(m, [200, 2000], range(5), p=2, L=4)
    assert a == b
