import numpy as np
import pytest

from gcsc.errors import InvalidInputError
from gcsc.signal_fft import linear_convolve
from gcsc.synth_bench import (DEFAULT_BETA, ExperimentConfig, NoiseSpec, SynthConfig, gen_codes,
                              gen_filters, mae, make_dataset, mixture_moments, rmse,
                              run_experiment, sample_noise, snr, standardized_shape, _shape)
from gcsc.csc_core import reconstruct


def test_config_validation():
    with pytest.raises(InvalidInputError):
        SynthConfig(K=2)
    with pytest.raises(InvalidInputError):
        SynthConfig(N=2, P=16, K=1, M=17, shapes=("sine",))
    with pytest.raises(InvalidInputError):
        NoiseSpec("pink")
    with pytest.raises(InvalidInputError):
        NoiseSpec(scale=0)


@pytest.mark.parametrize("name", ["triangle", "square", "sine"])
def test_standardized_shapes(name):
    d = standardized_shape(name, 65)
    assert abs(d.mean()) < 1e-12
    assert abs(d.var(ddof=1) - 1) < 1e-12


def test_triangle_symmetric():
    d = standardized_shape("triangle", 65)
    np.testing.assert_allclose(d, d[::-1], atol=1e-15)


def test_sine_energy_at_first_bin():
    s = np.abs(np.fft.fft(_shape("sine", 65))) ** 2
    assert (s[1] + s[-1]) / s.sum() >= 0.99


def test_filters_in_unit_ball():
    D = gen_filters(SynthConfig())
    assert D.shape == (3, 65)
    np.testing.assert_allclose(np.linalg.norm(D, axis=1), 1.0, rtol=1e-12)


def test_codes_one_nonzero_edge_safe():
    cfg = SynthConfig(N=200, P=64, K=3, M=17)
    Z = gen_codes(cfg, np.random.default_rng(1))
    nz = Z != 0
    assert np.all(nz.sum(axis=2) == 1)
    assert Z.min() >= 0 and Z.max() <= 1
    pos = np.argmax(nz, axis=2)
    assert pos.max() <= 64 - 17


def test_clean_data_has_no_wrap():
    cfg = SynthConfig(N=20, P=64, K=3, M=17)
    D = gen_filters(cfg)
    Z = gen_codes(cfg, np.random.default_rng(2))
    lin = np.array([sum(linear_convolve(D[k], Z[i, k]) for k in range(3)) for i in range(20)])
    np.testing.assert_array_equal(lin[:, 64:], 0)
    np.testing.assert_allclose(reconstruct(D, Z), lin[:, :64], atol=1e-14)


def test_noise_none_and_determinism():
    assert not np.any(sample_noise(NoiseSpec("none"), 3, 5))
    for kind in ("gaussian", "laplace", "alpha_stable", "zero_mean_mixture", "nonzero_mean_mixture"):
        a = sample_noise(NoiseSpec(kind, seed=4), 4, 8)
        b = sample_noise(NoiseSpec(kind, seed=4), 4, 8)
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("kind", ["zero_mean_mixture", "nonzero_mean_mixture"])
def test_mixture_moments(kind):
    x = sample_noise(NoiseSpec(kind, seed=11), 100, 1000).ravel()
    mean, var = mixture_moments(kind)
    n = x.size
    assert abs(x.mean() - mean) <= 3 * np.sqrt(var / n)
    # standard error of the sample variance from the fourth central moment
    m4 = np.mean((x - x.mean()) ** 4)
    assert abs(x.var() - var) <= 3 * np.sqrt((m4 - var * var) / n)


def test_nonzero_mixture_mean_arithmetic():
    assert mixture_moments("nonzero_mean_mixture")[0] == pytest.approx(-0.001)


def test_gaussian_and_laplace_moments():
    for kind in ("gaussian", "laplace"):
        x = sample_noise(NoiseSpec(kind, seed=3), 100, 1000).ravel()
        assert abs(x.mean()) <= 3 * 0.01 / np.sqrt(x.size)
        assert x.std() == pytest.approx(0.01, rel=0.01)


def test_cauchy_iqr():
    x = sample_noise(NoiseSpec("alpha_stable", seed=5), 100, 1000).ravel()
    q1, q3 = np.percentile(x, [25, 75])
    assert (q3 - q1) == pytest.approx(2e-4, rel=0.03)


def test_sample_membership_shares_component():
    x = sample_noise(NoiseSpec("nonzero_mean_mixture", membership="sample", seed=1), 400, 200)
    # uniform rows are bounded by the scale; at least some rows must be entirely inside it
    inside = np.all(np.abs(x) <= 0.01, axis=1)
    assert 0.1 < inside.mean() < 0.3


def test_metrics_hand_values():
    c = np.zeros((1, 2))
    r = np.array([[1.0, -1.0]])
    assert mae(c, r) == 1.0 and rmse(c, r) == 1.0
    assert mae(c, c) == 0.0 and rmse(c, c) == 0.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.standard_normal((3, 7)), rng.standard_normal((3, 7))
        assert rmse(a, b) >= mae(a, b)


def test_snr_definition():
    clean = np.array([[1.0, 2.0, 3.0]])
    assert snr(clean, 2 * clean) == pytest.approx(0.0)
    noise = np.array([[1.0, -1.0, 0.5]])
    scaled = noise * np.sqrt(np.sum(clean ** 2) / 10 / np.sum(noise ** 2))
    assert snr(clean, clean + scaled) == pytest.approx(10.0)
    assert snr(clean, clean) == float("inf")


def test_dataset_streams_are_separate():
    a = make_dataset(SynthConfig(N=5, P=64, K=3, M=17, seed=1), NoiseSpec("gaussian", seed=1))
    b = make_dataset(SynthConfig(N=5, P=64, K=3, M=17, seed=1), NoiseSpec("laplace", seed=1))
    np.testing.assert_array_equal(a.clean, b.clean)
    assert not np.array_equal(a.noisy, b.noisy)


def test_empty_method_list():
    assert run_experiment(SynthConfig(N=2, P=32, K=3, M=9), NoiseSpec(), [], [0]) == []


def test_unknown_method():
    with pytest.raises(InvalidInputError):
        run_experiment(SynthConfig(N=2, P=32, K=3, M=9), NoiseSpec(), ["ksvd"], [0])


def test_single_seed_has_zero_std():
    rows = run_experiment(SynthConfig(N=4, P=64, K=3, M=9), NoiseSpec("gaussian"),
                          ["cscl2", "gcsc"], [7])
    assert [r.method for r in rows] == ["cscl2", "gcsc"]
    for r in rows:
        assert r.mae_std == 0 and r.rmse_std == 0 and r.seconds_std == 0
        assert np.isfinite(r.mae_mean) and r.rmse_mean >= r.mae_mean


def test_default_betas_cover_methods():
    assert set(DEFAULT_BETA) == {"gcsc", "cscl2", "cscl1", "wcsc_bcd"}
    exp = ExperimentConfig()
    exp.betas["gcsc"] = 1.0
    assert DEFAULT_BETA["gcsc"] == 250.0
