import numpy as np
import pytest

from ripl_lab import (
    band_layout,
    dft_matrix,
    fourier_haar_matrix,
    gaussian_matrix,
    global_coherence,
    haar_matrix,
    is_isometry,
    load_matrix,
    matrix_content_hash,
    matrix_to_csv,
    save_matrix,
)

POW2 = [2, 4, 8, 16, 32, 64, 128, 256, 512, 1024]


def test_dft_2_explicit():
    f = dft_matrix(2)
    expected = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert np.allclose(f, expected, atol=1e-15)


def test_dft_rejects_non_power_of_two():
    for bad in (0, 3, 6, 100):
        with pytest.raises(ValueError):
            dft_matrix(bad)


@pytest.mark.parametrize("n", POW2)
def test_dft_unitary(n):
    assert is_isometry(dft_matrix(n), 1e-10)


def test_dft_unimodular_kernel():
    f = dft_matrix(16)
    assert np.max(np.abs(np.abs(f) ** 2 - 1.0 / 16)) < 1e-15


def test_haar_2_explicit():
    h = haar_matrix(2)
    expected = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert np.allclose(h, expected, atol=1e-15)


def test_haar_4_third_column():
    h = haar_matrix(4)
    expected = np.array([1, -1, 0, 0]) / np.sqrt(2)
    assert np.allclose(h[:, 2], expected, atol=1e-15)


@pytest.mark.parametrize("n", POW2)
def test_haar_orthonormal(n):
    assert is_isometry(haar_matrix(n), 1e-10)


def test_haar_scaling_and_mother_columns():
    n = 8
    h = haar_matrix(n)
    assert np.allclose(h[:, 0], 1 / np.sqrt(n))
    assert np.allclose(h[:, 1], np.array([1, 1, 1, 1, -1, -1, -1, -1]) / np.sqrt(n))


def test_haar_piecewise_constant_sparsity():
    # one jump: at most one wavelet per scale plus the two coarse columns
    n = 64
    r = 6
    x = np.ones(n)
    x[23:] = -2.0
    coeffs = haar_matrix(n).T @ x
    assert np.count_nonzero(np.abs(coeffs) > 1e-12) <= r + 1


def test_fourier_haar_2_is_identity():
    u, _ = fourier_haar_matrix(2)
    assert np.max(np.abs(u - np.eye(2))) < 1e-12


@pytest.mark.parametrize("n", [2, 4, 8, 16, 64, 256, 1024])
def test_fourier_haar_unitary(n):
    u, _ = fourier_haar_matrix(n)
    assert is_isometry(u, 1e-10)


def test_fourier_haar_fully_coherent():
    u, _ = fourier_haar_matrix(8)
    assert global_coherence(u) == pytest.approx(1.0, abs=1e-12)
    # the extreme entry sits in the first row/column block
    assert abs(u[0, 0]) == pytest.approx(1.0, abs=1e-12)


def test_band_layout_partition():
    for n in (4, 16, 128):
        layout = band_layout(n)
        r = n.bit_length() - 1
        assert layout.bands[0] == (0, 1)
        widths = [len(b) for b in layout.bands]
        assert widths == [2 ** max(k - 1, 1) for k in range(1, r + 1)]
        flat = [w for band in layout.bands for w in band]
        assert sorted(flat) == list(range(-n // 2 + 1, n // 2 + 1))
        assert sorted(layout.row_permutation.tolist()) == list(range(n))


def test_band_layout_second_band():
    layout = band_layout(8)
    assert layout.bands[1] == (-1, 2)
    assert layout.bands[2] == (-3, -2, 3, 4)
    assert layout.sampling_levels().boundaries == (0, 2, 4, 8)


def test_gaussian_column_norms_and_determinism():
    rng = np.random.default_rng(17)
    g = gaussian_matrix(256, 1000, rng)
    mean_colnorm = float(np.mean(np.sum(g**2, axis=0)))
    assert abs(mean_colnorm - 1.0) < 0.1
    g2 = gaussian_matrix(256, 1000, np.random.default_rng(17))
    assert np.array_equal(g, g2)


def test_is_isometry_examples():
    assert is_isometry(np.eye(3), 1e-12)
    assert not is_isometry(2 * np.eye(3), 1e-9)
    with pytest.raises(ValueError):
        is_isometry(np.ones((2, 3)))
    u, _ = fourier_haar_matrix(64)
    assert is_isometry(u, 1e-10)


def test_matrix_file_roundtrip(tmp_path):
    rng = np.random.default_rng(23)
    mat = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    path = tmp_path / "m.bin"
    save_matrix(path, mat)
    back = load_matrix(path)
    assert np.array_equal(back, mat.astype(np.complex128))
    # container layout: 16-byte header + interleaved float64 payload
    assert path.stat().st_size == 16 + 5 * 3 * 2 * 8


def test_matrix_csv_debug_form(tmp_path):
    mat = np.array([[1 + 2j, 3.5]])
    path = tmp_path / "m.csv"
    matrix_to_csv(path, mat)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "re0,im0,re1,im1"
    assert lines[1] == "1.0,2.0,3.5,0.0"


def test_matrix_content_hash_stable():
    mat = np.eye(3)
    assert matrix_content_hash(mat) == matrix_content_hash(mat.astype(complex))
    assert matrix_content_hash(mat) != matrix_content_hash(2 * mat)
