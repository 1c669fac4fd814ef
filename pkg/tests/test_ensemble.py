import math
import warnings

import numpy as np
import pytest

from spectral_lab import ensemble as en
from spectral_lab import measure as ms
from spectral_lab.errors import ClusterWarning, DimensionMismatch, OrderingViolated


def random_hermitian(n, rng, complex_=False):
    a = rng.standard_normal((n, n))
    if complex_:
        a = a + 1j * rng.standard_normal((n, n))
    return (a + a.conj().T) / 2


def charpoly_roots(a):
    """Eigenvalues by bisection on det(A - x) sign changes, descending."""
    n = a.shape[0]
    r = np.abs(a).sum(axis=1).max() + 1.0
    xs = np.linspace(-r, r, 20001)

    def det(x):
        return np.linalg.det(a - x * np.eye(n)).real

    vals = np.array([det(x) for x in xs])
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:])):
        lo, hi = xs[i], xs[i + 1]
        flo = vals[i]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = det(mid)
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    return np.sort(roots)[::-1]


# --------------------------------------------------------------------------- sampling


def test_single_entry_variance():
    draws = [en.sample_wigner(1, "real", np.random.default_rng(s)).entries[0] for s in range(4000)]
    assert np.var(draws) == pytest.approx(2.0, rel=0.1)


def test_real_offdiagonal_mean():
    n = 500
    w = en.sample_wigner(n, "real", np.random.default_rng(3)).dense()
    off = w[np.tril_indices(n, -1)]
    band = 4 / math.sqrt(off.size) * math.sqrt(1 / n)
    assert abs(off.mean()) <= band
    assert np.var(off) == pytest.approx(1 / n, rel=0.02)
    assert np.var(np.diag(w)) == pytest.approx(2 / n, rel=0.2)


def test_complex_entries_are_circular():
    n = 500
    w = en.sample_wigner(n, "complex", np.random.default_rng(4)).dense()
    off = w[np.tril_indices(n, -1)]
    assert abs(np.mean(off ** 2)) <= 4 / math.sqrt(off.size) * (1 / n)
    assert np.mean(np.abs(off) ** 2) == pytest.approx(1 / n, rel=0.02)
    assert np.all(np.diag(w).imag == 0)
    assert np.var(np.diag(w).real) == pytest.approx(1 / n, rel=0.2)
    assert np.allclose(w, w.conj().T)


def test_packed_layout_round_trip():
    w = en.sample_wigner(6, "complex", np.random.default_rng(1))
    d = w.dense()
    rows, cols = np.tril_indices(6)
    np.testing.assert_array_equal(d[rows, cols], w.entries)
    np.testing.assert_array_equal(w.diagonal(), np.diag(d).real)
    with pytest.raises(DimensionMismatch):
        en.WignerMatrix(5, "real", np.zeros(3))


# --------------------------------------------------------------------------- assemble


def test_zero_potential_and_zero_coupling():
    w = en.sample_wigner(7, "real", np.random.default_rng(2))
    np.testing.assert_array_equal(en.assemble(np.zeros(7), 7.0, w).dense, w.dense())
    v = np.linspace(1, -1, 7)
    np.testing.assert_array_equal(en.assemble(v, 0.0, w).dense, w.dense())


def test_assemble_guards():
    w = en.sample_wigner(4, "real", np.random.default_rng(2))
    with pytest.raises(OrderingViolated):
        en.assemble([0.1, 0.5, 0.0, -0.2], 1.0, w)
    with pytest.raises(DimensionMismatch):
        en.assemble([0.1, 0.0], 1.0, w)


def test_trace_identity():
    rng = np.random.default_rng(9)
    v = ms.sample_sorted(ms.build_measure(2, 2), 40, rng)
    h = en.assemble(v, 2.0, en.sample_wigner(40, "complex", rng))
    assert h.trace() == pytest.approx(np.trace(h.dense).real, abs=1e-12)
    assert h.frobenius() == pytest.approx(np.linalg.norm(h.dense), abs=1e-12)
    assert not h.dense.flags.writeable


# --------------------------------------------------------------------------- tridiagonal form


def test_two_by_two_unchanged():
    a = np.array([[1.0, 2.0], [2.0, -3.0]])
    t = en.tridiagonalize(a)
    np.testing.assert_array_equal(t.diag, [1.0, -3.0])
    np.testing.assert_array_equal(t.offdiag, [2.0])


def test_diagonal_input():
    t = en.tridiagonalize(np.diag([4.0, 1.0, -2.0, 0.5]))
    np.testing.assert_array_equal(t.offdiag, np.zeros(3))


@pytest.mark.parametrize("complex_", [False, True])
def test_random_six_by_six_against_characteristic_polynomial(complex_):
    a = random_hermitian(6, np.random.default_rng(11), complex_)
    t = en.tridiagonalize(a)
    assert np.all(t.offdiag >= 0)
    np.testing.assert_allclose(en.eigenvalues(t), charpoly_roots(a), atol=1e-10)


@pytest.mark.parametrize("complex_", [False, True])
def test_reduction_is_unitary_similarity(complex_):
    a = random_hermitian(12, np.random.default_rng(12), complex_)
    t = en.tridiagonalize(a)
    q = t.back_transform(np.eye(12))
    tri = np.diag(t.diag) + np.diag(t.offdiag, 1) + np.diag(t.offdiag, -1)
    np.testing.assert_allclose(q.conj().T @ q, np.eye(12), atol=1e-13)
    np.testing.assert_allclose(q @ tri @ q.conj().T, a, atol=1e-12)


# --------------------------------------------------------------------------- eigenvalues


def test_small_closed_forms():
    np.testing.assert_array_equal(en.eigenvalues(en.Tridiagonal(np.array([3.0, 1.0]), np.array([0.0]))), [3, 1])
    np.testing.assert_allclose(en.eigenvalues(en.Tridiagonal(np.array([0.0, 0.0]), np.array([1.0]))),
                               [1, -1], atol=1e-15)
    a, b, c = 0.3, -1.7, 0.8
    disc = math.sqrt((a - b) ** 2 + 4 * c * c)
    got = en.eigenvalues(en.Tridiagonal(np.array([a, b]), np.array([c])))
    np.testing.assert_allclose(got, [(a + b + disc) / 2, (a + b - disc) / 2], atol=1e-15)


def test_sturm_oracle_on_small_matrices():
    rng = np.random.default_rng(13)
    for _ in range(50):
        n = rng.integers(1, 9)
        d, e = rng.standard_normal(n), np.abs(rng.standard_normal(n - 1))
        t = en.Tridiagonal(d, e)
        np.testing.assert_allclose(en.eigenvalues(t), en.sturm_eigenvalues(d, e), atol=1e-12)


def test_permutation_invariance():
    rng = np.random.default_rng(14)
    a = random_hermitian(40, rng)
    p = rng.permutation(40)
    e1 = en.eigenvalues(en.tridiagonalize(a))
    e2 = en.eigenvalues(en.tridiagonalize(a[np.ix_(p, p)]))
    np.testing.assert_allclose(e1, e2, atol=1e-10)


def test_trace_and_square_identities():
    rng = np.random.default_rng(15)
    n = 120
    h = en.assemble(ms.sample_sorted(ms.build_measure(2, 2), n, rng), 2.0, en.sample_wigner(n, "complex", rng))
    mu = en.eigenvalues(en.tridiagonalize(h))
    assert abs(mu.sum() - h.trace()) <= 1e-8 * n
    assert abs(np.sum(mu ** 2) - h.frobenius() ** 2) <= 1e-8 * n


# --------------------------------------------------------------------------- eigenvectors


def test_diagonal_matrix_gives_basis_vectors():
    a = np.diag([0.5, 3.0, -1.0, 2.0])
    t = en.tridiagonalize(a)
    u = en.top_eigenvectors(a, t, en.eigenvalues(t), 2)
    np.testing.assert_allclose(np.abs(u), np.eye(4)[[1, 3]], atol=1e-12)


def test_two_by_two_swap():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    t = en.tridiagonalize(a)
    u = en.top_eigenvectors(a, t, en.eigenvalues(t), 1)[0]
    np.testing.assert_allclose(np.abs(u), [1 / math.sqrt(2)] * 2, atol=1e-12)


@pytest.mark.parametrize("complex_", [False, True])
def test_random_eight_by_eight_residuals(complex_):
    a = random_hermitian(8, np.random.default_rng(16), complex_)
    t = en.tridiagonalize(a)
    eigs = en.eigenvalues(t)
    u = en.top_eigenvectors(a, t, eigs, 8)
    norm = np.linalg.norm(a, 2)
    for k in range(8):
        assert np.linalg.norm(a @ u[k] - eigs[k] * u[k]) <= 1e-8 * norm
    np.testing.assert_allclose(u @ u.conj().T, np.eye(8), atol=1e-12)


def test_cluster_warning_keeps_orthogonality():
    a = np.diag([2.0, 2.0, 1.0, 0.0])
    t = en.tridiagonalize(a)
    with pytest.warns(ClusterWarning):
        u = en.top_eigenvectors(a, t, en.eigenvalues(t), 2)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-12)
    for k in range(2):
        np.testing.assert_allclose(a @ u[k], 2.0 * u[k], atol=1e-12)


def test_semicircle_top_eigenvalue():
    rng = np.random.default_rng(17)
    h = en.assemble(np.zeros(200), 0.0, en.sample_wigner(200, "real", rng))
    data = en.spectral_decompose(h, 3)
    assert 1.8 <= data.eigenvalues[0] <= 2.2


def test_three_by_three_against_cubic():
    rng = np.random.default_rng(18)
    h = en.assemble(np.array([0.9, 0.1, -0.4]), 1.5, en.sample_wigner(3, "real", rng))
    data = en.spectral_decompose(h, 3)
    np.testing.assert_allclose(data.eigenvalues, charpoly_roots(h.dense), atol=1e-10)


def test_zero_vectors_requested():
    rng = np.random.default_rng(19)
    h = en.assemble(np.zeros(10), 1.0, en.sample_wigner(10, "real", rng))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        data = en.spectral_decompose(h, 0)
    assert data.top_vectors.shape == (0, 10) and data.eigenvalues.shape == (10,)
    with pytest.raises(ValueError):
        en.spectral_decompose(h, 11)


@pytest.mark.parametrize("symmetry", ["real", "complex"])
def test_matches_lapack_at_moderate_size(symmetry):
    rng = np.random.default_rng(20)
    n = 300
    h = en.assemble(ms.sample_sorted(ms.build_measure(2, 2), n, rng), 2.0, en.sample_wigner(n, symmetry, rng))
    data = en.spectral_decompose(h, 5)
    ref = np.linalg.eigvalsh(h.dense)[::-1]
    np.testing.assert_allclose(data.eigenvalues, ref, atol=1e-12)
    assert np.max(data.residual_norms) <= 1e-10
    np.testing.assert_allclose(data.top_vectors @ data.top_vectors.conj().T, np.eye(5), atol=1e-12)
