import numpy as np
import pytest

from conftest import diagonal_instance, random_instance
from dynamics.dirichlet import dirichlet_form, form_duality, form_edges, generator_pairing
from dynamics.generator import (
    build_generator,
    conservativity_residual,
    glauber_generator,
    kawasaki_generator,
    reversibility_check,
    structure_violations,
)
from dynamics.rates import RateFamily, all_pairs_mobility, nearest_neighbour_mobility
from dynamics.spectrum import spectral_analysis
from measure.configuration import Configuration, particle_numbers
from measure.dpp import exact_distribution
from utils.errors import NonReversibleError


def _single_site(k):
    return np.array([[-k / (1 - k), k / (1 - k)], [1.0, -1.0]])


def test_glauber_single_site():
    space, _, interaction = diagonal_instance([0.5])
    q = glauber_generator(interaction, space, RateFamily("glauber", s=1.0))
    np.testing.assert_allclose(q.dense(), [[-1.0, 1.0], [1.0, -1.0]])
    assert q.rate(Configuration.empty(1), Configuration.full(1)) == pytest.approx(1.0)


def test_glauber_product_measure_is_kronecker_sum():
    space, _, interaction = diagonal_instance([0.3, 0.6])
    q = glauber_generator(interaction, space, RateFamily("glauber", s=1.0))
    expected = np.kron(_single_site(0.6), np.eye(2)) + np.kron(np.eye(2), _single_site(0.3))
    np.testing.assert_allclose(q.dense(), expected, atol=1e-12)


def test_zero_scale_gives_zero_generator():
    space, _, interaction = random_instance(3, seed=2)
    q = glauber_generator(interaction, space, RateFamily("glauber", scale=0.0))
    assert q.matrix.nnz == 0


def test_kawasaki_two_site_rate():
    k = 0.3
    space, _, interaction = diagonal_instance([k, k])
    q = kawasaki_generator(interaction, space, RateFamily("kawasaki", s=1.0, mobility=all_pairs_mobility(2)))
    assert q.rate(Configuration(2, (0,)), Configuration(2, (1,))) == pytest.approx(2 * k / (1 - k))
    assert q.rate(Configuration.empty(2), Configuration(2, (1,))) == 0.0


def test_kawasaki_zero_mobility():
    space, _, interaction = random_instance(3, seed=2)
    q = kawasaki_generator(interaction, space, RateFamily("kawasaki", mobility=np.zeros((3, 3))))
    assert q.matrix.nnz == 0


def test_family_kind_must_match():
    space, _, interaction = random_instance(3, seed=2)
    with pytest.raises(ValueError):
        kawasaki_generator(interaction, space, RateFamily("glauber"))


def test_kawasaki_conserves_particles():
    space, _, interaction = random_instance(5, seed=4)
    q = build_generator(interaction, space, RateFamily("kawasaki", s=0.5, mobility=all_pairs_mobility(5)))
    coo = q.matrix.tocoo()
    sizes = particle_numbers(5)
    assert np.all(sizes[coo.row] == sizes[coo.col])
    assert structure_violations(q) == 0


@pytest.mark.parametrize("kind", ["glauber", "kawasaki"])
@pytest.mark.parametrize("s", [0.0, 0.5, 1.0])
def test_reversibility_and_conservativity(kind, s):
    space, _, interaction = random_instance(5, seed=10, lambda_max=0.85)
    mobility = nearest_neighbour_mobility(5, periodic=True) if kind == "kawasaki" else None
    family = RateFamily(kind, s=s, mobility=mobility)
    table = exact_distribution(interaction, space)
    q = build_generator(interaction, space, family)
    assert reversibility_check(q, table) <= 1e-10
    assert conservativity_residual(q) <= 1e-12
    assert structure_violations(q) == 0


def test_asymmetric_mobility_is_not_reversible():
    space, _, interaction = random_instance(4, seed=3, lambda_max=0.7)
    a = all_pairs_mobility(4)
    a[0, 1] += 0.5
    family = RateFamily("kawasaki", s=0.5, mobility=a)
    table = exact_distribution(interaction, space)
    q = build_generator(interaction, space, family)
    assert reversibility_check(q, table) > 1e-6
    with pytest.raises(NonReversibleError):
        spectral_analysis(q, table)


def test_triplets_frame():
    space, _, interaction = diagonal_instance([0.5])
    frame = glauber_generator(interaction, space, RateFamily("glauber")).to_triplets()
    assert list(frame.columns) == ["row_state", "col_state", "rate"]
    assert frame[["row_state", "col_state"]].values.tolist() == [[0, 1], [1, 0]]


@pytest.mark.parametrize("kind", ["glauber", "kawasaki"])
def test_form_duality(kind):
    space, _, interaction = random_instance(5, seed=14, weights=[1.0, 0.5, 2.0, 1.0, 0.8])
    mobility = all_pairs_mobility(5) if kind == "kawasaki" else None
    family = RateFamily(kind, s=0.5, mobility=mobility)
    table = exact_distribution(interaction, space)
    q = build_generator(interaction, space, family)
    edges = form_edges(interaction, space, table, family)
    gen = np.random.default_rng(8)
    for _ in range(20):
        f, g = gen.standard_normal(32), gen.standard_normal(32)
        res = form_duality(interaction, space, family, table, f, g, q=q, edges=edges)
        assert res.residual <= 1e-10 * max(1.0, abs(res.form))
        assert edges.evaluate(f, f) >= 0.0


def test_form_vanishes_on_constants(small_instance, glauber_family):
    space, _, interaction = small_instance
    table = exact_distribution(interaction, space)
    ones = np.ones(32)
    g = np.arange(32, dtype=float)
    assert dirichlet_form(interaction, space, table, glauber_family, ones, g) == 0.0
    q = build_generator(interaction, space, glauber_family)
    assert generator_pairing(q, table, g, ones) == pytest.approx(0.0, abs=1e-12)


def test_spectrum_single_site():
    space, _, interaction = diagonal_instance([0.5])
    table = exact_distribution(interaction, space)
    q = glauber_generator(interaction, space, RateFamily("glauber", s=1.0))
    report = spectral_analysis(q, table)
    np.testing.assert_allclose(report.eigenvalues, [0.0, 2.0], atol=1e-12)
    assert report.gap == pytest.approx(2.0)
    assert report.zero_count == 1
    assert report.method == "dense"


def test_spectrum_of_zero_generator():
    space, _, interaction = random_instance(3, seed=2)
    table = exact_distribution(interaction, space)
    q = glauber_generator(interaction, space, RateFamily("glauber", scale=0.0))
    report = spectral_analysis(q, table)
    assert report.gap is None
    assert report.zero_count == 8
    assert report.to_dict()["gap"] == "none"


def test_kawasaki_spectrum_has_one_zero_per_sector():
    space, _, interaction = random_instance(4, seed=6)
    table = exact_distribution(interaction, space)
    q = kawasaki_generator(interaction, space, RateFamily("kawasaki", s=1.0, mobility=all_pairs_mobility(4)))
    report = spectral_analysis(q, table)
    assert report.zero_count == 5
    assert [s.particles for s in report.sectors] == [0, 1, 2, 3, 4]
    assert report.gap is not None and report.gap > 1e-8
    assert report.min_eigenvalue >= -1e-10


def test_shift_invert_matches_dense():
    space, _, interaction = random_instance(5, seed=12)
    table = exact_distribution(interaction, space)
    q = glauber_generator(interaction, space, RateFamily("glauber", s=0.5))
    dense = spectral_analysis(q, table, dense_max=12)
    sparse_report = spectral_analysis(q, table, dense_max=3)
    assert sparse_report.method == "shift-invert"
    assert sparse_report.eigenvalues.size == 6
    assert sparse_report.gap == pytest.approx(dense.gap, abs=1e-8)
    assert sparse_report.zero_count == 1
