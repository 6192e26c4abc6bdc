import math

import numpy as np
import pytest

from contactflow import corner as co


MIXED = lambda om, j: (2 * j + 1) * math.pi / (2.0 * om)
DIRICHLET = lambda om, j: (j + 1) * math.pi / om


Q_STAR = {  # capped thresholds 2/(2 - gamma_min)
    ("mixed", math.pi / 4): 2.0,
    ("mixed", math.pi / 2): 2.0,
    ("mixed", 3 * math.pi / 4): 1.5,
    ("dirichlet", math.pi / 4): 2.0,
    ("dirichlet", math.pi / 2): 2.0,
    ("dirichlet", 3 * math.pi / 4): 2.0,
}


@pytest.mark.parametrize("omega", [math.pi / 4, math.pi / 2, 3 * math.pi / 4])
@pytest.mark.parametrize("boundary,closed", [("mixed", MIXED),
                                             ("dirichlet", DIRICHLET)])
def test_angular_spectrum_closed_form(omega, boundary, closed):
    spec = co.angular_eigenvalues(omega, count=5, boundary=boundary)
    want = np.array([closed(omega, j) for j in range(5)])
    assert np.max(np.abs(spec.eigenvalues - want)) < 1e-10
    assert np.max(np.abs(spec.residuals)) < 1e-8
    assert np.all(np.diff(spec.eigenvalues) > 0)
    assert abs(co.regularity_threshold(spec) - Q_STAR[boundary, omega]) < 1e-9


def test_spectrum_sorted_generic_angle():
    spec = co.angular_eigenvalues(2.0, count=6, boundary="mixed")
    assert np.all(np.diff(spec.eigenvalues) > 0)
    assert np.max(np.abs(spec.residuals)) < 1e-8


def test_rejects_unknown_boundary():
    with pytest.raises(ValueError):
        co.angular_eigenvalues(1.0, boundary="periodic")


def test_threshold_uncapped_branch():
    # gamma = pi/(2 omega) < 1 exactly when omega > pi/2
    om = 2.8
    spec = co.angular_eigenvalues(om, boundary="mixed")
    gamma = math.pi / (2.0 * om)
    assert abs(co.regularity_threshold(spec) - 2.0 / (2.0 - gamma)) < 1e-9


def test_wedge_probe_splits_at_obtuse_angle():
    om = 3 * math.pi / 4  # mixed threshold q* = 1.5
    low = co.wedge_poisson_probe(om, 1.2, 16)
    high = co.wedge_poisson_probe(om, 1.8, 16)
    assert low.verdict == "bounded"
    assert high.verdict == "divergent"
    assert low.growth_rate < 0.05 < 0.1 < high.growth_rate
    assert len(low.norms) == len(low.n_list) == len(low.h_list)
    assert math.isfinite(low.extrapolated)
    # norms of the divergent family grow along the whole ladder
    assert np.all(np.diff(high.norms) > 0)


def test_wedge_probe_right_angle_subcritical():
    # q* = 2 at omega = pi/2: anything strictly below 2 stays bounded
    rep = co.wedge_poisson_probe(math.pi / 2, 1.2, 16)
    assert rep.verdict == "bounded"
