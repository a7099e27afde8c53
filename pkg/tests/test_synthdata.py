import math

import numpy as np
import pytest
from scipy import integrate

from topk_lab.core import InvalidInputError, seeded_rng
from topk_lab.synthdata import (
    CircleMixtureSpec,
    DatasetFormatError,
    MinorMode,
    circular_density,
    experiment1_spec,
    experiment2_spec,
    read_dataset,
    regenerate,
    sample_dataset,
    true_density,
    write_dataset,
)

PEAK_SIGMA10 = 0.0398942280401432678  # 1 / (10 sqrt(2 pi))
BIMODAL_AT_MINOR_SIGMA10_D90 = 0.0132980760133810893  # peak/3 + (2/3) peak exp(-81/2)


def circular_mean_std(angles_deg):
    z = np.exp(1j * np.deg2rad(angles_deg)).mean()
    mean = math.degrees(math.atan2(z.imag, z.real))
    std = math.degrees(math.sqrt(-2 * math.log(abs(z))))
    return mean, std


def test_points_on_unit_circle_and_balanced():
    ds = sample_dataset(experiment2_spec(60.0), seeded_rng(3))
    assert len(ds) == 1800
    np.testing.assert_allclose((ds.points**2).sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(np.bincount(ds.labels), [300] * 6)


def test_degenerate_sigma():
    spec = CircleMixtureSpec(sigma_deg=1e-9, samples_per_class=20)
    ds = sample_dataset(spec, seeded_rng(0))
    for c in range(6):
        th = math.radians(60 * c)
        pts = ds.points[ds.labels == c]
        np.testing.assert_allclose(pts, np.tile([math.cos(th), math.sin(th)], (20, 1)), atol=1e-6)


def test_experiment1_moments():
    ds = sample_dataset(experiment1_spec(20.0), seeded_rng(11))
    for c in range(6):
        ang = np.rad2deg(np.arctan2(ds.points[ds.labels == c, 1], ds.points[ds.labels == c, 0]))
        mean, std = circular_mean_std(ang)
        diff = (mean - 60 * c + 180) % 360 - 180
        assert abs(diff) < 3 * 20 / math.sqrt(300)
        assert abs(std - 20) < 0.15 * 20


def test_minor_mode_fraction():
    spec = CircleMixtureSpec(sigma_deg=10.0, minor_mode=MinorMode(90.0), samples_per_class=500)
    ds = sample_dataset(spec, seeded_rng(5))
    # with sigma 10 and d 90 the modes are >8 sigma apart, so assignment by
    # nearest mode is unambiguous
    rel = (ds.angles_deg - np.repeat(60.0 * np.arange(6), 500))
    minor = np.abs(rel - 90.0) < np.abs(rel)
    assert abs(minor.mean() - 1 / 3) < 0.03


def test_minor_mode_between_neighbours():
    spec = experiment2_spec(90.0)
    for c in range(6):
        minor = spec.center_deg(c) + spec.minor_mode.offset_deg
        assert spec.center_deg(c) + 60 < minor < spec.center_deg(c) + 120


def test_same_seed_same_data():
    a = sample_dataset(experiment2_spec(45.0), seeded_rng(9))
    b = sample_dataset(experiment2_spec(45.0), seeded_rng(9))
    assert a == b
    assert a != sample_dataset(experiment2_spec(45.0), seeded_rng(10))


def test_density_peak_and_bimodal():
    spec1 = experiment1_spec(10.0)
    assert true_density(spec1, 0.0, 0) == pytest.approx(PEAK_SIGMA10, rel=1e-14)
    spec2 = experiment2_spec(90.0)
    assert true_density(spec2, 60.0 + 90.0, 1) == pytest.approx(BIMODAL_AT_MINOR_SIGMA10_D90, rel=1e-12)


@pytest.mark.parametrize("spec", [experiment1_spec(30.0), experiment2_spec(45.0)])
def test_density_integrates_to_one(spec):
    for c in (0, 3):
        f = lambda th: true_density(spec, th, c)
        lo, hi = spec.center_deg(c) - 400.0, spec.center_deg(c) + 400.0
        pieces = [(-np.inf, lo), (lo, hi), (hi, np.inf)]
        total = sum(integrate.quad(f, a, b, epsabs=1e-13, limit=400)[0] for a, b in pieces)
        assert total == pytest.approx(1.0, abs=1e-6)


def test_circular_density_periodic():
    spec = experiment2_spec(90.0)
    th = np.linspace(0, 360, 50)
    np.testing.assert_allclose(circular_density(spec, th, 5), circular_density(spec, th + 360, 5), rtol=1e-9)


def test_round_trip(tmp_path):
    ds = sample_dataset(experiment2_spec(75.0), seeded_rng(2**63 + 17))
    path = tmp_path / "data.csv"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert back == ds
    assert back.points.tobytes() == ds.points.tobytes()
    assert regenerate(back) == ds


def test_wrong_label_cardinality(tmp_path):
    ds = sample_dataset(CircleMixtureSpec(samples_per_class=3), seeded_rng(0))
    path = tmp_path / "data.csv"
    write_dataset(ds, path)
    lines = path.read_text().splitlines()
    lines[5] = lines[5].rsplit(",", 1)[0] + ",4"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError):
        read_dataset(path)


@pytest.mark.parametrize(
    "mutate, lineno",
    [
        (lambda ls: ["not a header"] + ls[1:], 1),
        (lambda ls: ls[:4] + ["0.1,0.2"] + ls[5:], 5),
        (lambda ls: ls[:3] + ["a,b,0"] + ls[4:], 4),
        (lambda ls: ls[:3] + ["0.1,0.2,9"] + ls[4:], 4),
    ],
)
def test_parse_errors_carry_line_numbers(tmp_path, mutate, lineno):
    ds = sample_dataset(CircleMixtureSpec(samples_per_class=2), seeded_rng(0))
    path = tmp_path / "data.csv"
    write_dataset(ds, path)
    path.write_text("\n".join(mutate(path.read_text().splitlines())) + "\n")
    with pytest.raises(DatasetFormatError) as info:
        read_dataset(path)
    assert info.value.lineno == lineno


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_classes": 1},
        {"sigma_deg": 0.0},
        {"samples_per_class": 0},
        {"minor_mode": MinorMode(30.0, relative_frequency=1.0)},
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidInputError):
        CircleMixtureSpec(**kwargs)
