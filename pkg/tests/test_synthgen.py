import numpy as np
import pytest

from adulterant.experiments import GridSpec, run_protocol
from adulterant.synthgen import (OILS, TABLE1_ROWS, GeneratorConfig, MixtureSpec, OilProfile,
                                 default_profiles, generate, parse_rows, render_profile,
                                 table1_config)


@pytest.fixture(scope="module")
def table1():
    return generate(table1_config(seed=7))


def test_table1_counts(table1):
    assert table1.N == 370 and table1.d == 1607
    sizes = [len(ex.labels) for ex in table1.examples]
    assert sizes.count(1) == 246 and sizes.count(2) == 124
    assert table1.space.names == OILS


def test_ratios_within_range(table1):
    for ex in table1.examples:
        if ex.is_mixture:
            row = TABLE1_ROWS[int(ex.id[1:3])]
            adulterant = table1.space.index(row.components[1])
            assert 0.05 <= ex.ratios[adulterant] <= 0.99
            assert sum(ex.ratios.values()) == pytest.approx(1.0, abs=1e-12)
        else:
            assert list(ex.ratios.values()) == [1.0]
    assert np.all(table1.X >= 0)


def test_mean_ratio_matches_uniform(table1):
    row = [ex for ex in table1.examples if ex.id.startswith("r09-")]
    names = TABLE1_ROWS[9].components
    adulterant = table1.space.index(names[1])
    r = np.array([ex.ratios[adulterant] for ex in row])
    se = (0.99 - 0.05) / np.sqrt(12 * len(r))
    assert abs(r.mean() - 0.52) <= 3 * se


def test_noiseless_mixture_is_convex_combination():
    rows = (MixtureSpec(("soybean", "peanut"), 1, (0.6, 0.6)),)
    ds = generate(table1_config(noise_sigma=0.0, rows=rows, seed=1))
    profiles = {p.name: p for p in default_profiles()}
    expect = 0.4 * render_profile(profiles["soybean"], 1607) + 0.6 * render_profile(profiles["peanut"], 1607)
    assert np.allclose(ds.X[0], expect, atol=1e-12)


def test_render_single_peak():
    y = render_profile(OilProfile("x", ((800.0, 10.0, 1.0), (100.0, 5.0, 0.1), (1500.0, 5.0, 0.1))), 1607)
    assert y.max() == 1.0 and int(np.argmax(y)) == 800
    assert y[450] < 1e-6


def test_determinism_and_validation():
    a = generate(table1_config(seed=3))
    b = generate(table1_config(seed=3))
    assert np.array_equal(a.X, b.X) and a.ids == b.ids
    with pytest.raises(ValueError, match="noise_sigma"):
        GeneratorConfig(noise_sigma=-0.1)
    with pytest.raises(ValueError):
        MixtureSpec(("a", "b"), 1, (0.01, 0.5))
    with pytest.raises(ValueError, match="unknown profile"):
        generate(table1_config(rows=(MixtureSpec(("olive",), 1),)))


def test_config_text_rows_parse_back():
    cfg = table1_config()
    rows = [line.split(" = ", 1)[1] for line in cfg.to_text().splitlines() if line.startswith("row.")]
    assert parse_rows(rows) == TABLE1_ROWS


SMALL_GRID = GridSpec(T_binary=(20, 60), T_multilabel=(20,), S=(1,))


def binary_accuracy(cfg):
    return run_protocol(generate(cfg), SMALL_GRID, "binary-boost", runs=1, k=5).summary()["accuracy"]["mean"]


def test_full_overlap_is_unlearnable():
    prior = 246 / 370
    assert binary_accuracy(table1_config(overlap=1.0, seed=2)) <= prior + 0.08


def test_separated_noiseless_profiles_are_easy():
    assert binary_accuracy(table1_config(overlap=0.0, noise_sigma=0.0, seed=2)) >= 0.99
