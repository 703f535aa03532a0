import json

import numpy as np
import pytest

from ctda.errors import ConfigError, DatasetIOError, GeneratorError
from ctda.synthgen import (CLASSES, CalcCluster, DatasetMode, Domain, GeneratorConfig, LutParams,
                           MassGeometry, Patch, PatchClass, apply_lut, class_counts, generate_dataset,
                           insert_calcifications, insert_mass, lag1_autocorrelation, load_dataset,
                           patch_from_seed, patch_seed, read_png, regenerate, sample_calc_cluster,
                           sample_patch, sample_texture, scale_texture, sigmoid_lut, spectral_slope,
                           transfer_function)


def zero_patch(size=32):
    return Patch(pixels=np.zeros((size, size)), class_label=PatchClass.NORMAL)


def test_transfer_function_values():
    assert transfer_function(3, 4, 1.0) == pytest.approx(0.2)
    assert transfer_function(0, 0, 1.5) == 0.0
    assert transfer_function(0, 2, 0.0) == 1.0
    with pytest.raises(GeneratorError):
        transfer_function(1, 1, -0.5)


def test_texture_is_normalized_and_reproducible():
    config = GeneratorConfig(patch_size=64)
    a = sample_texture(config, 1.4, seed=5)
    b = sample_texture(config, 1.4, seed=5)
    assert a.pixels.min() == 0.0
    assert a.pixels.max() == 1.0
    assert np.array_equal(a.pixels, b.pixels)
    assert a.class_label is PatchClass.NORMAL


def test_white_noise_texture_has_no_lag1_correlation():
    patch = sample_texture(GeneratorConfig(), 0.0, seed=3)
    assert abs(lag1_autocorrelation(patch.pixels)) < 0.05


def test_power_law_texture_is_correlated():
    patch = sample_texture(GeneratorConfig(), 1.6, seed=3)
    assert lag1_autocorrelation(patch.pixels) > 0.5


def test_steeper_spectrum_is_smoother_for_matched_seeds():
    config = GeneratorConfig()
    rough = [lag1_autocorrelation(sample_texture(config, 1.2, seed).pixels) for seed in range(20)]
    smooth = [lag1_autocorrelation(sample_texture(config, 1.6, seed).pixels) for seed in range(20)]
    assert np.mean(smooth) > np.mean(rough)
    assert sum(s > r for s, r in zip(smooth, rough)) >= 18


@pytest.mark.parametrize("beta", [1.2, 1.6])
def test_spectral_slope_tracks_beta(beta):
    config = GeneratorConfig()
    slopes = [spectral_slope(sample_texture(config, beta, seed).pixels) for seed in range(20)]
    assert np.mean(slopes) == pytest.approx(-2 * beta, rel=0.15)


def test_odd_patch_size_rejected():
    config = GeneratorConfig(patch_size=33, calc_area_side_range=(4, 12))
    with pytest.raises(GeneratorError):
        sample_texture(config, 1.2, seed=0)


def test_mass_reaches_peak_at_center():
    patch = sample_texture(GeneratorConfig(patch_size=64), 1.3, seed=1)
    geometry = MassGeometry(center_x=20, center_y=30, radius_x=6.0, radius_y=9.0, peak=1.0)
    mass = insert_mass(patch, geometry)
    assert mass.pixels[30, 20] == pytest.approx(1.0, abs=1e-12)
    assert mass.class_label is PatchClass.MASS
    assert 0.0 <= mass.pixels.min() and mass.pixels.max() <= 1.0
    assert "amplitude" in mass.lesion_params


def test_mass_adds_gaussian_volume():
    flat = Patch(pixels=np.full((128, 128), 0.3), class_label=PatchClass.NORMAL)
    geometry = MassGeometry(center_x=64, center_y=60, radius_x=6.0, radius_y=9.0, peak=0.9)
    mass = insert_mass(flat, geometry)

    amplitude = mass.lesion_params["amplitude"]
    assert amplitude == pytest.approx(0.6)
    volume = np.sum(mass.pixels - flat.pixels)
    assert volume == pytest.approx(2 * np.pi * 6.0 * 9.0 * amplitude, rel=0.05)


def test_isotropic_mass_is_symmetric():
    geometry = MassGeometry(center_x=16, center_y=16, radius_x=4.0, radius_y=4.0, peak=0.9)
    pixels = insert_mass(zero_patch(), geometry).pixels
    for d in (1, 3, 7):
        assert pixels[16, 16 + d] == pytest.approx(pixels[16 + d, 16], abs=1e-15)
        assert pixels[16, 16 - d] == pytest.approx(pixels[16 - d, 16], abs=1e-15)


def test_calcifications_overwrite_inside_cluster():
    dots = ((5, 5, 1.0), (10, 6, 1.0), (7, 12, 1.0), (15, 15, 1.0), (19, 9, 1.0))
    cluster = CalcCluster(x0=5, y0=5, side=15, dots=dots)
    pixels = insert_calcifications(zero_patch(), cluster).pixels

    inside = pixels[5:20, 5:20]
    assert np.sum(inside == 1.0) >= 5
    rows, cols = np.nonzero(pixels)
    assert rows.min() >= 4 and rows.max() <= 20
    assert cols.min() >= 4 and cols.max() <= 20


def test_calcification_cluster_outside_patch_rejected():
    cluster = CalcCluster(x0=25, y0=0, side=15, dots=((26, 1, 1.0),))
    with pytest.raises(GeneratorError):
        insert_calcifications(zero_patch(), cluster)


def test_cluster_sizes_cover_the_count_range():
    config = GeneratorConfig()
    rng = np.random.default_rng(21)
    counts = [len(sample_calc_cluster(config, rng).dots) for _ in range(100)]
    assert set(counts) == set(range(5, 13))


def test_sigmoid_lut_midpoint_and_range():
    params = LutParams(center=0.4, width=0.1)
    assert sigmoid_lut(0.4, params, rescale=False) == pytest.approx(0.5)
    rescaled = sigmoid_lut(np.array([0.0, 1.0]), params)
    assert rescaled == pytest.approx([0.0, 1.0])
    values = sigmoid_lut(np.linspace(0, 1, 50), params)
    assert np.all(np.diff(values) > 0)


def test_lut_spreads_a_linear_ramp():
    ramp = np.linspace(0.0, 1.0, 1001)
    assert np.var(sigmoid_lut(ramp, LutParams())) > 1.3 * np.var(ramp)


def test_apply_lut_twice_rejected():
    patch = apply_lut(zero_patch(), LutParams())
    assert patch.domain is Domain.LUT
    with pytest.raises(GeneratorError):
        apply_lut(patch, LutParams())


def test_lut_params_validated():
    with pytest.raises(ConfigError):
        LutParams(center=1.5)
    with pytest.raises(ConfigError):
        LutParams(width=0.0)


def test_generator_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        GeneratorConfig.from_dict({"patch_sise": 64})
    with pytest.raises(ConfigError):
        GeneratorConfig.from_dict({"lut": {"centre": 0.5}})
    with pytest.raises(ConfigError):
        GeneratorConfig(beta_range=(1.6, 1.2))


def test_patch_seeds_differ_per_index():
    seeds = {patch_seed(0, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert patch_seed(5, 3) != patch_seed(6, 3)


def test_sample_patch_classes(tiny_generator):
    for i, patch_class in enumerate(CLASSES):
        patch = sample_patch(tiny_generator, i, patch_class)
        assert patch.class_label is patch_class
        assert patch.pixels.shape == (32, 32)
        assert tiny_generator.beta_range[0] <= patch.beta <= tiny_generator.beta_range[1]


def test_texture_fills_the_background_band():
    config = GeneratorConfig(patch_size=64, texture_range=(0.1, 0.6))
    texture = sample_texture(config, 1.4, seed=2)
    scaled = scale_texture(texture, config.texture_range)
    assert scaled.pixels.min() == pytest.approx(0.1)
    assert scaled.pixels.max() == pytest.approx(0.6)

    normal = patch_from_seed(config, 2, PatchClass.NORMAL)
    assert normal.pixels.max() <= 0.6 + 1e-12
    with pytest.raises(ConfigError):
        GeneratorConfig(texture_range=(0.2, 1.5))


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_lesion_classes_are_exclusive(seed):
    config = GeneratorConfig(patch_size=64, mass_radius_range=(5.0, 10.0), calc_area_side_range=(15, 30))
    normal = patch_from_seed(config, seed, PatchClass.NORMAL)
    mass = patch_from_seed(config, seed, PatchClass.MASS)
    calc = patch_from_seed(config, seed, PatchClass.CALCIFICATION)

    assert normal.lesion_params == {}
    assert "amplitude" in mass.lesion_params and "dots" not in mass.lesion_params
    assert "dots" in calc.lesion_params and "amplitude" not in calc.lesion_params

    # calcifications only overwrite their radius-1 discs
    footprint = np.zeros((64, 64), dtype=bool)
    for x, y, _ in calc.lesion_params["dots"]:
        footprint[max(y - 1, 0):y + 2, max(x - 1, 0):x + 2] = True
    assert np.array_equal(calc.pixels[~footprint], normal.pixels[~footprint])
    assert calc.pixels[footprint].max() >= 0.9

    # a mass adds a smooth bump and nothing brighter than the background elsewhere
    assert np.all(mass.pixels >= normal.pixels - 1e-12)
    assert normal.pixels.max() <= config.texture_range[1] + 1e-12
    assert mass.pixels.max() >= 0.9


def test_mixed_dataset_manifest(tmp_path, tiny_generator):
    out = generate_dataset(tiny_generator, 48, DatasetMode.MIXED, split_seed=1, out_dir=tmp_path / "ds")
    config, records = load_dataset(out)

    assert config == tiny_generator
    assert len(records) == 48
    per_class = {c.value: 0 for c in CLASSES}
    for record in records:
        per_class[record["class"]] += 1
        assert (out / record["file"]).exists()
    assert set(per_class.values()) == {16}
    assert sum(class_counts(records).values()) == 48


def test_augmented_dataset_pairs_domains(tmp_path, tiny_generator):
    out = generate_dataset(tiny_generator, 33, "augmented", split_seed=1, out_dir=tmp_path / "ds")
    _, records = load_dataset(out)
    assert len(records) == 66

    by_index = {}
    for record in records:
        by_index.setdefault(record["index"], []).append(record)
    for pair in by_index.values():
        assert len(pair) == 2
        assert {r["domain"] for r in pair} == {"raw", "lut"}
        assert pair[0]["seed"] == pair[1]["seed"]
        assert pair[0]["class"] == pair[1]["class"]


def test_dataset_is_byte_identical_on_rerun(tmp_path, tiny_generator):
    a = generate_dataset(tiny_generator, 12, "mixed", 4, tmp_path / "a")
    b = generate_dataset(tiny_generator, 12, "mixed", 4, tmp_path / "b")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_regenerate_matches_written_png(tiny_dataset, tiny_generator):
    _, records = load_dataset(tiny_dataset)
    for record in records[:6]:
        stored = read_png(tiny_dataset / record["file"])
        rebuilt = regenerate(record, tiny_generator)
        assert np.max(np.abs(stored - rebuilt.pixels)) <= 0.5 / 65535 + 1e-12


def test_dataset_argument_errors(tmp_path, tiny_generator):
    with pytest.raises(ConfigError):
        generate_dataset(tiny_generator, 10, "mixed", 0, tmp_path / "x")
    with pytest.raises(ConfigError):
        generate_dataset(tiny_generator, 12, "sideways", 0, tmp_path / "x")


def test_load_dataset_errors(tmp_path):
    with pytest.raises(DatasetIOError):
        load_dataset(tmp_path)
    (tmp_path / "manifest.json").write_text(json.dumps({"schema_version": 99, "records": []}))
    with pytest.raises(DatasetIOError):
        load_dataset(tmp_path)
