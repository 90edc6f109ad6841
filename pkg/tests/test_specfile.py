import math

import pytest

from timebin.optics import Geometry
from timebin.specfile import CONFIG_KEYS, SpecError, bundled_spec, load_spec, parse_spec

MINIMAL = """\
config.geometry = MichelsonSwap
scan.values = [0, 1, 2]
"""


def test_minimal_spec_fills_defaults():
    spec = parse_spec(MINIMAL)
    for key, (_, default) in CONFIG_KEYS.items():
        if key != "geometry":
            assert getattr(spec.config, key) == default, key
    assert spec.scan.kind == "phase"
    assert spec.scan.values == (0.0, 1.0, 2.0)
    assert spec.scan.duration_per_point == 1.0
    assert spec.scan.seed == 0
    assert spec.analysis.fit and not spec.analysis.subtract


def test_reflectivity_out_of_range_names_key_and_line():
    with pytest.raises(SpecError) as exc:
        parse_spec("config.geometry = FransonDual\nconfig.bs_reflectivity_R = 1.2\nscan.values = [0, 1]\n")
    assert exc.value.key == "config.bs_reflectivity_R"
    assert exc.value.line == 2
    assert "line 2" in str(exc.value) and "bs_reflectivity_R" in str(exc.value)


def test_units_are_converted():
    spec = parse_spec(MINIMAL + "config.coincidence_window = 1.5 ns\nconfig.arm_long_l = 120 cm\n"
                                "config.pump_coherence_time = 0.1 us\n")
    assert spec.config.coincidence_window == 1.5e-9
    assert spec.config.arm_long_l == 1.2
    assert spec.config.pump_coherence_time == 1e-7


def test_unit_violation():
    with pytest.raises(SpecError, match="unit violation") as exc:
        parse_spec(MINIMAL + "config.coincidence_window = 1.5 m\n")
    assert exc.value.key == "config.coincidence_window"
    assert exc.value.line == 3


def test_unknown_and_duplicate_keys():
    with pytest.raises(SpecError, match="unknown key"):
        parse_spec(MINIMAL + "config.wavelength = 532 nm\n")
    with pytest.raises(SpecError, match="duplicate"):
        parse_spec(MINIMAL + "config.pair_rate = 1\nconfig.pair_rate = 2\n")


def test_missing_geometry():
    with pytest.raises(SpecError, match="config.geometry"):
        parse_spec("scan.values = [0, 1]\n")


@pytest.mark.parametrize("values", ["[]", "[0, 1, 1]", "[0, 2, 1]"])
def test_scan_values_must_be_nonempty_and_monotone(values):
    with pytest.raises(SpecError, match="scan"):
        parse_spec(f"config.geometry = MichelsonSwap\nscan.values = {values}\n")


def test_range_form_and_delay_units():
    spec = parse_spec("config.geometry = MichelsonSwap\nscan.kind = delay\n"
                      "scan.start = -2 ns\nscan.stop = 2 ns\nscan.points = 5\n")
    assert spec.scan.values == (-2e-9, -1e-9, 0.0, 1e-9, 2e-9)


def test_comments_and_blank_lines():
    spec = parse_spec("# header\n\nconfig.geometry = FransonDual   # inline\n" "scan.values = [0, 1]\n")
    assert spec.config.geometry is Geometry.FRANSON_DUAL


def test_bundled_short_window_scenario():
    spec = bundled_spec("swap_short_window")
    cfg = spec.config
    assert cfg.geometry is Geometry.MICHELSON_SWAP
    assert cfg.imbalance_dx == pytest.approx(1.2, abs=1e-12)
    assert cfg.coincidence_window == 1.5e-9
    assert cfg.mode_match_visibility * cfg.mu_pump == pytest.approx(0.916, abs=1e-6)
    assert len(spec.scan.values) == 100


def test_bundled_long_window_rates():
    cfg = bundled_spec("swap_long_window").config
    eta = cfg.detection_efficiency_A
    assert eta ** 2 * cfg.pair_rate / 8 == pytest.approx(3727, abs=0.5)
    singles = cfg.background_singles_A + eta * cfg.pair_rate / 2
    assert singles == pytest.approx(1.93e5, rel=1e-6)
    assert 2 * singles ** 2 * cfg.coincidence_window == pytest.approx(1601.7, abs=0.1)


def test_canonical_text_round_trip():
    for name in ("swap_short_window", "swap_long_window", "delay_window"):
        spec = bundled_spec(name)
        again = parse_spec(spec.to_text(), name=name)
        assert again == spec


def test_load_from_manifest(tmp_path):
    import json

    spec = parse_spec(MINIMAL)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"spec_text": spec.to_text()}))
    assert load_spec(path).config == spec.config
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    with pytest.raises(SpecError):
        load_spec(bad)


def test_infinite_pump_coherence_allowed():
    spec = parse_spec(MINIMAL + "config.pump_coherence_time = inf s\n")
    assert math.isinf(spec.config.pump_coherence_time)
