import math

import pytest
from hypothesis import strategies as st

from timebin.optics import Geometry, InterferometerConfig

unit = st.floats(0.0, 1.0)
phase = st.floats(-20.0, 20.0)


@st.composite
def configs(draw, geometry=None):
    geo = draw(st.sampled_from(list(Geometry))) if geometry is None else geometry
    s = draw(st.floats(0.0, 2.0))
    if geo is Geometry.MICHELSON_BALANCED:
        dl = draw(st.floats(0.0, 1e-4))
    else:
        dl = draw(st.floats(0.0, 10.0))
    return InterferometerConfig(
        geometry=geo,
        arm_short_s=s,
        arm_long_l=s + dl,
        bs_reflectivity_R=draw(unit),
        phase_A=draw(phase),
        phase_B=draw(phase),
        pump_coherence_time=draw(st.one_of(st.just(math.inf), st.floats(0.0, 1e-5))),
        single_photon_coherence_time=draw(st.floats(0.0, 1e-12)),
        coincidence_window=draw(st.floats(0.0, 1e-7)),
        pair_rate=draw(st.floats(0.0, 1e6)),
        detection_efficiency_A=draw(unit),
        detection_efficiency_B=draw(unit),
        mode_match_visibility=draw(unit),
    )


@pytest.fixture
def lab_swap():
    """Swap geometry at the apparatus values (1.2 m imbalance, 0.1 us pump)."""
    return InterferometerConfig(
        geometry=Geometry.MICHELSON_SWAP,
        arm_short_s=0.1,
        arm_long_l=0.7,
        pump_coherence_time=1e-7,
        single_photon_coherence_time=1e-13,
        coincidence_window=1.5e-9,
    )
