"""Two-photon path-state model for unbalanced interferometers.

Three geometries are modelled:

* ``FransonDual``: one unbalanced Mach-Zehnder per photon, each with a single
  detector on one output port.
* ``MichelsonSwap``: both photons travel through one Michelson interferometer
  along parallel beams; a cat's-eye lens in the long arm swaps their spatial
  modes, so mixed short/long events end on a single detector.
* ``MichelsonBalanced``: the same Michelson without the swap lens and with
  (nearly) equal arms, where each photon interferes with itself.

The path basis is ordered ``(ss, sl, ls, ll)``, the first letter being the
path of photon A.  Beam splitters transmit with amplitude ``sqrt(T)`` and
reflect with amplitude ``i*sqrt(R)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

BASIS = ("ss", "sl", "ls", "ll")


class Geometry(str, Enum):
    FRANSON_DUAL = "FransonDual"
    MICHELSON_SWAP = "MichelsonSwap"
    MICHELSON_BALANCED = "MichelsonBalanced"

    def __str__(self) -> str:
        return self.value


class ConfigError(ValueError):
    """Raised when an :class:`InterferometerConfig` violates an invariant.

    ``field`` names the offending configuration field.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


@dataclass(frozen=True)
class InterferometerConfig:
    """Full description of one experimental run.

    Lengths in metres, times in seconds, rates per second, phases in radians.
    ``imbalance_dx`` is derived from the arm lengths: ``l - s`` for the
    Franson geometry and ``2 (l - s)`` for the Michelson ones (double pass).
    """

    geometry: Geometry = Geometry.MICHELSON_SWAP
    arm_short_s: float = 0.0
    arm_long_l: float = 0.6
    bs_reflectivity_R: float = 0.5
    phase_A: float = 0.0
    phase_B: float = 0.0
    piezo_gain: float = 0.5  # rad/V
    piezo_offset: float = 0.0  # rad
    piezo_voltage_jitter: float = 0.0  # V, 1 sigma
    pump_coherence_time: float = 1e-7
    single_photon_coherence_time: float = 1e-13
    coincidence_window: float = 1.5e-9
    pair_rate: float = 0.0
    background_singles_A: float = 0.0
    background_singles_B: float = 0.0
    detection_efficiency_A: float = 1.0
    detection_efficiency_B: float = 1.0
    mode_match_visibility: float = 1.0
    speed_of_light: float = field(default=SPEED_OF_LIGHT, repr=False)

    def __post_init__(self):
        try:
            object.__setattr__(self, "geometry", Geometry(self.geometry))
        except ValueError:
            choices = ", ".join(g.value for g in Geometry)
            raise ConfigError("geometry", f"unknown geometry {self.geometry!r} (expected one of {choices})") from None
        for f in fields(self):
            if f.name == "geometry":
                continue
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f.name, f"expected a number, got {value!r}")
            if math.isnan(value):
                raise ConfigError(f.name, "must not be NaN")
            object.__setattr__(self, f.name, float(value))
        self._validate()

    def _validate(self):
        if not 0.0 <= self.bs_reflectivity_R <= 1.0:
            raise ConfigError("bs_reflectivity_R", f"must satisfy 0 <= R <= 1, got {self.bs_reflectivity_R}")
        if self.arm_short_s < 0 or self.arm_long_l < 0:
            name = "arm_short_s" if self.arm_short_s < 0 else "arm_long_l"
            raise ConfigError(name, "arm lengths must be nonnegative")
        if self.arm_long_l < self.arm_short_s:
            raise ConfigError("arm_long_l", "long arm must not be shorter than the short arm (imbalance >= 0)")
        nonneg = (
            "pump_coherence_time",
            "single_photon_coherence_time",
            "coincidence_window",
            "pair_rate",
            "background_singles_A",
            "background_singles_B",
            "piezo_voltage_jitter",
        )
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ConfigError(name, f"must be nonnegative, got {getattr(self, name)}")
        for name in ("detection_efficiency_A", "detection_efficiency_B", "mode_match_visibility"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(name, f"must lie in [0, 1], got {v}")
        for name in ("coincidence_window", "pair_rate", "background_singles_A", "background_singles_B",
                     "arm_short_s", "arm_long_l", "phase_A", "phase_B", "piezo_gain", "piezo_offset"):
            if math.isinf(getattr(self, name)):
                raise ConfigError(name, "must be finite")
        if not self.speed_of_light > 0:
            raise ConfigError("speed_of_light", "must be positive")

    @property
    def bs_transmissivity_T(self) -> float:
        return 1.0 - self.bs_reflectivity_R

    @property
    def imbalance_dx(self) -> float:
        d = self.arm_long_l - self.arm_short_s
        if self.geometry is Geometry.FRANSON_DUAL:
            return d
        return 2.0 * d

    @property
    def path_delay(self) -> float:
        """Arrival-time offset of the long path, ``dx / c``."""
        return self.imbalance_dx / self.speed_of_light

    @property
    def mu_pump(self) -> float:
        return pump_coherence(self.imbalance_dx, self.pump_coherence_time, self.speed_of_light)

    @property
    def mu_single(self) -> float:
        return single_photon_coherence(self.imbalance_dx, self.single_photon_coherence_time, self.speed_of_light)

    def with_(self, **changes) -> "InterferometerConfig":
        return replace(self, **changes)


def pump_coherence(dx, tau_pump, c=SPEED_OF_LIGHT):
    """Lorentzian pump: coherence ``exp(-dx / (c tau_pump))`` between ss and ll."""
    if dx == 0:
        return 1.0
    if tau_pump == 0:
        return 0.0
    return math.exp(-dx / (c * tau_pump))


def single_photon_coherence(dx, tau_c, c=SPEED_OF_LIGHT):
    """Gaussian filter: ``exp(-(dx / (c tau_c))**2 / 2)``."""
    if dx == 0:
        return 1.0
    if tau_c == 0:
        return 0.0
    ratio = dx / (c * tau_c)
    return 0.0 if ratio > 1e150 else math.exp(-0.5 * ratio * ratio)


@dataclass(frozen=True)
class TwoPhotonPathState:
    """Density operator over the path basis ``(ss, sl, ls, ll)``."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError(f"rho must be 4x4, got shape {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def is_hermitian(self, atol=1e-12) -> bool:
        return bool(np.allclose(self.rho, self.rho.conj().T, rtol=0, atol=atol))

    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.rho)

    def is_valid(self) -> bool:
        return (self.is_hermitian()
                and abs(self.trace() - 1) <= 1e-12
                and bool(self.eigenvalues().min() >= -1e-10))

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))

    def element(self, a: str, b: str) -> complex:
        return complex(self.rho[BASIS.index(a), BASIS.index(b)])


# (photon A long?, photon B long?) for each basis index
_PATHS = ((0, 0), (0, 1), (1, 0), (1, 1))


def prepare_state(config: InterferometerConfig) -> TwoPhotonPathState:
    """State produced by the first beam-splitter passage.

    Diagonal ``1/4`` everywhere.  Coherences follow from a pump of Lorentzian
    spectrum (acting on the mean delay of the two photons) and a Gaussian
    detection filter (acting on their relative delay).  This makes the
    ss-ll coherence exactly ``mu_pump / 4`` while every coherence involving
    a single-photon shift decays with ``mu_single``; the matrix is a mixture
    of pure states and therefore positive semidefinite.

    With ``dx = 0`` (or both coherence times infinite) the result is the pure
    product state ``(|s>+|l>)(|s>+|l>)/2``.
    """
    dx = config.imbalance_dx
    c = config.speed_of_light
    rho = np.empty((4, 4), dtype=complex)
    for j, (aj, bj) in enumerate(_PATHS):
        for k, (ak, bk) in enumerate(_PATHS):
            mean_shift = abs((aj - ak) + (bj - bk)) / 2.0
            rel_shift = abs((aj - ak) - (bj - bk))
            coh = pump_coherence(mean_shift * dx, config.pump_coherence_time, c)
            coh *= single_photon_coherence(rel_shift * dx, config.single_photon_coherence_time, c)
            rho[j, k] = 0.25 * coh
    return TwoPhotonPathState(rho)


@dataclass(frozen=True)
class PairOutcomeDistribution:
    """Per-generated-pair outcome probabilities.

    ``p_satellite_early`` is the detection of B a time ``dx/c`` before A (path
    ``ls``), ``p_satellite_late`` the converse (path ``sl``).  The same-detector
    and lost masses are split by detector so the event simulator can place
    the surviving photons; :attr:`p_same_detector` and :attr:`p_lost` give the
    aggregated values.
    """

    p_coincidence_central: float
    p_satellite_early: float
    p_satellite_late: float
    p_same_detector_A: float
    p_same_detector_B: float
    p_single_A: float
    p_single_B: float
    p_none: float

    @property
    def p_same_detector(self) -> float:
        return self.p_same_detector_A + self.p_same_detector_B

    @property
    def p_lost(self) -> float:
        return self.p_single_A + self.p_single_B + self.p_none

    @property
    def p_satellites(self) -> float:
        return self.p_satellite_early + self.p_satellite_late

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])

    def total(self) -> float:
        return float(self.as_array().sum())


OUTCOME_NAMES = tuple(f.name for f in fields(PairOutcomeDistribution))


def _unbalanced_photon_masses(R, T, mu, cos_phi):
    """Pre-efficiency arrival probabilities shared by both unbalanced geometries.

    Returns (both at the two detectors, zero delay), (each satellite / each
    same-detector class), (one photon at a given detector, the other lost).
    """
    rt2 = R * R * T * T
    lost_one = 2 * R * T * (T * T + R * R) - 2 * mu * rt2 * cos_phi
    return rt2, lost_one


def pair_outcome_distribution(config: InterferometerConfig, total_phase_Phi: float) -> PairOutcomeDistribution:
    """Outcome probabilities for one emitted pair.

    For the unbalanced geometries ``total_phase_Phi`` is the two-photon phase
    and the per-photon thin-glass phases add to it.  The ss and ll
    alternatives interfere with contrast ``mu = mode_match * mu_pump``; the
    detection is assumed to resolve the ``dx/c`` offset, so no other pair of
    alternatives interferes.

    For ``MichelsonBalanced`` the piezo phase acts on each photon separately
    (``phi_i = Phi + phase_i``) and each photon interferes with itself with
    contrast ``mode_match * mu_single``.
    """
    if not math.isfinite(total_phase_Phi):
        raise ValueError(f"total phase must be finite, got {total_phase_Phi}")
    R = config.bs_reflectivity_R
    T = config.bs_transmissivity_T
    eA = config.detection_efficiency_A
    eB = config.detection_efficiency_B
    geo = config.geometry

    if geo is Geometry.MICHELSON_BALANCED:
        m = config.mode_match_visibility * config.mu_single
        qA = 2 * R * T * (1 + m * math.cos(total_phase_Phi + config.phase_A))
        qB = 2 * R * T * (1 + m * math.cos(total_phase_Phi + config.phase_B))
        dA, dB = eA * qA, eB * qB
        return _normalised(PairOutcomeDistribution(
            p_coincidence_central=dA * dB,
            p_satellite_early=0.0,
            p_satellite_late=0.0,
            p_same_detector_A=0.0,
            p_same_detector_B=0.0,
            p_single_A=dA * (1 - dB),
            p_single_B=dB * (1 - dA),
            p_none=(1 - dA) * (1 - dB),
        ))

    mu = config.mode_match_visibility * config.mu_pump
    cos_phi = math.cos(total_phase_Phi + config.phase_A + config.phase_B)
    rt2, lost_one = _unbalanced_photon_masses(R, T, mu, cos_phi)
    eAB = eA * eB

    if geo is Geometry.FRANSON_DUAL:
        # detector port: s path amplitude T, l path amplitude -R
        central = T ** 4 + R ** 4 + 2 * mu * rt2 * cos_phi
        both = central + 2 * rt2
        single_A = eA * (1 - eB) * both + eA * lost_one
        single_B = eB * (1 - eA) * both + eB * lost_one
        p = PairOutcomeDistribution(
            p_coincidence_central=eAB * central,
            p_satellite_early=eAB * rt2,
            p_satellite_late=eAB * rt2,
            p_same_detector_A=0.0,
            p_same_detector_B=0.0,
            p_single_A=single_A,
            p_single_B=single_B,
            p_none=0.0,
        )
    else:
        # detection port: both paths have amplitude i*sqrt(RT)
        central = 2 * rt2 * (1 + mu * cos_phi)
        single_A = eA * (1 - eB) * central + 2 * eA * (1 - eA) * rt2 + eA * lost_one
        single_B = eB * (1 - eA) * central + 2 * eB * (1 - eB) * rt2 + eB * lost_one
        p = PairOutcomeDistribution(
            p_coincidence_central=eAB * central,
            p_satellite_early=0.0,
            p_satellite_late=0.0,
            p_same_detector_A=eA * eA * rt2,
            p_same_detector_B=eB * eB * rt2,
            p_single_A=single_A,
            p_single_B=single_B,
            p_none=0.0,
        )
    return _normalised(p)


def _normalised(p: PairOutcomeDistribution) -> PairOutcomeDistribution:
    # p_none is the complement; clip rounding residue at the 1e-16 level
    detected = p.total() - p.p_none
    none = max(0.0, 1.0 - detected)
    return replace(p, p_none=none)


def satellites_in_window(config: InterferometerConfig) -> bool:
    """True when the satellites at ``+-dx/c`` fall inside the coincidence window."""
    return config.imbalance_dx <= config.speed_of_light * config.coincidence_window


def coincidence_rate_analytic(config: InterferometerConfig, total_phase_Phi: float,
                              window_includes_satellites: bool | None = None) -> float:
    """True (non-accidental) coincidence rate in counts per second.

    ``window_includes_satellites`` defaults to the timing comparison
    ``dx <= c * window``.  It only matters for the Franson geometry.
    """
    if window_includes_satellites is None:
        window_includes_satellites = satellites_in_window(config)
    p = pair_outcome_distribution(config, total_phase_Phi)
    prob = p.p_coincidence_central
    if window_includes_satellites:
        prob += p.p_satellites
    return config.pair_rate * prob


def expected_singles_rates(config: InterferometerConfig, total_phase_Phi: float) -> tuple[float, float]:
    """Mean detection rates at D_A and D_B including background."""
    p = pair_outcome_distribution(config, total_phase_Phi)
    per_pair_A = p.p_coincidence_central + p.p_satellites + 2 * p.p_same_detector_A + p.p_single_A
    per_pair_B = p.p_coincidence_central + p.p_satellites + 2 * p.p_same_detector_B + p.p_single_B
    return (config.pair_rate * per_pair_A + config.background_singles_A,
            config.pair_rate * per_pair_B + config.background_singles_B)


def analytic_visibility(config: InterferometerConfig, window_includes_satellites: bool | None = None,
                        n_grid: int = 0) -> float:
    """Fringe visibility of :func:`coincidence_rate_analytic` over the phase.

    The unbalanced rates are affine in ``cos(Phi + const)``, so the extrema
    sit at ``Phi = -const`` and ``Phi = pi - const``.  For the balanced
    geometry (or when ``n_grid`` is given) the rate is sampled on a grid.
    """
    if config.geometry is Geometry.MICHELSON_BALANCED or n_grid:
        phis = np.linspace(0.0, 2 * np.pi, n_grid or 4097)
        rates = [coincidence_rate_analytic(config, float(p), window_includes_satellites) for p in phis]
        hi, lo = max(rates), min(rates)
    else:
        off = config.phase_A + config.phase_B
        hi = coincidence_rate_analytic(config, -off, window_includes_satellites)
        lo = coincidence_rate_analytic(config, math.pi - off, window_includes_satellites)
        hi, lo = max(hi, lo), min(hi, lo)
    if hi + lo == 0:
        return 0.0
    return (hi - lo) / (hi + lo)


@dataclass(frozen=True)
class RegimeReport:
    cond_single_ok: bool
    cond_pump_ok: bool
    cond_window_ok: bool
    cond_tau_gt_window: bool
    franson_entanglement_feasible: bool
    swap_entanglement_feasible: bool
    imbalance_dx: float
    min_imbalance_for_postselection: float

    def lines(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else repr(v)}")
        return out


def classify_regimes(config: InterferometerConfig) -> RegimeReport:
    """Check the timing conditions for time-bin entanglement.

    All comparisons are strict.  The swap geometry only needs the imbalance to
    stay within the pump coherence length; the Franson geometry additionally
    needs ``dx`` to exceed both the single-photon coherence length and the
    distance light travels in one coincidence window.
    """
    c = config.speed_of_light
    dx = config.imbalance_dx
    single = dx > c * config.single_photon_coherence_time
    pump = dx < c * config.pump_coherence_time
    window = dx > c * config.coincidence_window
    return RegimeReport(
        cond_single_ok=single,
        cond_pump_ok=pump,
        cond_window_ok=window,
        cond_tau_gt_window=config.pump_coherence_time > config.coincidence_window,
        franson_entanglement_feasible=single and pump and window,
        swap_entanglement_feasible=pump,
        imbalance_dx=dx,
        min_imbalance_for_postselection=c * config.coincidence_window,
    )
