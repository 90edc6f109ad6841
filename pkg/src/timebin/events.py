"""Seeded Monte Carlo of detector time tags and coincidence counting."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .optics import InterferometerConfig, pair_outcome_distribution

DETECTORS = ("D_A", "D_B")

# outcome indices, in PairOutcomeDistribution field order
CENTRAL, SAT_EARLY, SAT_LATE, SAME_A, SAME_B, SINGLE_A, SINGLE_B, NONE = range(8)


@dataclass(frozen=True)
class DetectionEvent:
    detector: str
    timestamp: float


@dataclass(frozen=True, eq=False)
class EventStream:
    """Sorted detection times (seconds) of one detector over ``[0, duration]``."""

    detector: str
    timestamps: np.ndarray
    duration: float

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        if t.ndim != 1:
            raise ValueError("timestamps must be one-dimensional")
        if t.size and (np.any(np.diff(t) < 0)):
            raise ValueError(f"{self.detector}: timestamps are not sorted")
        if t.size and (t[0] < 0 or t[-1] > self.duration):
            raise ValueError(f"{self.detector}: timestamps outside [0, {self.duration}]")
        t.setflags(write=False)
        object.__setattr__(self, "timestamps", t)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def events(self) -> list[DetectionEvent]:
        return [DetectionEvent(self.detector, float(t)) for t in self.timestamps]

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.detector == other.detector and self.duration == other.duration
                and np.array_equal(self.timestamps, other.timestamps))


@dataclass(frozen=True)
class CountRecord:
    """Counts of one acquisition.

    ``scan_value`` is a piezo voltage for phase scans, a delay in seconds for
    delay scans and the phase in radians for a bare :func:`simulate_point`.
    ``coincidences_corr`` is filled by accidental subtraction.
    """

    scan_value: float
    duration: float
    singles_A: int
    singles_B: int
    coincidences_raw: int
    coincidences_corr: float | None = None
    corr_flag: bool = False

    def __post_init__(self):
        for name in ("singles_A", "singles_B", "coincidences_raw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.coincidences_corr is not None and self.coincidences_corr < 0:
            raise ValueError(f"coincidences_corr must be nonnegative, got {self.coincidences_corr}")

    @property
    def corrected(self) -> bool:
        return self.coincidences_corr is not None

    @property
    def coincidences(self) -> float:
        return self.coincidences_corr if self.corrected else float(self.coincidences_raw)

    @property
    def variance(self) -> float:
        """Poisson variance of :attr:`coincidences` (floored at one count).

        For corrected records the subtracted accidental estimate contributes
        ``acc**2 (1/S_A + 1/S_B)``.
        """
        var = max(float(self.coincidences_raw), 1.0)
        if self.corrected:
            acc = self.coincidences_raw - self.coincidences_corr
            if self.corr_flag:
                acc = max(acc, float(self.coincidences_raw))
            if self.singles_A > 0 and self.singles_B > 0:
                var += acc * acc * (1.0 / self.singles_A + 1.0 / self.singles_B)
        return var


def _as_times(stream) -> np.ndarray:
    if isinstance(stream, EventStream):
        return stream.timestamps
    t = np.asarray(stream, dtype=float)
    if t.size and np.any(np.diff(t) < 0):
        raise ValueError("timestamps are not sorted")
    return t


def count_coincidences(stream_A, stream_B, window: float) -> int:
    """Number of pairs ``(a, b)`` with ``|t_a - t_b| <= window``.

    Every pair counts, so one event may take part in several coincidences.
    With this convention the expected count of two independent Poisson
    streams is exactly ``2 S_A S_B window`` per unit time.

    Each event of A gets a contiguous index range in B from a binary search;
    the range ends are then nudged so membership is decided by the literal
    ``|t_a - t_b| <= window`` test, independent of rounding in ``t_a +- window``.
    """
    if window < 0:
        raise ValueError(f"window must be nonnegative, got {window}")
    a = _as_times(stream_A)
    b = _as_times(stream_B)
    if a.size == 0 or b.size == 0:
        return 0
    m = b.size
    lo = np.searchsorted(b, a - window, side="left")
    hi = np.searchsorted(b, a + window, side="right")

    def inside(idx, mask):
        res = np.zeros(idx.shape, dtype=bool)
        ok = mask & (idx >= 0) & (idx < m)
        res[ok] = np.abs(a[ok] - b[idx[ok]]) <= window
        return res

    everywhere = np.ones(a.size, dtype=bool)
    while (move := inside(lo - 1, everywhere)).any():
        lo[move] -= 1
    while (move := inside(hi, everywhere)).any():
        hi[move] += 1
    while (move := (lo < hi) & ~inside(lo, lo < hi)).any():
        lo[move] += 1
    while (move := (hi > lo) & ~inside(hi - 1, hi > lo)).any():
        hi[move] -= 1
    return int(np.sum(hi - lo))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2 ** 64 - 1)))


def derive_seed(seed: int, index: int, stream: int = 0) -> int:
    """Stateless per-point seed: ``SeedSequence(seed, spawn_key=(index, stream))``.

    The 64-bit result depends only on its arguments, so scan points can be
    simulated in any order or in parallel.
    """
    ss = np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=(int(index), int(stream)))
    return int(ss.generate_state(1, np.uint64)[0])


def simulate_point(config: InterferometerConfig, total_phase_Phi: float, duration: float,
                   seed: int) -> tuple[EventStream, EventStream, CountRecord]:
    """Simulate one acquisition at a fixed phase.

    Pairs are emitted as a homogeneous Poisson process; each pair's outcome is
    drawn from :func:`pair_outcome_distribution`.  Satellite photons arrive
    ``dx/c`` late; bunched photons give two equal time tags on one detector.
    Independent Poisson backgrounds are added to both detectors.  Events that
    would land after ``duration`` are not recorded.
    """
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    rng = _rng(seed)
    probs = pair_outcome_distribution(config, total_phase_Phi).as_array()
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()

    n_pairs = rng.poisson(config.pair_rate * duration)
    t = rng.uniform(0.0, duration, n_pairs)
    kind = rng.choice(probs.size, size=n_pairs, p=probs)
    d = config.path_delay

    a_parts = [
        t[(kind == CENTRAL) | (kind == SAT_LATE) | (kind == SINGLE_A)],
        t[kind == SAT_EARLY] + d,
        np.repeat(t[kind == SAME_A], 2),
    ]
    b_parts = [
        t[(kind == CENTRAL) | (kind == SAT_EARLY) | (kind == SINGLE_B)],
        t[kind == SAT_LATE] + d,
        np.repeat(t[kind == SAME_B], 2),
    ]
    a_parts.append(rng.uniform(0.0, duration, rng.poisson(config.background_singles_A * duration)))
    b_parts.append(rng.uniform(0.0, duration, rng.poisson(config.background_singles_B * duration)))

    ta = np.sort(np.concatenate(a_parts))
    tb = np.sort(np.concatenate(b_parts))
    ta = ta[ta <= duration]
    tb = tb[tb <= duration]
    stream_A = EventStream("D_A", ta, duration)
    stream_B = EventStream("D_B", tb, duration)
    record = CountRecord(
        scan_value=float(total_phase_Phi),
        duration=float(duration),
        singles_A=len(stream_A),
        singles_B=len(stream_B),
        coincidences_raw=count_coincidences(stream_A, stream_B, config.coincidence_window),
    )
    return stream_A, stream_B, record


def _map_points(fn, n, max_workers):
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def scan_phase(config: InterferometerConfig, scan_values: Sequence[float], duration_per_point: float,
               seed: int, max_workers: int | None = None) -> list[CountRecord]:
    """Piezo scan: ``Phi = piezo_gain * (v + jitter) + piezo_offset`` at each voltage ``v``.

    The voltage jitter (``config.piezo_voltage_jitter``) is drawn from its own
    derived seed.  Records are returned in scan order regardless of
    ``max_workers``.
    """
    values = [float(v) for v in scan_values]
    if not values:
        raise ValueError("scan_values must not be empty")

    def point(i):
        v = values[i]
        applied = v
        if config.piezo_voltage_jitter > 0:
            applied += _rng(derive_seed(seed, i, 1)).normal(0.0, config.piezo_voltage_jitter)
        phi = config.piezo_gain * applied + config.piezo_offset
        _, _, rec = simulate_point(config, phi, duration_per_point, derive_seed(seed, i))
        return replace(rec, scan_value=v)

    return _map_points(point, len(values), max_workers)


def delay_scan(config: InterferometerConfig, delays: Sequence[float], duration_per_point: float,
               seed: int, total_phase_Phi: float = 0.0, max_workers: int | None = None) -> list[CountRecord]:
    """Coincidences versus an electronic delay added to detector B.

    A fresh acquisition is simulated for every delay; the coincidence count
    uses B's time tags shifted by ``delay``.
    """
    values = [float(v) for v in delays]
    if not values:
        raise ValueError("delays must not be empty")

    def point(i):
        delay = values[i]
        a, b, rec = simulate_point(config, total_phase_Phi, duration_per_point, derive_seed(seed, i))
        coinc = count_coincidences(a, b.timestamps + delay, config.coincidence_window)
        return replace(rec, scan_value=delay, coincidences_raw=coinc)

    return _map_points(point, len(values), max_workers)


def write_events(path, stream_A: EventStream, stream_B: EventStream) -> None:
    """Two-column text export: detector id and timestamp (12 significant digits), time ordered."""
    ids = np.concatenate([np.zeros(len(stream_A), int), np.ones(len(stream_B), int)])
    ts = np.concatenate([stream_A.timestamps, stream_B.timestamps])
    order = np.lexsort((ids, ts))
    with open(path, "w") as fh:
        fh.write("# detector_id timestamp_s\n")
        for i in order:
            fh.write(f"{DETECTORS[ids[i]]} {ts[i]:.11e}\n")


def read_events(path, duration: float) -> tuple[EventStream, EventStream]:
    times = {name: [] for name in DETECTORS}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        det, ts = line.split()
        times[det].append(float(ts))
    return tuple(EventStream(d, np.sort(np.array(times[d])), duration) for d in DETECTORS)


def records_per_second(records: Iterable[CountRecord]) -> np.ndarray:
    return np.array([r.coincidences / r.duration for r in records])


def poisson_sigma(expected: float) -> float:
    return math.sqrt(max(expected, 1.0))
