"""Brute-force amplitude enumeration for two photons in the three geometries.

Each photon is propagated through explicit beam-splitter matrices, giving an
amplitude for every (path, exit port) pair.  Two-photon alternatives are then
grouped by their final state (occupied ports and relative arrival times,
photon labels erased) and summed coherently inside each group.  Detection
efficiencies are applied by enumerating which of the arriving photons click.

This is deliberately written without reference to the closed forms in
:mod:`timebin.optics`; the two must agree to rounding error.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict

import numpy as np

from .optics import OUTCOME_NAMES, Geometry


def beam_splitter(R: float) -> np.ndarray:
    """``U[out, in]``; ``out == in`` is transmission (``sqrt(T)``), else reflection (``i sqrt(R)``)."""
    t = math.sqrt(1.0 - R)
    r = 1j * math.sqrt(R)
    return np.array([[t, r], [r, t]], dtype=complex)


def photon_routes(geometry: Geometry, R: float, phase: float, mode: int) -> list[tuple[int, str, complex]]:
    """All (path, port, amplitude) routes of one photon.

    ``path`` is 0 for the short arm and 1 for the long arm.  ``mode`` is the
    photon's input beam (0 for A, 1 for B).  Ports are labelled ``"D_A"``,
    ``"D_B"`` for the detectors and ``"lost:..."`` otherwise.
    """
    U = beam_splitter(R)
    routes = []
    if geometry is Geometry.FRANSON_DUAL:
        # own Mach-Zehnder: BS1 input 0 -> arm (0 transmitted, 1 reflected); arm k enters BS2 input k
        det = "D_A" if mode == 0 else "D_B"
        for arm in (0, 1):
            a1 = U[arm, 0] * (np.exp(1j * phase) if arm == 1 else 1.0)
            for out in (0, 1):
                port = det if out == 0 else f"lost:mz{mode}"
                routes.append((arm, port, a1 * U[out, arm]))
        return routes
    swap = geometry is Geometry.MICHELSON_SWAP
    for arm in (0, 1):
        a1 = U[arm, 0] * (np.exp(1j * phase) if arm == 1 else 1.0)
        beam = 1 - mode if (swap and arm == 1) else mode
        # return pass: out 0 heads back to the source, out 1 to the detection prism
        for out in (0, 1):
            if out == 1:
                port = "D_A" if beam == 0 else "D_B"
            else:
                port = f"lost:back{beam}"
            routes.append((arm, port, a1 * U[out, arm]))
    return routes


def enumerate_outcomes(geometry, R, phase_A, phase_B, mu, eta_A, eta_B) -> dict[str, float]:
    """Outcome probabilities by brute force.

    ``mu`` is the coherence between interfering alternatives: for the
    unbalanced geometries the ss/ll two-photon coherence, for the balanced
    geometry the per-photon short/long coherence (applied once per photon
    whose path differs between the two alternatives).
    """
    geometry = Geometry(geometry)
    balanced = geometry is Geometry.MICHELSON_BALANCED
    routes_A = photon_routes(geometry, R, phase_A, 0)
    routes_B = photon_routes(geometry, R, phase_B, 1)

    groups = defaultdict(list)
    for (pa, port_a, amp_a), (pb, port_b, amp_b) in itertools.product(routes_A, routes_B):
        if balanced:
            key = tuple(sorted([(port_a, 0), (port_b, 0)]))
        else:
            t0 = min(pa, pb)
            key = tuple(sorted([(port_a, pa - t0), (port_b, pb - t0)]))
        groups[key].append(((pa, pb), amp_a * amp_b))

    def coherence(paths_j, paths_k):
        if balanced:
            flips = sum(x != y for x, y in zip(paths_j, paths_k))
            return mu ** flips
        if {paths_j, paths_k} == {(0, 0), (1, 1)}:
            return mu
        return 0.0

    out = dict.fromkeys(OUTCOME_NAMES, 0.0)
    eff = {"D_A": eta_A, "D_B": eta_B}
    for key, alts in groups.items():
        prob = 0.0
        for j, (pj, aj) in enumerate(alts):
            for k, (pk, ak) in enumerate(alts):
                w = 1.0 if j == k else coherence(pj, pk)
                prob += (np.conj(aj) * ak).real * w
        if prob == 0.0:
            continue
        photons = [(port, dt) for port, dt in key]
        for clicks in itertools.product((False, True), repeat=2):
            p = prob
            seen = []
            for (port, dt), click in zip(photons, clicks):
                if port.startswith("lost"):
                    if click:
                        p = 0.0
                    continue
                p *= eff[port] if click else 1.0 - eff[port]
                if click:
                    seen.append((port, dt))
            if p == 0.0:
                continue
            out[_classify(seen)] += p
    return out


def _classify(seen) -> str:
    if not seen:
        return "p_none"
    if len(seen) == 1:
        return "p_single_A" if seen[0][0] == "D_A" else "p_single_B"
    (p1, t1), (p2, t2) = seen
    if p1 == p2:
        return "p_same_detector_A" if p1 == "D_A" else "p_same_detector_B"
    times = {p1: t1, p2: t2}
    delay = times["D_B"] - times["D_A"]
    if delay == 0:
        return "p_coincidence_central"
    return "p_satellite_late" if delay > 0 else "p_satellite_early"
