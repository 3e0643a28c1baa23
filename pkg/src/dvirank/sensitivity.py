"""Linear map from actor power changes to complex voltage change.

For an observation phase ``p`` at bus ``o`` and an actor bus ``A`` the
first-order voltage change is

    dV_o^p = -sum_h Z_oA^{ph} conj(dS_A^h) / conj(V_A^h)

with ``Z_oA`` the impedance of the path ``o`` and ``A`` share from the
source.  Splitting into real and imaginary parts and collecting the
``dP``/``dQ`` terms of every actor phase gives two constant 6-vectors per
(observation, actor) pair, ordered ``[Pa, Qa, Pb, Qb, Pc, Qc]``.

Sign convention: positive ``dP``/``dQ`` is additional consumption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import PHASE_INDEX, PHASES, NetworkError, NetworkModel, shared_path_impedance

__all__ = [
    "SensitivityVector",
    "sensitivity_coefficients",
    "stacked_coefficients",
    "voltage_change",
]


@dataclass(frozen=True, eq=False)
class SensitivityVector:
    """Real/imaginary voltage-change coefficients (V/W and V/var)."""

    observation: tuple[str, str]
    actor: str
    c_real: np.ndarray
    c_imag: np.ndarray

    def apply(self, ds: np.ndarray) -> complex:
        ds = np.asarray(ds, dtype=float)
        return complex(self.c_real @ ds, self.c_imag @ ds)


def _check_observation(net: NetworkModel, o: str, phase: str) -> int:
    bus = net.bus(o)
    if phase not in PHASES or phase not in bus.phases:
        raise NetworkError(f"phase {phase!r} absent at observation bus {o!r}")
    return PHASE_INDEX[phase]


def sensitivity_coefficients(net: NetworkModel, o: str, phase: str, a: str) -> SensitivityVector:
    """Coefficients of ``dV_o^phase`` with respect to the actor's six power changes.

    Each actor phase ``h`` contributes, with ``R + jX`` the shared-path
    entry on row ``phase`` / column ``h`` and ``|V|, w`` the actor's base
    phasor on ``h``::

        dV^r: P -> -(R cos w - X sin w)/|V|    Q -> -(R sin w + X cos w)/|V|
        dV^i: P -> -(R sin w + X cos w)/|V|    Q -> -(X sin w - R cos w)/|V|
    """
    p = _check_observation(net, o, phase)
    actor = net.bus(a)
    row = shared_path_impedance(net, o, a)[p]
    c_real = np.zeros(6)
    c_imag = np.zeros(6)
    for h in actor.phases:
        i = PHASE_INDEX[h]
        r, x = row[i].real, row[i].imag
        mag = actor.base_magnitude[i]
        w = np.deg2rad(actor.base_angle[i])
        cw, sw = np.cos(w), np.sin(w)
        c_real[2 * i] = -(r * cw - x * sw) / mag
        c_real[2 * i + 1] = -(r * sw + x * cw) / mag
        c_imag[2 * i] = -(r * sw + x * cw) / mag
        c_imag[2 * i + 1] = -(x * sw - r * cw) / mag
    return SensitivityVector((o, phase), a, c_real, c_imag)


def stacked_coefficients(net: NetworkModel, o: str, phase: str, actors) -> tuple[np.ndarray, np.ndarray]:
    """Long ``1 x 6L`` coefficient vectors for the actors in order."""
    vecs = [sensitivity_coefficients(net, o, phase, a) for a in actors]
    if not vecs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate([v.c_real for v in vecs]), np.concatenate([v.c_imag for v in vecs])


def voltage_change(net: NetworkModel, o: str, phase: str, deltas: dict[str, np.ndarray]) -> complex:
    """Linearised complex voltage change at ``(o, phase)`` for per-actor power changes.

    ``deltas`` maps actor bus id to its 6-vector ``[dPa, dQa, dPb, dQb, dPc, dQc]``
    in W / var.
    """
    _check_observation(net, o, phase)
    # Accumulate actor by actor so that superposition holds exactly.
    total = 0j
    for a, ds in deltas.items():
        total += sensitivity_coefficients(net, o, phase, a).apply(_delta_vector(net, a, ds))
    return total


def _delta_vector(net: NetworkModel, a: str, ds) -> np.ndarray:
    ds = np.asarray(ds, dtype=float)
    if ds.shape != (6,):
        raise ValueError(f"power change for actor {a!r} must be a 6-vector")
    bus = net.bus(a)
    absent = np.repeat(~bus.mask, 2)
    if np.any(ds[absent] != 0):
        raise NetworkError(f"power change on a phase absent at actor bus {a!r}")
    return ds
