"""Conversions between detected field, photon number, CW power and cavity fields."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .core import CONST


@dataclass(frozen=True)
class BudgetParams:
    nu: float = 2.3e12
    delta_t: float = 146e-15
    # Beam area calibrated so that 90 V/m peak in the 146 fs window is ~1500 photons.
    mode_area: float = 4.6e-7
    refr_index: float = 3.17
    eps_r: float = 12.9
    cavity_volume: float = 150e-6 * 1000e-6 * 16.6e-6

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")


def photons_in_window(E_amp: float, p: BudgetParams = BudgetParams()) -> float:
    """Photons crossing ``mode_area`` during ``delta_t`` for a wave of peak field ``E_amp``.

    Intensity of a propagating sinusoid is c*eps0*n*E^2/2.
    """
    if E_amp < 0:
        raise ValueError("E_amp must be >= 0")
    energy = 0.5 * CONST.c * CONST.eps0 * p.refr_index * E_amp**2 * p.mode_area * p.delta_t
    return energy / (CONST.h * p.nu)


def cw_power(N: float, nu: float, delta_t: float) -> float:
    """Average CW power [W] equivalent to N photons per detection window."""
    if N < 0:
        raise ValueError("N must be >= 0")
    return N * CONST.h * nu / delta_t


def single_photon_field(nu: float, p: BudgetParams = BudgetParams()) -> float:
    """Field amplitude of one photon of frequency ``nu`` in the laser cavity [V/m]."""
    return math.sqrt(CONST.h * nu / (2.0 * CONST.eps0 * p.eps_r * p.cavity_volume))


def saturation_field(z12: float, tau_up: float, tau_coh: float) -> float:
    """Saturation field hbar / (e z12 sqrt(tau_up tau_coh)) [V/m]."""
    if min(z12, tau_up, tau_coh) <= 0:
        raise ValueError("z12, tau_up and tau_coh must be positive")
    return CONST.hbar / (CONST.e_charge * z12 * math.sqrt(tau_up * tau_coh))


def budget_table(E_amp: float, p: BudgetParams = BudgetParams(), z12: float = 7e-9,
                 tau_up: float = 5e-12, tau_coh: float = 0.5e-12) -> dict:
    """Labelled summary used by the ``budget`` CLI subcommand."""
    n = photons_in_window(E_amp, p)
    a_sp = single_photon_field(p.nu, p)
    e_sat = saturation_field(z12, tau_up, tau_coh)
    return {
        "field_V_per_m": E_amp,
        "nu_THz": p.nu / 1e12,
        "window_fs": p.delta_t / 1e-15,
        "photons_in_window": n,
        "cw_power_uW": cw_power(n, p.nu, p.delta_t) / 1e-6,
        "single_photon_field_V_per_m": a_sp,
        "saturation_field_V_per_m": e_sat,
        "single_photon_to_saturation": a_sp / e_sat,
    }
