"""Stochastic multimode Maxwell-Bloch model of a Fabry-Perot THz QCL.

Slow modal amplitudes a_m (m = -M..M, units of the saturation field) are
written in the frame of the equidistant comb nu0 + m*FSR; the dispersive
detuning of each cold-cavity mode appears as an explicit rotation. With the
polarisation adiabatically eliminated and gain saturation expanded to third
order,

    da_m/dt = 1/2 (g_m - kappa) a_m + i 2pi dnu_m a_m
              - 1/2 g_m sum_{p,q} beta_pq a_p a_q* a_{m-p+q} + F_m(t)

where beta_pq = 1 / (1 + i 2pi (nu_p - nu_q) tau_up) is the population
pulsation response and F_m is white complex noise with diffusion
D = kappa * sp_ratio^2 / 2 (one photon-equivalent per empty mode).

The linear part is propagated exactly and the cubic part with an explicit
exponential Euler step, so the fast dispersive rotations of the outer modes
do not limit the step size.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numba
import numpy as np

from .core import FieldTrace, OutOfRange, RandomStream, derive_seed, derive_stream
from .sources import gaussian_transfer

AMPLITUDE_CAP = 1e3

_NOISE_CHUNK = 1 << 15


class IntegratorBlowUp(ArithmeticError):
    """Amplitude exceeded the cap or became NaN."""


@dataclass(frozen=True)
class MBParams:
    tau_coh: float = 0.5e-12
    tau_up: float = 5e-12
    tau_photon: float = 35e-12
    t_roundtrip: float = 4e-12
    gvd: float = 6.24e5 * 1e-30 / 1e-3      # 6.24e5 fs^2/mm in s^2/m
    dispersive_length_per_rt: float = 2e-3
    z12: float = 7e-9
    sp_ratio: float = 4e-5
    nu0: float = 2.3e12
    n_modes: int = 7
    gain: float = 0.0

    def __post_init__(self):
        for name in ("tau_coh", "tau_up", "tau_photon", "t_roundtrip", "nu0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.n_modes < 1 or self.n_modes % 2 == 0:
            raise ValueError("n_modes must be odd and >= 1")
        if self.gain < 0:
            raise ValueError("gain must be >= 0")
        if self.sp_ratio < 0 or self.dispersive_length_per_rt < 0:
            raise ValueError("sp_ratio and dispersive length must be >= 0")

    @property
    def kappa(self) -> float:
        return 1.0 / self.tau_photon

    @property
    def g_threshold(self) -> float:
        return self.kappa

    @property
    def fsr(self) -> float:
        return 1.0 / self.t_roundtrip

    @property
    def half_modes(self) -> int:
        return (self.n_modes - 1) // 2

    @property
    def mode_indices(self) -> np.ndarray:
        return np.arange(-self.half_modes, self.half_modes + 1)

    @property
    def gdd_rt(self) -> float:
        return self.gvd * self.dispersive_length_per_rt

    @property
    def detunings(self) -> np.ndarray:
        return np.array([gvd_detuning(int(m), self) for m in self.mode_indices])

    @property
    def mode_frequencies(self) -> np.ndarray:
        """Cold-cavity frequencies nu0 + m*FSR + dnu_m [Hz]."""
        return self.nu0 + self.mode_indices * self.fsr + self.detunings

    @property
    def diffusion(self) -> float:
        return 0.5 * self.kappa * self.sp_ratio**2

    def modal_gains(self) -> np.ndarray:
        return lorentzian_gain(self.gain, self.mode_frequencies, self)

    def beta(self) -> np.ndarray:
        nu = self.mode_frequencies
        return 1.0 / (1.0 + 2j * math.pi * (nu[:, None] - nu[None, :]) * self.tau_up)

    def at(self, ratio: float) -> "MBParams":
        """Copy pumped at ``ratio`` times threshold."""
        return replace(self, gain=ratio * self.g_threshold)


def lorentzian_gain(G, nu_m, params: MBParams):
    """Modal gain G / (1 + (2 pi (nu_m - nu0) tau_coh)^2)."""
    if np.any(np.asarray(G) < 0):
        raise ValueError("G must be >= 0")
    x = 2.0 * math.pi * (np.asarray(nu_m, dtype=float) - params.nu0) * params.tau_coh
    return G / (1.0 + x * x)


def gvd_detuning(m: int, params: MBParams) -> float:
    """Dispersive shift of mode m from the equidistant comb [Hz].

    First-order solution of 2 pi nu t_rt + 1/2 GDD (2 pi (nu - nu0))^2 = 2 pi k.
    """
    if abs(m) > params.half_modes:
        raise ValueError(f"mode index {m} outside +-{params.half_modes}")
    return -params.gdd_rt * math.pi * (m * params.fsr) ** 2 / params.t_roundtrip


@dataclass(frozen=True)
class ModalState:
    amplitudes: np.ndarray
    t: float = 0.0


@dataclass
class ModalTrajectory:
    times: np.ndarray
    amplitudes: np.ndarray      # (n_times, n_modes) complex, comb frame
    params: MBParams
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.times.size < 2:
            raise ValueError("trajectory needs at least two snapshots")
        if self.amplitudes.shape != (self.times.size, self.params.n_modes):
            raise ValueError("amplitudes must be (n_times, n_modes)")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def state(self, k: int) -> ModalState:
        return ModalState(self.amplitudes[k].copy(), float(self.times[k]))

    def mode_powers(self) -> np.ndarray:
        return np.mean(np.abs(self.amplitudes) ** 2, axis=0)

    def total_power(self) -> float:
        return float(np.sum(self.mode_powers()))


# integrator -----------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _run_kernel(a, lin, phi1, halfg, beta, noise, n_steps, step0, n_transient,
                rec_every, out, rec_pos):
    n = a.size
    grating = np.zeros(2 * n - 1, dtype=np.complex128)
    nl = np.zeros(n, dtype=np.complex128)
    for s in range(n_steps):
        for d in range(2 * n - 1):
            grating[d] = 0.0
        for p in range(n):
            ap = a[p]
            for q in range(n):
                grating[p - q + n - 1] += beta[p, q] * ap * np.conj(a[q])
        for m in range(n):
            acc = 0.0 + 0.0j
            for r in range(n):
                acc += grating[m - r + n - 1] * a[r]
            nl[m] = acc
        for m in range(n):
            v = lin[m] * a[m] - phi1[m] * halfg[m] * nl[m]
            if noise.shape[0] > 0:
                v += noise[s, m]
            a[m] = v
            mag = abs(v)
            if not (mag <= 1e3):
                return step0 + s + 1, rec_pos
        g = step0 + s + 1
        if g >= n_transient and (g - n_transient) % rec_every == 0 and rec_pos < out.shape[0]:
            for m in range(n):
                out[rec_pos, m] = a[m]
            rec_pos += 1
    return -1, rec_pos


def _phi1(z):
    z = np.asarray(z, dtype=complex)
    out = np.ones_like(z)
    big = np.abs(z) > 1e-8
    out[big] = np.expm1(z[big]) / z[big]
    out[~big] = 1.0 + z[~big] / 2.0
    return out


class _Stepper:
    def __init__(self, params: MBParams, dt: float, noise: bool):
        self.params = params
        self.dt = dt
        g = params.modal_gains()
        lam = 0.5 * (g - params.kappa) + 2j * math.pi * params.detunings
        self.lin = np.exp(lam * dt)
        self.phi1 = dt * _phi1(lam * dt)
        self.halfg = (0.5 * g).astype(complex)
        self.beta = params.beta()
        var = 2.0 * params.diffusion * dt * _phi1(2.0 * lam.real * dt).real
        self.noise_std = np.sqrt(0.5 * var) if noise and params.sp_ratio > 0 else None

    def noise_block(self, gen: Optional[np.random.Generator], n_steps: int) -> np.ndarray:
        if self.noise_std is None:
            return np.zeros((0, self.params.n_modes), dtype=complex)
        z = gen.standard_normal((n_steps, self.params.n_modes, 2))
        return (z[..., 0] + 1j * z[..., 1]) * self.noise_std

    def run(self, a, gen, n_steps, n_transient=0, rec_every=1, n_rec=0, t0=0.0):
        out = np.zeros((n_rec, self.params.n_modes), dtype=complex)
        rec_pos = 0
        done = 0
        while done < n_steps:
            k = min(_NOISE_CHUNK, n_steps - done)
            nz = self.noise_block(gen, k)
            fail, rec_pos = _run_kernel(a, self.lin, self.phi1, self.halfg, self.beta, nz, k,
                                        done, n_transient, rec_every, out, rec_pos)
            if fail >= 0:
                t_fail = t0 + fail * self.dt
                raise IntegratorBlowUp(
                    f"modal amplitude exceeded {AMPLITUDE_CAP:g} E_sat or became NaN at "
                    f"t={t_fail:.4g} s (gain={self.params.gain:.4g} 1/s)")
            done += k
        return out[:rec_pos]


def step_modes(state: ModalState, dt: float, params: MBParams,
               noise: Optional[RandomStream] = None) -> ModalState:
    """Advance ``state`` by one step of length ``dt``; ``noise=None`` switches noise off."""
    if not 0 < dt <= params.t_roundtrip:
        raise ValueError("need 0 < dt <= t_roundtrip")
    st = _Stepper(params, dt, noise is not None)
    a = np.array(state.amplitudes, dtype=complex)
    st.run(a, None if noise is None else noise.generator, 1, t0=state.t)
    return ModalState(a, state.t + dt)


def initial_amplitudes(params: MBParams, gen: np.random.Generator) -> np.ndarray:
    """Noise-level amplitudes in every mode; the central mode starts at its
    noise-free fixed point when pumped above threshold."""
    n = params.n_modes
    z = gen.standard_normal((n, 2))
    a = params.sp_ratio * (z[:, 0] + 1j * z[:, 1]) / math.sqrt(2.0)
    g0 = params.modal_gains()[params.half_modes]
    if g0 > params.kappa:
        a[params.half_modes] += math.sqrt(1.0 - params.kappa / g0)
    return a


def simulate(params: MBParams, duration: float, transient: float = 20e-9,
             record_dt: float = 0.75e-12, seed: int = 0, dt: float = 0.25e-12,
             noise: bool = True, initial=None) -> ModalTrajectory:
    """Integrate for ``duration``, drop ``transient``, keep a snapshot every ``record_dt``.

    ``record_dt`` is rounded to a whole number of steps. The default (three
    steps) is coprime with the 16 steps per round trip, so snapshots visit
    every intra-round-trip phase evenly.
    """
    if not duration > transient >= 0:
        raise ValueError("need duration > transient >= 0")
    if not 0 < dt <= params.t_roundtrip:
        raise ValueError("need 0 < dt <= t_roundtrip")
    n_steps = int(round(duration / dt))
    n_tr = int(round(transient / dt))
    rec_every = max(1, int(round(record_dt / dt)))
    n_rec = (n_steps - n_tr) // rec_every + 1
    if n_rec < 2:
        raise ValueError("recording window shorter than two snapshots")
    st = _Stepper(params, dt, noise)
    if initial is None:
        a = initial_amplitudes(params, derive_stream(seed, "mb/init").generator)
    else:
        a = np.array(initial, dtype=complex)
        if a.shape != (params.n_modes,):
            raise ValueError("initial amplitudes must have n_modes entries")
    out = np.zeros((n_rec, params.n_modes), dtype=complex)
    first = 0
    if n_tr == 0:
        out[0] = a
        first = 1
    gen = derive_stream(seed, "mb/noise").generator if noise else None
    rec = st.run(a, gen, n_steps, n_tr, rec_every, n_rec - first)
    out[first:first + rec.shape[0]] = rec
    out = out[:first + rec.shape[0]]
    times = (n_tr + rec_every * np.arange(out.shape[0])) * dt
    return ModalTrajectory(times, out, params, seed,
                           meta={"dt": dt, "transient": transient, "noise": noise})


# field and statistics ---------------------------------------------------------

def _comb_phase(params: MBParams, t):
    """exp(i 2pi m FSR t) for every mode, shape (len(t), n_modes)."""
    return np.exp(2j * math.pi * np.outer(np.asarray(t, float), params.mode_indices * params.fsr))


def envelope(traj: ModalTrajectory, t, probe_sigma: float = 0.0) -> np.ndarray:
    """Complex field envelope relative to nu0, sum_m a_m(t) exp(i 2pi m FSR t).

    Amplitudes are de-rotated by their dispersive detuning before linear
    interpolation, so only the slow part is interpolated. A positive
    ``probe_sigma`` weights each mode by the Gaussian probe transfer.
    """
    p = traj.params
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    t0, h = float(traj.times[0]), traj.dt
    if flat.size and (flat.min() < t0 - 1e-18 or flat.max() > traj.times[-1] + 1e-18):
        raise OutOfRange("time outside trajectory span")
    det = p.detunings
    u = np.clip((flat - t0) / h, 0.0, traj.times.size - 1.000000001)
    k = np.floor(u).astype(np.int64)
    f = (u - k)[:, None]
    rot = np.exp(-2j * math.pi * np.outer(traj.times[k], det))
    rot1 = np.exp(-2j * math.pi * np.outer(traj.times[k + 1], det))
    b = traj.amplitudes[k] * rot * (1.0 - f) + traj.amplitudes[k + 1] * rot1 * f
    w = np.exp(2j * math.pi * np.outer(flat, p.mode_indices * p.fsr + det))
    if probe_sigma > 0:
        w = w * gaussian_transfer(p.mode_frequencies, probe_sigma)
    return np.sum(b * w, axis=1).reshape(t.shape)


def reconstruct_field(traj: ModalTrajectory, field_scale: float, t_grid=None) -> FieldTrace:
    """Real THz field field_scale * Re[envelope(t) exp(i 2pi nu0 t)] in V/m.

    If ``t_grid`` is given it is checked against the trajectory span.
    """
    p = traj.params
    lo, hi = float(traj.times[0]), float(traj.times[-1])
    if t_grid is not None:
        tg = np.asarray(t_grid, float)
        if tg.min() < lo or tg.max() > hi:
            raise OutOfRange("t_grid outside trajectory span")

    def _eval(t, sigma=0.0):
        t = np.asarray(t, float)
        flat = t.ravel()
        out = np.empty(flat.size)
        for s in range(0, flat.size, 1 << 16):
            tt = flat[s:s + (1 << 16)]
            env = envelope(traj, tt, sigma)
            out[s:s + tt.size] = field_scale * (env * np.exp(2j * math.pi * p.nu0 * tt)).real
        return out.reshape(t.shape)

    return FieldTrace(
        sampler=_eval, t_start=lo, t_end=hi, nu0=p.nu0, amplitude=field_scale,
        kind="maxwell-bloch", probe_filtered=_eval,
    )


def intensity(traj: ModalTrajectory) -> np.ndarray:
    """|envelope|^2 at the snapshot times (E_sat^2 units)."""
    ph = _comb_phase(traj.params, traj.times)
    return np.abs(np.sum(traj.amplitudes * ph, axis=1)) ** 2


def g2_modal(traj: ModalTrajectory, check_length: bool = True) -> float:
    """<I^2> / <I>^2 of the analytic-signal intensity envelope."""
    span = traj.times[-1] - traj.times[0]
    if check_length and span < 100 * traj.params.tau_photon:
        raise ValueError("trajectory shorter than 100 photon lifetimes")
    inten = intensity(traj)
    m1 = float(np.mean(inten))
    if not m1 > 0:
        raise ValueError("no field: all modes empty")
    return float(np.mean(inten**2) / m1**2)


def g2_modal_tau(traj: ModalTrajectory, taus, probe_sigma: float = 0.0) -> np.ndarray:
    """Envelope intensity correlation <I(t) I(t+tau)> / (<I(t)> <I(t+tau)>).

    With ``probe_sigma`` the modes are weighted by the probe transfer first,
    giving what the detector chain should see before few-cycle averaging.
    """
    taus = np.asarray(taus, float)
    margin = float(np.max(np.abs(taus))) if taus.size else 0.0
    t = traj.times[(traj.times >= traj.times[0] + margin) & (traj.times <= traj.times[-1] - margin)]
    i0 = np.abs(envelope(traj, t, probe_sigma)) ** 2
    out = np.empty(taus.size)
    for k, tau in enumerate(taus):
        i1 = np.abs(envelope(traj, t + tau, probe_sigma)) ** 2
        out[k] = np.mean(i0 * i1) / (np.mean(i0) * np.mean(i1))
    return out


def g2_modal_raw_tau(traj: ModalTrajectory, taus, probe_sigma: float = 0.0) -> np.ndarray:
    """Real-field intensity correlation <E^2(t) E^2(t+tau)> / (<E^2(t)> <E^2(t+tau)>).

    Envelope part plus the 2*nu0 term 0.5 Re[<A^2 A'*^2> exp(-i 4pi nu0 tau)] / (<|A|^2> <|A'|^2>);
    this is what the two-probe estimator sees before few-cycle averaging.
    """
    taus = np.asarray(taus, float)
    margin = float(np.max(np.abs(taus))) if taus.size else 0.0
    t = traj.times[(traj.times >= traj.times[0] + margin) & (traj.times <= traj.times[-1] - margin)]
    a0 = envelope(traj, t, probe_sigma)
    i0 = np.abs(a0) ** 2
    out = np.empty(taus.size)
    for k, tau in enumerate(taus):
        a1 = envelope(traj, t + tau, probe_sigma)
        i1 = np.abs(a1) ** 2
        den = np.mean(i0) * np.mean(i1)
        osc = np.mean(a0**2 * np.conj(a1) ** 2) * np.exp(-4j * math.pi * traj.params.nu0 * tau)
        out[k] = (np.mean(i0 * i1) + 0.5 * osc.real) / den
    return out


class LIPoint(NamedTuple):
    gain: float
    total_power: float
    g2_zero: float
    mode_powers: np.ndarray


def li_sweep(params: MBParams, gains, seed: int = 0, duration: float = 220e-9,
             transient: float = 20e-9, record_dt: float = 0.75e-12, dt: float = 0.25e-12,
             threads: int = 1) -> list[LIPoint]:
    """Light-current characteristic and modal g2(0) for each pump in ``gains``."""
    gains = [float(g) for g in gains]
    if any(b < a for a, b in zip(gains, gains[1:])):
        raise ValueError("gains must be sorted ascending")

    def one(k):
        p = replace(params, gain=gains[k])
        tr = simulate(p, duration, transient, record_dt, derive_seed(seed, f"li/{k}"), dt)
        return LIPoint(gains[k], tr.total_power(), g2_modal(tr), tr.mode_powers())

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, range(len(gains))))
    return [one(k) for k in range(len(gains))]


def map_gain_to_current(G: float, calib=(495.0, None)) -> float:
    """Affine map of pump rate to drive current [mA] through the threshold point."""
    i_th, g_th = calib
    if g_th is None:
        g_th = MBParams().g_threshold
    if not g_th > 0:
        raise ValueError("G_th must be > 0")
    return i_th * G / g_th


def write_trajectory_csv(path, traj: ModalTrajectory) -> None:
    cols = ["t_s"]
    for m in traj.params.mode_indices:
        cols += [f"re_a_{m}", f"im_a_{m}"]
    data = np.empty((traj.times.size, 1 + 2 * traj.params.n_modes))
    data[:, 0] = traj.times
    data[:, 1::2] = traj.amplitudes.real
    data[:, 2::2] = traj.amplitudes.imag
    with open(path, "w", newline="\n") as fh:
        fh.write("# " + ", ".join(cols) + "\n")
        np.savetxt(fh, data, fmt="%.12g", delimiter=",")
