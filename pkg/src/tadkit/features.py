"""Spatial feature extraction for target activity detection.

Every millisecond (hop = 16 samples at 16 kHz) an 8-dimensional feature
vector is computed from the 4-channel recording, given the known target DOA:

    [ f_snr, f_corr, cos(phi_diff), sin(phi_diff),
      var(v1), var(v3), cos(phi_tar), sin(phi_tar) ]

f_snr is the power ratio of a delay-and-sum beamformer and a
delay-and-subtract nullformer on the wide mic pair (1, 3), both aligned to
the target lag.  f_corr is the cross-correlation value at the target lag
relative to the largest off-target peak.  phi_diff is the null direction of
an adaptive first-order differential beamformer on the near-side closely
spaced pair, recovered from its adaptive coefficient through a numerically
built calibration table.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .scenes import (EPS_POWER, _sinc_delay, block_powers, default_geometry,
                     propagate_to_array, synthesize_source_signal)


@dataclass
class BlockParams:
    """Rectangular analysis window geometry (defaults: 16 ms window, 1 ms hop)."""

    window_length: int = 256
    hop: int = 16

    def __post_init__(self):
        if not 0 < self.hop <= self.window_length:
            raise ValueError("require 0 < hop <= window_length")

    def frame_count(self, n_samples):
        if n_samples < self.window_length:
            return 0
        return (n_samples - self.window_length) // self.hop + 1

    def frame_start(self, t):
        return t * self.hop


@dataclass
class FeatureFrame:
    f_snr: float
    f_corr: float
    f_diff: np.ndarray  # (cos, sin) of phi_diff
    f_var: np.ndarray   # powers of v1 and v3
    f_phi: np.ndarray   # (cos, sin) of phi_tar
    label: int = 0

    def as_vector(self):
        return np.concatenate(([self.f_snr, self.f_corr], self.f_diff,
                               self.f_var, self.f_phi))


def doa_to_lag(doa_deg, geometry):
    """Expected mic1/mic3 cross-correlation peak lag for a given DOA, in samples."""
    if abs(doa_deg) > 180.0:
        raise ValueError("DOA outside [-180, +180] degrees")
    d13 = geometry.inter_pair_spacing
    lag = geometry.sample_rate * d13 * math.sin(math.radians(doa_deg)) \
        / geometry.speed_of_sound
    return int(round(lag))


def default_max_lag(geometry):
    d13 = geometry.inter_pair_spacing
    return math.ceil(geometry.sample_rate * d13 / geometry.speed_of_sound) + 2


def cross_correlation(block_a, block_b, max_lag):
    """Biased cross-correlation r(dk) = sum_k a(k) b(k+dk) for |dk| <= max_lag."""
    a = np.asarray(block_a, dtype=float)
    b = np.asarray(block_b, dtype=float)
    if len(a) != len(b):
        raise ValueError("blocks must have equal length")
    if len(a) <= 2 * max_lag:
        raise ValueError("blocks too short for requested max_lag")
    full = np.correlate(b, a, "full")  # index L-1+dk holds sum a(k) b(k+dk)
    c = len(a) - 1
    return full[c - max_lag:c + max_lag + 1]


def _guarded_ratio(num, den):
    """Non-negative ratio with matched epsilon guards (silent blocks give 1)."""
    return (max(num, 0.0) + EPS_POWER) / (max(den, 0.0) + EPS_POWER)


def _extract_block(recording, ch, t, block):
    s = block.frame_start(t)
    return recording.samples[ch, s:s + block.window_length]


def f_corr(recording, t, target_doa, geometry, block=BlockParams()):
    """Target-lag correlation peak relative to the strongest off-target lag."""
    lag_tar = doa_to_lag(target_doa, geometry)
    max_lag = default_max_lag(geometry)
    r = cross_correlation(_extract_block(recording, 0, t, block),
                          _extract_block(recording, 2, t, block), max_lag)
    idx = lag_tar + max_lag
    num = r[idx]
    den = np.max(np.delete(r, idx))
    return _guarded_ratio(num, den)


def f_snr(recording, t, target_doa, geometry, block=BlockParams()):
    """Beamformer-to-nullformer power ratio on mics 1 and 3."""
    lag_tar = doa_to_lag(target_doa, geometry)
    s = block.frame_start(t)
    v1 = recording.samples[0, s:s + block.window_length]
    sh = s + lag_tar
    v3 = recording.samples[2]
    seg = np.zeros(block.window_length)
    lo, hi = max(sh, 0), min(sh + block.window_length, len(v3))
    if hi > lo:
        seg[lo - sh:hi - sh] = v3[lo:hi]
    p_sum = np.mean((0.5 * (v1 + seg)) ** 2)
    p_diff = np.mean((0.5 * (v1 - seg)) ** 2)
    return _guarded_ratio(p_sum, p_diff)


def f_var(recording, t, block=BlockParams()):
    """Mean-square powers of mics 1 and 3 over the block."""
    v1 = _extract_block(recording, 0, t, block)
    v3 = _extract_block(recording, 2, t, block)
    return np.array([np.mean(v1 ** 2), np.mean(v3 ** 2)])


def f_phi(target_doa):
    """Unit vector (cos, sin) of the known target DOA."""
    phi = math.radians(target_doa)
    return np.array([math.cos(phi), math.sin(phi)])


def side_select(target_doa):
    """Pair choice for the differential beamformer: left for DOA <= 0."""
    return "left" if target_doa <= 0 else "right"


# --------------------------------------------------------------------------
# adaptive differential nullformer
# --------------------------------------------------------------------------

@dataclass
class NullformerState:
    beta: float = 0.5
    step_size: float = 0.05
    pair: str = "right"

    def __post_init__(self):
        if self.pair not in ("left", "right"):
            raise ValueError("pair must be 'left' or 'right'")
        self.beta = float(np.clip(self.beta, 0.0, 1.0))


NLMS_REGULARIZER = 1e-9


def make_cardioids(front, back, geometry):
    """Forward/backward cardioids from one closely spaced pair.

    The pair delay T = d_pair / c is fractional at 16 kHz and is realized
    with a fixed windowed-sinc FIR.
    """
    t_samp = geometry.pair_spacing * geometry.sample_rate / geometry.speed_of_sound
    c_f = front - _sinc_delay(back, t_samp)
    c_b = back - _sinc_delay(front, t_samp)
    return c_f, c_b


def nullformer_step(state, cf_block, cb_block):
    """One block-NLMS update of the adaptive coefficient beta.

    Minimizes the power of y = c_f - beta * c_b over the block; beta is
    clipped to [0, 1] after the update.  Returns the updated state.
    """
    y = cf_block - state.beta * cb_block
    norm = float(np.dot(cb_block, cb_block)) + NLMS_REGULARIZER
    state.beta = float(np.clip(
        state.beta + state.step_size * float(np.dot(y, cb_block)) / norm, 0.0, 1.0))
    return state


@dataclass
class NullformerCalibration:
    """Converged beta per |DOA| on a fixed grid, used to invert beta -> angle."""

    angles_deg: np.ndarray
    betas: np.ndarray

    def angle_for_beta(self, beta, pair):
        mag = self.angles_deg[int(np.argmin(np.abs(self.betas - beta)))]
        return -mag if pair == "left" else mag


_CALIBRATION_CACHE = {}


def build_nullformer_calibration(geometry, grid_step=5.0, max_angle=135.0,
                                 duration=0.5, step_size=0.05):
    """Numerically map DOA to converged beta.

    For each grid angle a unit noise plane wave is propagated to the array,
    the right-pair cardioids are formed and block NLMS is run to convergence;
    the final beta is recorded.  The pair response depends only on |DOA|
    (front/back pair axis), so one non-negative grid serves both sides.
    """
    key = (round(geometry.pair_spacing, 9), geometry.sample_rate,
           round(geometry.speed_of_sound, 6), grid_step, max_angle)
    if key in _CALIBRATION_CACHE:
        return _CALIBRATION_CACHE[key]
    angles = np.arange(0.0, max_angle + 1e-9, grid_step)
    block = BlockParams()
    betas = np.empty(len(angles))
    probe = synthesize_source_signal(duration, "speech", seed=12345,
                                     sample_rate=geometry.sample_rate)
    for i, ang in enumerate(angles):
        chans = propagate_to_array(probe, ang, geometry)
        c_f, c_b = make_cardioids(chans[2], chans[3], geometry)
        state = NullformerState(beta=0.5, step_size=step_size, pair="right")
        for _ in range(3):  # a few passes over the probe to converge
            for t in range(len(probe) // block.hop):
                s = t * block.hop
                nullformer_step(state, c_f[s:s + block.hop], c_b[s:s + block.hop])
        betas[i] = state.beta
    cal = NullformerCalibration(angles, betas)
    _CALIBRATION_CACHE[key] = cal
    return cal


def run_nullformer(recording, target_doa, geometry, block=BlockParams(),
                   calibration=None, step_size=0.05):
    """Per-frame phi_diff estimates for a whole recording.

    The pair on the target side is selected once per scene; beta is updated
    once per hop and converted to an angle after each update.
    """
    if calibration is None:
        calibration = build_nullformer_calibration(geometry)
    pair = side_select(target_doa)
    fr, ba = (0, 1) if pair == "left" else (2, 3)
    c_f, c_b = make_cardioids(recording.samples[fr], recording.samples[ba], geometry)
    n_frames = block.frame_count(recording.samples.shape[1])
    state = NullformerState(beta=0.5, step_size=step_size, pair=pair)
    phi = np.empty(n_frames)
    for t in range(n_frames):
        s = block.frame_start(t)
        nullformer_step(state, c_f[s:s + block.hop], c_b[s:s + block.hop])
        phi[t] = calibration.angle_for_beta(state.beta, pair)
    return phi


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def assemble_feature(recording, t, target_doa, geometry, block, phi_diff_deg):
    """Stack the five feature groups of one block into a FeatureFrame."""
    phi = math.radians(phi_diff_deg)
    return FeatureFrame(
        f_snr=f_snr(recording, t, target_doa, geometry, block),
        f_corr=f_corr(recording, t, target_doa, geometry, block),
        f_diff=np.array([math.cos(phi), math.sin(phi)]),
        f_var=f_var(recording, t, block),
        f_phi=f_phi(target_doa),
    )


def _block_correlation_series(v1, v3, block, max_lag, n_frames):
    """r(dk, t) for all frames at once, identical to cross_correlation per block."""
    n = len(v1)
    win = block.window_length
    starts = np.arange(n_frames) * block.hop
    out = np.empty((n_frames, 2 * max_lag + 1))
    for j, dk in enumerate(range(-max_lag, max_lag + 1)):
        # overlap sums of v1(k) v3(k+dk); the product series is indexed so
        # that entry s..s+win-|dk| covers exactly the in-block summands
        prod = v1[:n - dk] * v3[dk:] if dk >= 0 else v1[-dk:] * v3[:n + dk]
        cs = np.concatenate(([0.0], np.cumsum(prod)))
        out[:, j] = cs[starts + win - abs(dk)] - cs[starts]
    return out


def _shifted(x, lag, n):
    """x(k + lag) truncated/zero-padded to length n."""
    out = np.zeros(n)
    lo, hi = max(lag, 0), min(lag + n, len(x))
    if hi > lo:
        out[lo - lag:hi - lag] = x[lo:hi]
    return out


def extract_features(recording, target_doa, geometry=None, block=None,
                     calibration=None):
    """Whole-scene feature matrix, shape (frames, 8).

    Vectorized equivalent of calling assemble_feature on every block; the
    agreement is covered by tests.
    """
    if geometry is None:
        geometry = default_geometry(recording.sample_rate)
    if block is None:
        block = BlockParams()
    v1 = recording.samples[0]
    v3 = recording.samples[2]
    n = len(v1)
    n_frames = block.frame_count(n)
    if n_frames <= 0:
        return np.zeros((0, 8))
    max_lag = default_max_lag(geometry)
    lag_tar = doa_to_lag(target_doa, geometry)

    r = _block_correlation_series(v1, v3, block, max_lag, n_frames)
    idx = lag_tar + max_lag
    num = r[:, idx]
    others = np.delete(r, idx, axis=1)
    den = others.max(axis=1)
    fc = (np.maximum(num, 0.0) + EPS_POWER) / (np.maximum(den, 0.0) + EPS_POWER)

    v3a = _shifted(v3, lag_tar, n)
    p_sum = block_powers(0.5 * (v1 + v3a), block)[:n_frames]
    p_diff = block_powers(0.5 * (v1 - v3a), block)[:n_frames]
    fs_ = (np.maximum(p_sum, 0.0) + EPS_POWER) / (np.maximum(p_diff, 0.0) + EPS_POWER)

    var1 = block_powers(v1, block)[:n_frames]
    var3 = block_powers(v3, block)[:n_frames]

    phi_diff = run_nullformer(recording, target_doa, geometry, block, calibration)
    phi_d = np.radians(phi_diff)
    phi_t = f_phi(target_doa)

    feats = np.empty((n_frames, 8))
    feats[:, 0] = fs_
    feats[:, 1] = fc
    feats[:, 2] = np.cos(phi_d)
    feats[:, 3] = np.sin(phi_d)
    feats[:, 4] = var1
    feats[:, 5] = var3
    feats[:, 6] = phi_t[0]
    feats[:, 7] = phi_t[1]
    return feats


def smooth_features(frames, a):
    """First-order recursive average per dimension; a = 0 is the identity."""
    if not 0.0 <= a < 1.0:
        raise ValueError("smoothing constant must be in [0, 1)")
    frames = np.asarray(frames, dtype=float)
    if a == 0.0 or len(frames) == 0:
        return frames.copy()
    out = np.empty_like(frames)
    out[0] = frames[0]
    for t in range(1, len(frames)):
        out[t] = (1.0 - a) * frames[t] + a * out[t - 1]
    return out
