"""Synthetic binaural acoustic scenes with exact ground-truth components.

Four microphones in two closely spaced pairs (left pair = mics 1,2 and right
pair = mics 3,4) record a mixture of a target speech source, optional
interferers and diffuse background noise.  Propagation is free-field:
pure fractional delays, no scattering and no reverberation, so the mixture
splits exactly into a target component and an interference-plus-noise
component.  That split is what makes oracle per-block SINR (and hence the
binary activity labels) computable without any reference recordings.
"""

import math
import wave
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, sosfilt

EPS_POWER = 1e-12

# constant extra delay (samples) applied to every channel so that negative
# relative delays never shift content before sample 0
BULK_DELAY_SAMPLES = 8.0


class WavFormatError(ValueError):
    """Raised when a WAV file does not match the expected PCM layout."""


@dataclass
class ArrayGeometry:
    """Positions of the 4 microphones (meters, x = left/right, y = front/back)."""

    mic_positions: np.ndarray
    speed_of_sound: float = 343.0
    sample_rate: int = 16000

    def __post_init__(self):
        self.mic_positions = np.asarray(self.mic_positions, dtype=float)
        if self.mic_positions.shape != (4, 2):
            raise ValueError("exactly 4 microphones with 2D positions required")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.pair_spacing >= self.inter_pair_spacing:
            raise ValueError("pair spacing must be smaller than inter-pair spacing")

    @property
    def pair_spacing(self):
        """Distance between the members of the left pair (mics 1 and 2)."""
        return float(np.linalg.norm(self.mic_positions[0] - self.mic_positions[1]))

    @property
    def inter_pair_spacing(self):
        """Distance between mic 1 and mic 3 (the main aperture d13)."""
        return float(np.linalg.norm(self.mic_positions[0] - self.mic_positions[2]))


def default_geometry(sample_rate=16000):
    """Behind-the-ear style layout: pairs at x = -/+0.09 m, 0.015 m front/back."""
    h = 0.015 / 2.0
    pos = [(-0.09, h), (-0.09, -h), (0.09, h), (0.09, -h)]
    return ArrayGeometry(np.array(pos), sample_rate=sample_rate)


@dataclass
class SceneSpec:
    """One synthetic acoustic scene: a target plus optional interferers."""

    target_doa: float
    interferer_doas: list = field(default_factory=list)
    duration: float = 20.0
    source_distance: float = 1.0
    noise_level_db: float = -10.0
    seed: int = 0
    target_active: bool = True  # False renders an interferer/noise-only scene

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if abs(self.target_doa) > 135.0:
            raise ValueError("target DOA outside [-135, +135] degrees")
        if not 0 <= len(self.interferer_doas) <= 4:
            raise ValueError("0 to 4 interferers supported")
        for d in self.interferer_doas:
            if abs(d) > 135.0:
                raise ValueError("interferer DOA outside [-135, +135] degrees")


@dataclass
class MultichannelRecording:
    samples: np.ndarray  # (4, T)
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[0] != 4:
            raise ValueError("expected a 4 x T sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite sample values")


@dataclass
class OracleComponents:
    """Exact additive split of a mixture into target and everything else."""

    target_component: np.ndarray  # (4, T)
    interference_plus_noise_component: np.ndarray  # (4, T)


def _fft_delay(x, delay_samples):
    """Delay a signal by a (possibly fractional) number of samples.

    Realized as a linear-phase shift on a zero-padded FFT; the padding is
    large enough that nothing wraps around for |delay| <= 32 samples.
    """
    n = len(x)
    nfft = 1 << (n + 64 - 1).bit_length()
    spec = np.fft.rfft(x, nfft)
    k = np.arange(spec.shape[0])
    spec *= np.exp(-2j * np.pi * k * (delay_samples / nfft))
    return np.fft.irfft(spec, nfft)[:n]


def _sinc_delay(x, delay_samples, ntaps=21):
    """Windowed-sinc fractional delay FIR (used for the short cardioid delay)."""
    center = ntaps // 2
    m = np.arange(ntaps)
    h = np.sinc(m - center - delay_samples) * np.hamming(ntaps)
    h /= h.sum()
    y = np.convolve(x, h)
    return y[center:center + len(x)]


def synthesize_source_signal(duration, kind="speech", seed=0, sample_rate=16000,
                             tone_freq=1000.0):
    """Create a single-channel test source.

    kind 'speech' (alias 'speech-surrogate') is amplitude-modulated bandpass
    noise with randomized pauses; its on/off duty cycle lands in [0.4, 0.8]
    and it has unit RMS over the active segments.  'tone' is a unit-amplitude
    sinusoid, 'impulse' a single unit sample at t = 0.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    fs = sample_rate
    n = round(duration * fs)
    if kind == "impulse":
        out = np.zeros(n)
        out[0] = 1.0
        return out
    if kind == "tone":
        t = np.arange(n) / fs
        return np.sin(2 * np.pi * tone_freq * t)
    if kind not in ("speech", "speech-surrogate"):
        raise ValueError(f"unknown source kind {kind!r}")

    rng = np.random.default_rng(seed)
    sos = butter(4, [150.0, 3700.0], "bandpass", fs=fs, output="sos")
    carrier = sosfilt(sos, rng.standard_normal(n))

    # on/off gate with segment durations drawn until the duty cycle is safe
    for _ in range(64):
        gate = np.zeros(n)
        pos = 0
        active = bool(rng.random() < 0.6)
        while pos < n:
            seg = rng.uniform(0.4, 1.2) if active else rng.uniform(0.2, 0.8)
            end = min(n, pos + round(seg * fs))
            if active:
                gate[pos:end] = 1.0
            pos = end
            active = not active
        if 0.45 <= gate.mean() <= 0.75:
            break
    ramp = np.hanning(round(0.020 * fs))
    gate = np.convolve(gate, ramp / ramp.sum())[len(ramp) // 2:][:n]

    # slow syllabic-rate modulation, kept well away from zero
    f_mod = rng.uniform(2.0, 4.0)
    phase = rng.uniform(0, 2 * np.pi)
    mod = 0.75 + 0.25 * np.sin(2 * np.pi * f_mod * np.arange(n) / fs + phase)

    sig = carrier * mod * gate
    active_mask = gate > 0.5
    rms = np.sqrt(np.mean(sig[active_mask] ** 2)) if active_mask.any() else 0.0
    if rms > 0:
        sig /= rms
    return sig


def propagate_to_array(source, doa_deg, geometry):
    """Free-field plane-wave propagation of a source to all 4 microphones.

    Each channel is the source delayed by (p_i . u)/c relative to the array
    center (u the DOA unit vector), plus a constant bulk delay shared by all
    channels.  No per-mic attenuation (far field).
    """
    if abs(doa_deg) > 180.0:
        raise ValueError("DOA outside [-180, +180] degrees")
    source = np.asarray(source, dtype=float)
    phi = math.radians(doa_deg)
    u = np.array([math.sin(phi), math.cos(phi)])
    taus = geometry.mic_positions @ u / geometry.speed_of_sound
    out = np.empty((4, len(source)))
    for i, tau in enumerate(taus):
        out[i] = _fft_delay(source, tau * geometry.sample_rate + BULK_DELAY_SAMPLES)
    return out


def _diffuse_noise(n_samples, rms, rng, sample_rate):
    """Independent bandlimited noise per channel (spatially diffuse stand-in)."""
    if rms <= 0:
        return np.zeros((4, n_samples))
    sos = butter(4, 4000.0, "lowpass", fs=sample_rate, output="sos")
    noise = sosfilt(sos, rng.standard_normal((4, n_samples)), axis=-1)
    noise *= rms / np.sqrt(np.mean(noise ** 2, axis=-1, keepdims=True))
    return noise


def mix_scene(spec, geometry):
    """Render a scene and return (mixture recording, oracle components).

    Target and interferers are propagated from their DOAs and each scaled to
    unit long-term RMS on mic 1, so all point sources have equal level.
    Diffuse noise is added at spec.noise_level_db relative to that level.
    """
    fs = geometry.sample_rate
    n = round(spec.duration * fs)

    def render(doa, stream):
        sig = synthesize_source_signal(spec.duration, "speech",
                                       seed=[spec.seed, stream], sample_rate=fs)
        comp = propagate_to_array(sig, doa, geometry)
        rms = np.sqrt(np.mean(comp[0] ** 2))
        if rms > 0:
            comp /= rms
        return comp

    target = render(spec.target_doa, 0) if spec.target_active \
        else np.zeros((4, n))
    rest = np.zeros((4, n))
    for j, doa in enumerate(spec.interferer_doas):
        rest += render(doa, j + 1)

    noise_rms = 0.0 if np.isneginf(spec.noise_level_db) else \
        10.0 ** (spec.noise_level_db / 20.0)
    rng = np.random.default_rng([spec.seed, 1000])
    rest += _diffuse_noise(n, noise_rms, rng, fs)

    mixture = target + rest
    rec = MultichannelRecording(mixture, fs)
    return rec, OracleComponents(target, rest)


def block_powers(x, block):
    """Mean-square power of every analysis block of a single-channel signal."""
    n_frames = block.frame_count(len(x))
    if n_frames <= 0:
        return np.zeros(0)
    view = np.lib.stride_tricks.sliding_window_view(x, block.window_length)
    return np.mean(view[::block.hop][:n_frames] ** 2, axis=-1)


def oracle_sinr_per_block(components, block):
    """Per-block SINR in dB, computed on mic 1 of the oracle components."""
    p_t = block_powers(components.target_component[0], block)
    p_r = block_powers(components.interference_plus_noise_component[0], block)
    return 10.0 * np.log10((EPS_POWER + p_t) / (EPS_POWER + p_r))


def label_blocks(sinr_db, threshold_db=10.0):
    """Binary activity labels: 1 iff SINR >= threshold (ties positive)."""
    return (np.asarray(sinr_db) >= threshold_db).astype(np.uint8)


def write_wav(path, recording):
    """Write a 4-channel recording as 16-bit little-endian PCM."""
    x = np.clip(recording.samples, -1.0, 1.0 - 2.0 ** -15)
    pcm = np.round(x * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(4)
        w.setsampwidth(2)
        w.setframerate(recording.sample_rate)
        w.writeframes(pcm.T.tobytes())


def ingest_wav(path):
    """Read a 4-channel 16-bit PCM WAV file into a MultichannelRecording."""
    try:
        with wave.open(str(path), "rb") as w:
            nch = w.getnchannels()
            width = w.getsampwidth()
            comp = w.getcomptype()
            fs = w.getframerate()
            nframes = w.getnframes()
            raw = w.readframes(nframes)
    except wave.Error as exc:
        raise WavFormatError(f"malformed WAV header: {exc}") from exc
    if nch != 4:
        raise WavFormatError(f"expected 4 channels, found {nch}")
    if width != 2:
        raise WavFormatError(f"expected 16-bit samples, found {8 * width}-bit")
    if comp != "NONE":
        raise WavFormatError(f"expected PCM encoding, found {comp}")
    pcm = np.frombuffer(raw, dtype="<i2").reshape(-1, 4).T
    return MultichannelRecording(pcm.astype(float) / 32768.0, fs)
