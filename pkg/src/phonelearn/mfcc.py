"""MFCC front end: framing, cepstra, delta features, frame labeling.

The pipeline turns a speech segment into 39-dimensional cue vectors:
13 mel-frequency cepstral coefficients per 25 ms frame (10 ms hop),
plus first and second order regression deltas.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .corpus import LabeledFrame, PhoneSegment, round_half_up
from .errors import DataError


@dataclass(frozen=True)
class MfccConfig:
    """Front-end parameters.

    ``delta_scope`` controls the span of the delta regression: ``"segment"``
    computes deltas within each phone segment's frame stream, ``"word"``
    computes them over the concatenated frame stream of a whole word.
    """

    sample_rate: int = 16000
    window_len: float = 0.025
    hop: float = 0.010
    pre_emphasis: float = 0.97
    n_mel_filters: int = 26
    n_cepstra: int = 13
    log_floor: float = 1e-10
    delta_window: int = 2
    delta_scope: str = "segment"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not 0 < self.hop <= self.window_len:
            raise ValueError("need 0 < hop <= window_len")
        if not 1 <= self.n_cepstra <= self.n_mel_filters:
            raise ValueError("need 1 <= n_cepstra <= n_mel_filters")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        if self.delta_window < 1:
            raise ValueError("delta_window must be >= 1")
        if self.delta_scope not in ("segment", "word"):
            raise ValueError("delta_scope must be 'segment' or 'word'")

    @property
    def window_samples(self) -> int:
        return round_half_up(self.window_len * self.sample_rate)

    @property
    def hop_samples(self) -> int:
        return round_half_up(self.hop * self.sample_rate)

    @property
    def fft_size(self) -> int:
        n = 1
        while n < self.window_samples:
            n *= 2
        return n

    @property
    def n_cues(self) -> int:
        return 3 * self.n_cepstra


@dataclass(frozen=True)
class AudioSegment:
    """A mono waveform with its sampling rate, samples in [-1, 1]."""

    samples: np.ndarray = field(repr=False)
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("audio samples must be 1-dimensional")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @classmethod
    def from_wav(cls, path) -> "AudioSegment":
        """Load a 16-bit PCM mono WAV file."""
        with wave.open(str(path), "rb") as wav:
            if wav.getnchannels() != 1:
                raise DataError(f"{path}: expected mono audio, got "
                                f"{wav.getnchannels()} channels")
            if wav.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM samples")
            raw = wav.readframes(wav.getnframes())
            rate = wav.getframerate()
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
        return cls(samples=samples, sample_rate=rate)


def _frame_count_samples(n_samples: int, config: MfccConfig) -> int:
    win = config.window_samples
    hop = config.hop_samples
    if n_samples <= win:
        return 1
    return -(-(n_samples - win) // hop) + 1


def frame_count(duration: float, config: MfccConfig | None = None) -> int:
    """Number of analysis frames for a segment of ``duration`` seconds.

    The computation is done in integer samples: one frame if the segment
    is no longer than the window, otherwise ``ceil((n - win) / hop) + 1``.
    """
    if config is None:
        config = MfccConfig()
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    n = round_half_up(duration * config.sample_rate)
    if n < 1:
        raise ValueError(f"duration {duration} is below one sample")
    return _frame_count_samples(n, config)


def _mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_inv(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def _mel_filterbank(config: MfccConfig) -> np.ndarray:
    """Triangular mel filters evaluated at the rFFT bin frequencies.

    Filter centres are equally spaced on the mel scale between 0 Hz and
    the Nyquist frequency.  Returns shape ``(n_mel_filters, fft_size//2 + 1)``.
    """
    nyquist = config.sample_rate / 2.0
    edges_hz = _mel_inv(np.linspace(_mel(0.0), _mel(nyquist),
                                    config.n_mel_filters + 2))
    bin_hz = (np.arange(config.fft_size // 2 + 1)
              * config.sample_rate / config.fft_size)
    fb = np.zeros((config.n_mel_filters, bin_hz.shape[0]))
    for m in range(config.n_mel_filters):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_hz - lo) / (mid - lo)
        falling = (hi - bin_hz) / (hi - mid)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def extract_mfcc(segment: AudioSegment, config: MfccConfig | None = None) -> np.ndarray:
    """Cepstra for every frame of a speech segment, shape ``(n, n_cepstra)``.

    Steps: pre-emphasis, Hamming-windowed framing (zero padded at the
    tail), magnitude-squared rFFT, triangular mel filterbank, natural log
    with an absolute floor, orthonormal DCT-II truncated to ``n_cepstra``.
    """
    if config is None:
        config = MfccConfig()
    if segment.sample_rate != config.sample_rate:
        raise DataError(
            f"audio sample rate {segment.sample_rate} does not match "
            f"configured rate {config.sample_rate}")
    x = segment.samples
    if len(x) == 0:
        raise DataError("cannot extract features from empty audio")

    # y[n] = x[n] - k*x[n-1], with x[-1] taken as x[0] so a constant
    # signal stays constant after emphasis (every frame identical).
    emphasized = np.empty_like(x)
    emphasized[0] = x[0] - config.pre_emphasis * x[0]
    emphasized[1:] = x[1:] - config.pre_emphasis * x[:-1]

    win = config.window_samples
    hop = config.hop_samples
    n_frames = _frame_count_samples(len(x), config)
    padded_len = (n_frames - 1) * hop + win
    if padded_len > len(emphasized):
        emphasized = np.concatenate(
            [emphasized, np.zeros(padded_len - len(emphasized))])
    idx = hop * np.arange(n_frames)[:, None] + np.arange(win)[None, :]
    frames = emphasized[idx] * np.hamming(win)

    spectrum = np.fft.rfft(frames, n=config.fft_size, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    energies = power @ _mel_filterbank(config).T
    log_energies = np.log(np.maximum(energies, config.log_floor))
    cepstra = scipy.fft.dct(log_energies, type=2, norm="ortho", axis=1)
    return cepstra[:, :config.n_cepstra]


def add_deltas(cepstra: np.ndarray, delta_window: int = 2) -> np.ndarray:
    """Append first and second order deltas, tripling the feature count.

    The delta at frame t is the standard regression slope
    ``sum_n n * (c[t+n] - c[t-n]) / (2 * sum_n n^2)`` for n = 1..W, with
    frame indices clamped to the stream edges (edge replication).
    """
    cepstra = np.asarray(cepstra, dtype=np.float64)
    if cepstra.ndim != 2 or cepstra.shape[0] < 1:
        raise ValueError("cepstra must be a non-empty 2-d array")
    deltas = _delta(cepstra, delta_window)
    delta_deltas = _delta(deltas, delta_window)
    return np.concatenate([cepstra, deltas, delta_deltas], axis=1)


def _delta(stream: np.ndarray, window: int) -> np.ndarray:
    w = int(window)
    padded = np.concatenate([np.repeat(stream[:1], w, axis=0), stream,
                             np.repeat(stream[-1:], w, axis=0)], axis=0)
    t = stream.shape[0]
    num = np.zeros_like(stream)
    for n in range(1, w + 1):
        num += n * (padded[w + n:w + n + t] - padded[w - n:w - n + t])
    return num / (2.0 * sum(n * n for n in range(1, w + 1)))


def extract_labeled_frames(audio: AudioSegment, segments: list[PhoneSegment],
                           config: MfccConfig | None = None,
                           start_trial: int = 0) -> list[LabeledFrame]:
    """Cut aligned phone segments out of ``audio`` and label their frames.

    Segments are processed in the given order; frames receive consecutive
    trial indices starting at ``start_trial``.  With
    ``delta_scope="word"`` the delta regression runs over the concatenated
    cepstra of all consecutive segments sharing a word id, then frames are
    attributed back to their segments.
    """
    if config is None:
        config = MfccConfig()
    frames: list[LabeledFrame] = []
    trial = start_trial

    def emit(word_id, phones_per_frame, cues):
        nonlocal trial
        for phone, vec in zip(phones_per_frame, cues):
            frames.append(LabeledFrame(word_id=word_id, trial_index=trial,
                                       phone=phone, cues=vec))
            trial += 1

    def segment_cepstra(seg: PhoneSegment) -> np.ndarray:
        lo = round_half_up(seg.start * config.sample_rate)
        hi = round_half_up(seg.end * config.sample_rate)
        if hi > len(audio.samples):
            raise DataError(
                f"segment [{seg.start}, {seg.end}] of word {seg.word_id!r} "
                f"extends past the end of the audio")
        if hi - lo < 1:
            raise DataError(
                f"segment [{seg.start}, {seg.end}] of word {seg.word_id!r} "
                f"is shorter than one sample")
        piece = AudioSegment(samples=audio.samples[lo:hi],
                             sample_rate=audio.sample_rate)
        return extract_mfcc(piece, config)

    if config.delta_scope == "segment":
        for seg in segments:
            ceps = add_deltas(segment_cepstra(seg), config.delta_window)
            emit(seg.word_id, [seg.phone] * len(ceps), ceps)
        return frames

    # word scope: group consecutive segments by word id
    i = 0
    while i < len(segments):
        word_id = segments[i].word_id
        group = []
        while i < len(segments) and segments[i].word_id == word_id:
            group.append(segments[i])
            i += 1
        per_seg = [segment_cepstra(seg) for seg in group]
        cues = add_deltas(np.concatenate(per_seg, axis=0), config.delta_window)
        phones = [seg.phone for seg, ceps in zip(group, per_seg)
                  for _ in range(len(ceps))]
        emit(word_id, phones, cues)
    return frames
