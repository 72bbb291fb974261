"""Independent reference implementations used to cross-check the library.

These deliberately take different routes from the production code: explicit
per-threshold counting instead of a sorted cumulative sweep, plain DFT
statistics, and central finite differences instead of backprop.
"""

import numpy as np


def eer_midpoint_oracle(scores, labels):
    """Brute-force EER: evaluate FAR/FRR at every midpoint between sorted
    distinct scores (plus sentinels beyond both ends), then take the
    linearly interpolated crossing of the two piecewise-linear curves."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    real = scores[labels == 0]
    fake = scores[labels == 1]
    distinct = np.unique(scores)
    thresholds = [distinct[0] - 1.0]
    for a, b in zip(distinct[:-1], distinct[1:]):
        thresholds.append((a + b) / 2.0)
    thresholds.append(distinct[-1] + 1.0)

    fars, frrs = [], []
    for t in thresholds:
        far = sum(1 for s in real if s >= t) / len(real)
        frr = sum(1 for s in fake if s < t) / len(fake)
        fars.append(far)
        frrs.append(frr)

    for i in range(len(thresholds)):
        d = fars[i] - frrs[i]
        if d == 0.0:
            return fars[i]
        if d < 0.0:
            d_prev = fars[i - 1] - frrs[i - 1]
            frac = d_prev / (d_prev - d)
            return fars[i - 1] + frac * (fars[i] - fars[i - 1])
    raise AssertionError("no crossing found")


def dft_peak_hz(samples, sample_rate):
    """Frequency of the strongest DFT bin."""
    mag = np.abs(np.fft.rfft(samples))
    freqs = np.fft.rfftfreq(len(samples), 1.0 / sample_rate)
    return float(freqs[int(np.argmax(mag))])


def band_energy(samples, sample_rate, lo_hz, hi_hz):
    """Total spectral power in [lo_hz, hi_hz)."""
    spec = np.abs(np.fft.rfft(samples)) ** 2
    freqs = np.fft.rfftfreq(len(samples), 1.0 / sample_rate)
    mask = (freqs >= lo_hz) & (freqs < hi_hz)
    return float(spec[mask].sum())


def band_attenuation_db(before, after, sample_rate, lo_hz, hi_hz):
    num = band_energy(before, sample_rate, lo_hz, hi_hz)
    den = band_energy(after, sample_rate, lo_hz, hi_hz)
    return 10.0 * np.log10(num / max(den, 1e-300))


def measured_snr_db(mixed, clean):
    """SNR implied by the additive residue mixed - clean."""
    noise_part = mixed - clean
    p_clean = np.mean(clean ** 2)
    p_noise = np.mean(noise_part ** 2)
    return 10.0 * np.log10(p_clean / p_noise)


def hz_to_mel_htk(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz_htk(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels, fmin, fmax):
    """Triangle centers of an HTK-mel filterbank, computed from the formula."""
    edges = mel_to_hz_htk(np.linspace(hz_to_mel_htk(fmin), hz_to_mel_htk(fmax), n_mels + 2))
    return edges[1:-1]


def cepstral_peak_lag(samples, lo_lag, hi_lag):
    """Lag of the strongest real-cepstrum peak in [lo_lag, hi_lag)."""
    spec = np.abs(np.fft.rfft(samples))
    cep = np.fft.irfft(np.log(spec + 1e-12))
    window = cep[lo_lag:hi_lag]
    return lo_lag + int(np.argmax(window))


def finite_difference_grad(loss_fn, param, idx, h=1e-6):
    """Central finite difference of loss_fn w.r.t. param[idx] (restores param)."""
    orig = param[idx]
    param[idx] = orig + h
    lp = loss_fn()
    param[idx] = orig - h
    lm = loss_fn()
    param[idx] = orig
    return (lp - lm) / (2.0 * h)
