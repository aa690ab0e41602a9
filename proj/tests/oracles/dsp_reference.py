"""Regenerates the frozen filter responses used by test_dsp.cpp.

Band-pass order counts the total filter order, so scipy's prototype order
is half of it. The notch is the RBJ cookbook design.
"""
import numpy as np
from scipy import signal


def gain_db(b, a, f, fs):
    _, h = signal.freqz(b, a, worN=[f], fs=fs)
    return 20.0 * np.log10(abs(h[0]))


def sos_gain_db(sos, f, fs):
    _, h = signal.sosfreqz(sos, worN=[f], fs=fs)
    return 20.0 * np.log10(abs(h[0]))


def rbj_notch(f0, q, fs):
    w0 = 2.0 * np.pi * f0 / fs
    alpha = np.sin(w0) / (2.0 * q)
    b = np.array([1.0, -2.0 * np.cos(w0), 1.0])
    a = np.array([1.0 + alpha, -2.0 * np.cos(w0), 1.0 - alpha])
    return b / a[0], a / a[0]


b, a = rbj_notch(60.0, 30.0, 500.0)
for f in (10.0, 59.0):
    print(f"notch60 fs=500 f={f}: {gain_db(b, a, f, 500.0):.10g} dB")

for fs, freqs in ((250.0, (0.1, 1.0, 10.0, 59.0, 100.0)), (500.0, (10.0, 100.0, 120.0))):
    sos = signal.butter(2, [0.1, 59.0], btype="bandpass", output="sos", fs=fs)
    for f in freqs:
        print(f"bandpass 0.1-59 order 4 fs={fs} f={f}: {sos_gain_db(sos, f, fs):.10f} dB")
