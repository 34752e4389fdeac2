"""Independent reference computations used by several test modules."""
import math

import numpy as np


def written_outputs(alpha, theta, phi, eps=0.0, dtheta=0.0, dphi=0.0):
    """Ideal and realistic block outputs for input cos a|0> + sin a|1>, written out by hand."""
    c, s = np.cos(alpha), np.sin(alpha)
    e = np.exp(2j * theta)
    ideal0 = 0.5 * ((e - 1) * np.exp(1j * phi) * c + 1j * (e + 1) * s)
    ideal1 = 0.5 * (1j * (e + 1) * np.exp(1j * phi) * c + (1 - e) * s)
    t = 1 + eps
    er = np.exp(2j * (theta - dtheta))
    fr = np.exp(1j * (phi - dphi))
    norm = t * t + 1
    real0 = ((t * t * er - 1) * fr * c + 1j * t * (er + 1) * s) / norm
    real1 = (1j * t * (er + 1) * fr * c + (t * t - er) * s) / norm
    return (ideal0, ideal1), (real0, real1)


def fidelity_oracle(theta, phi, eps, dtheta, dphi, panels=10_000, normalize=True):
    """Composite trapezoid on the closed interval [0, 2 pi] with ``panels`` panels."""
    alpha = np.linspace(0.0, 2 * math.pi, panels + 1)
    (i0, i1), (r0, r1) = written_outputs(alpha, theta, phi, eps, dtheta, dphi)
    f = np.abs(np.conj(i0) * r0 + np.conj(i1) * r1) ** 2
    if normalize:
        f = f / (np.abs(r0) ** 2 + np.abs(r1) ** 2)
    return float(np.trapezoid(f, alpha) / (2 * math.pi))
