"""
Transforms for periodic functions sampled on the unit circle.

Samples live at the nodes ``theta_j = 2*pi*j/N`` with ``N`` a power of two.
Fourier coefficients follow the normalisation

    f_hat(n) = (1/2pi) * integral_0^{2pi} f(a) exp(-i n a) da,

so that ``f(a) = sum_n f_hat(n) exp(i n a)``. Coefficient arrays are kept in
the usual FFT ordering; :func:`mode_numbers` gives the matching integer modes
``n`` in ``{-N/2, ..., N/2 - 1}``.

The spectral multiplier forms are the reference implementations. The
quadrature forms (``*_quadrature`` and :func:`hhalf_integral`) discretise the
singular-kernel integrals directly and exist to cross-check them.
"""
from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

ComplexArray = NDArray[np.complex128]
FloatArray = NDArray[np.float64]

__all__ = [
    "nodes",
    "mode_numbers",
    "check_samples",
    "analyze",
    "synthesize",
    "average",
    "l2_norm",
    "hilbert",
    "hilbert_quadrature",
    "derivative",
    "antiderivative_periodic_part",
    "frac_deriv",
    "hhalf_fourier",
    "hhalf_integral",
    "sin2_kernel_rows",
    "product_rule_residual",
    "exp_hhalf_ratio",
    "poisson_extend",
    "poisson_quadrature",
    "evaluate_at",
]


def nodes(n: int) -> FloatArray:
    """Equispaced nodes ``2*pi*j/n`` on ``[0, 2*pi)``."""
    return 2.0 * np.pi * np.arange(n) / n


def mode_numbers(n: int) -> FloatArray:
    """Integer mode numbers matching FFT ordering, Nyquist as ``-n/2``."""
    return np.fft.fftfreq(n, d=1.0 / n)


def check_samples(f: ArrayLike) -> np.ndarray:
    """Validate circle samples and return them as an ndarray.

    Raises ``ValueError`` unless the input is one dimensional, finite, and
    has power-of-two length at least 4.
    """
    arr = np.asarray(f)
    if arr.ndim != 1:
        raise ValueError("circle samples must be one dimensional")
    n = arr.shape[0]
    if n < 4 or n & (n - 1):
        raise ValueError(f"number of samples must be a power of two >= 4, got {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("circle samples contain non-finite values")
    if np.iscomplexobj(arr):
        return arr.astype(np.complex128, copy=False)
    return arr.astype(np.float64, copy=False)


def analyze(f: ArrayLike) -> ComplexArray:
    """Fourier coefficients ``f_hat(n)`` of the samples (FFT ordering)."""
    arr = check_samples(f)
    return np.fft.fft(arr) / arr.shape[0]


def synthesize(coeffs: ArrayLike) -> ComplexArray:
    """Inverse of :func:`analyze`: samples from coefficients."""
    c = np.asarray(coeffs, dtype=np.complex128)
    n = c.shape[0]
    if n < 4 or n & (n - 1):
        raise ValueError(f"number of coefficients must be a power of two >= 4, got {n}")
    return np.fft.ifft(c) * n


def average(f: ArrayLike):
    """The mean ``Av(f) = f_hat(0)``."""
    return np.mean(check_samples(f))


def l2_norm(f: ArrayLike) -> float:
    """``||f||_2`` with the unnormalised measure ``da`` on ``[0, 2pi)``."""
    arr = check_samples(f)
    return float(np.sqrt(2.0 * np.pi * np.mean(np.abs(arr) ** 2)))


def _apply_multiplier(f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    # Real input with a Hermitian symbol stays real.
    out = np.fft.ifft(np.fft.fft(f) * symbol)
    if not np.iscomplexobj(f):
        return out.real
    return out


def _hilbert_symbol(n: int) -> ComplexArray:
    k = mode_numbers(n)
    sym = -1j * np.sign(k)
    # The sampled Nyquist mode cannot be told apart from its conjugate, so
    # its image under -i sgn(n) is not representable; drop it.
    sym[n // 2] = 0.0
    return sym


def hilbert(f: ArrayLike) -> np.ndarray:
    """Hilbert transform on the circle, multiplier ``-i sgn(n)``.

    The output has zero mean and ``hilbert(hilbert(f)) = -(f - Av f)`` for
    samples without a Nyquist component.
    """
    arr = check_samples(f)
    return _apply_multiplier(arr, _hilbert_symbol(arr.shape[0]))


def hilbert_quadrature(f: ArrayLike) -> np.ndarray:
    """Principal-value cot-kernel quadrature for the Hilbert transform.

    At node ``a_j`` only the nodes at odd offsets ``a_k``, ``j - k`` odd, are
    used; they sit symmetrically around the singularity, which removes the
    principal value. The rule is exact for trigonometric polynomials of
    degree below ``N/2``.
    """
    arr = check_samples(f)
    n = arr.shape[0]
    h = 2.0 * np.pi / n
    out = np.zeros(n, dtype=arr.dtype)
    for m in range(1, n, 2):
        out += (2.0 / n) / np.tan(m * h / 2.0) * np.roll(arr, m)
    return out


def derivative(f: ArrayLike) -> np.ndarray:
    """Spectral derivative ``d/da`` (Nyquist mode dropped)."""
    arr = check_samples(f)
    n = arr.shape[0]
    sym = 1j * mode_numbers(n)
    sym[n // 2] = 0.0
    return _apply_multiplier(arr, sym)


def antiderivative_periodic_part(f: ArrayLike) -> np.ndarray:
    """Periodic part of ``integral_0^a f``: the antiderivative of ``f - Av f``
    that vanishes at ``a = 0``."""
    arr = check_samples(f)
    n = arr.shape[0]
    k = mode_numbers(n)
    c = np.fft.fft(arr) / n
    c[0] = 0.0
    c[n // 2] = 0.0
    nz = k != 0
    c[nz] = c[nz] / (1j * k[nz])
    c[0] = -np.sum(c)
    out = np.fft.ifft(c) * n
    if not np.iscomplexobj(arr):
        return out.real
    return out


def frac_deriv(f: ArrayLike, s: float) -> np.ndarray:
    """Fractional derivative ``|d_a|^s`` with symbol ``|n|^s``, ``s > 0``.

    The homogeneous symbol at ``n = 0`` is only unambiguous for ``s > 0``;
    ``s <= 0`` is rejected.
    """
    if not s > 0:
        raise ValueError(f"frac_deriv requires s > 0, got {s}")
    arr = check_samples(f)
    sym = np.abs(mode_numbers(arr.shape[0])) ** s
    return _apply_multiplier(arr, sym)


def hhalf_fourier(f: ArrayLike) -> float:
    """Homogeneous ``H^{1/2}`` seminorm ``|| |d_a|^{1/2} f ||_{L^2}``.

    Equal to ``sqrt(2*pi * sum_n |n| |f_hat(n)|^2)``; works for complex f.
    """
    c = analyze(f)
    k = np.abs(mode_numbers(c.shape[0]))
    return float(np.sqrt(2.0 * np.pi * np.sum(k * np.abs(c) ** 2)))


def sin2_kernel_rows(f: ArrayLike, diagonal: str = "exclude") -> FloatArray:
    """Row integrals ``int_0^{2pi} |f(a_j) - f(b)|^2 / sin^2((a_j - b)/2) db``.

    Trapezoid rule on the sample nodes. ``diagonal="exclude"`` drops the
    ``b = a_j`` term; ``diagonal="limit"`` inserts its limiting value
    ``4 |f'(a_j)|^2`` with ``f'`` computed spectrally, which makes the rule
    exact for trigonometric polynomials of degree below ``N/4``.
    """
    arr = check_samples(f)
    n = arr.shape[0]
    h = 2.0 * np.pi / n
    rows = np.zeros(n)
    for m in range(1, n):
        rows += np.abs(arr - np.roll(arr, m)) ** 2 / np.sin(m * h / 2.0) ** 2
    if diagonal == "limit":
        rows += 4.0 * np.abs(derivative(arr)) ** 2
    elif diagonal != "exclude":
        raise ValueError(f"unknown diagonal treatment {diagonal!r}")
    return h * rows


def hhalf_integral(f: ArrayLike, diagonal: str = "exclude") -> float:
    """``H^{1/2}`` seminorm from the double-integral representation

        ||f||^2 = (1/8pi) int int |f(a) - f(b)|^2 / sin^2((a - b)/2) db da,

    discretised by the trapezoid rule with diagonal cells excluded.
    """
    rows = sin2_kernel_rows(f, diagonal=diagonal)
    h = 2.0 * np.pi / rows.shape[0]
    return float(np.sqrt(h * np.sum(rows) / (8.0 * np.pi)))


def product_rule_residual(f: ArrayLike) -> float:
    """Largest pointwise gap in

        f |d_a| f = (1/8pi) int (f(a) - f(b))^2 / sin^2((a - b)/2) db + (1/2) |d_a| (f^2)

    for real ``f``. The kernel integral uses the limiting diagonal term;
    ``f`` should be band-limited to ``|n| <= N/4`` so ``f^2`` is resolved.
    """
    arr = check_samples(f)
    if np.iscomplexobj(arr):
        if np.any(arr.imag):
            raise ValueError("product rule check needs real samples")
        arr = arr.real
    lhs = arr * frac_deriv(arr, 1.0)
    rhs = sin2_kernel_rows(arr, diagonal="limit") / (8.0 * np.pi) + 0.5 * frac_deriv(arr * arr, 1.0)
    return float(np.max(np.abs(lhs - rhs)))


def exp_hhalf_ratio(f: ArrayLike) -> tuple[float, float]:
    """``(||e^f||, e^{max|f|} ||f||)`` in the ``H^{1/2}`` seminorm.

    ``exp`` is ``e^M``-Lipschitz on ``[-M, M]``, so the first entry never
    exceeds the second for real ``f``.
    """
    arr = np.real(check_samples(f))
    bound = float(np.exp(np.max(np.abs(arr)))) * hhalf_fourier(arr)
    return hhalf_fourier(np.exp(arr)), bound


def _check_radius(r: float) -> float:
    r = float(r)
    if not 0.0 <= r < 1.0:
        raise ValueError(f"Poisson radius must lie in [0, 1), got {r}")
    return r


def poisson_extend(boundary: ArrayLike, r: float) -> np.ndarray:
    """Harmonic extension to radius ``r``: multiplier ``r^|n|``."""
    r = _check_radius(r)
    arr = check_samples(boundary)
    sym = r ** np.abs(mode_numbers(arr.shape[0]))
    return _apply_multiplier(arr, sym)


def poisson_quadrature(boundary: ArrayLike, r: float) -> np.ndarray:
    """Harmonic extension by direct trapezoid convolution with the kernel
    ``(1 - r^2) / (1 - 2 r cos t + r^2)``."""
    r = _check_radius(r)
    arr = check_samples(boundary)
    n = arr.shape[0]
    t = nodes(n)
    kernel = (1.0 - r * r) / (1.0 - 2.0 * r * np.cos(t) + r * r)
    out = np.zeros(n, dtype=arr.dtype)
    for m in range(n):
        out += kernel[m] * np.roll(arr, m)
    return out / n


def evaluate_at(coeffs: ArrayLike, theta: ArrayLike) -> np.ndarray:
    """Evaluate the trigonometric interpolant with the given coefficients at
    arbitrary angles (Nyquist mode split evenly between ``+-N/2``)."""
    c = np.asarray(coeffs, dtype=np.complex128)
    n = c.shape[0]
    k = mode_numbers(n)
    th = np.asarray(theta, dtype=np.float64)
    phase = np.exp(1j * np.multiply.outer(th, k))
    c_eff = c.copy()
    nyq = c_eff[n // 2]
    c_eff[n // 2] = 0.0
    out = phase @ c_eff + nyq * np.cos(0.5 * n * th)
    return out
