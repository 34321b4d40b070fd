"""
Special functions of the ball polynomials: Jacobi polynomials
P_m^(0, n+1/2), associated Legendre functions P_{n,k} without the
Condon-Shortley phase, the two pole-sensitive combinations used by the
gradients, and the trigonometric factor Trig(j phi) with its
antiderivatives. Everything is evaluated by recurrences on numpy arrays.
"""

import math

import numpy as np

import config

# _________________________________________________________________________________________________


def _jacobi_all(m_max: int, alpha: float, beta: float, x) -> np.ndarray:
    """
    All Jacobi polynomials P_0 .. P_{m_max} of parameters (alpha, beta)
    by the ascending three-term recurrence.

    Args:
        m_max (int): Highest degree.
        alpha (float): First parameter.
        beta (float): Second parameter.
        x (float | np.ndarray): Evaluation points in [-1, 1].

    Returns:
        np.ndarray: Array of shape (m_max + 1, *x.shape).
    """
    x = np.asarray(x, dtype=float)
    values = np.empty((m_max + 1,) + x.shape)
    values[0] = 1.0
    if m_max == 0:
        return values
    values[1] = (alpha + 1.0) + (alpha + beta + 2.0) * (x - 1.0) / 2.0

    ab = alpha + beta
    for n in range(2, m_max + 1):
        c = 2 * n + ab
        a1 = 2.0 * n * (n + ab) * (c - 2.0)
        a2 = (c - 1.0) * (alpha * alpha - beta * beta)
        a3 = (c - 2.0) * (c - 1.0) * c
        a4 = 2.0 * (n + alpha - 1.0) * (n + beta - 1.0) * c
        values[n] = ((a2 + a3 * x) * values[n - 1] - a4 * values[n - 2]) / a1
    return values


# _________________________________________________________________________________________________


def jacobi(m: int, beta: float, x):
    """Jacobi polynomial P_m^(0, beta)(x)."""
    return _jacobi_all(m, 0.0, beta, x)[m]


def jacobi_table(m_max: int, beta: float, x) -> np.ndarray:
    """P_m^(0, beta)(x) for m = 0 .. m_max, stacked along axis 0."""
    return _jacobi_all(m_max, 0.0, beta, x)


# _________________________________________________________________________________________________


def jacobi_derivative_table(m_max: int, beta: float, x) -> np.ndarray:
    """
    Derivatives (P_m^(0, beta))'(x) for m = 0 .. m_max, using
    (P_m^(0, beta))' = (m + beta + 1) / 2 * P_{m-1}^(1, beta + 1).

    Args:
        m_max (int): Highest degree.
        beta (float): Second Jacobi parameter.
        x (float | np.ndarray): Evaluation points.

    Returns:
        np.ndarray: Array of shape (m_max + 1, *x.shape).
    """
    x = np.asarray(x, dtype=float)
    derivatives = np.zeros((m_max + 1,) + x.shape)
    if m_max == 0:
        return derivatives
    shifted = _jacobi_all(m_max - 1, 1.0, beta + 1.0, x)
    for m in range(1, m_max + 1):
        derivatives[m] = 0.5 * (m + beta + 1.0) * shifted[m - 1]
    return derivatives


def jacobi_derivative(m: int, beta: float, x):
    """Derivative of P_m^(0, beta) at x."""
    return jacobi_derivative_table(m, beta, x)[m]


# _________________________________________________________________________________________________


def assoc_legendre_table(n_max: int, t) -> np.ndarray:
    """
    Associated Legendre functions P_{n,k}(t) = (1 - t^2)^(k/2) P_n^(k)(t)
    without Condon-Shortley phase, for 0 <= k <= n <= n_max.

    Args:
        n_max (int): Highest degree.
        t (float | np.ndarray): Points in [-1, 1].

    Returns:
        np.ndarray: Array of shape (n_max + 1, n_max + 1, *t.shape) with
        entry [n, k]; entries with k > n are zero.
    """
    t = np.asarray(t, dtype=float)
    sine = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    return _legendre_recurrence(n_max, t, sine, sine_power_offset=0)


def _legendre_recurrence(
    n_max: int, t: np.ndarray, sine: np.ndarray, sine_power_offset: int
) -> np.ndarray:
    """
    Shared (n, k) recurrence. The diagonal seed is (2k-1)!! sine^(k + offset);
    offset -1 yields P_{n,k} / sqrt(1 - t^2) for k >= 1 without division.
    """
    table = np.zeros((n_max + 1, n_max + 1) + t.shape)
    k_start = 0 if sine_power_offset == 0 else 1
    diagonal = np.ones_like(t)
    for k in range(k_start, n_max + 1):
        if k > k_start:
            diagonal = diagonal * (2 * k - 1) * sine
        table[k, k] = diagonal
        if k + 1 <= n_max:
            table[k + 1, k] = (2 * k + 1) * t * diagonal
        for n in range(k + 1, n_max):
            table[n + 1, k] = (
                (2 * n + 1) * t * table[n, k] - (n + k) * table[n - 1, k]
            ) / (n - k + 1)
    return table


def assoc_legendre(n: int, k: int, t):
    """Associated Legendre function P_{n,k}(t), 0 <= k <= n."""
    if not 0 <= k <= n:
        raise ValueError(f"order k={k} outside [0, {n}]")
    return assoc_legendre_table(n, t)[n, k]


# _________________________________________________________________________________________________


def legendre_derivative_at_pole(n: int, sign: float) -> float:
    """P_n'(+-1) = (+-1)^(n+1) n (n + 1) / 2."""
    return (1.0 if sign > 0 or n % 2 == 1 else -1.0) * n * (n + 1) / 2.0


# _________________________________________________________________________________________________


def legendre_over_sine_table(
    n_max: int, t, delta_pole: float = config.DELTA_POLE
) -> np.ndarray:
    """
    P_{n,k}(t) / sqrt(1 - t^2) for 1 <= k <= n <= n_max.

    Away from the poles the quotient is evaluated division-free by the
    Legendre recurrence seeded with (2k-1)!! sine^(k-1). Within
    delta_pole of t = +-1 the pole limits are returned: P_n'(+-1) for
    k = 1 and 0 for k > 1. Column k = 0 is unused and left at zero.

    Args:
        n_max (int): Highest degree.
        t (float | np.ndarray): Points in [-1, 1].
        delta_pole (float): Width of the pole band.

    Returns:
        np.ndarray: Array of shape (n_max + 1, n_max + 1, *t.shape).
    """
    t = np.asarray(t, dtype=float)
    sine = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    table = _legendre_recurrence(n_max, t, sine, sine_power_offset=-1)

    near_pole = (1.0 - np.abs(t)) <= delta_pole
    if np.any(near_pole):
        sign = np.where(t >= 0.0, 1.0, -1.0)
        for n in range(1, n_max + 1):
            limit = np.where(
                sign > 0,
                legendre_derivative_at_pole(n, 1.0),
                legendre_derivative_at_pole(n, -1.0),
            )
            table[n, 1] = np.where(near_pole, limit, table[n, 1])
            for k in range(2, n + 1):
                table[n, k] = np.where(near_pole, 0.0, table[n, k])
    return table


def legendre_over_sine(n: int, k: int, t, delta_pole: float = config.DELTA_POLE):
    """
    P_{n,k}(t) / sqrt(1 - t^2) with the pole limits near t = +-1.

    Raises:
        ValueError: For k = 0, where the quotient is unbounded at the poles.
    """
    if k == 0:
        raise ValueError("legendre_over_sine is only defined for k >= 1")
    if not 1 <= k <= n:
        raise ValueError(f"order k={k} outside [1, {n}]")
    return legendre_over_sine_table(n, t, delta_pole)[n, k]


# _________________________________________________________________________________________________


def sine_times_legendre_prime_table(
    n_max: int, t, delta_pole: float = config.DELTA_POLE
) -> np.ndarray:
    """
    sqrt(1 - t^2) P_{n,k}'(t) for 0 <= k <= n <= n_max, finite at the poles.

    Uses sqrt(1 - t^2) P_{n,k}' = P_{n,k+1} - k t P_{n,k} / sqrt(1 - t^2),
    which reduces to P_{n,1} for k = 0.

    Returns:
        np.ndarray: Array of shape (n_max + 1, n_max + 1, *t.shape).
    """
    t = np.asarray(t, dtype=float)
    legendre = assoc_legendre_table(n_max, t)
    quotient = legendre_over_sine_table(n_max, t, delta_pole)
    table = np.zeros_like(legendre)
    for n in range(n_max + 1):
        for k in range(n + 1):
            upper = legendre[n, k + 1] if k + 1 <= n else 0.0
            table[n, k] = upper - k * t * quotient[n, k]
    return table


def sine_times_legendre_prime(n: int, k: int, t, delta_pole: float = config.DELTA_POLE):
    """sqrt(1 - t^2) P_{n,k}'(t)."""
    if not 0 <= k <= n:
        raise ValueError(f"order k={k} outside [0, {n}]")
    return sine_times_legendre_prime_table(n, t, delta_pole)[n, k]


# _________________________________________________________________________________________________


def legendre_normalization(n: int, j: int) -> float:
    """q_{n,j} = sqrt((2n + 1) / (4 pi) * (n - |j|)! / (n + |j|)!)."""
    k = abs(j)
    return math.sqrt(
        (2 * n + 1) / (4.0 * math.pi) * math.factorial(n - k) / math.factorial(n + k)
    )


def radial_normalization(
    m: int, n: int, ball_radius: float = config.BALL_RADIUS
) -> float:
    """p_{m,n} = sqrt((4m + 2n + 3) / R^3)."""
    return math.sqrt((4 * m + 2 * n + 3) / ball_radius**3)


# _________________________________________________________________________________________________


def trig(j: int, phi):
    """
    Trig(j phi): sqrt(2) cos(j phi) for j < 0, 1 for j = 0 and
    sqrt(2) sin(j phi) for j > 0.
    """
    phi = np.asarray(phi, dtype=float)
    if j < 0:
        return math.sqrt(2.0) * np.cos(j * phi)
    if j == 0:
        return np.ones_like(phi)
    return math.sqrt(2.0) * np.sin(j * phi)


def trig_derivative(j: int, phi):
    """d/dphi Trig(j phi) = j Trig(-j phi)."""
    return j * trig(-j, phi)


# _________________________________________________________________________________________________


def trig_antiderivatives(j: int, phi) -> tuple:
    """
    Antiderivatives I1 = int phi Trig(j phi) dphi and I2 = int Trig(j phi) dphi.

    Args:
        j (int): Order.
        phi (float | np.ndarray): Longitude(s).

    Returns:
        tuple: (I1, I2) evaluated at phi.
    """
    phi = np.asarray(phi, dtype=float)
    if j == 0:
        return 0.5 * phi * phi, phi.copy()

    root2 = math.sqrt(2.0)
    c = np.cos(j * phi)
    s = np.sin(j * phi)
    if j > 0:
        i2 = -root2 * c / j
        i1 = root2 * (s / (j * j) - phi * c / j)
    else:
        i2 = root2 * s / j
        i1 = root2 * (c / (j * j) + phi * s / j)
    return i1, i2
