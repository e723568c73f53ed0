"""Savitzky-Golay smoothing of logged trajectories."""
import numpy as np
from scipy.signal import savgol_filter


def savgol_smooth(series, window=7, degree=2):
    """Least-squares polynomial smoothing along the time axis.

    Parameters
    ----------
    series : array_like of shape (T,) or (T, d)
    window : int, default=7
        Odd window length, larger than `degree` and at most ``T``.
    degree : int, default=2

    Near the ends the polynomial fitted to the first (last) full window is
    evaluated at the edge samples instead of padding the signal.
    """
    x = np.asarray(series, dtype=float)
    if isinstance(window, bool) or not isinstance(window, (int, np.integer)) or window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window!r}")
    if isinstance(degree, bool) or not isinstance(degree, (int, np.integer)) or degree < 0:
        raise ValueError(f"degree must be a nonnegative integer, got {degree!r}")
    if window <= degree:
        raise ValueError("window must exceed degree")
    if x.shape[0] < window:
        raise ValueError(f"series of length {x.shape[0]} is shorter than the window ({window})")
    return savgol_filter(x, window, degree, axis=0, mode="interp")
