"""Inlet/outlet pressure waveforms.

The builtin waveforms are analytic surrogates calibrated to two anchors: the
transvalvular jump exceeds the ~5 mmHg opening threshold within the first
30 ms and inverts (crosses zero downward) at exactly t = 0.2 s, with an early
peak of about 10 mmHg. They are surrogates, not published data; a CSV import
replaces them exactly when measured waveforms are available.
"""

from dataclasses import dataclass

import numpy as np

MMHG_TO_PA = 133.322


@dataclass
class Waveform:
    """Piecewise-linear waveform over strictly increasing sample times [s]."""

    times: np.ndarray
    values: np.ndarray  # [Pa]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("waveform needs matching 1-d time and value arrays")
        if len(self.times) < 2:
            raise ValueError("waveform needs at least two samples")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("waveform sample times must be strictly increasing")

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


# surrogate calibration constants (mmHg and s)
_JUMP_START = 0.02      # jump crosses zero upward here
_JUMP_END = 0.2         # stated inversion time
_JUMP_PEAK = 10.0       # early-peak magnitude [mmHg]
_JUMP_SHAPE = 0.58      # skews the peak early: ~5 mmHg within 9 ms of crossover
_JUMP_FLOOR = -20.0     # pre-systolic jump [mmHg]


def _jump_mmhg(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    early = t < _JUMP_START
    out[early] = _JUMP_FLOOR * (1.0 + np.cos(np.pi * t[early] / _JUMP_START)) / 2.0
    q = (t[~early] - _JUMP_START) / (_JUMP_END - _JUMP_START)
    out[~early] = _JUMP_PEAK * np.sin(np.pi * q**_JUMP_SHAPE)
    return out


def _aortic_mmhg(t):
    return 80.0 + 40.0 * np.sin(np.pi * np.asarray(t, dtype=float) / 0.5)


def builtin_waveforms(t_end: float = 0.4, sample_dt: float = 5e-4):
    """(p_in, p_out) surrogate waveforms sampled to piecewise-linear tables.

    The sampling grid contains t = 0.2 s exactly, so the jump inversion time
    is preserved by linear interpolation.
    """
    n = int(round(t_end / sample_dt))
    times = np.linspace(0.0, t_end, n + 1)
    p_out = _aortic_mmhg(times) * MMHG_TO_PA
    p_in = p_out + _jump_mmhg(times) * MMHG_TO_PA
    return Waveform(times, p_in), Waveform(times, p_out)


def read_waveform_csv(path):
    """CSV with header t,p_in,p_out (SI units) -> (p_in, p_out) waveforms."""
    with open(path) as f:
        header = f.readline().strip()
        if header != "t,p_in,p_out":
            raise ValueError(f"{path}: expected header 't,p_in,p_out', got {header!r}")
        data = np.loadtxt(f, delimiter=",")
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValueError(f"{path}: expected three numeric columns")
    return Waveform(data[:, 0], data[:, 1]), Waveform(data[:, 0], data[:, 2])


def write_waveform_csv(path, p_in: Waveform, p_out: Waveform):
    if not np.array_equal(p_in.times, p_out.times):
        raise ValueError("waveforms must share the sample grid")
    with open(path, "w") as f:
        f.write("t,p_in,p_out\n")
        for t, a, b in zip(p_in.times, p_in.values, p_out.values):
            f.write(f"{t:.17g},{a:.17g},{b:.17g}\n")
