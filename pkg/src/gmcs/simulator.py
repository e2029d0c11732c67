"""Monte Carlo engine for a GMCS QKD session.

Each frame draws Alice's Gaussian quadratures, a balanced-by-count random
basis pattern for Bob, and Bob's homodyne samples. Per pulse::

    y_B = sqrt(eta*G) * q_rot + dc + n

where ``q_rot`` is Alice's pair rotated by the frame's interferometer phase
(X' for an X measurement, P' for a P measurement), ``dc`` is the leakage
offset for that basis, and ``n`` is Gaussian with variance
``1 + eta*G*epsilon_A + N_el + N_leak``. This reproduces Bob's variance
``eta*G*(V + chi)`` exactly in expectation.

A session is fully determined by its config, including ``rng_seed``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .keyrate import NoiseBudget, SystemParameters
from .leakage import dc_from_effective_leakage

BASIS_X = 0
BASIS_P = 1
_BASIS_NAMES = {BASIS_X: "X", BASIS_P: "P"}

SESSION_CSV_HEADER = ("frame_index", "pulse_index", "X_A", "P_A", "basis", "y_B")


class ConfigError(ValueError):
    """A scenario config violates one or more constraints."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


def wrap_phase(phi: float | np.ndarray) -> float | np.ndarray:
    """Wrap angles to (-pi, pi]."""
    w = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2.0 * np.pi)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to simulate one session.

    Noise inputs: ``delta`` sets ``epsilon_A = V_A * delta``; ``n_el`` is the
    electrical noise; leakage is ``n_le_eff`` effective photons at mean phase
    ``phi_le_0`` whose fluctuation adds ``gamma * n_le_eff`` of noise.
    """

    params: SystemParameters = field(default_factory=SystemParameters)
    delta: float = 0.0033
    n_el: float = 0.045
    n_le_eff: float = 6.0
    phi_le_0: float = 0.7
    gamma: float = 0.0033
    frame_size: int = 4000
    x_count: int = 1980
    p_count: int = 2020
    frame_duration: float = 0.040
    phase_drift_rate: float = 0.016
    initial_phase: float = 0.0
    rng_seed: int = 20080101
    n_frames: int = 10

    def __post_init__(self) -> None:
        problems = self.violations()
        if problems:
            raise ConfigError(problems)

    def violations(self) -> list[str]:
        out = []
        for name in ("delta", "n_el", "n_le_eff", "gamma", "frame_duration"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                out.append(f"{name} must be finite and >= 0")
        for name in ("phi_le_0", "phase_drift_rate", "initial_phase"):
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name} must be finite")
        if self.frame_size < 2:
            out.append("frame_size must be >= 2")
        if self.x_count < 0 or self.p_count < 0:
            out.append("x_count and p_count must be >= 0")
        if self.x_count + self.p_count != self.frame_size:
            out.append("x_count + p_count must equal frame_size")
        if self.n_frames < 1:
            out.append("n_frames must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            out.append("rng_seed must be an unsigned 64-bit integer")
        return out

    @property
    def epsilon_A(self) -> float:
        return self.params.V_A * self.delta

    @property
    def N_leak(self) -> float:
        return self.gamma * self.n_le_eff

    @property
    def budget(self) -> NoiseBudget:
        return NoiseBudget.compose(
            self.params.eta, self.params.G, self.epsilon_A, self.n_el, self.N_leak
        )

    @property
    def output_noise_variance(self) -> float:
        """Variance of the additive noise on Bob's samples."""
        return 1.0 + self.params.eta_G * self.epsilon_A + self.n_el + self.N_leak

    def with_params(self, **kw) -> "ScenarioConfig":
        return replace(self, params=replace(self.params, **kw))


@dataclass(frozen=True)
class FrameData:
    """One frame of pulses plus the frame-level ground truth."""

    frame_index: int
    x_a: np.ndarray
    p_a: np.ndarray
    basis: np.ndarray
    y_b: np.ndarray
    phi0: float
    dc_x: float
    dc_p: float

    def __len__(self) -> int:
        return len(self.y_b)


@dataclass(frozen=True)
class SessionData:
    config: ScenarioConfig
    frames: tuple[FrameData, ...]
    truth: dict

    @property
    def n_pulses(self) -> int:
        return sum(len(f) for f in self.frames)

    def concatenated(self) -> dict[str, np.ndarray]:
        """Pulse-level arrays stacked across frames."""
        return {
            "frame_index": np.concatenate(
                [np.full(len(f), f.frame_index, dtype=np.int64) for f in self.frames]
            ),
            "x_a": np.concatenate([f.x_a for f in self.frames]),
            "p_a": np.concatenate([f.p_a for f in self.frames]),
            "basis": np.concatenate([f.basis for f in self.frames]),
            "y_b": np.concatenate([f.y_b for f in self.frames]),
        }


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def generate_alice_frame(
    V_A: float, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` i.i.d. zero-mean Gaussian pairs with variance ``V_A``."""
    if V_A < 0:
        raise ValueError(f"V_A must be >= 0, got {V_A}")
    s = math.sqrt(V_A)
    return s * rng.standard_normal(n), s * rng.standard_normal(n)


def basis_pattern(x_count: int, p_count: int, rng: np.random.Generator) -> np.ndarray:
    """Random ordering of exactly ``x_count`` X and ``p_count`` P choices."""
    pattern = np.concatenate(
        [np.full(x_count, BASIS_X, dtype=np.int8), np.full(p_count, BASIS_P, dtype=np.int8)]
    )
    return rng.permutation(pattern)


def phase_at(t: float, config: ScenarioConfig) -> float:
    """Interferometer phase at time ``t``, wrapped to (-pi, pi]."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return wrap_phase(config.initial_phase + config.phase_drift_rate * t)


def frame_phase(frame_index: int, config: ScenarioConfig) -> float:
    """Phase held for a whole frame, evaluated at the frame midpoint."""
    return phase_at((frame_index + 0.5) * config.frame_duration, config)


def phase_drift_excess_noise(V_A: float, delta_phi: float) -> float:
    """Input-referred excess noise from remapping with a phase off by ``delta_phi``.

    The residual of a rotation error is ``V_A * |1 - exp(i*delta_phi)|**2``,
    which is ``V_A * delta_phi**2`` to leading order.
    """
    return V_A * (2.0 - 2.0 * math.cos(delta_phi))


def rotate(x: np.ndarray, p: np.ndarray, phi: float) -> tuple[np.ndarray, np.ndarray]:
    c, s = math.cos(phi), math.sin(phi)
    return x * c + p * s, -x * s + p * c


def measure_pulse(
    x_a: np.ndarray | float,
    p_a: np.ndarray | float,
    basis: np.ndarray | int,
    phi0: float,
    eta_G: float,
    dc: tuple[float, float],
    noise_variance: float,
    rng: np.random.Generator | None,
) -> np.ndarray:
    """Bob's homodyne outcomes for pulses with the given basis choices.

    ``dc`` is the (X, P) leakage offset pair. With ``rng=None`` or a zero
    ``noise_variance`` no noise is drawn.
    """
    x_a, p_a, basis = np.broadcast_arrays(
        np.asarray(x_a, float), np.asarray(p_a, float), np.asarray(basis)
    )
    xr, pr = rotate(x_a, p_a, phi0)
    is_x = basis == BASIS_X
    y = math.sqrt(eta_G) * np.where(is_x, xr, pr) + np.where(is_x, dc[0], dc[1])
    if rng is not None and noise_variance > 0:
        y = y + math.sqrt(noise_variance) * rng.standard_normal(y.shape)
    return y


def run_session(config: ScenarioConfig) -> SessionData:
    """Simulate ``config.n_frames`` frames from a single seeded stream."""
    rng = np.random.default_rng(config.rng_seed)
    p = config.params
    dc = dc_from_effective_leakage(config.n_le_eff, config.phi_le_0)
    noise_var = config.output_noise_variance
    frames = []
    for k in range(config.n_frames):
        phi0 = frame_phase(k, config)
        x_a, p_a = generate_alice_frame(p.V_A, config.frame_size, rng)
        basis = basis_pattern(config.x_count, config.p_count, rng)
        y_b = measure_pulse(x_a, p_a, basis, phi0, p.eta_G, dc, noise_var, rng)
        frames.append(
            FrameData(
                frame_index=k,
                x_a=_frozen(x_a),
                p_a=_frozen(p_a),
                basis=_frozen(basis),
                y_b=_frozen(y_b),
                phi0=phi0,
                dc_x=dc[0],
                dc_p=dc[1],
            )
        )
    return SessionData(config=config, frames=tuple(frames), truth=ground_truth(config))


def ground_truth(config: ScenarioConfig) -> dict:
    """Injected parameter values, for round-trip checks and the CSV sidecar."""
    b = config.budget
    p = config.params
    return {
        "V_A": p.V_A,
        "G": p.G,
        "eta": p.eta,
        "eta_G": p.eta_G,
        "delta": config.delta,
        "chi": b.chi,
        "chi_vac": b.chi_vac,
        "epsilon": b.epsilon,
        "epsilon_A": b.epsilon_A,
        "N_Bob": b.N_Bob,
        "N_el": b.N_el,
        "N_leak": b.N_leak,
        "n_le_eff": config.n_le_eff,
        "phi_le_0": config.phi_le_0,
        "rng_seed": config.rng_seed,
    }


def _fmt(v) -> str:
    return format(v, ".9g") if isinstance(v, (float, np.floating)) else str(v)


def write_session_csv(session: SessionData, path: str | Path) -> Path:
    """Write one row per pulse; ground truth goes to a ``*_truth.txt`` sidecar.

    Columns: frame_index, pulse_index, X_A, P_A, basis (X or P), y_B.
    Floats carry 9 significant digits.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SESSION_CSV_HEADER)
        for f in session.frames:
            for i in range(len(f)):
                w.writerow(
                    (
                        f.frame_index,
                        i,
                        _fmt(f.x_a[i]),
                        _fmt(f.p_a[i]),
                        _BASIS_NAMES[int(f.basis[i])],
                        _fmt(f.y_b[i]),
                    )
                )
    sidecar = path.with_name(path.stem + "_truth.txt")
    lines = [f"{k}={_fmt(v)}" for k, v in session.truth.items()]
    for f in session.frames:
        lines.append(f"frame.{f.frame_index}.phi0={_fmt(f.phi0)}")
        lines.append(f"frame.{f.frame_index}.dc_x={_fmt(f.dc_x)}")
        lines.append(f"frame.{f.frame_index}.dc_p={_fmt(f.dc_p)}")
    sidecar.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_session_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Load a session CSV back into pulse-level arrays."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        if header != SESSION_CSV_HEADER:
            raise ValueError(f"unexpected session CSV header {header}")
        rows = list(r)
    names = {"X": BASIS_X, "P": BASIS_P}
    return {
        "frame_index": np.array([int(row[0]) for row in rows], dtype=np.int64),
        "pulse_index": np.array([int(row[1]) for row in rows], dtype=np.int64),
        "x_a": np.array([float(row[2]) for row in rows]),
        "p_a": np.array([float(row[3]) for row in rows]),
        "basis": np.array([names[row[4]] for row in rows], dtype=np.int8),
        "y_b": np.array([float(row[5]) for row in rows]),
    }


def config_as_dict(config: ScenarioConfig) -> dict:
    d = {f.name: getattr(config, f.name) for f in fields(config) if f.name != "params"}
    d.update(asdict(config.params))
    return d
